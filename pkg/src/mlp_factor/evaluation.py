"""Out-of-sample fit, Diebold-Mariano comparison and permutation importance."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import AlignmentError, DegenerateDMError, ShapeError, UndefinedMetricError
from .panel import DateRange, month_index


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """OOS forecasts ``predicted[t, i]`` of stock ``i``'s excess return in ``months[t]``."""

    stocks: tuple[str, ...]
    months: tuple[str, ...]
    predicted: np.ndarray
    realized: np.ndarray
    train_mean: np.ndarray

    def __post_init__(self):
        shape = (len(self.months), len(self.stocks))
        pred = np.array(self.predicted, dtype=np.float64).reshape(shape)
        real = np.array(self.realized, dtype=np.float64).reshape(shape)
        tm = np.array(self.train_mean, dtype=np.float64).reshape(len(self.stocks))
        if np.isnan(pred).any() or np.isnan(real).any():
            raise AlignmentError("predicted and realized must be dense over the OOS grid")
        idx = [month_index(m) for m in self.months]
        if any(b != a + 1 for a, b in zip(idx, idx[1:])):
            raise AlignmentError("OOS months must be contiguous")
        for arr in (pred, real, tm):
            arr.setflags(write=False)
        object.__setattr__(self, "stocks", tuple(self.stocks))
        object.__setattr__(self, "months", tuple(self.months))
        object.__setattr__(self, "predicted", pred)
        object.__setattr__(self, "realized", real)
        object.__setattr__(self, "train_mean", tm)

    def slice(self, period: DateRange) -> "PredictionSet":
        rows = [k for k, m in enumerate(self.months) if m in period]
        if not rows:
            raise AlignmentError(f"no OOS months inside {period}")
        s = slice(rows[0], rows[-1] + 1)
        return PredictionSet(self.stocks, self.months[s], self.predicted[s],
                             self.realized[s], self.train_mean)

    def abs_errors(self) -> np.ndarray:
        return np.abs(self.realized - self.predicted)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["month", "stock", "predicted", "realized", "train_mean"])
            for i, s in enumerate(self.stocks):
                for t, m in enumerate(self.months):
                    w.writerow([m, s, repr(float(self.predicted[t, i])),
                                repr(float(self.realized[t, i])),
                                repr(float(self.train_mean[i]))])

    @classmethod
    def from_csv(cls, path) -> "PredictionSet":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        stocks = list(dict.fromkeys(r["stock"] for r in rows))
        months = sorted(set(r["month"] for r in rows), key=month_index)
        si = {s: i for i, s in enumerate(stocks)}
        ti = {m: t for t, m in enumerate(months)}
        pred = np.full((len(months), len(stocks)), np.nan)
        real = np.full_like(pred, np.nan)
        tm = np.zeros(len(stocks))
        for r in rows:
            t, i = ti[r["month"]], si[r["stock"]]
            pred[t, i] = float(r["predicted"])
            real[t, i] = float(r["realized"])
            tm[i] = float(r["train_mean"])
        return cls(tuple(stocks), tuple(months), pred, real, tm)

    @classmethod
    def concat_stocks(cls, parts: Sequence["PredictionSet"]) -> "PredictionSet":
        months = parts[0].months
        for p in parts[1:]:
            if p.months != months:
                raise AlignmentError("prediction sets cover different months")
        return cls(sum((p.stocks for p in parts), ()), months,
                   np.hstack([p.predicted for p in parts]),
                   np.hstack([p.realized for p in parts]),
                   np.concatenate([p.train_mean for p in parts]))


# -- fit metrics -------------------------------------------------------------

def _pair(realized, predicted):
    r = np.asarray(realized, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if r.shape != p.shape or r.size < 1:
        raise ShapeError(f"realized shape {r.shape} vs predicted shape {p.shape}")
    return r, p


def mse(realized, predicted) -> float:
    r, p = _pair(realized, predicted)
    return float(np.mean((r - p) ** 2))


def oos_r2(realized, predicted, train_mean: float) -> float:
    """``1 - SSE / sum((r - train_mean)^2)``: skill over the training-mean forecast."""
    r, p = _pair(realized, predicted)
    denom = float(np.sum((r - train_mean) ** 2))
    if not denom > 0:
        raise UndefinedMetricError("realized returns all equal the training mean")
    return 1.0 - float(np.sum((r - p) ** 2)) / denom


def stock_metrics(preds: PredictionSet) -> list[tuple[str, float, float]]:
    """Per-stock ``(stock, oos_r2, mse)``."""
    out = []
    for i, s in enumerate(preds.stocks):
        r, p = preds.realized[:, i], preds.predicted[:, i]
        out.append((s, oos_r2(r, p, preds.train_mean[i]), mse(r, p)))
    return out


# -- Diebold-Mariano ---------------------------------------------------------

@dataclass(frozen=True)
class DMResult:
    statistic: float
    mean_diff: float
    se: float
    n_months: int
    convention: str = "m minus n"

    @property
    def p_value(self) -> float:
        """Two-sided p-value against the standard normal."""
        return math.erfc(abs(self.statistic) / math.sqrt(2.0))


def _newey_west_var(d: np.ndarray, lags: int) -> float:
    T = d.size
    u = d - d.mean()
    var = float(u @ u) / T
    for k in range(1, lags + 1):
        w = 1.0 - k / (lags + 1)
        var += 2.0 * w * float(u[k:] @ u[:-k]) / T
    return var


def dm_test(abs_err_m, abs_err_n, hac_lags: int = 0) -> DMResult:
    """Compare two models' absolute errors (``T x h`` stocks).

    A positive statistic means model ``m`` has the larger errors.  With
    ``hac_lags > 0`` the standard error uses a Newey-West long-run variance
    instead of the plain sample standard deviation.
    """
    em = np.asarray(abs_err_m, dtype=np.float64)
    en = np.asarray(abs_err_n, dtype=np.float64)
    if em.ndim == 1:
        em = em[:, None]
    if en.ndim == 1:
        en = en[:, None]
    if em.shape != en.shape:
        raise ShapeError(f"error matrices differ: {em.shape} vs {en.shape}")
    T = em.shape[0]
    if T < 2:
        raise ShapeError("need at least two months")
    d = (em - en).mean(axis=1)
    dbar = float(d.mean())
    if hac_lags:
        var = _newey_west_var(d, hac_lags)
        se = math.sqrt(var / T) if var > 0 else 0.0
    else:
        se = float(d.std(ddof=1)) / math.sqrt(T)
    if not se > 1e-12 * float(np.max(np.abs(d))):
        raise DegenerateDMError("loss differential has zero variance", mean_diff=dbar)
    return DMResult(dbar / se, dbar, se, T)


# -- permutation importance --------------------------------------------------

def permutation_importance(model: Callable[[np.ndarray], np.ndarray], X_oos, y_oos,
                           feature_index: int, seed: int = 0, repeats: int = 10) -> float:
    """Mean increase in MSE when column ``feature_index`` is shuffled.

    Repeat ``k`` shuffles with its own generator spawned from ``seed``, so
    repeats are independent of evaluation order.
    """
    X = np.asarray(X_oos, dtype=np.float64)
    y = np.asarray(y_oos, dtype=np.float64)
    if not 0 <= feature_index < X.shape[1]:
        raise IndexError(f"feature_index {feature_index} out of range")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    base = mse(y, model(X))
    gains = []
    for rng in spawn_generators(seed, repeats):
        Xp = X.copy()
        Xp[:, feature_index] = X[rng.permutation(X.shape[0]), feature_index]
        gains.append(mse(y, model(Xp)) - base)
    return float(np.mean(gains))


def spawn_generators(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def importance_ranking(importances: Mapping[str, float], top_k: int | None = None) -> list[str]:
    """Feature names by descending importance, ties alphabetical."""
    if top_k is not None and top_k > len(importances):
        raise ValueError("top_k exceeds the number of features")
    ranked = sorted(importances, key=lambda name: (-importances[name], name))
    return ranked if top_k is None else ranked[:top_k]
