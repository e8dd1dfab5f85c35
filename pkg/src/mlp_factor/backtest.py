"""Long-only sign-agreement strategy, transaction costs and performance metrics.

All return series are monthly *excess* returns; a flat stock earns zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    AlignmentError,
    DataError,
    DegenerateError,
    UndefinedMetricError,
    WipeoutError,
)
from .evaluation import PredictionSet
from .panel import DateRange, Panel, add_months

WEIGHTINGS = ("equal", "value")
TC_MODES = ("notional", "literal")


@dataclass(frozen=True)
class SignalRule:
    """Open when realized and forecast agree positive; close when both are non-positive."""

    def opens(self, realized: float, forecast: float) -> bool:
        return realized > 0 and forecast > 0

    def closes(self, realized: float, forecast: float) -> bool:
        return realized <= 0 and forecast <= 0


@dataclass(frozen=True)
class TradeEvent:
    stock: str
    kind: str  # "open" | "close"
    month: str


@dataclass(frozen=True, eq=False)
class BacktestLedger:
    stocks: tuple[str, ...]
    months: tuple[str, ...]
    positions: np.ndarray  # T x N in {0, 1}
    realized: np.ndarray
    gross: np.ndarray
    cost: np.ndarray
    events: tuple[TradeEvent, ...] = field(default=())

    @property
    def net(self) -> np.ndarray:
        return self.gross - self.cost

    def trade_counts(self) -> np.ndarray:
        """Executed trades per stock-month."""
        counts = np.zeros(self.positions.shape, dtype=np.int64)
        ti = {m: t for t, m in enumerate(self.months)}
        si = {s: i for i, s in enumerate(self.stocks)}
        for ev in self.events:
            counts[ti[ev.month], si[ev.stock]] += 1
        return counts


@dataclass(frozen=True, eq=False)
class MonthlySeries:
    months: tuple[str, ...]
    values: np.ndarray

    def __len__(self):
        return len(self.months)


def _realized_matrix(realized, predicted: PredictionSet) -> np.ndarray:
    if realized is None:
        return predicted.realized
    if isinstance(realized, PredictionSet):
        realized_months, realized_stocks, values = realized.months, realized.stocks, realized.realized
    elif isinstance(realized, Panel):
        realized_months, realized_stocks, values = realized.dates, realized.columns, realized.values
    else:
        values = np.asarray(realized, dtype=np.float64)
        if values.shape != predicted.predicted.shape:
            raise AlignmentError(f"realized shape {values.shape} vs predictions "
                                 f"{predicted.predicted.shape}")
        return values
    if tuple(realized_months) != predicted.months or tuple(realized_stocks) != predicted.stocks:
        raise AlignmentError("realized returns and predictions are on different grids")
    if np.isnan(values).any():
        raise AlignmentError("realized returns must be dense over the OOS grid")
    return values


def generate_signals(realized, predicted: PredictionSet,
                     rule: SignalRule = SignalRule()) -> BacktestLedger:
    """Trade on month ``t``'s realized return and the forecast for ``t+1``.

    A transition decided at month ``t`` takes effect in month ``t+1``.  A
    position still open in the last month is closed there.
    """
    R = _realized_matrix(realized, predicted)
    F = predicted.predicted
    T, N = R.shape
    pos = np.zeros((T, N), dtype=np.int8)
    events = []
    months = predicted.months
    for i, stock in enumerate(predicted.stocks):
        state = 0
        for t in range(T - 1):
            if state == 0 and rule.opens(R[t, i], F[t + 1, i]):
                state = 1
                events.append(TradeEvent(stock, "open", months[t + 1]))
            elif state == 1 and rule.closes(R[t, i], F[t + 1, i]):
                state = 0
                events.append(TradeEvent(stock, "close", months[t + 1]))
            pos[t + 1, i] = state
        if state == 1:
            events.append(TradeEvent(stock, "close", months[-1]))
    gross = pos * R
    return BacktestLedger(predicted.stocks, months, pos, R, gross, np.zeros_like(gross),
                          tuple(events))


def apply_costs(ledger: BacktestLedger, cost_bp: float = 50.0,
                tc_mode: str = "notional") -> BacktestLedger:
    """Charge ``cost_bp`` per executed trade in the month it executes.

    ``notional`` deducts ``cost_bp / 10000`` of the position per trade;
    ``literal`` deducts ``|return| * cost_bp / 10000`` for that month.
    """
    if tc_mode not in TC_MODES:
        raise ValueError(f"unknown tc_mode {tc_mode!r}")
    if cost_bp < 0:
        raise ValueError("cost_bp must be non-negative")
    rate = cost_bp / 10000.0
    counts = ledger.trade_counts()
    if tc_mode == "notional":
        cost = counts * rate
    else:
        cost = counts * rate * np.abs(ledger.realized)
    return replace(ledger, cost=cost.astype(np.float64))


def long_everywhere(predicted_or_panel: Union[PredictionSet, Panel]) -> BacktestLedger:
    """Ledger holding every stock in every month, with no trades charged."""
    if isinstance(predicted_or_panel, PredictionSet):
        stocks, months, R = (predicted_or_panel.stocks, predicted_or_panel.months,
                             predicted_or_panel.realized)
    else:
        stocks, months, R = (predicted_or_panel.columns, predicted_or_panel.dates,
                             predicted_or_panel.values)
    pos = np.ones(R.shape, dtype=np.int8)
    return BacktestLedger(tuple(stocks), tuple(months), pos, R, R.astype(np.float64),
                          np.zeros(R.shape), ())


# -- aggregation -------------------------------------------------------------

def _weights(months: Sequence[str], stocks: Sequence[str], weighting: str,
             marketcap: Optional[Panel]) -> np.ndarray:
    T, N = len(months), len(stocks)
    if weighting == "equal":
        return np.full((T, N), 1.0 / N)
    if weighting != "value":
        raise ValueError(f"unknown weighting {weighting!r}")
    if marketcap is None:
        raise DataError("value weighting needs market caps")
    pos = {c: j for j, c in enumerate(marketcap.columns)}
    missing = [s for s in stocks if s not in pos]
    if missing:
        raise DataError(f"no market cap column for {missing[0]!r}")
    cols = [pos[s] for s in stocks]
    W = np.empty((T, N))
    for t, m in enumerate(months):
        prior = add_months(m, -1)
        if prior not in marketcap.span:
            raise DataError(f"no market caps for {prior} (needed to weight {m})")
        caps = marketcap.values[marketcap.row_of(prior), cols]
        if np.isnan(caps).any():
            j = int(np.nonzero(np.isnan(caps))[0][0])
            raise DataError(f"missing market cap for {stocks[j]!r} in {prior}")
        W[t] = caps / caps.sum()
    return W


def _weighted(W: np.ndarray, R: np.ndarray) -> np.ndarray:
    # shifting by the first stock makes identical columns cancel exactly
    base = R[:, :1]
    return base[:, 0] + np.sum(W * (R - base), axis=1)


def portfolio_returns(source: Union[BacktestLedger, Panel], weighting: str = "equal",
                      marketcap: Optional[Panel] = None,
                      period: Optional[DateRange] = None) -> MonthlySeries:
    """Cross-sectional weighted mean of per-stock monthly returns.

    A ledger contributes its net strategy returns, a panel its raw values.
    Value weights are prior-month market caps over their cross-sectional sum.
    """
    if isinstance(source, BacktestLedger):
        months, stocks, R = source.months, source.stocks, source.net
    else:
        months, stocks, R = source.dates, source.columns, source.values
    if period is not None:
        rows = [k for k, m in enumerate(months) if m in period]
        months = tuple(months[k] for k in rows)
        R = R[rows]
    if np.isnan(R).any():
        raise DataError("returns contain missing values inside the backtest period")
    W = _weights(months, stocks, weighting, marketcap)
    return MonthlySeries(tuple(months), _weighted(W, R))


def portfolio_breakdown(ledger: BacktestLedger, weighting: str = "equal",
                        marketcap: Optional[Panel] = None):
    """Weighted ``(gross, cost, net)`` monthly portfolio series."""
    W = _weights(ledger.months, ledger.stocks, weighting, marketcap)
    return _weighted(W, ledger.gross), np.sum(W * ledger.cost, axis=1), _weighted(W, ledger.net)


def buy_and_hold(returns: Union[Panel, PredictionSet], weighting: str = "equal",
                 marketcap: Optional[Panel] = None,
                 period: Optional[DateRange] = None) -> MonthlySeries:
    return portfolio_returns(long_everywhere(returns), weighting, marketcap, period)


# -- performance metrics -----------------------------------------------------

def _series(values) -> np.ndarray:
    if isinstance(values, MonthlySeries):
        values = values.values
    r = np.asarray(values, dtype=np.float64).ravel()
    if r.size < 1:
        raise UndefinedMetricError("empty return series")
    return r


def wealth_path(series) -> np.ndarray:
    r = _series(series)
    if np.any(1.0 + r <= 0):
        raise WipeoutError("a monthly return of -100% or worse wipes out the portfolio")
    return np.cumprod(1.0 + r)


def annualized_return(series, n: Optional[int] = None) -> float:
    """Geometric annual rate ``prod(1 + r) ** (12 / n) - 1``."""
    r = _series(series)
    if n is not None and n != r.size:
        raise ValueError(f"n={n} does not match the series length {r.size}")
    growth = wealth_path(r)[-1]
    return float(growth ** (12.0 / r.size) - 1.0)


def sharpe(series) -> float:
    """Monthly mean excess return over its sample standard deviation."""
    r = _series(series)
    sd = float(r.std(ddof=1)) if r.size > 1 else 0.0
    if not sd > 0:
        raise UndefinedMetricError("zero return volatility")
    return float(r.mean()) / sd


def downside_deviation(series) -> float:
    r = _series(series)
    neg = r[r < 0]
    if neg.size == 0:
        raise UndefinedMetricError("no negative months, downside deviation undefined")
    return math.sqrt(float(np.mean(neg * neg)))


def sortino(series) -> float:
    """Monthly mean excess return over the root-mean-square of the negative months."""
    r = _series(series)
    return float(r.mean()) / downside_deviation(r)


def max_drawdown_from_wealth(wealth) -> float:
    c = np.asarray(wealth, dtype=np.float64)
    peak = np.maximum.accumulate(c)
    return float(np.max((peak - c) / peak))


def max_drawdown(series) -> float:
    """Largest peak-to-trough fall of the compounded wealth path.

    The path starts at the initial wealth of 1, so a loss in the first
    month already counts as a drawdown.
    """
    return max_drawdown_from_wealth(np.concatenate([[1.0], wealth_path(series)]))


def jensens_alpha(realized, predicted=None) -> tuple[float, float]:
    """Mean realized minus mean predicted excess return, with its t-statistic.

    ``realized`` may be a :class:`PredictionSet` (then ``predicted`` is
    omitted) or a ``T x N`` matrix paired with ``predicted``.  The
    t-statistic tests the monthly cross-sectional mean gap against zero.
    """
    if isinstance(realized, PredictionSet):
        R, P = realized.realized, realized.predicted
    else:
        R = np.asarray(realized, dtype=np.float64)
        P = np.asarray(predicted, dtype=np.float64)
    if R.ndim == 1:
        R, P = R[:, None], P[:, None]
    if R.shape != P.shape or R.shape[0] < 2:
        raise AlignmentError("alpha needs aligned matrices with at least two months")
    alpha = float(np.mean(R.mean(axis=0) - P.mean(axis=0)))
    gap = (R - P).mean(axis=1)
    se = float(gap.std(ddof=1)) / math.sqrt(gap.size)
    if not se > 1e-12 * float(np.max(np.abs(gap))):
        raise DegenerateError("alpha gap series has zero variance", alpha=alpha)
    return alpha, float(gap.mean()) / se


REPORT_COLUMNS = ("period", "weighting", "model", "annual_return", "std", "sharpe",
                  "sortino", "mdd", "alpha", "t_stat")


@dataclass(frozen=True)
class MetricReport:
    model: str
    weighting: str
    period: str
    annual_return: float
    std: float
    sharpe: float
    sortino: float
    mdd: float
    alpha: Optional[float] = None
    alpha_t_stat: Optional[float] = None

    def row(self) -> list[str]:
        def fmt(v):
            return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))
        return [self.period, self.weighting, self.model, fmt(self.annual_return),
                fmt(self.std), fmt(self.sharpe), fmt(self.sortino), fmt(self.mdd),
                fmt(self.alpha), fmt(self.alpha_t_stat)]


def _safe(fn, *args) -> float:
    try:
        return fn(*args)
    except UndefinedMetricError:
        return float("nan")


def metric_report(model: str, weighting: str, period: str, series,
                  predictions: Optional[PredictionSet] = None) -> MetricReport:
    r = _series(series)
    alpha = t = None
    if predictions is not None:
        try:
            alpha, t = jensens_alpha(predictions)
        except DegenerateError as exc:
            alpha, t = exc.alpha, float("nan")
    return MetricReport(model, weighting, period, annualized_return(r),
                        float(r.std(ddof=1)) if r.size > 1 else 0.0,
                        _safe(sharpe, r), _safe(sortino, r), max_drawdown(r), alpha, t)


def write_report(reports: Sequence[MetricReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for rep in reports:
            w.writerow(rep.row())
