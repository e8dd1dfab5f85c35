"""OLS, PCR and PLS benchmarks with a shared prediction interface.

PCR and PLS coefficients are mapped back to the original feature space at
fit time, so every model predicts as ``intercept + X @ coefficients``; the
projection is kept for inspection and persistence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, ShapeError
from .params_io import load_arrays, save_arrays

LINEAR_FORMAT = "mlp_factor.linear/1"
_VAR_TOL = 1e-10


@dataclass(frozen=True)
class Projection:
    components: np.ndarray  # P x k, columns span the retained directions
    feature_means: np.ndarray
    explained: np.ndarray  # per-component share of X variance


@dataclass(frozen=True)
class LinearModel:
    kind: str
    coefficients: np.ndarray
    intercept: float
    projection: Optional[Projection] = None
    variance_threshold: float = 0.95
    flags: tuple = field(default=())

    def __post_init__(self):
        if (self.projection is not None) != (self.kind in ("pls", "pcr")):
            raise ValueError("projection must be present exactly for PLS/PCR models")
        if self.projection is not None and self.projection.components.shape[1] < 1:
            raise ValueError("need at least one component")

    @property
    def n_components(self) -> Optional[int]:
        return None if self.projection is None else self.projection.components.shape[1]

    def predict(self, X) -> np.ndarray:
        return predict_linear(self, X)


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise ShapeError(f"X shape {X.shape} incompatible with y length {y.shape[0]}")
    return X, y


def fit_ols(X, y) -> LinearModel:
    """Least squares with intercept; minimum-norm solution when rank deficient."""
    X, y = _check_xy(X, y)
    xm, ym = X.mean(axis=0), y.mean()
    Xc = X - xm
    beta, _, rank, _ = np.linalg.lstsq(Xc, y - ym, rcond=None)
    flags = ("rank_deficient",) if rank < X.shape[1] else ()
    return LinearModel("ols", beta, float(ym - xm @ beta), flags=flags)


def _select_k(explained: np.ndarray, threshold: float) -> int:
    cum = np.cumsum(explained)
    hit = np.nonzero(cum >= threshold - _VAR_TOL)[0]
    return int(hit[0]) + 1 if hit.size else explained.size


def fit_pcr(X, y, variance_threshold: float = 0.95) -> LinearModel:
    """Regress on the fewest principal components reaching the variance threshold."""
    if not 0 < variance_threshold <= 1:
        raise ValueError("variance_threshold must lie in (0, 1]")
    X, y = _check_xy(X, y)
    xm, ym = X.mean(axis=0), y.mean()
    Xc = X - xm
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    total = float(np.sum(s * s))
    if not total > 0:
        raise DegenerateInputError("X has zero variance")
    rank = int(np.sum(s > s[0] * max(Xc.shape) * np.finfo(float).eps))
    explained = (s * s / total)[:rank]
    k = _select_k(explained, variance_threshold)
    V = vt[:k].T
    scores = Xc @ V
    gamma = (scores.T @ (y - ym)) / (s[:k] ** 2)
    beta = V @ gamma
    return LinearModel("pcr", beta, float(ym - xm @ beta),
                       Projection(V, xm, explained[:k]), variance_threshold)


def fit_pls(X, y, variance_threshold: float = 0.95,
            n_components: Optional[int] = None) -> LinearModel:
    """Univariate-response PLS by NIPALS deflation.

    Components are added until the captured share of X variance reaches
    ``variance_threshold`` (or exactly ``n_components`` when given).  If the
    remaining X-y covariance vanishes first, the
    model carries the ``covariance_exhausted`` flag; the remaining components
    follow the leading directions of the residual X with zero loading, so
    they count toward the variance target without changing predictions.
    """
    if not 0 < variance_threshold <= 1:
        raise ValueError("variance_threshold must lie in (0, 1]")
    X, y = _check_xy(X, y)
    xm, ym = X.mean(axis=0), y.mean()
    E = X - xm
    f = y - ym
    total = float(np.sum(E * E))
    if not total > 0:
        raise DegenerateInputError("X has zero variance")
    P = X.shape[1]
    limit = min(P, X.shape[0] - 1) if X.shape[0] > 1 else 1
    if n_components is not None:
        limit = min(limit, n_components)
    W, Pl, c, explained = [], [], [], []
    flags = []
    scale = np.linalg.norm(E.T @ (y - ym)) or 1.0
    for _ in range(max(limit, 1)):
        cov = E.T @ f
        norm = np.linalg.norm(cov)
        if norm > 1e-12 * scale:
            w = cov / norm
        else:
            # y is fully explained; keep extracting X structure with zero loading
            if "covariance_exhausted" not in flags:
                flags.append("covariance_exhausted")
            _, sv, vt = np.linalg.svd(E, full_matrices=False)
            if sv[0] <= 1e-12 * np.sqrt(total):
                break
            w = vt[0]
        t = E @ w
        tt = float(t @ t)
        if tt <= 1e-300:
            break
        p = E.T @ t / tt
        ct = float(f @ t) / tt if norm > 1e-12 * scale else 0.0
        before = float(np.sum(E * E))
        E = E - np.outer(t, p)
        f = f - ct * t
        W.append(w)
        Pl.append(p)
        c.append(ct)
        explained.append((before - float(np.sum(E * E))) / total)
        if n_components is None and sum(explained) >= variance_threshold - _VAR_TOL:
            break
    Wm = np.column_stack(W)
    Pm = np.column_stack(Pl)
    beta = Wm @ np.linalg.solve(Pm.T @ Wm, np.asarray(c))
    return LinearModel("pls", beta, float(ym - xm @ beta),
                       Projection(Wm, xm, np.asarray(explained)), variance_threshold,
                       tuple(flags))


def predict_linear(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != model.coefficients.shape[0]:
        raise ShapeError(f"X has {X.shape[1]} features, model expects "
                         f"{model.coefficients.shape[0]}")
    return model.intercept + X @ model.coefficients


def save_linear(model: LinearModel, path, config_hash: str = "", **meta) -> None:
    header = {"format": LINEAR_FORMAT, "kind": model.kind, "intercept": model.intercept,
              "variance_threshold": model.variance_threshold, "flags": list(model.flags),
              "config_hash": config_hash, **meta}
    arrays = {"coefficients": model.coefficients}
    if model.projection is not None:
        arrays.update(components=model.projection.components,
                      feature_means=model.projection.feature_means,
                      explained=model.projection.explained)
    save_arrays(path, header, arrays)


def load_linear(path) -> LinearModel:
    meta, arrays = load_arrays(path)
    if meta.get("format") != LINEAR_FORMAT:
        raise ValueError(f"{path}: unsupported linear model format {meta.get('format')!r}")
    proj = None
    if "components" in arrays:
        proj = Projection(arrays["components"], arrays["feature_means"], arrays["explained"])
    return LinearModel(meta["kind"], arrays["coefficients"], float(meta["intercept"]), proj,
                       float(meta["variance_threshold"]), tuple(meta["flags"]))
