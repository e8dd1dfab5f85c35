"""Seeded synthetic panels with known ground truth.

Excess returns follow ``r[t, i] = f[t-1] @ beta[i] + h_i(f[t-1]) + noise``
with i.i.d. standard-normal factors.  ``h_i`` is zero for
``nonlinearity="none"`` and a centred mixture of ReLU ridges for
``"relu_mixture"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import OracleError
from .panel import Panel, month_span, add_months

_RELU_MEAN = 1.0 / math.sqrt(2.0 * math.pi)  # E[relu(Z)] for Z ~ N(0, 1)


@dataclass(frozen=True)
class SyntheticSpec:
    n_stocks: int = 20
    n_factors: int = 10
    n_months: int = 300
    true_beta: Optional[np.ndarray] = None
    beta_scale: float = 0.02
    noise_std: float = 0.05
    nonlinearity: str = "none"  # none | relu_mixture
    nonlinear_scale: float = 0.08
    n_ridges: int = 2
    missing_frac: float = 0.0
    protect_last_months: int = 0
    seed: int = 0
    start: str = "2000-01"
    rf_level: float = 0.002

    def __post_init__(self):
        if min(self.n_stocks, self.n_factors, self.n_months) < 1:
            raise ValueError("dimensions must be positive")
        if self.nonlinearity not in ("none", "relu_mixture"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.noise_std < 0 or not 0 <= self.missing_frac <= 1:
            raise ValueError("noise_std must be >= 0 and missing_frac in [0, 1]")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    beta: np.ndarray  # stocks x factors
    directions: np.ndarray  # 2*ridges x factors, unit rows in +/- pairs
    amplitudes: np.ndarray  # stocks x 2*ridges
    noise_std: float
    nonlinearity: str

    def signal(self, factors: np.ndarray) -> np.ndarray:
        """Conditional mean of next month's excess returns, ``months x stocks``."""
        out = factors @ self.beta.T
        if self.nonlinearity == "relu_mixture":
            ridges = np.maximum(factors @ self.directions.T, 0.0) - _RELU_MEAN
            out = out + ridges @ self.amplitudes.T
        return out

    def population_r2(self, n_mc: int = 200_000, seed: int = 12345) -> np.ndarray:
        """Per-stock ``var(signal) / (var(signal) + noise^2)``.

        Closed form for the linear case, Monte Carlo otherwise.
        """
        if self.nonlinearity == "none":
            var = np.sum(self.beta ** 2, axis=1)
        else:
            f = np.random.default_rng(seed).standard_normal((n_mc, self.beta.shape[1]))
            var = self.signal(f).var(axis=0)
        return var / (var + self.noise_std ** 2)


@dataclass(frozen=True, eq=False)
class SyntheticData:
    factors: Panel
    returns: Panel  # total returns: excess + risk-free
    marketcap: Panel
    riskfree: Panel
    excess: np.ndarray  # months x stocks, before missingness
    truth: GroundTruth

    def write_csvs(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name, panel in (("returns", self.returns), ("factors", self.factors),
                            ("marketcap", self.marketcap), ("riskfree", self.riskfree)):
            paths[name] = out / f"{name}.csv"
            panel.to_csv(paths[name])
        return paths


def generate(spec: SyntheticSpec) -> SyntheticData:
    rng = np.random.default_rng(spec.seed)
    T, N, P = spec.n_months, spec.n_stocks, spec.n_factors
    months = month_span(spec.start, add_months(spec.start, T - 1))
    stocks = [f"S{i + 1:03d}" for i in range(N)]
    names = [f"F{j + 1:03d}" for j in range(P)]

    if spec.true_beta is not None:
        beta = np.asarray(spec.true_beta, dtype=np.float64)
        if beta.shape != (N, P):
            raise ValueError(f"true_beta shape {beta.shape}, expected {(N, P)}")
    else:
        beta = rng.normal(0.0, spec.beta_scale, size=(N, P))
    # ridges come in +/- pairs so part of the signal is even in f and
    # invisible to any linear model
    half = rng.standard_normal((spec.n_ridges, P))
    half /= np.linalg.norm(half, axis=1, keepdims=True)
    directions = np.vstack([half, -half])
    amplitudes = spec.nonlinear_scale * rng.uniform(0.5, 1.5, size=(N, 2 * spec.n_ridges))
    truth = GroundTruth(beta, directions, amplitudes, spec.noise_std, spec.nonlinearity)

    f = rng.standard_normal((T, P))
    noise = spec.noise_std * rng.standard_normal((T, N))
    excess = noise.copy()
    excess[1:] += truth.signal(f[:-1])
    rf = spec.rf_level * (1.0 + 0.5 * np.abs(rng.standard_normal(T)))
    total = excess + rf[:, None]
    log_cap0 = rng.normal(10.0, 1.0, size=N)
    caps = np.exp(log_cap0 + np.cumsum(np.clip(total, -0.9, None), axis=0))

    f_obs, r_obs = f.copy(), total.copy()
    if spec.missing_frac > 0:
        editable = T - spec.protect_last_months
        for arr in (f_obs, r_obs):
            mask = rng.random(arr.shape) < spec.missing_frac
            mask[editable:] = False
            arr[mask] = np.nan

    return SyntheticData(
        factors=Panel(months, names, f_obs, "factors"),
        returns=Panel(months, stocks, r_obs, "returns"),
        marketcap=Panel(months, stocks, caps, "marketcap"),
        riskfree=Panel(months, ("rf",), rf[:, None], "riskfree"),
        excess=excess,
        truth=truth,
    )


def oracle_ols(X, y) -> np.ndarray:
    """Solve the normal equations by Cholesky; no intercept is added."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    G = X.T @ X
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise OracleError("X'X is not positive definite (rank deficient X)") from None
    if np.min(np.abs(np.diag(L))) <= 1e-12 * np.max(np.abs(np.diag(L))):
        raise OracleError("X'X is numerically singular")
    z = np.linalg.solve(L, X.T @ y)
    return np.linalg.solve(L.T, z)
