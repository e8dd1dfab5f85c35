"""Deliberately naive reference implementations of every metric.

Plain Python loops over lists, no numpy, no shared helpers with the
production code.  Tests compare the vectorized implementations against
these.
"""

import math


def _mean(xs):
    total = 0.0
    for x in xs:
        total += x
    return total / len(xs)


def _sample_std(xs):
    m = _mean(xs)
    acc = 0.0
    for x in xs:
        acc += (x - m) ** 2
    return math.sqrt(acc / (len(xs) - 1))


def mse(realized, predicted):
    acc = 0.0
    for r, p in zip(realized, predicted):
        acc += (r - p) ** 2
    return acc / len(realized)


def oos_r2(realized, predicted, train_mean):
    num = 0.0
    den = 0.0
    for r, p in zip(realized, predicted):
        num += (r - p) ** 2
        den += (r - train_mean) ** 2
    return 1.0 - num / den


def dm_statistic(abs_err_m, abs_err_n):
    """Rows are months, columns are stocks (lists of lists)."""
    d = []
    for row_m, row_n in zip(abs_err_m, abs_err_n):
        acc = 0.0
        for a, b in zip(row_m, row_n):
            acc += a - b
        d.append(acc / len(row_m))
    dbar = _mean(d)
    se = _sample_std(d) / math.sqrt(len(d))
    return dbar / se


def annualized_return(returns):
    growth = 1.0
    for r in returns:
        growth *= 1.0 + r
    return growth ** (12.0 / len(returns)) - 1.0


def sharpe(returns):
    return _mean(returns) / _sample_std(returns)


def sortino(returns):
    negatives = [r for r in returns if r < 0]
    acc = 0.0
    for r in negatives:
        acc += r * r
    return _mean(returns) / math.sqrt(acc / len(negatives))


def max_drawdown(returns):
    wealth = 1.0
    peak = 1.0
    worst = 0.0
    for r in returns:
        wealth *= 1.0 + r
        if wealth > peak:
            peak = wealth
        dd = (peak - wealth) / peak
        if dd > worst:
            worst = dd
    return worst


def jensens_alpha(realized, predicted):
    """Rows are months, columns are stocks.  Returns ``(alpha, t_stat)``."""
    n_months = len(realized)
    n_stocks = len(realized[0])
    alphas = []
    for i in range(n_stocks):
        r_col = [realized[t][i] for t in range(n_months)]
        p_col = [predicted[t][i] for t in range(n_months)]
        alphas.append(_mean(r_col) - _mean(p_col))
    gaps = []
    for t in range(n_months):
        gaps.append(_mean([realized[t][i] - predicted[t][i] for i in range(n_stocks)]))
    t_stat = _mean(gaps) / (_sample_std(gaps) / math.sqrt(n_months))
    return _mean(alphas), t_stat


def sign_strategy_positions(realized, forecast):
    """Single-stock positions for the long-only sign rule (forecast aligned to target month)."""
    positions = [0] * len(realized)
    state = 0
    for t in range(len(realized) - 1):
        if state == 0 and realized[t] > 0 and forecast[t + 1] > 0:
            state = 1
        elif state == 1 and realized[t] <= 0 and forecast[t + 1] <= 0:
            state = 0
        positions[t + 1] = state
    return positions
