import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlp_factor import oracles
from mlp_factor.backtest import (
    MetricReport,
    annualized_return,
    apply_costs,
    buy_and_hold,
    generate_signals,
    jensens_alpha,
    long_everywhere,
    max_drawdown,
    max_drawdown_from_wealth,
    metric_report,
    portfolio_breakdown,
    portfolio_returns,
    sharpe,
    sortino,
    wealth_path,
    write_report,
)
from mlp_factor.errors import (
    AlignmentError,
    DataError,
    DegenerateError,
    UndefinedMetricError,
    WipeoutError,
)
from mlp_factor.evaluation import PredictionSet
from mlp_factor.panel import Panel, add_months, month_span


def close(a, b, tol=1e-12):
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)


def preds(realized, predicted, start="2013-01", stocks=None):
    R = np.asarray(realized, dtype=float)
    if R.ndim == 1:
        R = R[:, None]
    P = np.asarray(predicted, dtype=float).reshape(R.shape)
    months = month_span(start, add_months(start, R.shape[0] - 1))
    stocks = stocks or tuple(f"S{i}" for i in range(R.shape[1]))
    return PredictionSet(stocks, months, P, R, np.zeros(R.shape[1]))


def caps_panel(values, start="2012-12", stocks=None):
    values = np.asarray(values, dtype=float)
    months = month_span(start, add_months(start, values.shape[0] - 1))
    stocks = stocks or tuple(f"S{i}" for i in range(values.shape[1]))
    return Panel(months, stocks, values, "marketcap")


class TestSignals:
    def test_hand_trace(self):
        # decision at t uses realized r_t and the forecast for t+1
        ps = preds([0.02, 0.01, -0.01, -0.03], [9.9, 0.01, -0.02, -0.01])
        ledger = generate_signals(None, ps)
        assert ledger.positions[:, 0].tolist() == [0, 1, 1, 0]
        assert [(e.kind, e.month) for e in ledger.events] == [
            ("open", "2013-02"), ("close", "2013-04")]

    def test_all_positive_opens_once(self):
        ps = preds([0.01] * 6, [0.02] * 6)
        ledger = generate_signals(None, ps)
        assert ledger.positions[:, 0].tolist() == [0, 1, 1, 1, 1, 1]
        assert [(e.kind, e.month) for e in ledger.events] == [
            ("open", "2013-02"), ("close", "2013-06")]

    def test_disagreement_stays_flat(self):
        ps = preds([0.01, -0.02, 0.03, -0.01], [0.0, -0.01, 0.02, -0.01])
        ledger = generate_signals(None, ps)
        assert ledger.positions.sum() == 0 and ledger.events == ()

    def test_zero_is_non_positive(self):
        ps = preds([0.0, 0.01, 0.0], [1.0, 1.0, 1.0])
        assert generate_signals(None, ps).positions[:, 0].tolist() == [0, 0, 1]

    def test_misaligned_panel(self):
        ps = preds([0.01, 0.02], [0.01, 0.02])
        other = Panel(ps.months, ("X",), np.array([[0.01], [0.02]]), "returns")
        with pytest.raises(AlignmentError):
            generate_signals(other, ps)

    def test_matches_oracle(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            r, f = rng.normal(0, 0.05, size=(2, 30))
            ledger = generate_signals(None, preds(r, f))
            assert ledger.positions[:, 0].tolist() == oracles.sign_strategy_positions(
                r.tolist(), f.tolist())

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.integers(1, 4))
    def test_long_only_and_alternating(self, seed, T, N):
        rng = np.random.default_rng(seed)
        ps = preds(rng.normal(size=(T, N)), rng.normal(size=(T, N)))
        ledger = generate_signals(None, ps)
        assert set(np.unique(ledger.positions)) <= {0, 1}
        for s in ps.stocks:
            kinds = [e.kind for e in ledger.events if e.stock == s]
            assert kinds == ["open", "close"] * (len(kinds) // 2)


class TestCosts:
    def ledger(self):
        return generate_signals(None, preds([0.02, 0.01, -0.01, -0.03], [0.0, 0.01, -0.02, -0.01]))

    def test_round_trip_costs_one_percent(self):
        out = apply_costs(self.ledger(), 50)
        assert out.cost.sum() == pytest.approx(0.01, abs=1e-15)
        assert out.cost[:, 0].tolist() == [0.0, 0.005, 0.0, 0.005]

    def test_zero_cost(self):
        out = apply_costs(self.ledger(), 0)
        assert np.array_equal(out.net, out.gross)

    def test_no_trades(self):
        ledger = generate_signals(None, preds([-0.01] * 4, [-0.01] * 4))
        out = apply_costs(ledger, 50)
        assert np.array_equal(out.net, out.gross)

    def test_literal_mode(self):
        ledger = generate_signals(None, preds([0.02, 0.04, -0.01, -0.03], [0, 0.01, -0.02, -0.01]))
        out = apply_costs(ledger, 50, "literal")
        assert out.cost[:, 0].tolist() == [0.0, 0.04 * 0.005, 0.0, 0.03 * 0.005]

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            apply_costs(self.ledger(), -1)
        with pytest.raises(ValueError):
            apply_costs(self.ledger(), 50, "bogus")

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_cost_monotone(self, seed):
        rng = np.random.default_rng(seed)
        ps = preds(rng.normal(0, 0.05, (24, 3)), rng.normal(0, 0.05, (24, 3)))
        ledger = generate_signals(None, ps)
        totals = [apply_costs(ledger, bp).net.sum() for bp in (0, 25, 50, 100, 200)]
        assert all(a >= b for a, b in zip(totals, totals[1:]))


class TestPortfolios:
    def test_equal_weights(self):
        raw = Panel(("2013-01",), ("S0", "S1"), np.array([[0.02, 0.04]]), "returns")
        assert portfolio_returns(raw).values[0] == pytest.approx(0.03, abs=1e-16)

    def test_value_weights_use_prior_caps(self):
        raw = Panel(("2013-01",), ("S0", "S1"), np.array([[0.02, 0.04]]), "returns")
        caps = caps_panel([[100.0, 300.0], [1.0, 1.0]])
        got = portfolio_returns(raw, "value", caps).values[0]
        assert got == pytest.approx(0.035, abs=1e-16)

    def test_missing_caps(self):
        raw = Panel(("2013-01",), ("S0", "S1"), np.array([[0.02, 0.04]]), "returns")
        with pytest.raises(DataError):
            portfolio_returns(raw, "value", caps_panel([[100.0, np.nan]]))
        with pytest.raises(DataError):
            portfolio_returns(raw, "value", caps_panel([[100.0, 1.0]], start="2013-01"))
        with pytest.raises(DataError):
            portfolio_returns(raw, "value")

    def test_single_stock_weightings_agree(self):
        ps = preds([0.01, -0.02, 0.03], [0.0, 0.0, 0.0])
        caps = caps_panel([[5.0], [6.0], [7.0]])
        eq = buy_and_hold(ps).values
        assert np.array_equal(eq, ps.realized[:, 0])
        assert np.array_equal(buy_and_hold(ps, "value", caps).values, eq)

    def test_identical_series_weightings_agree(self):
        r = np.tile([[0.01], [-0.02], [0.03]], (1, 3))
        ps = preds(r, np.zeros_like(r))
        caps = caps_panel(np.random.default_rng(0).uniform(1, 100, (3, 3)))
        assert np.array_equal(buy_and_hold(ps, "value", caps).values, buy_and_hold(ps).values)

    def test_constant_buy_and_hold(self):
        ps = preds(np.full((5, 2), 0.01), np.zeros((5, 2)))
        assert np.all(buy_and_hold(ps).values == 0.01)

    def test_buy_and_hold_is_long_everywhere(self):
        rng = np.random.default_rng(1)
        ps = preds(rng.normal(size=(8, 3)), rng.normal(size=(8, 3)))
        ledger = apply_costs(long_everywhere(ps), 0)
        assert np.array_equal(portfolio_returns(ledger).values, buy_and_hold(ps).values)

    def test_breakdown(self):
        ledger = apply_costs(generate_signals(
            None, preds([0.02, 0.01, -0.01, -0.03], [0.0, 0.01, -0.02, -0.01])), 50)
        gross, cost, net = portfolio_breakdown(ledger)
        assert np.array_equal(net, portfolio_returns(ledger).values)
        np.testing.assert_allclose(gross - cost, net, rtol=0, atol=1e-16)


class TestMetrics:
    def test_annualized_one_percent(self):
        assert annualized_return([0.01] * 12) == pytest.approx(0.126825030131970, abs=1e-14)

    def test_annualized_twelve_copies_is_cumulative(self):
        for r in (0.013, -0.02, 0.0):
            assert annualized_return([r] * 12) == math.prod([1 + r] * 12) - 1

    def test_annualized_zero(self):
        assert annualized_return([0.0] * 7) == 0.0

    def test_annualized_length_check(self):
        with pytest.raises(ValueError):
            annualized_return([0.01] * 3, n=4)

    def test_wipeout(self):
        with pytest.raises(WipeoutError):
            wealth_path([0.1, -1.0])
        with pytest.raises(WipeoutError):
            max_drawdown([-1.2])

    def test_sharpe_fixtures(self):
        assert sharpe([0.02, 0.0, -0.02]) == 0.0
        d = 0.02 / math.sqrt(2)
        assert sharpe([0.01 - d, 0.01 + d]) == pytest.approx(0.5, abs=1e-14)

    def test_sharpe_flat(self):
        with pytest.raises(UndefinedMetricError):
            sharpe([0.01, 0.01])

    def test_sortino_needs_a_loss(self):
        with pytest.raises(UndefinedMetricError):
            sortino([0.01, 0.02])

    def test_sortino_hand(self):
        # mean 0.01, negatives [-0.02] -> downside 0.02
        assert sortino([0.03, 0.02, -0.02]) == pytest.approx(0.5, abs=1e-15)

    def test_drawdown_fixtures(self):
        assert max_drawdown_from_wealth([1, 1.2, 0.9, 1.1]) == pytest.approx(0.25, abs=1e-15)
        assert max_drawdown([0.2, -0.25, 0.1 / 0.9]) == pytest.approx(0.25, abs=1e-15)
        assert max_drawdown([0.01, 0.0, 0.03]) == 0.0
        assert max_drawdown([0.03]) == 0.0
        assert max_drawdown([-0.3]) == pytest.approx(0.3, abs=1e-15)  # measured from initial wealth

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=40), st.integers(1, 10))
    def test_drawdown_ignores_leading_flat_months(self, rs, k):
        assert max_drawdown([0.0] * k + rs) == max_drawdown(rs)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=40))
    def test_drawdown_in_unit_interval(self, rs):
        assert 0.0 <= max_drawdown(rs) < 1.0


class TestAlpha:
    def test_perfect_forecast_is_degenerate(self):
        r = np.random.default_rng(0).normal(size=(6, 2))
        with pytest.raises(DegenerateError) as info:
            jensens_alpha(preds(r, r))
        assert info.value.alpha == 0.0

    def test_constant_gap(self):
        r = np.random.default_rng(1).normal(size=(6, 2))
        with pytest.raises(DegenerateError) as info:
            jensens_alpha(r + 0.005, r)
        assert info.value.alpha == pytest.approx(0.005, abs=1e-15)

    def test_brute_force_mean_difference(self):
        rng = np.random.default_rng(2)
        R, P = rng.normal(size=(2, 24, 5))
        alpha, _ = jensens_alpha(R, P)
        brute = sum(R[t, i] - P[t, i] for t in range(24) for i in range(5)) / 120
        assert abs(alpha - brute) < 1e-12

    def test_single_month(self):
        with pytest.raises(AlignmentError):
            jensens_alpha([[0.1]], [[0.0]])


class TestReport:
    def test_report_row_and_file(self, tmp_path):
        rng = np.random.default_rng(0)
        ps = preds(rng.normal(0, 0.05, (12, 2)), rng.normal(0, 0.05, (12, 2)))
        rep = metric_report("ols", "equal", "2112", buy_and_hold(ps), ps)
        assert isinstance(rep, MetricReport) and 0 <= rep.mdd <= 1 and rep.std >= 0
        write_report([rep], tmp_path / "report.csv")
        lines = (tmp_path / "report.csv").read_text().splitlines()
        assert lines[0] == "period,weighting,model,annual_return,std,sharpe,sortino,mdd,alpha,t_stat"
        assert lines[1].startswith("2112,equal,ols,")

    def test_undefined_metrics_are_blank(self):
        rep = metric_report("x", "equal", "p", [0.01, 0.02])
        assert rep.row()[6] == ""  # no losing month, no sortino


def test_always_agreeing_signals_reproduce_buy_and_hold_after_entry():
    rng = np.random.default_rng(5)
    r = np.abs(rng.normal(0.01, 0.02, size=(24, 4))) + 1e-4
    ps = preds(r, r)
    strategy = portfolio_returns(apply_costs(generate_signals(None, ps), 0)).values
    bench = buy_and_hold(ps).values
    assert strategy[0] == 0.0
    assert np.array_equal(strategy[1:], bench[1:])


def test_oracle_agreement_on_random_fixtures():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        T, N = int(rng.integers(3, 48)), int(rng.integers(1, 6))
        s = rng.normal(0.005, 0.05, size=T)
        s[0] = -abs(s[0])  # at least one losing month
        assert close(annualized_return(s), oracles.annualized_return(s.tolist()))
        assert close(sharpe(s), oracles.sharpe(s.tolist()))
        assert close(sortino(s), oracles.sortino(s.tolist()))
        assert close(max_drawdown(s), oracles.max_drawdown(s.tolist()))
        R, P = rng.normal(0, 0.05, size=(2, T, N))
        alpha, t = jensens_alpha(R, P)
        ref_alpha, ref_t = oracles.jensens_alpha(R.tolist(), P.tolist())
        assert close(alpha, ref_alpha) and close(t, ref_t)
