import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlp_factor.errors import DegenerateInputError, ShapeError
from mlp_factor.linear import (
    fit_ols,
    fit_pcr,
    fit_pls,
    load_linear,
    predict_linear,
    save_linear,
)
from mlp_factor.synthetic import oracle_ols


def design(seed, T=80, P=5):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(T, P)), rng


class TestOLS:
    def test_exact_recovery(self):
        X, rng = design(0)
        beta = rng.normal(size=5)
        m = fit_ols(X, 0.3 + X @ beta)
        np.testing.assert_allclose(m.coefficients, beta, rtol=0, atol=1e-10)
        assert m.intercept == pytest.approx(0.3, abs=1e-12)

    def test_zero_design(self):
        m = fit_ols(np.zeros((4, 2)), [1.0, 2.0, 3.0, 6.0])
        assert np.all(m.coefficients == 0) and m.intercept == 3.0
        assert "rank_deficient" in m.flags

    def test_line(self):
        m = fit_ols([[1.0], [2.0], [3.0]], [2.0, 4.0, 6.0])
        assert m.coefficients[0] == pytest.approx(2.0, abs=1e-12)
        assert m.intercept == pytest.approx(0.0, abs=1e-12)
        assert predict_linear(m, [[5.0]])[0] == pytest.approx(10.0, abs=1e-12)

    def test_against_cholesky_oracle(self):
        for seed in range(20):
            X, rng = design(seed, 60, 6)
            y = rng.normal(size=60)
            m = fit_ols(X, y)
            Xa = np.column_stack([np.ones(60), X])
            ref = oracle_ols(Xa, y)
            np.testing.assert_allclose(m.coefficients, ref[1:], rtol=0, atol=1e-8)
            assert m.intercept == pytest.approx(ref[0], abs=1e-8)

    def test_shape_checks(self):
        with pytest.raises(ShapeError):
            fit_ols(np.ones((3, 2)), np.ones(4))
        with pytest.raises(ShapeError):
            predict_linear(fit_ols(np.eye(3), [1.0, 2.0, 3.0]), np.ones((2, 4)))


class TestPCR:
    def test_dominant_direction(self):
        rng = np.random.default_rng(1)
        Z = rng.normal(size=(2000, 2))
        Z = (Z - Z.mean(0)) / Z.std(0)
        # whiten exactly so the sample eigenvalues are 0.96 and 0.04
        Z = np.linalg.qr(Z)[0] * np.sqrt(2000)
        rot = np.array([[np.cos(0.4), -np.sin(0.4)], [np.sin(0.4), np.cos(0.4)]])
        X = Z * np.sqrt([0.96, 0.04]) @ rot.T
        m = fit_pcr(X, rng.normal(size=2000), 0.95)
        assert m.n_components == 1
        assert m.projection.explained[0] == pytest.approx(0.96, abs=1e-3)

    def test_full_threshold_uses_rank(self):
        X, rng = design(2, 50, 4)
        assert fit_pcr(X, rng.normal(size=50), 1.0).n_components == 4
        Xd = np.column_stack([X, X[:, 0] + X[:, 1]])
        assert fit_pcr(Xd, rng.normal(size=50), 1.0).n_components == 4

    def test_full_threshold_equals_ols(self):
        X, rng = design(3)
        y = rng.normal(size=80)
        Xt = rng.normal(size=(10, 5))
        np.testing.assert_allclose(predict_linear(fit_pcr(X, y, 1.0), Xt),
                                   predict_linear(fit_ols(X, y), Xt), rtol=0, atol=1e-8)

    def test_top_component_target(self):
        X, rng = design(4, 200, 5)
        X = X * np.array([5.0, 1.0, 1.0, 1.0, 1.0])
        Xc = X - X.mean(0)
        top = np.linalg.svd(Xc, full_matrices=False)[2][0]
        y = Xc @ top
        pcr = fit_pcr(X, y, 0.5)
        ols = fit_ols(X, y)

        def r2(m):
            resid = y - predict_linear(m, X)
            return 1 - resid @ resid / np.sum((y - y.mean()) ** 2)
        assert pcr.n_components == 1
        assert r2(pcr) == pytest.approx(r2(ols), abs=1e-6)

    def test_explained_shares_are_sorted(self):
        X, rng = design(5, 100, 6)
        m = fit_pcr(X * np.arange(1, 7), rng.normal(size=100), 1.0)
        e = m.projection.explained
        assert np.all(np.diff(e) <= 1e-15) and np.all(np.diff(np.cumsum(e)) >= 0)

    def test_zero_variance(self):
        with pytest.raises(DegenerateInputError):
            fit_pcr(np.ones((5, 2)), np.arange(5.0))


class TestPLS:
    def test_target_along_first_direction(self):
        X, rng = design(6, 100, 4)
        Xc = X - X.mean(0)
        w = np.linalg.svd(Xc, full_matrices=False)[2][1]  # X'X w is parallel to w
        y = Xc @ w
        m = fit_pls(X, y, n_components=1)
        assert np.max(np.abs(y - predict_linear(m, X))) < 1e-10

    def test_orthonormal_columns_need_all_components(self):
        Q = np.linalg.qr(np.random.default_rng(7).normal(size=(30, 4)))[0]
        Q = Q - Q.mean(0)
        Q = np.linalg.qr(Q)[0]
        y = Q @ np.array([1.0, 0.5, 0.25, 0.125]) + 0.01 * np.random.default_rng(8).normal(size=30)
        assert fit_pls(Q, y, 1.0).n_components == 4

    def test_single_column_equals_ols(self):
        X, rng = design(9, 40, 1)
        y = 2 * X[:, 0] + rng.normal(size=40)
        np.testing.assert_allclose(predict_linear(fit_pls(X, y), X),
                                   predict_linear(fit_ols(X, y), X), rtol=0, atol=1e-10)

    def test_full_components_equal_ols(self):
        X, rng = design(10, 60, 5)
        y = rng.normal(size=60)
        np.testing.assert_allclose(predict_linear(fit_pls(X, y, n_components=5), X),
                                   predict_linear(fit_ols(X, y), X), rtol=0, atol=1e-9)

    def test_uncorrelated_target_flags_exhaustion(self):
        X = np.column_stack([np.array([1.0, -1.0, 1.0, -1.0]), np.array([1.0, 1.0, -1.0, -1.0])])
        y = np.array([1.0, -1.0, -1.0, 1.0])  # orthogonal to both centred columns
        m = fit_pls(X, y)
        assert "covariance_exhausted" in m.flags
        assert np.all(predict_linear(m, X) == 0.0)


class TestShared:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["ols", "pcr", "pls"]))
    def test_row_order_invariance(self, seed, kind):
        X, rng = design(seed % 1000, 40, 4)
        y = rng.normal(size=40)
        fit = {"ols": fit_ols, "pcr": lambda a, b: fit_pcr(a, b, 0.9),
               "pls": lambda a, b: fit_pls(a, b, 0.9)}[kind]
        perm = np.random.default_rng(seed).permutation(40)
        Xt = rng.normal(size=(5, 4))
        np.testing.assert_allclose(predict_linear(fit(X, y), Xt),
                                   predict_linear(fit(X[perm], y[perm]), Xt),
                                   rtol=0, atol=1e-10)

    def test_zero_coefficients_predict_intercept(self):
        m = fit_ols(np.zeros((3, 2)), [1.0, 1.0, 1.0])
        assert np.all(predict_linear(m, np.ones((4, 2))) == 1.0)

    def test_fitted_values_reproduced(self):
        X, rng = design(11)
        y = rng.normal(size=80)
        m = fit_ols(X, y)
        resid = y - m.predict(X)
        assert abs(resid.sum()) < 1e-10  # OLS residuals are orthogonal to the intercept

    @pytest.mark.parametrize("kind", ["ols", "pcr", "pls"])
    def test_persistence(self, tmp_path, kind):
        X, rng = design(12)
        y = rng.normal(size=80)
        m = {"ols": fit_ols, "pcr": fit_pcr, "pls": fit_pls}[kind](X, y)
        save_linear(m, tmp_path / "m.params", "hash", stock="S1")
        again = load_linear(tmp_path / "m.params")
        assert again.kind == kind and again.intercept == m.intercept
        assert np.array_equal(again.predict(X), m.predict(X))
