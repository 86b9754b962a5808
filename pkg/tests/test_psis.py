import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from psisloo import oracle
from psisloo.gpd import GeneralizedPareto, fit_gpd, gpd_quantile
from psisloo.psis import (
    TAIL_DEGENERATE,
    TAIL_TOO_SMALL,
    diagnose,
    diagnostic_levels,
    level_counts,
    psis_smooth,
    psis_smooth_matrix,
    raw_log_ratios,
    tail_size,
    truncate_weights,
)

log_ratio_vectors = arrays(float, st.integers(2, 300), elements=st.floats(-50, 50))
# multiples of 1/8: adding another multiple of 1/8 is exact in floating point
grid_values = st.integers(-400, 400).map(lambda i: i / 8)
grid_vectors = arrays(float, st.integers(2, 300), elements=grid_values)


class TestRawRatios:
    def test_unit_likelihoods(self):
        np.testing.assert_array_equal(raw_log_ratios([0.0, 0.0, 0.0]), [0, 0, 0])

    def test_negation(self):
        np.testing.assert_array_equal(raw_log_ratios([-1.0, -2.0]), [1.0, 2.0])

    def test_shift(self, rng):
        col = rng.normal(size=10)
        np.testing.assert_allclose(raw_log_ratios(col + 2.5), raw_log_ratios(col) - 2.5,
                                   rtol=1e-15)


class TestTruncation:
    def test_constant_unchanged(self):
        w = truncate_weights(np.zeros(4), 0.5)
        np.testing.assert_allclose(np.exp(w.log_weights), 1.0, rtol=1e-15)
        assert w.k_hat is None

    def test_square_root_rule(self):
        w = truncate_weights(np.log([1.0, 1.0, 1.0, 97.0]), 0.5)
        np.testing.assert_allclose(np.exp(w.log_weights), [1, 1, 1, 50], rtol=1e-13)

    def test_heavy_truncation(self):
        w = truncate_weights(np.log([1.0, 1.0, 1.0, 97.0]), 0.25)
        np.testing.assert_allclose(np.exp(w.log_weights), [1, 1, 1, 25 * 4 ** 0.25], rtol=1e-13)
        assert 25 * 4 ** 0.25 == pytest.approx(35.355339, abs=1e-6)

    def test_large_log_ratios(self):
        w = truncate_weights(np.array([800.0, 800.0, 800.0, 800.0 + math.log(97)]), 0.5)
        assert np.exp(w.log_weights[-1] - 800.0) == pytest.approx(50.0, rel=1e-12)

    @pytest.mark.parametrize("e", [0.0, 1.5])
    def test_bad_exponent(self, e):
        with pytest.raises(ValueError):
            truncate_weights(np.zeros(4), e)

    @settings(max_examples=200, deadline=None)
    @given(log_ratio_vectors, st.sampled_from([0.25, 0.5, 1.0]))
    def test_bound(self, lr, e):
        w = np.exp(truncate_weights(lr, e).log_weights - lr.max())
        rbar = np.mean(np.exp(lr - lr.max()))
        assert np.all(w <= lr.size ** e * rbar * (1 + 1e-12))


class TestTailSize:
    @pytest.mark.parametrize("S, M", [(4000, 800), (1000, 200), (10, 2), (11, 3), (3, 1)])
    def test_ceiling(self, S, M):
        assert tail_size(S) == M


class TestSmooth:
    def test_all_equal(self):
        w = psis_smooth(np.full(100, 2.0))
        np.testing.assert_array_equal(w.log_weights, 2.0)
        assert w.k_hat is None
        assert w.status == TAIL_DEGENERATE and w.tail_degenerate

    def test_too_few_draws(self):
        lr = np.log(np.arange(1.0, 11.0))
        w = psis_smooth(lr)
        assert w.status == TAIL_TOO_SMALL and w.k_hat is None

    def test_degenerate_falls_back_to_truncation(self):
        lr = np.log(np.r_[np.ones(15), 50.0])
        w = psis_smooth(lr)
        t = truncate_weights(lr, 0.75)
        assert w.k_hat is None
        np.testing.assert_allclose(w.log_weights, t.log_weights, rtol=1e-15)

    def test_known_tail(self):
        r = oracle.gen_heavy_ratios(0.7, 1.0, 10_000, 0.2, seed=0)
        assert 0.6 < psis_smooth(np.log(r)).k_hat < 0.8

    def test_replaced_values_are_quantiles(self, rng):
        S = 500
        lr = rng.standard_normal(S)
        w = psis_smooth(lr, trunc_exponent=None)
        M = tail_size(S)
        order = np.argsort(lr)
        threshold = math.exp(lr[order[S - M - 1]])
        fit = fit_gpd(np.exp(lr[order[S - M:]]) - threshold, threshold)
        assert w.k_hat == pytest.approx(fit.k_hat, rel=1e-12)
        expected = gpd_quantile(fit.dist, (np.arange(1, M + 1) - 0.5) / M)
        np.testing.assert_allclose(np.exp(w.log_weights[order[S - M:]]), expected, rtol=1e-12)
        np.testing.assert_array_equal(w.log_weights[order[:S - M]], lr[order[:S - M]])
        assert int(np.sum(w.log_weights != lr)) == M

    def test_bulk_matches_truncation_for_light_tail(self, rng):
        # bounded ratios: the non-tail 80% equal the truncated raw ratios
        lr = np.log(rng.uniform(1, 2, 1000))
        w = psis_smooth(lr)
        t = truncate_weights(lr, 0.75)
        bulk = np.argsort(lr)[:800]
        np.testing.assert_array_equal(w.log_weights[bulk], t.log_weights[bulk])

    def test_ties_at_threshold(self):
        lr = np.log(np.r_[np.ones(70), np.linspace(2, 5, 30)])
        w = psis_smooth(lr)
        assert w.status == "smoothed"
        assert w.k_hat is not None

    def test_monotone_input(self, rng):
        lr = np.sort(rng.standard_normal(1000) * 2)
        assert np.all(np.diff(psis_smooth(lr).log_weights) >= 0)

    @settings(max_examples=100, deadline=None)
    @given(log_ratio_vectors)
    def test_order_preserved(self, lr):
        w = psis_smooth(lr).log_weights
        order = np.argsort(lr, kind="stable")
        assert np.all(np.diff(w[order]) >= 0)

    @settings(max_examples=100, deadline=None)
    @given(grid_vectors, grid_values)
    def test_scale_invariance(self, lr, c):
        a, b = psis_smooth(lr), psis_smooth(lr + c)
        if a.k_hat is None:
            assert b.k_hat is None
        else:
            assert b.k_hat == pytest.approx(a.k_hat, abs=1e-10)
        np.testing.assert_allclose(b.weights, a.weights, rtol=1e-9, atol=1e-300)

    @settings(max_examples=200, deadline=None)
    @given(log_ratio_vectors)
    def test_bound(self, lr):
        w = psis_smooth(lr)
        pre = psis_smooth(lr, trunc_exponent=None)
        top = pre.log_weights.max()
        wbar = np.mean(np.exp(pre.log_weights - top))
        assert np.all(np.exp(w.log_weights - top) <= lr.size ** 0.75 * wbar * (1 + 1e-12))

    def test_finite_for_extreme_inputs(self, rng):
        lr = rng.standard_normal(2000) * 300
        w = psis_smooth(lr)
        assert np.all(np.isfinite(w.log_weights))

    def test_matrix_matches_columns(self, rng):
        lr = rng.standard_normal((400, 6)) * np.array([0.1, 1, 2, 3, 5, 8])
        lw, k, status, cap = psis_smooth_matrix(lr)
        for i in range(6):
            single = psis_smooth(lr[:, i])
            np.testing.assert_array_equal(lw[:, i], single.log_weights)
            assert (single.k_hat is None and np.isnan(k[i])) or single.k_hat == k[i]

    @pytest.mark.parametrize("f", [0.0, 1.0, -0.2])
    def test_bad_tail_fraction(self, f):
        with pytest.raises(ValueError):
            psis_smooth(np.zeros(100), tail_fraction=f)


class TestDiagnose:
    @pytest.mark.parametrize("k, level", [
        (0.3, "good"), (0.49999, "good"), (0.5, "ok"), (0.6, "ok"), (0.7, "ok"),
        (0.70001, "warn_high"), (1.0, "warn_high"), (1.2, "severe"), (-0.4, "good"),
    ])
    def test_ladder(self, k, level):
        flag = diagnose(k)
        assert flag.level == level and flag.k_hat == k

    @pytest.mark.parametrize("k", [None, float("nan")])
    def test_undefined(self, k):
        flag = diagnose(k)
        assert flag.level == "good" and flag.k_hat is None and flag.note

    def test_vectorized_agrees(self):
        ks = np.array([np.nan, -1, 0.3, 0.5, 0.7, 0.8, 1.0, 1.5])
        assert diagnostic_levels(ks).tolist() == [diagnose(float(k)).level for k in ks]
        assert level_counts(ks) == {"good": 3, "ok": 2, "warn_high": 2, "severe": 1}

    @pytest.mark.parametrize("k, level", [(0.3, "good"), (1.2, "severe")])
    def test_generator_ladder(self, k, level):
        hits = sum(diagnose(psis_smooth(np.log(oracle.gen_heavy_ratios(k, 1.0, 4000, 0.2, s)))
                            .k_hat).level == level for s in range(100))
        assert hits >= 90

    def test_flat_likelihood(self):
        model = oracle.simulate(5, seed=1, obs_sd=1e6)
        m = oracle.sample_loglik(model, 1000, seed=2)
        for i in range(5):
            w = psis_smooth(raw_log_ratios(m.column(i)))
            assert w.tail_degenerate or w.k_hat < 0.5
