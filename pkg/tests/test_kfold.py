import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psisloo import oracle
from psisloo.errors import CoverageError, InvalidK, LengthMismatch, NonFinite, ParseError
from psisloo.estimators import build_result, se_of
from psisloo.kfold import (
    FoldAssignment,
    FoldLogLik,
    burman_correction,
    burman_from_folds,
    elpd_kfold,
    make_folds,
    make_repeated_folds,
    summarize_repetitions,
)
from psisloo.loglik import validate_matrix


@st.composite
def n_and_k(draw):
    n = draw(st.integers(2, 200))
    return n, draw(st.integers(2, n))


def random_folds(rng, assignment, S=50):
    full = [rng.normal(-1, 0.5, size=(S, assignment.n)) for _ in range(assignment.K)]
    return [FoldLogLik.from_full(k + 1, f, assignment) for k, f in enumerate(full)]


class TestMakeFolds:
    def test_exact_division(self):
        a = make_folds(10, 5, seed=1)
        assert a.sizes().tolist() == [2] * 5

    def test_remainder(self):
        sizes = make_folds(11, 10, seed=1).sizes()
        assert sizes.size == 10 and set(sizes.tolist()) <= {1, 2} and sizes.sum() == 11

    @pytest.mark.parametrize("n, K", [(10, 11), (10, 1), (10, 0)])
    def test_invalid_k(self, n, K):
        with pytest.raises(InvalidK):
            make_folds(n, K)

    @settings(max_examples=100, deadline=None)
    @given(n_and_k(), st.integers(0, 2 ** 32))
    def test_partition_and_balance(self, nk, seed):
        n, K = nk
        a = make_folds(n, K, seed)
        assert sorted(np.concatenate([a.members(k) for k in range(1, K + 1)]).tolist()) == \
            list(range(n))
        sizes = a.sizes()
        assert sizes.min() >= 1 and sizes.max() - sizes.min() <= 1

    def test_deterministic(self):
        a, b = make_folds(50, 7, seed=3), make_folds(50, 7, seed=3)
        np.testing.assert_array_equal(a.assignment, b.assignment)
        assert not np.array_equal(a.assignment, make_folds(50, 7, seed=4).assignment)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from("abc"), min_size=6, max_size=80), st.integers(2, 5),
           st.integers(0, 1000))
    def test_stratified_balance(self, labels, K, seed):
        labels = np.array(labels)
        if K > labels.size:
            return
        a = make_folds(labels.size, K, seed, strata=labels)
        for s in np.unique(labels):
            counts = np.bincount(a.assignment[labels == s], minlength=K + 1)[1:]
            assert counts.max() - counts.min() <= 1
        assert a.sizes().max() - a.sizes().min() <= 1

    def test_strata_length(self):
        with pytest.raises(LengthMismatch):
            make_folds(5, 2, strata=["a", "b"])

    def test_repeated(self):
        reps = make_repeated_folds(30, 5, 4, seed=0)
        assert len(reps) == 4
        assert len({tuple(r.assignment) for r in reps}) == 4


class TestCsv:
    def test_round_trip(self, tmp_path):
        a = make_folds(17, 4, seed=2)
        path = tmp_path / "folds.csv"
        a.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "point_index,fold_id"
        assert lines[1].startswith("1,")
        b = FoldAssignment.read_csv(path)
        np.testing.assert_array_equal(a.assignment, b.assignment)
        assert b.K == 4

    def test_missing_point(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("point_index,fold_id\n1,1\n3,2\n")
        with pytest.raises(CoverageError):
            FoldAssignment.read_csv(path)

    def test_bad_row(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("point_index,fold_id\n1,1\n2,x\n")
        with pytest.raises(ParseError) as info:
            FoldAssignment.read_csv(path)
        assert info.value.line == 3


class TestElpdKfold:
    def test_pointwise_definition(self, rng):
        a = make_folds(12, 3, seed=0)
        folds = random_folds(rng, a)
        res = elpd_kfold(folds, a)
        for f in folds:
            for j, i in enumerate(a.members(f.fold)):
                h = f.holdout_loglik[:, j]
                assert res.elpd[i] == pytest.approx(np.log(np.mean(np.exp(h))), rel=1e-13)
        assert res.method == "kfold" and res.pointwise.kind == "elpd_kfold"
        assert res.p_eff is None
        assert res.total == pytest.approx(np.sum(res.elpd), rel=1e-10)
        assert res.se_total == pytest.approx(se_of(res.elpd))

    def test_missing_fold(self, rng):
        a = make_folds(12, 3, seed=0)
        with pytest.raises(CoverageError):
            elpd_kfold(random_folds(rng, a)[:2], a)

    def test_duplicated_fold(self, rng):
        a = make_folds(12, 3, seed=0)
        folds = random_folds(rng, a)
        with pytest.raises(CoverageError):
            elpd_kfold(folds + [folds[0]], a)

    def test_wrong_columns(self, rng):
        a = make_folds(12, 3, seed=0)
        folds = random_folds(rng, a)
        folds[1] = FoldLogLik(2, folds[1].holdout_loglik[:, :-1])
        with pytest.raises(CoverageError):
            elpd_kfold(folds, a)

    def test_non_finite(self, rng):
        a = make_folds(6, 2, seed=0)
        folds = random_folds(rng, a)
        h = folds[0].holdout_loglik.copy()
        h[2, 1] = -np.inf
        with pytest.raises(NonFinite):
            elpd_kfold([FoldLogLik(1, h), folds[1]], a)

    def test_order_invariance(self, rng):
        a = make_folds(20, 4, seed=5)
        folds = random_folds(rng, a)
        base = elpd_kfold(folds, a)
        shuffled = [FoldLogLik(f.fold, f.holdout_loglik[rng.permutation(50)])
                    for f in reversed(folds)]
        np.testing.assert_allclose(elpd_kfold(shuffled, a).elpd, base.elpd, rtol=1e-14)

    def test_p_eff_with_full_matrix(self, rng):
        a = make_folds(10, 2, seed=0)
        full = validate_matrix(rng.normal(-1, 0.3, size=(40, 10)))
        res = elpd_kfold(random_folds(rng, a), a, full)
        lpd = np.log(np.mean(np.exp(full.values), axis=0))
        assert res.p_eff == pytest.approx(lpd.sum() - res.total, rel=1e-12)

    def test_k_equals_n_matches_exact_loo(self):
        model = oracle.simulate(15, seed=2)
        a = make_folds(15, 15, seed=2)
        res = elpd_kfold(oracle.sample_fold_logliks(model, a, 20_000, seed=3), a)
        np.testing.assert_allclose(res.elpd, oracle.exact_loo(model).values, atol=0.02)


class TestBurman:
    def base(self, elpd):
        return build_result("kfold", np.asarray(elpd, float), kind="elpd_kfold", options={"K": 2})

    def test_no_deficit(self):
        full = np.array([-1.0, -2.0, -0.5])
        res = burman_correction(self.base([-1.2, -2.4, -0.9]), full, [full, full])
        np.testing.assert_array_equal(res.elpd, [-1.2, -2.4, -0.9])
        assert res.corrected and res.diagnostics["correction"] == 0.0

    def test_plus_three(self):
        full = np.full(10, -10.0)
        per_fold = [np.full(10, -10.2), np.full(10, -10.4)]
        kf = self.base(np.full(10, -11.0))
        res = burman_correction(kf, full, per_fold)
        assert res.diagnostics["correction"] == pytest.approx(3.0, abs=1e-12)
        assert res.total == pytest.approx(kf.total + 3.0, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            burman_correction(self.base([0.0, 0.0]), np.zeros(3), [np.zeros(3)])

    def test_from_folds_needs_full(self, rng):
        a = make_folds(6, 2, seed=0)
        folds = [FoldLogLik(f.fold, f.holdout_loglik) for f in random_folds(rng, a)]
        full = validate_matrix(rng.normal(size=(20, 6)))
        with pytest.raises(LengthMismatch):
            burman_from_folds(elpd_kfold(folds, a), full, folds)

    def test_leave_one_out_case_on_oracle(self):
        raw, corrected = [], []
        for seed in range(100):
            model = oracle.simulate(8, seed)
            a = make_folds(8, 8, seed)
            folds = oracle.sample_fold_logliks(model, a, 4000, seed + 1)
            full = oracle.sample_loglik(model, 4000, seed + 2)
            kf = elpd_kfold(folds, a, full)
            target = oracle.expected_elpd(model, true_mean=0.0)
            raw.append(abs(kf.total - target))
            corrected.append(abs(burman_from_folds(kf, full, folds).total - target))
        assert np.median(corrected) <= np.median(raw)


def test_repetition_summary(rng):
    results = [build_result("kfold", rng.normal(size=5), kind="elpd_kfold") for _ in range(4)]
    s = summarize_repetitions(results)
    totals = [r.total for r in results]
    assert s.mean_total == pytest.approx(np.mean(totals))
    assert s.sd_total == pytest.approx(np.std(totals, ddof=1))
