"""Held-out scoring, attribution divergence, and residual diagnostics."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hawkesgeo.diagnostics import (
    EvalSplit,
    background_qq,
    categorical_accuracy,
    hellinger_divergence,
    kendall_distance_correlation,
    phi_rmse,
    split_eval,
)
from hawkesgeo.em import BranchingStructure, e_step
from hawkesgeo.model import (
    EmbeddingPair,
    EventRecord,
    KernelBank,
    ModelParams,
    NumericsWarning,
    log_likelihood,
)
from hawkesgeo.simulate import sample_ground_truth, simulate_thinning

from conftest import make_branching, make_model, make_record


class TestSplitEval:
    def test_sides_recombine_to_full_loglik(self, rng):
        record = make_record(rng, n=3, N=40, T=10.0)
        params = make_model(rng, n=3)
        split = EvalSplit(4.0)
        train, test = split_eval(record, params, split)
        n_train = int(np.sum(record.times < 4.0))
        total = train * n_train + test * (record.N - n_train)
        assert_allclose(total, log_likelihood(record, params), rtol=1e-12)

    def test_empty_test_side_is_none_and_warns(self, rng):
        record = make_record(rng, n=2, N=10, T=5.0)
        params = make_model(rng, n=2)
        split = EvalSplit(record.horizon)
        with pytest.warns(NumericsWarning, match="empty test"):
            train, test = split_eval(record, params, split)
        assert train is not None
        assert test is None

    def test_empty_train_side_is_none_and_warns(self, rng):
        record = make_record(rng, n=2, N=10, T=5.0)
        params = make_model(rng, n=2)
        with pytest.warns(NumericsWarning, match="empty train"):
            train, test = split_eval(record, params, EvalSplit(0.0))
        assert train is None
        assert test is not None

    def test_split_beyond_horizon_rejected(self, rng):
        record = make_record(rng, n=2, N=10, T=5.0)
        params = make_model(rng, n=2)
        with pytest.raises(ValueError):
            split_eval(record, params, EvalSplit(5.5))

    def test_negative_split_rejected(self):
        with pytest.raises(ValueError):
            EvalSplit(-1.0)

    def test_poisson_per_event_value_concentrates(self):
        # For a homogeneous Poisson stream at rate mu the per-event value is
        # log(mu) - mu * t / N, and N / t -> mu, so it settles near log(mu) - 1.
        mu = 3.0
        params = ModelParams(
            EmbeddingPair(np.zeros((1, 2)), np.zeros((1, 2))),
            KernelBank(np.array([1.0]), np.array([1.0]), np.array([0.0])),
            np.array([1.0]),
            np.array([mu]),
        )
        record = simulate_thinning(params, T=2000.0, seed=3)
        train, test = split_eval(record, params, EvalSplit(1000.0))
        assert abs(train - (np.log(mu) - 1.0)) < 0.05
        assert abs(test - (np.log(mu) - 1.0)) < 0.05


def brute_hellinger(a: BranchingStructure, b: BranchingStructure) -> float:
    """Dictionary-based restatement: one distribution per event, keys shared."""
    N = a.record.N
    out = np.empty(N)
    for j in range(N):
        da = {(-1, -1): a.p_background[j]}
        db = {(-1, -1): b.p_background[j]}
        for e in range(a.p.size):
            if a.j_idx[e] == j:
                da[(int(a.i_idx[e]), int(a.r_idx[e]))] = a.p[e]
        for e in range(b.p.size):
            if b.j_idx[e] == j:
                db[(int(b.i_idx[e]), int(b.r_idx[e]))] = b.p[e]
        bc = sum(np.sqrt(da.get(k, 0.0) * db.get(k, 0.0)) for k in set(da) | set(db))
        out[j] = np.sqrt(max(0.0, 1.0 - bc))
    return float(out.mean())


def all_background(record: EventRecord) -> BranchingStructure:
    empty = np.array([], dtype=np.int64)
    return BranchingStructure(record, empty, empty, empty,
                              np.array([], dtype=np.float64),
                              np.ones(record.N), R=1)


class TestHellinger:
    def test_identical_attributions_score_zero(self, rng):
        record = make_record(rng, n=2, N=8)
        b = make_branching(rng, record, R=2)
        # rounded row sums put each Bhattacharyya coefficient at 1 +- eps,
        # which the sqrt inflates to ~1e-8
        assert hellinger_divergence(b, b) < 1e-7

    def test_disjoint_support_scores_one(self, rng):
        record = make_record(rng, n=2, N=6)
        est = all_background(record)
        truth = make_branching(rng, record, R=1)
        # strip all background mass from the truth side, except event 0 which
        # has no possible trigger and must stay exogenous
        keep = np.zeros(record.N)
        keep[0] = 1.0
        scale = 1.0 / (1.0 - truth.p_background[truth.j_idx])
        truth = BranchingStructure(record, truth.i_idx, truth.j_idx, truth.r_idx,
                                   truth.p * scale, keep, R=1)
        expected = (record.N - 1) / record.N  # event 0 agrees exactly
        assert_allclose(hellinger_divergence(est, truth), expected, rtol=1e-12)

    def test_symmetry(self, rng):
        record = make_record(rng, n=3, N=10)
        a = make_branching(rng, record, R=2)
        b = make_branching(rng, record, R=2)
        assert_allclose(hellinger_divergence(a, b), hellinger_divergence(b, a),
                        rtol=1e-14)

    def test_two_event_example_by_hand(self):
        record = EventRecord([0, 1], [1.0, 2.0], 2, 3.0)
        one = np.array([1], dtype=np.int64)
        zero = np.array([0], dtype=np.int64)
        a = BranchingStructure(record, zero, one, zero, np.array([0.75]),
                               np.array([1.0, 0.25]), R=1)
        b = BranchingStructure(record, zero, one, zero, np.array([0.25]),
                               np.array([1.0, 0.75]), R=1)
        # event 0 agrees; event 1 has BC = 2 sqrt(3)/4, so H = (sqrt(3)-1)/2
        expected = (np.sqrt(3.0) - 1.0) / 4.0
        assert_allclose(hellinger_divergence(a, b), expected, rtol=1e-14)

    def test_matches_brute_force_on_em_attributions(self, rng):
        record = make_record(rng, n=3, N=25, T=8.0)
        pa = make_model(rng, n=3, R=2)
        pb = make_model(rng, n=3, R=2)
        a = e_step(record, pa, floor=1e-12)
        b = e_step(record, pb, floor=1e-12)
        assert_allclose(hellinger_divergence(a, b), brute_hellinger(a, b),
                        rtol=1e-12)

    def test_mismatched_records_rejected(self, rng):
        ra = make_record(rng, n=2, N=5)
        rb = make_record(rng, n=2, N=6)
        with pytest.raises(ValueError, match="different records"):
            hellinger_divergence(all_background(ra), all_background(rb))


class TestBackgroundQQ:
    def test_full_background_subset_is_exact(self, rng):
        record = make_record(rng, n=2, N=30, T=10.0)
        params = make_model(rng, n=2)
        points = background_qq(record, params, all_background(record), seed=0)
        assert points.shape == (record.N - 1, 2)
        assert_allclose(points[:, 0], np.sort(np.diff(record.times)), rtol=0)
        q = (np.arange(1, record.N) - 0.5) / (record.N - 1)
        assert_allclose(points[:, 1], -np.log1p(-q) / params.mu.sum(), rtol=1e-14)

    def test_columns_increase(self, rng):
        record = make_record(rng, n=2, N=50, T=20.0)
        params = make_model(rng, n=2)
        b = make_branching(rng, record, R=1)
        points = background_qq(record, params, b, seed=4)
        assert np.all(np.diff(points[:, 0]) >= 0.0)
        assert np.all(np.diff(points[:, 1]) > 0.0)

    def test_same_seed_reproduces_subset(self, rng):
        record = make_record(rng, n=2, N=40, T=15.0)
        params = make_model(rng, n=2)
        b = make_branching(rng, record, R=1)
        first = background_qq(record, params, b, seed=9)
        second = background_qq(record, params, b, seed=9)
        assert np.array_equal(first, second)

    def test_subset_sampling_follows_background_probabilities(self, rng):
        record = make_record(rng, n=2, N=40, T=15.0)
        params = make_model(rng, n=2)
        b = make_branching(rng, record, R=1)
        points = background_qq(record, params, b, seed=7)
        pick = np.random.default_rng(7).random(record.N) < b.p_background
        expected = np.sort(np.diff(record.times[pick]))
        assert_allclose(points[:, 0], expected, rtol=0)

    def test_tiny_subset_returns_none_and_warns(self, rng):
        record = make_record(rng, n=2, N=10, T=5.0)
        params = make_model(rng, n=2)
        b = BranchingStructure(record, *[np.array([], dtype=np.int64)] * 3,
                               np.array([], dtype=np.float64),
                               np.zeros(record.N), R=1)
        with pytest.warns(NumericsWarning, match="subset smaller"):
            assert background_qq(record, params, b, seed=0) is None

    def test_zero_background_rate_rejected(self, rng):
        record = make_record(rng, n=2, N=10, T=5.0)
        params = make_model(rng, n=2)
        zeroed = ModelParams(params.embedding, params.kernels, params.xi,
                             np.zeros(2))
        with pytest.raises(ValueError, match="background rate"):
            background_qq(record, zeroed, all_background(record), seed=0)


class TestCategoricalAccuracy:
    @staticmethod
    def flat_params(n, mu):
        return ModelParams(
            EmbeddingPair(np.zeros((n, 2)), np.zeros((n, 2))),
            KernelBank(np.array([1.0]), np.array([1.0]), np.array([0.0])),
            np.ones(n),
            mu,
        )

    def test_uniform_intensity_scores_one_over_n(self, rng):
        record = make_record(rng, n=4, N=40, T=10.0)
        params = self.flat_params(4, np.full(4, 0.7))
        score, naive = categorical_accuracy(record, params, (5.0, 10.0))
        assert_allclose(score, 0.25, rtol=1e-12)
        realized = record.types[(record.times >= 5.0) & (record.times < 10.0)]
        hist = record.types[record.times < 5.0]
        share = np.bincount(hist, minlength=4) / hist.size
        assert_allclose(naive, np.exp(np.mean(np.log(share[realized]))), rtol=1e-12)

    def test_single_type_scores_one(self, rng):
        record = make_record(rng, n=1, N=20, T=10.0)
        params = self.flat_params(1, np.array([1.0]))
        score, naive = categorical_accuracy(record, params, (5.0, 10.0))
        assert score == 1.0
        assert naive == 1.0

    def test_zero_share_collapses_to_zero(self, rng):
        record = make_record(rng, n=2, N=20, T=10.0)
        params = self.flat_params(2, np.array([1.0, 0.0]))
        assert np.any(record.types[record.times >= 5.0] == 1)
        score, _ = categorical_accuracy(record, params, (5.0, 10.0))
        assert score == 0.0

    def test_empty_window_is_nan_and_warns(self, rng):
        record = EventRecord([0, 1], [1.0, 2.0], 2, 10.0)
        params = make_model(rng, n=2)
        with pytest.warns(NumericsWarning, match="no events"):
            score, naive = categorical_accuracy(record, params, (5.0, 10.0))
        assert np.isnan(score) and np.isnan(naive)

    def test_missing_history_warns_and_uses_window(self, rng):
        record = make_record(rng, n=3, N=15, T=10.0)
        params = make_model(rng, n=3)
        with pytest.warns(NumericsWarning, match="no pre-window history"):
            _, naive = categorical_accuracy(record, params, (0.0, 10.0))
        share = np.bincount(record.types, minlength=3) / record.N
        assert_allclose(naive, np.exp(np.mean(np.log(share[record.types]))),
                        rtol=1e-12)

    def test_matches_plain_loop_on_simulated_data(self):
        truth = sample_ground_truth(n=4, m=2, R=1, seed=21)
        record = simulate_thinning(truth, T=60.0, seed=22)
        score, _ = categorical_accuracy(record, truth.params, (30.0, 60.0))
        from conftest import brute_intensity

        logs = []
        for j in range(record.N):
            t = record.times[j]
            if not (30.0 <= t < 60.0):
                continue
            lam = np.array([brute_intensity(record, truth.params, k, t)
                            for k in range(record.n)])
            logs.append(np.log(lam[record.types[j]] / lam.sum()))
        assert_allclose(score, np.exp(np.mean(logs)), rtol=1e-9)


class TestKendall:
    def test_identical_embeddings_give_one(self, rng):
        e = EmbeddingPair(rng.normal(size=(5, 2)), rng.normal(size=(5, 2)))
        assert_allclose(kendall_distance_correlation(e, e), 1.0, atol=1e-12)

    def test_monotone_rescaling_preserves_order(self, rng):
        e = EmbeddingPair(rng.normal(size=(4, 3)), rng.normal(size=(4, 3)))
        doubled = EmbeddingPair(2.0 * e.reception, 2.0 * e.influence)
        assert_allclose(kendall_distance_correlation(e, doubled), 1.0, rtol=0)

    def test_reversed_distances_give_minus_one(self):
        # cross distances |x_k - y_l|: learned (1, 2, 9, 8), truth (9, 8, 1, 2)
        learned = EmbeddingPair(np.array([[0.0], [10.0]]),
                                np.array([[1.0], [2.0]]))
        truth = EmbeddingPair(np.array([[10.0], [0.0]]),
                              np.array([[1.0], [2.0]]))
        assert_allclose(kendall_distance_correlation(learned, truth), -1.0, rtol=0)

    def test_size_mismatch_rejected(self, rng):
        a = EmbeddingPair(np.zeros((3, 2)), np.zeros((3, 2)))
        b = EmbeddingPair(np.zeros((4, 2)), np.zeros((4, 2)))
        with pytest.raises(ValueError):
            kendall_distance_correlation(a, b)


class TestPhiRmse:
    def test_equal_matrices_score_zero(self, rng):
        phi = rng.uniform(size=(3, 3))
        assert phi_rmse(phi, phi) == 0.0

    def test_identity_versus_zero(self):
        assert_allclose(phi_rmse(np.eye(2), np.zeros((2, 2))), np.sqrt(0.5),
                        rtol=1e-15)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            phi_rmse(np.zeros((2, 2)), np.zeros((3, 3)))
