"""Posterior summary tests: co-clustering matrices, Binder minimization
against exhaustive enumeration, count posteriors, and pmf curves."""

import numpy as np
import pytest

from hurdlenest.kernels import log_shifted_nb_pmf
from hurdlenest.summaries import (
    NestedPartition,
    all_partitions,
    binder_estimate,
    binder_loss,
    binder_nested,
    cluster_count_posterior,
    cluster_pmf_estimate,
    coclustering,
    heatmap_order,
    visited_partitions,
)
from hurdlenest.trace import ChainTrace
import oracles


def _trace_from_labels(label_sets, inner_sets=None, extra=None):
    n = len(label_sets[0])
    records = []
    for idx, c in enumerate(label_sets):
        z = inner_sets[idx] if inner_sets else [0] * n
        K = int(max(c)) + 1
        km = []
        for m in range(K):
            members = [z[i] for i in range(n) if c[i] == m]
            km.append(int(max(members)) + 1 if members else 0)
        rec = {"K": K, "c": list(c), "z": list(z), "Km": km}
        if extra:
            rec.update(extra[idx])
        records.append(rec)
    return ChainTrace(algorithm="test", n=n, d=1, T=1, records=records)


class TestCoclustering:
    def test_constant_partition_gives_binary_matrix(self):
        trace = _trace_from_labels([[0, 0, 1], [0, 0, 1]])
        psm = coclustering(trace).psm
        expected = np.array([[1, 1, 0], [1, 1, 0], [0, 0, 1]], dtype=float)
        np.testing.assert_array_equal(psm, expected)

    def test_half_and_half(self):
        trace = _trace_from_labels([[0, 0], [0, 1]])
        psm = coclustering(trace).psm
        assert psm[0, 1] == 0.5
        assert psm[0, 0] == 1.0

    def test_symmetric_unit_diagonal_bounded(self):
        rng = np.random.default_rng(0)
        labels = [rng.integers(0, 3, size=6).tolist() for _ in range(40)]
        labels = [list(np.asarray(c) - min(c)) for c in labels]
        trace = _trace_from_labels([_canon(c) for c in labels])
        psm = coclustering(trace).psm
        np.testing.assert_array_equal(psm, psm.T)
        np.testing.assert_array_equal(np.diag(psm), np.ones(6))
        assert psm.min() >= 0 and psm.max() <= 1

    def test_subject_permutation_equivariance(self):
        rng = np.random.default_rng(1)
        labels = [_canon(rng.integers(0, 3, size=5).tolist()) for _ in range(30)]
        trace = _trace_from_labels(labels)
        psm = coclustering(trace).psm
        perm = rng.permutation(5)
        permuted = _trace_from_labels([list(np.asarray(c)[perm]) for c in labels])
        psm_p = coclustering(permuted).psm
        np.testing.assert_allclose(psm_p, psm[np.ix_(perm, perm)])

    def test_inner_level_requires_same_outer(self):
        trace = _trace_from_labels([[0, 1]], inner_sets=[[0, 0]])
        psm = coclustering(trace, "inner").psm
        assert psm[0, 1] == 0.0

    def test_label_permutation_invariance(self):
        trace_a = _trace_from_labels([[0, 0, 1, 1]])
        trace_b = _trace_from_labels([[1, 1, 0, 0]])
        np.testing.assert_array_equal(coclustering(trace_a).psm,
                                      coclustering(trace_b).psm)

    def test_empty_trace_rejected(self):
        trace = ChainTrace(algorithm="test", n=2, d=1, T=1)
        with pytest.raises(ValueError):
            coclustering(trace)


def _canon(labels):
    mapping = {}
    return [mapping.setdefault(l, len(mapping)) for l in labels]


class TestBinder:
    def test_block_psm_recovers_block_partition(self):
        truth = np.array([0, 0, 1, 1, 2])
        psm = (truth[:, None] == truth[None, :]).astype(float)
        candidates = [np.array([0, 0, 0, 0, 0]), truth, np.array([0, 1, 2, 3, 4])]
        best = binder_estimate(psm, candidates)
        np.testing.assert_array_equal(best, truth)
        assert binder_loss(truth, psm) == 0.0

    def test_single_subject(self):
        best = binder_estimate(np.ones((1, 1)), [np.array([0])])
        np.testing.assert_array_equal(best, [0])

    @pytest.mark.parametrize("seed", range(4))
    def test_candidate_minimum_equals_exhaustive_n7(self, seed):
        rng = np.random.default_rng(seed)
        raw = rng.random((7, 7))
        psm = (raw + raw.T) / 2
        np.fill_diagonal(psm, 1.0)
        candidates = list(all_partitions(7))
        assert len(candidates) == 877
        best = binder_estimate(psm, candidates)
        exhaustive = min(oracles.set_partitions(7),
                         key=lambda lab: binder_loss(lab, psm))
        assert binder_loss(best, psm) == pytest.approx(
            binder_loss(exhaustive, psm))

    def test_returned_loss_is_minimal_over_candidates(self):
        rng = np.random.default_rng(9)
        raw = rng.random((6, 6))
        psm = (raw + raw.T) / 2
        np.fill_diagonal(psm, 1.0)
        candidates = [_canon(rng.integers(0, 3, size=6).tolist())
                      for _ in range(25)]
        candidates = [np.asarray(c) for c in candidates]
        best = binder_estimate(psm, candidates)
        best_loss = binder_loss(best, psm)
        assert all(best_loss <= binder_loss(c, psm) + 1e-12 for c in candidates)

    def test_tie_broken_by_first_occurrence(self):
        psm = np.full((2, 2), 0.5)
        np.fill_diagonal(psm, 1.0)
        first = np.array([0, 0])
        second = np.array([0, 1])  # same loss 0.5
        np.testing.assert_array_equal(binder_estimate(psm, [first, second]),
                                      first)
        np.testing.assert_array_equal(binder_estimate(psm, [second, first]),
                                      second)

    def test_no_candidates_rejected(self):
        with pytest.raises(ValueError):
            binder_estimate(np.ones((2, 2)), [])


class TestAllPartitions:
    @pytest.mark.parametrize("n,bell", [(1, 1), (2, 2), (3, 5), (4, 15),
                                        (5, 52), (7, 877)])
    def test_bell_numbers(self, n, bell):
        assert sum(1 for _ in all_partitions(n)) == bell

    def test_canonical_and_distinct(self):
        parts = [tuple(p) for p in all_partitions(5)]
        assert len(set(parts)) == len(parts)
        for p in parts:
            assert p[0] == 0

    def test_guard(self):
        with pytest.raises(ValueError):
            list(all_partitions(13))


class TestCountPosterior:
    def test_point_mass_for_constant_k(self):
        trace = _trace_from_labels([[0, 0, 1]] * 5)
        pmfs = cluster_count_posterior(trace)
        assert pmfs["K"] == {2: 1.0}

    def test_masses_sum_to_one(self):
        rng = np.random.default_rng(2)
        labels = [_canon(rng.integers(0, 3, size=5).tolist()) for _ in range(50)]
        pmfs = cluster_count_posterior(_trace_from_labels(labels))
        assert sum(pmfs["K"].values()) == pytest.approx(1.0)
        assert sum(pmfs["total_inner"].values()) == pytest.approx(1.0)

    def test_k_support_bounded_by_m(self):
        extra = [{"M": 4}, {"M": 2}]
        trace = _trace_from_labels([[0, 1, 2], [0, 0, 1]], extra=extra)
        pmfs = cluster_count_posterior(trace)
        assert max(pmfs["K"]) <= max(pmfs["M"])


class TestPmfCurves:
    def _trace_with_params(self, specs):
        # specs: list of (delta list, r list, theta list) for one cluster, d=1
        records = []
        for delta, rs, thetas in specs:
            records.append({
                "K": 1, "c": [0, 0], "z": [0, 0], "Km": [len(delta)],
                "M": 1, "S": [len(delta)],
                "delta": [list(delta)],
                "r_star": [[[r] for r in rs]],
                "theta_star": [[[t] for t in thetas]],
            })
        return ChainTrace(algorithm="conditional", n=2, d=1, T=1,
                          records=records)

    def test_single_frozen_component_collapses_band(self):
        trace = self._trace_with_params([([1.0], [2], [0.5])] * 10)
        y = np.arange(1, 15)
        mean, lo, hi = cluster_pmf_estimate(trace, 0, 0, y)
        exact = np.exp(log_shifted_nb_pmf(y, 2, 0.5))
        np.testing.assert_allclose(mean, exact, rtol=1e-12)
        np.testing.assert_allclose(lo, exact, rtol=1e-12)
        np.testing.assert_allclose(hi, exact, rtol=1e-12)

    def test_mean_curve_is_subnormalized_pmf(self):
        rng = np.random.default_rng(3)
        specs = [(rng.random(2) + 0.5, [1, 3], rng.uniform(0.2, 0.8, 2))
                 for _ in range(20)]
        trace = self._trace_with_params(specs)
        y = np.arange(1, 200)
        mean, _, _ = cluster_pmf_estimate(trace, 0, 0, y)
        assert mean.sum() <= 1.0 + 1e-9

    def test_equal_weight_mixture_matches_hand_mix(self):
        trace = self._trace_with_params([([1.0, 1.0], [1, 1], [0.2, 0.8])] * 5)
        y = np.arange(1, 30)
        mean, _, _ = cluster_pmf_estimate(trace, 0, 0, y)
        exact = 0.5 * np.exp(log_shifted_nb_pmf(y, 1, 0.2)) \
            + 0.5 * np.exp(log_shifted_nb_pmf(y, 1, 0.8))
        np.testing.assert_allclose(mean, exact, rtol=1e-12)

    def test_absent_cluster_rejected(self):
        trace = self._trace_with_params([([1.0], [2], [0.5])])
        with pytest.raises(ValueError, match="absent"):
            cluster_pmf_estimate(trace, 3, 0, np.arange(1, 5))

    def test_marginal_trace_rejected(self):
        trace = _trace_from_labels([[0, 0]])
        with pytest.raises(ValueError, match="parameters"):
            cluster_pmf_estimate(trace, 0, 0, np.arange(1, 5))


class TestNestedPartition:
    def test_validates_contiguity(self):
        with pytest.raises(ValueError):
            NestedPartition(outer=np.array([1, 3]), inner=np.array([1, 1]))
        with pytest.raises(ValueError):
            NestedPartition(outer=np.array([1, 1]), inner=np.array([1, 3]))
        part = NestedPartition(outer=np.array([1, 1, 2]),
                               inner=np.array([1, 2, 1]))
        assert part.outer.max() == 2

    def test_from_zero_based(self):
        part = NestedPartition.from_zero_based(np.array([0, 0, 1]),
                                               np.array([0, 1, 0]))
        np.testing.assert_array_equal(part.outer, [1, 1, 2])


class TestHeatmapOrder:
    def test_orders_blocks_together(self):
        truth = np.array([0, 1, 0, 1, 0, 1])
        psm = (truth[:, None] == truth[None, :]).astype(float) * 0.9
        np.fill_diagonal(psm, 1.0)
        order = heatmap_order(psm)
        ordered_labels = truth[order]
        # the two blocks must come out contiguous
        changes = (np.diff(ordered_labels) != 0).sum()
        assert changes == 1

    def test_permutation_output(self):
        rng = np.random.default_rng(4)
        raw = rng.random((8, 8))
        psm = (raw + raw.T) / 2
        np.fill_diagonal(psm, 1.0)
        order = heatmap_order(psm)
        assert sorted(order.tolist()) == list(range(8))


class TestBinderNested:
    def test_recovers_clean_nested_structure(self):
        outer = [0, 0, 1, 1]
        inner = [0, 1, 0, 0]
        trace = _trace_from_labels([outer] * 10, inner_sets=[inner] * 10)
        part, outer_loss, inner_loss = binder_nested(trace)
        assert outer_loss == 0.0
        assert inner_loss == 0.0
        np.testing.assert_array_equal(part.outer, [1, 1, 2, 2])
        np.testing.assert_array_equal(part.inner, [1, 2, 1, 1])

    def test_visited_partitions_dedupes(self):
        trace = _trace_from_labels([[0, 0], [0, 1], [0, 0]])
        assert len(visited_partitions(trace)) == 2
