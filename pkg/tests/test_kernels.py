"""Probability kernel tests against exact-factorial oracles."""

import math

import numpy as np
import pytest

from hurdlenest.data import CountDataset
from hurdlenest.kernels import (
    ComponentParams,
    HurdleParams,
    log_hurdle_pmf,
    log_shifted_nb_pmf,
    subject_component_loglik,
)
from oracles import hurdle_pmf_exact, shifted_nb_pmf_exact


class TestShiftedNB:
    def test_y1_collapses_to_failure_mass(self):
        # binomial coefficient is 1 and theta^(y-1) = 1, leaving (1-theta)^r
        assert log_shifted_nb_pmf(1, 3, 0.4) == pytest.approx(math.log(0.216))

    def test_exact_value_y3_r2(self):
        # oracle: C(3,2) * 0.3^2 * 0.7^2 = 3 * 0.09 * 0.49
        assert log_shifted_nb_pmf(3, 2, 0.3) == pytest.approx(
            math.log(3 * 0.09 * 0.49))

    @pytest.mark.parametrize("r", [1, 2, 5, 10])
    @pytest.mark.parametrize("theta", [0.05, 0.3, 0.5, 0.9])
    def test_normalizes(self, r, theta):
        y = np.arange(1, 100_001)
        total = np.exp(log_shifted_nb_pmf(y, r, theta)).sum()
        assert 1.0 - 1e-6 <= total <= 1.0 + 1e-12

    def test_loggamma_matches_exact_factorials(self):
        for y in range(1, 31):
            for r in range(1, 31):
                for theta in (0.2, 0.5, 0.8):
                    exact = math.log(shifted_nb_pmf_exact(y, r, theta))
                    got = log_shifted_nb_pmf(y, r, theta)
                    assert got == pytest.approx(exact, rel=1e-12)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            log_shifted_nb_pmf(0, 2, 0.5)
        with pytest.raises(ValueError):
            log_shifted_nb_pmf(1, 0, 0.5)
        with pytest.raises(ValueError):
            log_shifted_nb_pmf(1, 2, 1.0)
        with pytest.raises(ValueError):
            log_shifted_nb_pmf(1, 2, 0.0)


class TestHurdle:
    def test_zero_branch(self):
        params = HurdleParams(p=0.3, r=5, theta=0.7)
        assert log_hurdle_pmf(0, params) == pytest.approx(math.log(0.7))

    def test_positive_branch_near_certain_hurdle(self):
        # p -> 1: mass at y=1 approaches g(1 | 1, 0.5) = 0.5
        params = HurdleParams(p=1 - 1e-12, r=1, theta=0.5)
        assert log_hurdle_pmf(1, params) == pytest.approx(math.log(0.5), abs=1e-9)

    def test_exact_value(self):
        # oracle: p * g(2 | 2, 0.5) = 0.5 * (2 * 0.5 * 0.25) = 0.125
        params = HurdleParams(p=0.5, r=2, theta=0.5)
        assert log_hurdle_pmf(2, params) == pytest.approx(math.log(0.125))

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    @pytest.mark.parametrize("r,theta", [(1, 0.3), (3, 0.6), (7, 0.9)])
    def test_normalizes_with_zero_mass(self, p, r, theta):
        params = HurdleParams(p=p, r=r, theta=theta)
        y = np.arange(0, 100_001)
        total = np.exp(log_hurdle_pmf(y, params)).sum()
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_matches_exact_oracle(self):
        params = HurdleParams(p=0.4, r=3, theta=0.25)
        for y in range(0, 12):
            assert log_hurdle_pmf(y, params) == pytest.approx(
                math.log(hurdle_pmf_exact(y, 0.4, 3, 0.25)), rel=1e-12)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            HurdleParams(p=0.0, r=1, theta=0.5)
        with pytest.raises(ValueError):
            HurdleParams(p=1.0, r=1, theta=0.5)


class TestSubjectLoglik:
    def test_all_zero_counts(self):
        ds = CountDataset(np.zeros((1, 2, 3), dtype=int))
        comp = ComponentParams(p_star=[0.5, 0.5], r_star=[1, 1],
                               theta_star=[0.5, 0.5])
        assert subject_component_loglik(ds, 0, comp) == pytest.approx(
            6 * math.log(0.5))

    def test_degenerate_single_cell(self):
        ds = CountDataset(np.array([[[4]]]))
        comp = ComponentParams(p_star=[0.35], r_star=[2], theta_star=[0.6])
        expected = log_hurdle_pmf(4, HurdleParams(p=0.35, r=2, theta=0.6))
        assert subject_component_loglik(ds, 0, comp) == pytest.approx(expected)

    def test_sum_of_four_cells_against_oracle(self):
        # counts: process 1 -> (0, 1), process 2 -> (2, 0)
        counts = np.array([[[0, 1], [2, 0]]])
        ds = CountDataset(counts)
        comp = ComponentParams(p_star=[0.4, 0.6], r_star=[1, 2],
                               theta_star=[0.5, 0.5])
        expected = sum(
            math.log(hurdle_pmf_exact(int(counts[0, j, t]),
                                      [0.4, 0.6][j], [1, 2][j], 0.5))
            for j in range(2) for t in range(2))
        assert subject_component_loglik(ds, 0, comp) == pytest.approx(
            expected, rel=1e-12)

    def test_replicate_permutation_invariance(self):
        rng = np.random.default_rng(7)
        counts = rng.integers(0, 6, size=(1, 3, 5))
        comp = ComponentParams(p_star=[0.3, 0.5, 0.7], r_star=[1, 2, 3],
                               theta_star=[0.2, 0.5, 0.8])
        base = subject_component_loglik(CountDataset(counts), 0, comp)
        for _ in range(5):
            perm = rng.permutation(5)
            shuffled = counts[:, :, perm]
            assert subject_component_loglik(
                CountDataset(shuffled), 0, comp) == pytest.approx(base)

    def test_dimension_mismatch(self):
        ds = CountDataset(np.zeros((1, 2, 1), dtype=int))
        comp = ComponentParams(p_star=[0.5], r_star=[1], theta_star=[0.5])
        with pytest.raises(ValueError):
            subject_component_loglik(ds, 0, comp)
