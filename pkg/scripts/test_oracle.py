"""
Dependence oracle tests: exhaustive enumeration and the one-factor quadrature.
"""
import math

import numpy as np
import pytest

from src.errors import CapacityError, DomainError
from src.oracle import DependenceModel, enumerate_posterior, exchangeable_lfdr
from src.pbd import exceedance_floor, pbd_tail_gt
from src.simharness import counterexample_experiment, gen_equicorr
from src.twogroup import TwoGroupModel, lfdr_oracle


class TestDependenceModel:
    @pytest.mark.parametrize("kwargs", [
        {"mu": -2.0, "rho": 1.0, "pi": 0.2},
        {"mu": -2.0, "rho": -0.1, "pi": 0.2},
        {"mu": -2.0, "rho": 0.3, "pi": 1.0},
        {"mu": math.nan, "rho": 0.3, "pi": 0.2},
        {"mu": -2.0, "rho": 0.3, "pi": 0.2, "inflation": -0.5},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(DomainError):
            DependenceModel(**kwargs)

    def test_two_blocks_split(self):
        model = DependenceModel.two_blocks(7, -1.5, 0.5, 0.3)
        assert model.blocks == ((0, 1, 2, 3), (4, 5, 6))

    def test_block_covariance(self):
        cov = DependenceModel.two_blocks(4, -1.5, 0.5, 0.3).covariance(4)
        expected = np.array([[1.0, 0.5, 0.0, 0.0],
                             [0.5, 1.0, 0.0, 0.0],
                             [0.0, 0.0, 1.0, 0.5],
                             [0.0, 0.0, 0.5, 1.0]])
        np.testing.assert_array_equal(cov, expected)

    def test_blocks_must_partition(self):
        model = DependenceModel(mu=-1.0, rho=0.2, pi=0.2, blocks=((0, 1), (1, 2)))
        with pytest.raises(DomainError):
            model.block_labels(3)
        with pytest.raises(DomainError):
            DependenceModel(mu=-1.0, rho=0.2, pi=0.2, blocks=((0,), (2,))).block_labels(3)


class TestEnumeration:
    def test_capacity(self, rng):
        with pytest.raises(CapacityError):
            enumerate_posterior(rng.standard_normal(17), DependenceModel(mu=-2.0, rho=0.0, pi=0.2))

    def test_probabilities_are_normalised(self, rng):
        post = enumerate_posterior(rng.standard_normal(8), DependenceModel(mu=-2.0, rho=0.4, pi=0.2))
        assert post.probs.shape == (256,)
        assert math.fsum(post.probs) == pytest.approx(1.0, abs=1e-12)
        assert post.probs.min() >= 0.0

    def test_independent_case_matches_oracle_lfdr(self, rng):
        model = DependenceModel(mu=-2.0, rho=0.0, pi=0.2)
        for _ in range(5):
            z = rng.standard_normal(10) - 2.0 * (rng.random(10) < 0.2)
            post = enumerate_posterior(z, model)
            expected = lfdr_oracle(z, TwoGroupModel.gaussian_shift(0.2, -2.0))
            np.testing.assert_allclose(post.lfdr.values, expected.values, atol=1e-10)

    def test_independent_case_tail_is_poisson_binomial(self, rng):
        z = rng.standard_normal(10) - 1.5
        post = enumerate_posterior(z, DependenceModel(mu=-2.0, rho=0.0, pi=0.3))
        for size in (1, 3, 6, 10):
            sel = post.lfdr.rank[:size]
            for gamma in (0.1, 0.5):
                direct = pbd_tail_gt(post.lfdr.values[sel], exceedance_floor(gamma, size))
                assert post.exact_tail(sel, gamma) == pytest.approx(direct, abs=1e-10)

    def test_no_alternatives_puts_mass_on_all_null(self, rng):
        post = enumerate_posterior(rng.standard_normal(6), DependenceModel(mu=-2.0, rho=0.3, pi=0.0))
        assert post.probs[0] == pytest.approx(1.0)
        np.testing.assert_allclose(post.lfdr.values, np.ones(6))

    def test_empty_selection_has_zero_tail(self, rng):
        post = enumerate_posterior(rng.standard_normal(4), DependenceModel(mu=-2.0, rho=0.2, pi=0.2))
        assert post.exact_tail([], 0.1) == 0.0

    def test_inflated_covariance(self, rng):
        model = DependenceModel.two_blocks(10, -1.5, 0.5, 0.3, inflation=0.01)
        post = enumerate_posterior(rng.standard_normal(10), model)
        assert math.fsum(post.probs) == pytest.approx(1.0, abs=1e-12)
        assert np.all((post.lfdr.values >= 0.0) & (post.lfdr.values <= 1.0))

    def test_block_selection_can_beat_top_ranks(self):
        rows = counterexample_experiment([0.5], reps=200, seed=5, threads=1)
        assert rows[0].contradictions > 0
        assert 0.0 < rows[0].mean_tail_gap <= 1.0


class TestExchangeable:
    def test_no_correlation_is_independent_oracle(self, rng):
        z = rng.standard_normal(50) - 1.0
        lfdr = exchangeable_lfdr(z, DependenceModel(mu=-2.0, rho=0.0, pi=0.2))
        expected = lfdr_oracle(z, TwoGroupModel.gaussian_shift(0.2, -2.0))
        np.testing.assert_array_equal(lfdr.values, expected.values)

    @pytest.mark.parametrize("m", [4, 8, 12])
    def test_matches_enumeration(self, rng, m):
        model = DependenceModel(mu=-2.0, rho=0.5, pi=0.2)
        data = gen_equicorr(m, 0.2, -2.0, 0.5, seed=rng)
        quadrature = exchangeable_lfdr(data.z, model)
        exact = enumerate_posterior(data.z, model)
        np.testing.assert_allclose(quadrature.values, exact.lfdr.values, atol=1e-6)

    @pytest.mark.parametrize("rho", [0.0, 0.3, 0.7])
    def test_ranking_is_ascending_z_on_small_draws(self, rng, rho):
        model = DependenceModel(mu=-1.5, rho=rho, pi=0.2)
        for i in range(100):
            data = gen_equicorr(4 + i % 9, 0.2, -1.5, rho, seed=rng)
            quadrature = exchangeable_lfdr(data.z, model)
            exact = enumerate_posterior(data.z, model)
            np.testing.assert_allclose(quadrature.values, exact.lfdr.values, atol=1e-6)
            order = np.argsort(data.z)
            np.testing.assert_array_equal(quadrature.rank, order)
            assert np.all(np.diff(exact.lfdr.values[order]) >= -1e-12)

    def test_ranking_follows_z(self, rng):
        model = DependenceModel(mu=-2.0, rho=0.6, pi=0.2)
        for _ in range(20):
            data = gen_equicorr(200, 0.2, -2.0, 0.6, seed=rng)
            lfdr = exchangeable_lfdr(data.z, model)
            assert np.all(np.diff(lfdr.values[np.argsort(data.z)]) >= 0.0)

    def test_blocks_are_not_exchangeable(self, rng):
        model = DependenceModel.two_blocks(6, -2.0, 0.5, 0.2)
        with pytest.raises(DomainError):
            exchangeable_lfdr(rng.standard_normal(6), model)

    def test_inflation_is_not_supported(self, rng):
        with pytest.raises(DomainError):
            exchangeable_lfdr(rng.standard_normal(6), DependenceModel(mu=-2.0, rho=0.5, pi=0.2, inflation=0.1))

    def test_posterior_null_probability_is_calibrated(self, rng):
        """Average lfdr among hypotheses with lfdr in a bin matches the null fraction in it."""
        model = DependenceModel(mu=-2.0, rho=0.3, pi=0.2)
        values, nulls = [], []
        for _ in range(1000):
            data = gen_equicorr(20, 0.2, -2.0, 0.3, seed=rng)
            values.append(exchangeable_lfdr(data.z, model).values)
            nulls.append(1 - data.theta)
        values, nulls = np.concatenate(values), np.concatenate(nulls)
        band = (values > 0.2) & (values < 0.8)
        assert abs(values[band].mean() - nulls[band].mean()) <= 0.05


class TestCounterexample:
    def test_contradictions_grow_with_correlation(self):
        rows = counterexample_experiment([0.01, 0.9], reps=300, seed=11, threads=1)
        low, high = rows
        assert low.runs == high.runs == 300
        assert high.percent > low.percent
        assert low.percent <= 5.0

    def test_reproducible(self):
        first = counterexample_experiment([0.3], reps=20, seed=2, threads=1)
        second = counterexample_experiment([0.3], reps=20, seed=2, threads=2)
        assert first == second

    def test_needs_runs(self):
        with pytest.raises(DomainError):
            counterexample_experiment([0.3], reps=0, seed=1, threads=1)

    @pytest.mark.slow
    def test_full_sweep(self):
        rows = counterexample_experiment([0.01, 0.1, 0.3, 0.5, 0.7, 0.9], reps=1000, seed=1)
        percents = [row.percent for row in rows]
        assert percents[0] <= 2.0
        assert percents[-1] >= 10.0
        assert percents[-1] > percents[2] > percents[0]
