"""
FDX procedures and comparator tests.
"""
import math

import numpy as np
import pytest
from scipy.stats import beta

from src.errors import DomainError, EquivalenceError
from src.pbd import exceedance_floor, pbd_tail_gt, prefix_tails_gt
from src.procedures import (
    FdxLevel,
    bh,
    check_equivalence,
    guo_romano,
    guo_romano_constants,
    lehmann_romano,
    lehmann_romano_constants,
    procedure1,
    procedure2,
    sc_adaptive,
)
from src.twogroup import LfdrVector, TwoGroupModel, lfdr_oracle, pvalue_from_z

LEVEL = FdxLevel(gamma=0.1, alpha=0.05)


def random_lfdr(rng, m):
    """A mix of near-zero and near-one lfdr values, with some exact ties and zeros."""
    signal = rng.random(m) < rng.uniform(0.05, 0.4)
    values = np.where(signal, rng.beta(0.3, 8.0, size=m), rng.beta(8.0, 1.0, size=m))
    values[rng.random(m) < 0.02] = 0.0
    values[rng.random(m) < 0.02] = 0.5
    return LfdrVector.from_values(values)


def simulated_lfdr(rng, m, pi=0.2, mu=-2.0):
    theta = rng.random(m) < pi
    z = rng.standard_normal(m) + mu * theta
    return lfdr_oracle(z, TwoGroupModel.gaussian_shift(pi, mu)), theta


def descending_scan(lfdr, level):
    """First k from the top whose exact tail passes; no shortcuts."""
    p = lfdr.sorted_values()
    for k in range(p.size, 0, -1):
        if pbd_tail_gt(p[:k], exceedance_floor(level.gamma, k)) <= level.alpha:
            return k
    return 0


class TestFdxLevel:
    @pytest.mark.parametrize("gamma,alpha", [(0.0, 0.05), (1.0, 0.05), (0.1, 0.0), (0.1, 1.2)])
    def test_bounds(self, gamma, alpha):
        with pytest.raises(DomainError):
            FdxLevel(gamma, alpha)

    def test_mean_bound(self):
        assert LEVEL.mean_bound == pytest.approx(0.05 + 0.1 * 0.95)


class TestProcedure1:
    def test_all_zero_lfdr_rejects_everything(self):
        result = procedure1(LfdrVector.from_values(np.zeros(25)), LEVEL)
        assert result.k_final == 25
        assert result.tail_at_k == 0.0

    def test_single_hypothesis_passes(self):
        result = procedure1(LfdrVector.from_values([0.03]), FdxLevel(0.5, 0.05))
        assert result.k_final == 1
        assert result.tail_at_k == pytest.approx(0.03)

    def test_single_hypothesis_fails(self):
        assert procedure1(LfdrVector.from_values([0.07]), FdxLevel(0.5, 0.05)).k_final == 0

    def test_empty_input(self):
        result = procedure1(LfdrVector.from_values([]), LEVEL)
        assert result.k_final == 0 and result.rejected.size == 0

    def test_matches_descending_scan(self, rng):
        for _ in range(5):
            lfdr = random_lfdr(rng, 200)
            assert procedure1(lfdr, LEVEL).k_final == descending_scan(lfdr, LEVEL)

    def test_rejects_smallest_lfdr(self, rng):
        lfdr = random_lfdr(rng, 300)
        result = procedure1(lfdr, LEVEL)
        np.testing.assert_array_equal(result.rejected, lfdr.rank[: result.k_final])
        if result.k_final:
            assert result.tail_at_k <= LEVEL.alpha


class TestProcedure2:
    def test_running_mean_bound(self):
        result = procedure2(LfdrVector.from_values([0.01, 0.05, 0.20]), LEVEL)
        assert result.k1 == 3

    def test_funnel_is_nested(self, rng):
        for m in (50, 500, 2000):
            result = procedure2(random_lfdr(rng, m), LEVEL)
            assert result.k_final <= result.k2 <= result.k1 <= m

    def test_equivalent_to_procedure1(self, rng):
        for i in range(20):
            lfdr = random_lfdr(rng, 2000) if i % 2 else simulated_lfdr(rng, 2000)[0]
            check_equivalence(procedure1(lfdr, LEVEL), procedure2(lfdr, LEVEL))

    @pytest.mark.slow
    def test_equivalent_to_procedure1_at_scale(self, rng):
        for i in range(500):
            m = (100, 1000, 5000)[i % 3]
            lfdr = random_lfdr(rng, m) if i % 2 else simulated_lfdr(rng, m)[0]
            first, second = procedure1(lfdr, LEVEL), procedure2(lfdr, LEVEL)
            assert first.k_final == second.k_final
            np.testing.assert_array_equal(first.rejected, second.rejected)

    def test_shortcuts_never_skip_a_passing_prefix(self, rng):
        for _ in range(10):
            lfdr = random_lfdr(rng, 400)
            result = procedure2(lfdr, LEVEL)
            tails = prefix_tails_gt(lfdr.sorted_values(), LEVEL.gamma)
            assert np.all(tails[result.k1:] > LEVEL.alpha)
            assert np.all(tails[result.k2:result.k1] > LEVEL.alpha)

    def test_zero_lfdr_prefix(self):
        lfdr = LfdrVector.from_values([0.0, 0.0, 0.3, 0.9])
        result = procedure2(lfdr, LEVEL)
        assert result.k_final == procedure1(lfdr, LEVEL).k_final == 2

    def test_safe_count_never_exceeds_k(self, rng):
        for _ in range(10):
            lfdr = random_lfdr(rng, 500)
            result = procedure2(lfdr, LEVEL)
            assert result.n_safe <= result.k_final

    def test_safe_count_covers_a_block_of_tiny_lfdr(self):
        # 20 · H(0.1, 0.001) ≈ 7.3 ≥ ln 20, and 0.9 is above γ
        lfdr = LfdrVector.from_values([1e-3] * 20 + [0.9] * 5)
        result = procedure2(lfdr, LEVEL)
        assert result.n_safe == 20
        assert result.k_final >= 20

    def test_safe_prefix_passes_exact_tail(self, rng):
        for _ in range(10):
            lfdr, _ = simulated_lfdr(rng, 2000, pi=0.3, mu=-3.0)
            n = procedure2(lfdr, LEVEL).n_safe
            assert n > 0
            p = lfdr.sorted_values()[:n]
            assert pbd_tail_gt(p, exceedance_floor(LEVEL.gamma, n)) <= LEVEL.alpha

    def test_monotone_in_alpha(self, rng):
        lfdr, _ = simulated_lfdr(rng, 1000)
        ks = [procedure2(lfdr, FdxLevel(0.1, a)).k_final for a in (0.01, 0.05, 0.1, 0.2)]
        assert ks == sorted(ks)

    def test_mismatch_raises(self):
        lfdr = LfdrVector.from_values([0.01, 0.02])
        small = procedure2(LfdrVector.from_values([0.01, 0.9]), LEVEL)
        with pytest.raises(EquivalenceError):
            check_equivalence(procedure2(lfdr, LEVEL), small)


class TestRandomization:
    def test_extra_rejection_probability(self, rng):
        lfdr, _ = simulated_lfdr(rng, 800)
        result = procedure2(lfdr, LEVEL, randomize=True, seed=3)
        k = result.k_final
        extra = result.randomized_extra
        assert extra is not None
        assert 0.0 <= extra.probability <= 1.0
        assert result.n_rejected == k + int(extra.rejected)

        p = lfdr.sorted_values()
        tail_next = pbd_tail_gt(p[: k + 1], exceedance_floor(LEVEL.gamma, k + 1))
        mixed = result.tail_at_k + extra.probability * (tail_next - result.tail_at_k)
        assert mixed == pytest.approx(LEVEL.alpha, abs=1e-12)

    def test_same_seed_same_coin(self, rng):
        lfdr, _ = simulated_lfdr(rng, 800)
        first = procedure1(lfdr, LEVEL, randomize=True, seed=11)
        second = procedure2(lfdr, LEVEL, randomize=True, seed=11)
        assert first.randomized_extra == second.randomized_extra
        np.testing.assert_array_equal(first.rejected, second.rejected)

    def test_nothing_left_to_randomize(self):
        result = procedure2(LfdrVector.from_values(np.zeros(5)), LEVEL, randomize=True, seed=0)
        assert result.randomized_extra is None
        assert result.n_rejected == 5

    def test_off_by_default(self, rng):
        assert procedure2(random_lfdr(rng, 100), LEVEL).randomized_extra is None


class TestValidity:
    def test_conditional_tail_is_calibrated(self, rng):
        """Resampling θ | z from Bernoulli(lfdr) reproduces the PBD tail at K."""
        lfdr, _ = simulated_lfdr(rng, 2000)
        result = procedure2(lfdr, LEVEL)
        assert result.k_final >= 1
        probs = lfdr.values[result.rejected]
        draws = 10_000
        false_counts = (rng.random((draws, probs.size)) < probs).sum(axis=1)
        freq = np.mean(false_counts > exceedance_floor(LEVEL.gamma, result.k_final))
        se = math.sqrt(result.tail_at_k * (1 - result.tail_at_k) / draws)
        assert abs(freq - result.tail_at_k) <= 3 * se + 1e-12

    @pytest.mark.slow
    def test_conditional_tail_is_calibrated_many_datasets(self, rng):
        for _ in range(20):
            lfdr, _ = simulated_lfdr(rng, 2000)
            result = procedure2(lfdr, LEVEL)
            probs = lfdr.values[result.rejected]
            false_counts = (rng.random((10_000, probs.size)) < probs).sum(axis=1)
            freq = np.mean(false_counts > exceedance_floor(LEVEL.gamma, result.k_final))
            se = math.sqrt(result.tail_at_k * (1 - result.tail_at_k) / 10_000)
            assert abs(freq - result.tail_at_k) <= 3 * se + 1e-12

    def test_fdx_controlled_with_oracle_lfdr(self, rng):
        reps, exceed = 500, 0
        for _ in range(reps):
            lfdr, theta = simulated_lfdr(rng, 500)
            rejected = procedure2(lfdr, LEVEL).rejected
            false = rejected.size - int(theta[rejected].sum())
            exceed += false / max(rejected.size, 1) > LEVEL.gamma
        assert exceed / reps <= LEVEL.alpha + 3 * math.sqrt(LEVEL.alpha * (1 - LEVEL.alpha) / reps)


class TestComparators:
    def test_bh_example(self):
        np.testing.assert_array_equal(np.sort(bh([0.01, 0.02, 0.2, 0.9], 0.05)), [0, 1])

    def test_bh_nothing_significant(self):
        assert bh(np.ones(10), 0.05).size == 0

    def test_bh_single_test(self):
        np.testing.assert_array_equal(bh([0.04], 0.05), [0])

    def test_bh_rejects_invalid_pvalues(self):
        with pytest.raises(DomainError):
            bh([0.0, 0.5], 0.05)

    def test_sc_example(self):
        rejected = sc_adaptive(LfdrVector.from_values([0.01, 0.08, 0.9]), 0.05)
        np.testing.assert_array_equal(rejected, [0, 1])

    @pytest.mark.parametrize("first,expected", [(0.04, 1), (0.06, 0)])
    def test_sc_all_large_after_first(self, first, expected):
        assert sc_adaptive(LfdrVector.from_values([first, 0.7, 0.8]), 0.05).size == expected

    def test_sc_matches_running_mean_stage(self, rng):
        for _ in range(10):
            lfdr = random_lfdr(rng, 500)
            assert sc_adaptive(lfdr, LEVEL.mean_bound).size == procedure2(lfdr, LEVEL).k1

    def test_lehmann_romano_constants(self):
        c = lehmann_romano_constants(4, LEVEL)
        assert c[0] == pytest.approx(0.0125)
        assert c[1] == pytest.approx(0.05 / 3)

    def test_lehmann_romano_stops_at_first_failure(self):
        assert lehmann_romano([0.06, 0.001, 0.001, 0.001], LEVEL).size == 3
        assert lehmann_romano([0.5, 0.6, 0.7, 0.8], LEVEL).size == 0

    def test_guo_romano_single_test(self):
        assert guo_romano_constants(1, FdxLevel(0.5, 0.05))[0] == pytest.approx(0.05, abs=1e-9)

    @pytest.mark.parametrize("gamma", [0.05, 0.1, 0.3])
    def test_guo_romano_dominates_lehmann_romano(self, gamma):
        level = FdxLevel(gamma, 0.05)
        for m in (1, 2, 5, 17, 40, 100):
            assert np.all(guo_romano_constants(m, level) >= lehmann_romano_constants(m, level) - 1e-9)

    def test_guo_romano_matches_beta_quantile(self):
        m, level = 60, FdxLevel(0.1, 0.05)
        i = np.arange(1, m + 1)
        r = np.array([exceedance_floor(level.gamma, k) for k in i]) + 1
        expected = beta.ppf(level.alpha, r, m - i + 1)
        np.testing.assert_allclose(guo_romano_constants(m, level), expected, atol=1e-9)

    @pytest.mark.parametrize("procedure", [lehmann_romano, guo_romano])
    def test_step_down_fdx_controlled(self, rng, procedure):
        level = FdxLevel(0.1, 0.05)
        reps, exceed = 4000, 0
        for _ in range(reps):
            theta = rng.random(200) < 0.2
            z = rng.standard_normal(200) - 2.0 * theta
            rejected = procedure(pvalue_from_z(z), level)
            false = rejected.size - int(theta[rejected].sum())
            exceed += false / max(rejected.size, 1) > level.gamma
        assert exceed / reps <= level.alpha + 0.01
