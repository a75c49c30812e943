import math

import numpy as np
import pytest

from conftest import make_reference_arms
from src.models.arm import ArmModel
from src.utils.bounds import (
    SystemParams,
    d_threshold,
    exploitation_count_bound,
    exploitation_count_bounds,
    exploration_regret_bound,
    exploration_time_bound,
    inversion_prob_bound,
    l_threshold,
    regret_bound_shared,
    regret_bound_terms_shared,
    regret_bound_terms_zero,
    regret_bound_zero,
    system_params,
    transient_constant,
)
from src.utils.constants import L_LEADING_CONSTANT_ADAPTIVE

REL = 1e-9

# hand evaluation on the reference system (N=3, M=2)
TRANSIENT = 9 + 6 + 14 / 3
EXPLORATION_FACTOR = 41 / 126  # sum of top-2 means minus 2/3 of all means
SHARED_MISTAKES = 36 + 34 / 7 + 16
ZERO_MISTAKES = 17 / 6 * 48


def make_params(**overrides) -> SystemParams:
    fields = dict(
        pi_min=0.5,
        eps_min=1.0,
        eps_max=1.0,
        s_min=1.0,
        s_max=1.0,
        smax_cardinality=1,
        mu=(1.0, 0.5),
        sigma=(1, 2),
        mu_sorted=(1.0, 0.5),
        state_counts=(2, 2),
        gap_min=0.5,
        transient=0.0,
    )
    fields.update(overrides)
    return SystemParams(**fields)


@pytest.fixture
def params(reference_arms):
    return system_params(reference_arms, 2)


class TestSystemParams:
    def test_reference(self, params):
        assert params.sigma == (2, 1, 3)
        assert params.pi_min == pytest.approx(1 / 3, rel=REL)
        assert params.eps_min == pytest.approx(0.3, rel=REL)
        assert params.eps_max == pytest.approx(1.0, rel=REL)
        assert (params.s_min, params.s_max, params.smax_cardinality) == (0.5, 2.0, 2)
        assert params.gap_min == pytest.approx(1 / 6, rel=REL)
        assert params.mu_sorted == pytest.approx((1.5, 4 / 3, 13 / 14), rel=REL)
        assert params.distinct_means

    def test_gap_undefined_when_all_arms_are_best(self, reference_arms):
        assert system_params(reference_arms, 3).gap_min is None

    def test_equal_means(self):
        arms = [ArmModel([1.0, 2.0], [[0.5, 0.5], [0.5, 0.5]]) for _ in range(2)]
        params = system_params(arms, 1)
        assert not params.distinct_means
        with pytest.raises(ValueError, match="different stationary means"):
            d_threshold(1.0, params)


class TestThresholds:
    def test_l_threshold_unit_case(self):
        expected = 80 / (3 - 2 * math.sqrt(2)) + 10
        assert l_threshold(make_params()) == pytest.approx(expected, rel=REL)
        assert expected == pytest.approx(476.27, abs=0.01)

    def test_l_threshold_reference(self, params):
        expected = (3880 + 2560 * math.sqrt(2)) / 0.3
        assert l_threshold(params) == pytest.approx(expected, rel=REL)
        assert l_threshold(params) == pytest.approx(25001.3, abs=0.05)

    def test_l_threshold_scales_with_s_max_squared(self):
        base = l_threshold(make_params())
        assert l_threshold(make_params(s_max=2.0)) == pytest.approx(4 * base, rel=REL)

    def test_l_threshold_adaptive_constant(self):
        expected = 7 * 20 / (3 - 2 * math.sqrt(2)) + 10
        assert l_threshold(make_params(), L_LEADING_CONSTANT_ADAPTIVE) == pytest.approx(expected, rel=REL)

    def test_l_threshold_needs_gap(self):
        with pytest.raises(ValueError):
            l_threshold(make_params(eps_min=0.0))

    @pytest.mark.parametrize("L, gap, expected", [(1.0, 1.0, 4.0), (100.0, 0.5, 1600.0), (100.0, 0.25, 6400.0)])
    def test_d_threshold(self, L, gap, expected):
        assert d_threshold(L, make_params(gap_min=gap)) == pytest.approx(expected, rel=REL)

    def test_d_threshold_reference(self, params):
        assert d_threshold(100.0, params) == pytest.approx(14400.0, rel=REL)

    def test_d_threshold_errors(self):
        with pytest.raises(ValueError, match="undefined"):
            d_threshold(1.0, make_params(gap_min=None))
        with pytest.raises(ValueError, match="different stationary means"):
            d_threshold(1.0, make_params(gap_min=0.0))


class TestTransientConstant:
    def test_reference(self, reference_arms):
        assert transient_constant(reference_arms) == pytest.approx(TRANSIENT, rel=REL)

    def test_examples(self):
        uniform = ArmModel([1.0, 2.0], [[0.5, 0.5], [0.5, 0.5]])
        assert transient_constant([uniform]) == pytest.approx(6.0, rel=REL)
        assert transient_constant([ArmModel([0.3], [[1.0]])]) == pytest.approx(0.3, rel=REL)
        assert transient_constant([uniform, uniform]) == pytest.approx(12.0, rel=REL)


class TestBudgets:
    @pytest.mark.parametrize("t, D, expected", [(1, 3.0, 1.0), (500, 0.0, 1.0), (math.e, 1.0, 5.0)])
    def test_exploration_time_bound(self, t, D, expected):
        assert exploration_time_bound(t, D) == pytest.approx(expected, rel=REL)

    def test_exploration_time_bound_domain(self):
        with pytest.raises(ValueError):
            exploration_time_bound(0, 1.0)

    @pytest.mark.parametrize("t, expected", [(5, 1), (13, 2), (10_000, 7), (4, 1)])
    def test_exploitation_count_bound(self, t, expected):
        assert exploitation_count_bound(t, 3) == expected

    def test_exploitation_count_bound_domain(self):
        with pytest.raises(ValueError):
            exploitation_count_bound(3, 3)

    def test_exploitation_count_bound_monotone_and_vectorized(self):
        t = np.arange(4, 50_000)
        scalar = np.array([exploitation_count_bound(int(x), 3) for x in t[::97]])
        vector = exploitation_count_bounds(t, 3)
        assert np.all(np.diff(vector) >= 0)
        np.testing.assert_array_equal(vector[::97], scalar)

    def test_exact_power_boundary(self):
        # (3/2)(t - N) + 1 = 16 exactly at t = N + 10
        assert exploitation_count_bound(13, 3) == 2
        assert exploitation_count_bound(14, 3) == 3


class TestInversionProbability:
    def test_example(self):
        params = make_params(pi_min=0.5, eps_max=1.0, s_min=1.0)
        assert inversion_prob_bound(1, 2, 1000, params, 100.0) == pytest.approx(0.016, rel=REL)

    def test_clamped_and_monotone(self):
        params = make_params()
        assert inversion_prob_bound(1, 2, 1, params, 100.0) == 1.0
        values = [inversion_prob_bound(1, 2, 10**6, params, L) for L in (1.0, 10.0, 100.0)]
        assert values[0] < values[1] < values[2]
        assert inversion_prob_bound(1, 2, 10**12, params, 100.0) < 1e-9


class TestRegretBounds:
    def test_exploration_term(self, params):
        expected = (200 * math.log(1e4) + 1) * EXPLORATION_FACTOR
        assert exploration_regret_bound(10_000, params, 50.0, 2, 3) == pytest.approx(expected, rel=REL)

    def test_shared_oracle(self, params):
        terms = regret_bound_terms_shared(10_000, params, 100.0, 50.0, 2, 3)
        # 3 * ceil(log4(1.5 * 9997 + 1)) * (1 + sqrt(100) / (10 * 0.5)) = 63
        assert terms.exploitation == pytest.approx(63 * SHARED_MISTAKES, rel=REL)
        assert terms.transient == pytest.approx(TRANSIENT, rel=REL)
        expected = (200 * math.log(1e4) + 1) * EXPLORATION_FACTOR + 63 * SHARED_MISTAKES + TRANSIENT
        assert regret_bound_shared(10_000, params, 100.0, 50.0, 2, 3) == pytest.approx(expected, rel=REL)

    def test_zero_oracle(self, params):
        expected = (200 * math.log(1e4) + 1) * EXPLORATION_FACTOR + 63 * ZERO_MISTAKES + TRANSIENT
        assert regret_bound_zero(10_000, params, 100.0, 50.0, 2, 3) == pytest.approx(expected, rel=REL)

    def test_zero_dominates_shared_collision_term(self, params):
        shared = regret_bound_terms_shared(10_000, params, 100.0, 50.0, 2, 3)
        zero = regret_bound_terms_zero(10_000, params, 100.0, 50.0, 2, 3)
        assert zero.exploitation >= shared.exploitation

    def test_all_arms_best_has_no_exploration_loss(self, reference_arms):
        params = system_params(reference_arms, 3)
        assert exploration_regret_bound(1000, params, 50.0, 3, 3) == pytest.approx(0.0, abs=1e-9)
        terms = regret_bound_terms_shared(1000, params, 100.0, 50.0, 3, 3)
        assert terms.exploration == pytest.approx(0.0, abs=1e-9)

    def test_single_player_best_vs_rest(self, reference_arms):
        params = system_params(reference_arms, 1)
        terms = regret_bound_terms_shared(10_000, params, 100.0, 50.0, 1, 3)
        # only the best arm against arms ranked 2 and 3, each pair worth 4 / pi_min = 12
        mistakes = (1.5 - 4 / 3) * 12 + (1.5 - 13 / 14) * 12
        assert terms.exploitation == pytest.approx(63 * mistakes, rel=REL)
        zero = regret_bound_terms_zero(10_000, params, 100.0, 50.0, 1, 3)
        assert zero.exploitation == pytest.approx(63 * 1.5 * 2 * 12, rel=REL)

    def test_pairing_flag(self):
        arms = make_reference_arms()[:2] + [
            ArmModel([0.5, 1.0, 1.5], [[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5]])
        ]
        params = system_params(arms, 2)
        as_written = regret_bound_terms_zero(10_000, params, 100.0, 50.0, 2, 3)
        paired = regret_bound_terms_zero(10_000, params, 100.0, 50.0, 2, 3, pair_with_j=True)
        assert paired.exploitation > as_written.exploitation
        assert paired.exploration == as_written.exploration

    def test_non_decreasing_in_t(self, params):
        times = [10, 100, 1000, 10_000, 100_000]
        for bound in (regret_bound_shared, regret_bound_zero):
            values = [bound(t, params, 100.0, 50.0, 2, 3) for t in times]
            assert all(b >= a for a, b in zip(values, values[1:]))

    def test_domain(self, params):
        with pytest.raises(ValueError):
            regret_bound_shared(3, params, 100.0, 50.0, 2, 3)
        with pytest.raises(ValueError):
            regret_bound_zero(10, params, 100.0, 50.0, 4, 3)
