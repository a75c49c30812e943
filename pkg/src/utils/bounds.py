"""
Closed-form quantities of the logarithmic regret guarantee: parameter
thresholds for L and D, the exploration and exploitation budgets, the
index-inversion probability bound and the regret upper bounds for both
collision models.
"""

import math
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

import numpy as np

from src.models.arm import ArmModel
from src.utils.constants import (
    L_LEADING_CONSTANT,
    MU_DISTINCT_TOL,
    SQRT2_DENOMINATOR,
    ceil_log4,
)


class SystemParams(NamedTuple):
    pi_min: float
    """Smallest stationary probability over all arms and states."""
    eps_min: float
    eps_max: float
    s_min: float
    s_max: float
    smax_cardinality: int
    """Largest state-space size |S|_max."""
    mu: tuple[float, ...]
    """Stationary mean of each arm, in arm id order."""
    sigma: tuple[int, ...]
    """Arm ids (1-based) sorted by non-increasing mean, ties to the lower id."""
    mu_sorted: tuple[float, ...]
    state_counts: tuple[int, ...]
    """|S_j| in arm id order."""
    gap_min: Optional[float]
    """min over j <= M of mu_sigma(j) - mu_sigma(j+1); None when M = N."""
    transient: float
    """Sum over arms of (min_s pi_s)^-1 * sum_s s."""

    @property
    def n_arms(self) -> int:
        return len(self.mu)

    def ranked_mu(self, rank: int) -> float:
        return self.mu_sorted[rank - 1]

    def ranked_states(self, rank: int) -> int:
        return self.state_counts[self.sigma[rank - 1] - 1]

    @property
    def distinct_means(self) -> bool:
        return bool(np.all(-np.diff(self.mu_sorted) > MU_DISTINCT_TOL))


def transient_constant(arms: Sequence[ArmModel]) -> float:
    """
    Bound on the expected deviation E[sum_{t<=T} s(t) - mu T] of a played
    Markov chain at any stopping time, summed over arms:
    sum_j (min_s pi^j_s)^-1 * sum_{s in S_j} s.
    """
    return float(sum(arm.states.sum() / arm.summary.pi.min() for arm in arms))


def system_params(arms: Sequence[ArmModel], n_players: int) -> SystemParams:
    if not 1 <= n_players <= len(arms):
        raise ValueError(f"Need 1 <= M <= N, got M={n_players}, N={len(arms)}")
    mu = np.array([arm.mu for arm in arms])
    sigma = np.argsort(-mu, kind="stable")
    mu_sorted = mu[sigma]
    gap_min = None
    if n_players < len(arms):
        gap_min = float(np.min(mu_sorted[:n_players] - mu_sorted[1 : n_players + 1]))
    epsilons = [arm.summary.epsilon for arm in arms]
    return SystemParams(
        pi_min=float(min(arm.summary.pi.min() for arm in arms)),
        eps_min=float(min(epsilons)),
        eps_max=float(max(epsilons)),
        s_min=float(min(arm.states.min() for arm in arms)),
        s_max=float(max(arm.states.max() for arm in arms)),
        smax_cardinality=max(arm.n_states for arm in arms),
        mu=tuple(float(m) for m in mu),
        sigma=tuple(int(i) + 1 for i in sigma),
        mu_sorted=tuple(float(m) for m in mu_sorted),
        state_counts=tuple(arm.n_states for arm in arms),
        gap_min=gap_min,
        transient=transient_constant(arms),
    )


def l_threshold(params: SystemParams, leading_constant: float = L_LEADING_CONSTANT) -> float:
    """
    Smallest L of the logarithmic guarantee:
    (1 / eps_min) * (c * 20 s_max^2 |S|_max^2 / (3 - 2 sqrt 2) + 10 s_max^2), c = 4.
    """
    if params.eps_min <= 0:
        raise ValueError("eps_min must be positive, an arm has no spectral gap")
    s2 = params.s_max**2
    return (
        leading_constant * 20 * s2 * params.smax_cardinality**2 / SQRT2_DENOMINATOR
        + 10 * s2
    ) / params.eps_min


def d_threshold(L: float, params: SystemParams) -> float:
    """Smallest D of the logarithmic guarantee: 4 L / gap_min^2."""
    if params.gap_min is None:
        raise ValueError(
            "The mean gap min_{j<=M}(mu_sigma(j) - mu_sigma(j+1)) is undefined when M = N"
        )
    if params.gap_min <= MU_DISTINCT_TOL:
        raise ValueError(
            "D threshold requires different arms to have different stationary means, "
            f"got gap {params.gap_min}"
        )
    return 4 * L / params.gap_min**2


def exploration_time_bound(t, D: float):
    """Per-arm slots spent in exploration epochs by slot t: (1/3)[4(3 D ln t + 1) - 1]."""
    if np.any(np.asarray(t) < 1):
        raise ValueError(f"Slot must be >= 1, got {t}")
    return (4 * (3 * D * np.log(t) + 1) - 1) / 3


def exploitation_count_bound(t: int, n_arms: int) -> int:
    """Exploitation epochs started by slot t: ceil(log_4((3/2)(t - N) + 1)), exact."""
    if t <= n_arms:
        raise ValueError(f"Bound needs t > N, got t={t}, N={n_arms}")
    return ceil_log4(Fraction(3 * (int(t) - n_arms), 2) + 1)


def exploitation_count_bounds(t, n_arms: int) -> np.ndarray:
    """Vectorized `exploitation_count_bound` over integer slots, all > N."""
    t = np.asarray(t, dtype=np.int64)
    if np.any(t <= n_arms):
        raise ValueError(f"Bound needs t > N={n_arms}")
    # 4^n >= (3/2)(t - N) + 1  <=>  2 * 4^n >= 3(t - N) + 2
    thresholds = 2 * 4 ** np.arange(31, dtype=np.int64)
    return np.searchsorted(thresholds, 3 * (t - n_arms) + 2, side="left")


def mistake_scale(params: SystemParams, L: float) -> float:
    """1 + eps_max sqrt(L) / (10 s_min)"""
    return 1 + params.eps_max * math.sqrt(L) / (10 * params.s_min)


def inversion_prob_bound(
    i: int, j: int, t_n: float, params: SystemParams, L: float
) -> float:
    """
    Bound on the probability that arm i has a higher index than arm j at the
    start slot t_n of an exploitation epoch, clamped to 1.
    """
    if t_n < 1:
        raise ValueError(f"Slot must be >= 1, got {t_n}")
    states = params.state_counts[i - 1] + params.state_counts[j - 1]
    return min(1.0, states / params.pi_min * mistake_scale(params, L) / t_n)


def exploration_regret_bound(t, params: SystemParams, D: float, M: int, N: int):
    """Regret of playing every arm equally in exploration epochs by slot t."""
    top = sum(params.mu_sorted[:M])
    return exploration_time_bound(t, D) * (top - M / N * sum(params.mu))


class BoundTerms(NamedTuple):
    exploration: float
    """Loss from exploration epochs."""
    exploitation: float
    """Loss from ranking mistakes and collisions in exploitation epochs."""
    transient: float
    """Markov transient constant."""

    @property
    def total(self) -> float:
        return self.exploration + self.exploitation + self.transient


def _check_sizes(params: SystemParams, M: int, N: int, t: int) -> None:
    if N != params.n_arms:
        raise ValueError(f"N={N} does not match the {params.n_arms} arms of params")
    if not 1 <= M <= N:
        raise ValueError(f"Need 1 <= M <= N, got M={M}, N={N}")
    if t <= N:
        raise ValueError(f"Regret bounds need t > N, got t={t}, N={N}")


def regret_bound_terms_shared(
    t: int, params: SystemParams, L: float, D: float, M: int, N: int
) -> BoundTerms:
    _check_sizes(params, M, N, t)
    pi_min = params.pi_min
    mu, S = params.ranked_mu, params.ranked_states

    wrong_best = sum(
        mu(i) * (S(i) + S(j)) / pi_min
        for i in range(1, M)
        for j in range(1, N + 1)
        if j != i
    )
    # the arm displaced from the top M is the M-th ranked one
    wrong_rest = sum((mu(M) - mu(j)) * (S(M) + S(j)) / pi_min for j in range(M + 1, N + 1))
    wrong_mth = sum(mu(M) * (S(M) + S(j)) / pi_min for j in range(1, M))

    scale = 3 * exploitation_count_bound(t, N) * mistake_scale(params, L)
    return BoundTerms(
        exploration=float(exploration_regret_bound(t, params, D, M, N)),
        exploitation=scale * (wrong_best + wrong_rest + wrong_mth),
        transient=params.transient,
    )


def regret_bound_shared(
    t: int, params: SystemParams, L: float, D: float, M: int, N: int
) -> float:
    """Regret upper bound when colliding players share the reward."""
    return regret_bound_terms_shared(t, params, L, D, M, N).total


def regret_bound_terms_zero(
    t: int,
    params: SystemParams,
    L: float,
    D: float,
    M: int,
    N: int,
    pair_with_j: bool = False,
) -> BoundTerms:
    """
    :param pair_with_j: use |S_sigma(i)| + |S_sigma(j)| in the collision term
        instead of the default 2 |S_sigma(i)|
    """
    _check_sizes(params, M, N, t)
    S = params.ranked_states
    pairs = sum(
        (S(i) + (S(j) if pair_with_j else S(i))) / params.pi_min
        for i in range(1, M + 1)
        for j in range(1, N + 1)
        if j != i
    )
    scale = 3 * exploitation_count_bound(t, N) * mistake_scale(params, L)
    return BoundTerms(
        exploration=float(exploration_regret_bound(t, params, D, M, N)),
        exploitation=scale * sum(params.mu_sorted[:M]) * pairs,
        transient=params.transient,
    )


def regret_bound_zero(
    t: int,
    params: SystemParams,
    L: float,
    D: float,
    M: int,
    N: int,
    pair_with_j: bool = False,
) -> float:
    """Regret upper bound when colliding players get no reward."""
    return regret_bound_terms_zero(t, params, L, D, M, N, pair_with_j).total
