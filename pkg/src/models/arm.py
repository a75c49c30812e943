import copy
from bisect import bisect_right
from enum import Enum
from typing import NamedTuple, Optional, Sequence

import numpy as np
from jaxtyping import Float

from src.utils.exceptions import ValidationError
from src.utils.markov import (
    second_eigenvalue_modulus,
    stationary_distribution,
    validate_kernel,
)


class PassiveMode(str, Enum):
    """Dynamics of an arm in slots where no player activates it."""

    FROZEN = "frozen"
    SAME_KERNEL = "same_kernel"
    INDEPENDENT_RESAMPLE = "independent_resample"
    DETERMINISTIC_CYCLE = "deterministic_cycle"


class StationarySummary(NamedTuple):
    pi: Float[np.ndarray, "n_states"]  # noqa: F821
    """Stationary distribution over states."""

    mu: float
    """Stationary mean reward, sum of s * pi_s."""

    lambda2: float
    """Second-largest eigenvalue modulus of the active kernel."""

    epsilon: float
    """Spectral gap 1 - lambda2."""


def summarize(states: Sequence[float], kernel) -> StationarySummary:
    pi = stationary_distribution(kernel)
    lambda2 = second_eigenvalue_modulus(kernel, pi)
    mu = float(np.dot(np.asarray(states, dtype=np.float64), pi))
    return StationarySummary(pi=pi, mu=mu, lambda2=lambda2, epsilon=1.0 - lambda2)


def parse_passive_mode(passive_mode: str | PassiveMode) -> PassiveMode:
    try:
        return PassiveMode(passive_mode)
    except ValueError:
        valid = ", ".join(f"'{m.value}'" for m in PassiveMode)
        raise ValidationError(
            f"Invalid passive mode: {passive_mode}, must be one of {valid}"
        ) from None


class ArmModel:
    """
    A restless Markovian arm whose state value is the reward.

    Everything except `current_state_index` is fixed at construction; the
    kernel, states and stationary summary are read-only arrays that copies of
    the arm share.
    """

    def __init__(
        self,
        states: Sequence[float],
        kernel,
        passive_mode: str | PassiveMode = PassiveMode.FROZEN,
        initial_state: Optional[int] = None,
    ):
        """
        :param states: reward value of each state, all strictly positive
        :param kernel: row-stochastic transition matrix used when the arm is played
        :param passive_mode: dynamics when the arm is not played
        :param initial_state: fixed starting state index; if None, `reset` samples
            the starting state from the stationary distribution
        """
        self.states = np.array(states, dtype=np.float64)
        if self.states.ndim != 1 or self.states.size == 0:
            raise ValidationError("Arm needs a non-empty list of state values")
        if np.any(self.states <= 0):
            raise ValidationError(
                f"All state values must be positive, got {self.states.tolist()}"
            )
        self.active_kernel = validate_kernel(kernel)
        if self.active_kernel.shape[0] != self.states.size:
            raise ValidationError(
                f"Kernel is {self.active_kernel.shape[0]}x{self.active_kernel.shape[1]} "
                f"but the arm has {self.states.size} states"
            )
        self.passive_mode = parse_passive_mode(passive_mode)
        if initial_state is not None and not 0 <= initial_state < self.states.size:
            raise ValidationError(
                f"initial_state {initial_state} out of range for {self.states.size} states"
            )
        self.initial_state = initial_state
        self.summary = summarize(self.states, self.active_kernel)

        self._kernel_cdf = np.cumsum(self.active_kernel, axis=1)
        self._pi_cdf = np.cumsum(self.summary.pi)
        # scalar sampling bisects plain tuples
        self._kernel_rows = tuple(tuple(row) for row in self._kernel_cdf.tolist())
        self._pi_row = tuple(self._pi_cdf.tolist())
        self._values = tuple(self.states.tolist())
        for array in (self.states, self.active_kernel, self._kernel_cdf, self._pi_cdf):
            array.setflags(write=False)
        self.summary.pi.setflags(write=False)

        self.current_state_index = 0 if initial_state is None else initial_state

    @property
    def n_states(self) -> int:
        return self.states.size

    @property
    def state(self) -> float:
        """Reward value of the current state."""
        return self._values[self.current_state_index]

    @property
    def mu(self) -> float:
        return self.summary.mu

    def _sample(self, cdf: tuple[float, ...], rng: np.random.Generator) -> int:
        return min(bisect_right(cdf, rng.random()), self.n_states - 1)

    def reset(self, rng: np.random.Generator) -> int:
        """Draw the starting state (one rng draw unless the start is fixed)."""
        if self.initial_state is None:
            self.current_state_index = self._sample(self._pi_row, rng)
        else:
            self.current_state_index = self.initial_state
        return self.current_state_index

    def evolve(self, played: bool, rng: np.random.Generator) -> int:
        """
        Advance the arm by one slot.

        :param played: whether at least one player activated the arm this slot
        :param rng: shared generator of the run; Frozen and DeterministicCycle
            passive steps consume no draws
        :return: the new state index
        """
        if played or self.passive_mode == PassiveMode.SAME_KERNEL:
            cdf = self._kernel_rows[self.current_state_index]
            self.current_state_index = self._sample(cdf, rng)
        elif self.passive_mode == PassiveMode.INDEPENDENT_RESAMPLE:
            self.current_state_index = self._sample(self._pi_row, rng)
        elif self.passive_mode == PassiveMode.DETERMINISTIC_CYCLE:
            self.current_state_index = (self.current_state_index + 1) % self.n_states
        return self.current_state_index

    def copy(self) -> "ArmModel":
        """Independent state, shared read-only model."""
        return copy.copy(self)

    def __repr__(self) -> str:
        return (
            f"ArmModel(states={self.states.tolist()}, mu={self.mu:.6g}, "
            f"epsilon={self.summary.epsilon:.6g}, passive_mode={self.passive_mode.value})"
        )


def stationary_mean(arm: ArmModel) -> float:
    """mu = sum over states of s * pi_s."""
    return arm.summary.mu
