"""
Measured regret, report cadences, seed aggregation and Monte Carlo checks of
the Markov transient and occupancy properties.
"""

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from jaxtyping import Bool, Float, Int
from scipy import stats

from src.dataset.trace import PHASE_CODES, SimulationTrace
from src.models.arm import ArmModel, PassiveMode
from src.models.environment import CollisionModel, parse_collision_model
from src.utils.bounds import (
    SystemParams,
    exploitation_count_bounds,
    exploration_regret_bound,
    exploration_time_bound,
    regret_bound_shared,
    regret_bound_zero,
)
from src.utils.constants import REPORT_CADENCES

REGRET_COLUMNS = ["t", "regret", "regret_over_ln_t", "epoch_end", "bound"]


@dataclass(frozen=True)
class RegretSeries:
    times: Int[np.ndarray, "k"]  # noqa: F821
    measured: Float[np.ndarray, "k"]  # noqa: F821
    """r(t) = t * sum_{i<=M} mu_sigma(i) - R(t), transient term omitted."""
    bound: Float[np.ndarray, "k"]  # noqa: F821
    """Regret upper bound at each time, NaN where not evaluated (t <= N)."""
    epoch_end: Bool[np.ndarray, "k"]  # noqa: F821
    """Whether the time closes an epoch; bounds are binding only there."""
    label: str = "regret"
    binding: bool = True
    """False when L or D fall below the thresholds of the guarantee."""

    def at(self, times: Sequence[int]) -> "RegretSeries":
        """Restrict the series to the given times, which must be present."""
        times = np.asarray(times, dtype=np.int64)
        positions = np.searchsorted(self.times, times)
        if np.any(positions >= len(self.times)) or np.any(self.times[positions] != times):
            raise ValueError(f"Times {times.tolist()} are not all in the series")
        return replace(
            self,
            times=self.times[positions],
            measured=self.measured[positions],
            bound=self.bound[positions],
            epoch_end=self.epoch_end[positions],
        )

    def regret_over_ln_t(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.measured / np.log(self.times)
        out[self.times < 2] = np.nan
        return out

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.times,
                "regret": self.measured,
                "regret_over_ln_t": self.regret_over_ln_t(),
                "epoch_end": self.epoch_end.astype(int),
                "bound": self.bound,
            },
            columns=REGRET_COLUMNS,
        )


def regret_label(arms: Sequence[ArmModel]) -> str:
    """'regret' when every passive arm is frozen, else 'weak regret'."""
    frozen = all(arm.passive_mode == PassiveMode.FROZEN for arm in arms)
    return "regret" if frozen else "weak regret"


def measured_regret(
    trace: SimulationTrace, params: SystemParams, M: int, label: str = "regret"
) -> RegretSeries:
    """Regret at every t = 0..T against constantly engaging the M best arms."""
    if not 1 <= M <= params.n_arms:
        raise ValueError(f"Need 1 <= M <= N, got M={M}, N={params.n_arms}")
    reward = trace.cumulative_reward()
    times = np.arange(len(reward), dtype=np.int64)
    epoch_end = np.zeros(len(reward), dtype=bool)
    epoch_end[trace.epoch_end_slots(1)] = True
    return RegretSeries(
        times=times,
        measured=times * sum(params.mu_sorted[:M]) - reward,
        bound=np.full(len(reward), np.nan),
        epoch_end=epoch_end,
        label=label,
    )


def report_times(
    horizon: int,
    epoch_ends: Sequence[int],
    cadence: str = "epochs_and_powers_of_two",
) -> np.ndarray:
    """Sorted report slots for a cadence; the horizon is always included."""
    if cadence not in REPORT_CADENCES:
        raise ValueError(f"Invalid report cadence: {cadence}, must be one of {REPORT_CADENCES}")
    times = {horizon}
    if cadence in ("epochs_and_powers_of_two", "epochs"):
        times.update(int(t) for t in epoch_ends if 1 <= t <= horizon)
    if cadence in ("epochs_and_powers_of_two", "powers_of_two"):
        times.update(1 << k for k in range(horizon.bit_length()) if 1 << k <= horizon)
    return np.array(sorted(times), dtype=np.int64)


def with_bounds(
    series: RegretSeries,
    params: SystemParams,
    model: str | CollisionModel,
    L: float,
    D: float,
    M: int,
    binding: bool = True,
) -> RegretSeries:
    """Fill the bound column for every time t > N under the active collision model."""
    model = parse_collision_model(model)
    bound_fn = regret_bound_shared if model == CollisionModel.SHARE else regret_bound_zero
    N = params.n_arms
    bound = np.array(
        [bound_fn(int(t), params, L, D, M, N) if t > N else np.nan for t in series.times]
    )
    return replace(series, bound=bound, binding=binding)


def with_exploration_bound(
    series: RegretSeries, params: SystemParams, d_values: Sequence[float], M: int
) -> RegretSeries:
    """
    Fill the bound column with the exploration-regret term evaluated at a
    time-varying D(t), one value per series time. Always non-binding.
    """
    times = series.times.astype(np.float64)
    d_values = np.asarray(d_values, dtype=np.float64)
    bound = np.full(len(times), np.nan)
    valid = times >= 1
    bound[valid] = exploration_regret_bound(times[valid], params, d_values[valid], M, params.n_arms)
    return replace(series, bound=bound, binding=False)


def confidence_interval(values: Sequence[float]) -> tuple[float, float]:
    """95% Student-t interval of the mean; degenerate for one value or zero spread."""
    data = np.asarray(values, dtype=np.float64)
    mean = float(np.mean(data))
    sem = stats.sem(data) if len(data) > 1 else 0.0
    if not np.isfinite(sem) or sem == 0:
        return mean, mean
    low, high = stats.t.interval(0.95, len(data) - 1, loc=mean, scale=sem)
    return float(low), float(high)


def aggregate_series(series: Sequence[RegretSeries]) -> pd.DataFrame:
    """
    Mean regret and 95% CI per time across seeds. All series must share the
    same times, which holds for runs of one config.
    """
    if not series:
        raise ValueError("Need at least one regret series to aggregate")
    times = series[0].times
    for s in series[1:]:
        if not np.array_equal(s.times, times):
            raise ValueError("Regret series of different seeds have different report times")
    stacked = np.stack([s.measured for s in series])
    intervals = [confidence_interval(stacked[:, i]) for i in range(len(times))]
    return pd.DataFrame(
        {
            "t": times,
            "measured_regret_mean": stacked.mean(axis=0),
            "ci95_low": [low for low, _ in intervals],
            "ci95_high": [high for _, high in intervals],
            "bound": series[0].bound,
            "epoch_end": series[0].epoch_end,
            "n_seeds": len(series),
        }
    )


def budget_violations(
    trace: SimulationTrace, D: float | Sequence[float], player: Optional[int] = None
) -> dict[str, int]:
    """
    Count slots where a player's measured per-arm exploration time or number
    of exploitation epochs exceeds its closed-form budget, on the player's
    local clock.

    :param D: fixed D, or D(t) indexed by local slot (position 0 unused)
    :param player: check one player; all players by default
    """
    players = range(1, trace.n_players + 1) if player is None else [player]
    violations = {"exploration_time": 0, "exploitation_epochs": 0}
    for p in players:
        local = trace.local_slots(p)
        present = local > 0
        t_local = local[present]
        d = D if np.isscalar(D) else np.asarray(D, dtype=np.float64)[t_local]
        explored = trace.exploration_time(p)[present]
        # float slack for the ln evaluation
        limit = exploration_time_bound(t_local, d) + 1e-9
        violations["exploration_time"] += int(np.sum(explored > limit))

        counts = trace.exploitation_epoch_counts(p)[present]
        beyond = t_local > trace.n_arms
        bound = exploitation_count_bounds(t_local[beyond], trace.n_arms)
        violations["exploitation_epochs"] += int(np.sum(counts[beyond] > bound))
    return violations


def collisions_by_half(trace: SimulationTrace, phase: str) -> tuple[int, int]:
    """Collided player-slots in the given epoch kind, first vs second half of the horizon."""
    half = trace.horizon // 2
    per_slot = np.sum(trace.collided() & (trace.phases == PHASE_CODES[phase]), axis=1)
    return int(per_slot[:half].sum()), int(per_slot[half:].sum())


def transient_deviation(
    arm: ArmModel,
    horizon: int,
    n_runs: int,
    rng: np.random.Generator,
    initial_state: Optional[int] = None,
) -> float:
    """
    Mean over independent always-played chains of sum_{t<=T} s(t) - mu T.

    :param initial_state: fixed start; otherwise starts follow the arm's reset rule
    """
    kernel_cdf = np.cumsum(arm.active_kernel, axis=1)
    last = arm.n_states - 1
    start = initial_state if initial_state is not None else arm.initial_state
    if start is None:
        idx = np.searchsorted(np.cumsum(arm.summary.pi), rng.random(n_runs), side="right")
        idx = np.minimum(idx, last)
    else:
        idx = np.full(n_runs, start, dtype=np.int64)
    total = np.zeros(n_runs)
    for _ in range(horizon):
        total += arm.states[idx]
        u = rng.random(n_runs)
        idx = np.minimum((u[:, None] >= kernel_cdf[idx]).sum(axis=1), last)
    return float(total.mean() - arm.mu * horizon)


def state_occupancy(arm: ArmModel, n_plays: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical state frequencies of one arm played n_plays times in a row."""
    arm = arm.copy()
    arm.reset(rng)
    counts = np.zeros(arm.n_states, dtype=np.int64)
    for _ in range(n_plays):
        counts[arm.current_state_index] += 1
        arm.evolve(True, rng)
    return counts / n_plays
