from enum import Enum
from typing import NamedTuple, Optional, Sequence

import numpy as np
from tqdm import tqdm

from src.dataset.trace import SimulationTrace, SlotRecord
from src.models.arm import ArmModel
from src.models.rucb import BasePlayer, Feedback
from src.utils.exceptions import ConfigError, ProtocolError


class CollisionModel(str, Enum):
    SHARE = "share"
    """Colliding players split the arm's reward equally."""
    ZERO = "zero"
    """Colliding players get nothing."""


def parse_collision_model(model: str | CollisionModel) -> CollisionModel:
    try:
        return CollisionModel(model)
    except ValueError:
        raise ConfigError(
            f"Invalid collision model: {model}, must be 'share' or 'zero'"
        ) from None


class PlayerActivity(NamedTuple):
    """When a player is present. Absent players do not play and their clock stops."""

    join_slot: int = 1
    absent: tuple[tuple[int, int], ...] = ()
    """Inclusive (first, last) global slot ranges."""

    def is_active(self, t: int) -> bool:
        if t < self.join_slot:
            return False
        return not any(first <= t <= last for first, last in self.absent)


def resolve_slot(
    choices: Sequence[Optional[int]],
    arms: Sequence[ArmModel],
    model: str | CollisionModel,
    rng: np.random.Generator,
    t: int = 1,
    phases: Sequence[Optional[str]] = (),
    local_slots: Sequence[int] = (),
) -> tuple[SlotRecord, list[Optional[Feedback]]]:
    """
    Credit rewards for one slot and advance every arm.

    Each arm chosen by at least one player is read once and then takes one
    active step; every other arm takes one passive step. Arms evolve in id
    order, which fixes the order of generator draws.

    :param choices: arm id per player (1..N), None for an absent player
    :return: the slot record and per-player feedback (None for absent players)
    """
    model = parse_collision_model(model)
    n_arms = len(arms)
    counts = [0] * n_arms
    for player, arm in enumerate(choices, start=1):
        if arm is None:
            continue
        if not 1 <= arm <= n_arms:
            raise ProtocolError(f"Player {player} chose arm {arm} outside 1..{n_arms}")
        counts[arm - 1] += 1

    arm_states = tuple(arm.state for arm in arms)
    if model == CollisionModel.SHARE:
        system_reward = sum(s for s, c in zip(arm_states, counts) if c >= 1)
    else:
        system_reward = sum(s for s, c in zip(arm_states, counts) if c == 1)

    player_rewards = []
    feedback: list[Optional[Feedback]] = []
    for arm in choices:
        if arm is None:
            player_rewards.append(0.0)
            feedback.append(None)
            continue
        state, n = arm_states[arm - 1], counts[arm - 1]
        if model == CollisionModel.SHARE:
            player_rewards.append(state / n)
        else:
            player_rewards.append(state if n == 1 else 0.0)
        feedback.append(Feedback(arm=arm, state=state, collision=n > 1))

    for arm, count in zip(arms, counts):
        arm.evolve(count > 0, rng)

    record = SlotRecord(
        t=t,
        choices=tuple(choices),
        arm_states=arm_states,
        collisions=tuple(counts),
        system_reward=float(system_reward),
        player_rewards=tuple(player_rewards),
        phases=tuple(phases),
        local_slots=tuple(local_slots),
    )
    return record, feedback


def run(
    arms: Sequence[ArmModel],
    players: Sequence[BasePlayer],
    horizon: int,
    model: str | CollisionModel,
    seed: int,
    config_digest: str = "",
    activity: Optional[Sequence[PlayerActivity]] = None,
    progress: bool = False,
) -> SimulationTrace:
    """
    Simulate `horizon` slots. Deterministic given (arms, players, seed).

    All players choose before any slot outcome is resolved. The run owns the
    arms and players it is given: arm states are reset from the run's
    generator and every player draws from the same generator. Each player
    absorbs the feedback of its last active slot when the run ends.

    :param players: ordered by player id 1..M
    :param activity: optional presence schedule per player
    """
    n_arms, n_players = len(arms), len(players)
    if n_players > n_arms:
        raise ConfigError(f"More players than arms: M={n_players} > N={n_arms}")
    if horizon < n_arms:
        raise ConfigError(f"Horizon {horizon} shorter than the first exploration epoch ({n_arms} slots)")
    if [p.player_id for p in players] != list(range(1, n_players + 1)):
        raise ConfigError("Players must be ordered by id 1..M")
    if activity is not None and len(activity) != n_players:
        raise ConfigError(f"Need one activity schedule per player, got {len(activity)}")
    model = parse_collision_model(model)

    rng = np.random.default_rng(seed)
    for arm in arms:
        arm.reset(rng)
    for player in players:
        player.rng = rng

    trace = SimulationTrace.empty(horizon, n_arms, n_players, seed, config_digest)
    last_feedback: list[Optional[Feedback]] = [None] * n_players
    local = [0] * n_players
    slots = range(1, horizon + 1)
    for t in tqdm(slots, desc=f"Seed {seed}") if progress else slots:
        choices: list[Optional[int]] = []
        for i, player in enumerate(players):
            if activity is not None and not activity[i].is_active(t):
                choices.append(None)
                continue
            local[i] += 1
            choices.append(player.step(local[i], last_feedback[i]))
        present = [c is not None for c in choices]
        record, feedback = resolve_slot(
            choices,
            arms,
            model,
            rng,
            t=t,
            phases=[p.phase if on else None for p, on in zip(players, present)],
            local_slots=[lt if on else 0 for lt, on in zip(local, present)],
        )
        for i, fb in enumerate(feedback):
            if fb is not None:
                last_feedback[i] = fb
        trace.write(record)

    for player, fb in zip(players, last_feedback):
        if fb is not None:
            player.finish(fb)
    trace.epoch_logs = {
        p.player_id: list(p.epoch_log) for p in players if hasattr(p, "epoch_log")
    }
    return trace
