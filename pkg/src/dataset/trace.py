import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from jaxtyping import Float, Int

from src.models.rucb import EpochRecord
from src.utils.constants import EXPLOITATION, EXPLORATION

TRACE_COLUMNS = ["t", "player", "arm", "state", "collision", "player_reward"]

# phase codes stored in SimulationTrace.phases, 0 for absent or phase-less players
PHASE_CODES = {EXPLORATION: 1, EXPLOITATION: 2}


@dataclass
class SlotRecord:
    t: int
    choices: tuple[Optional[int], ...]
    """Arm id chosen by each player, None while the player is absent."""
    arm_states: tuple[float, ...]
    """State value of every arm at slot t, read before the arms evolve."""
    collisions: tuple[int, ...]
    """Number of players on each arm."""
    system_reward: float
    player_rewards: tuple[float, ...]
    phases: tuple[Optional[str], ...] = ()
    """Epoch kind of each player at slot t."""
    local_slots: tuple[int, ...] = ()
    """Each player's local clock at slot t, 0 while absent."""

    def collided(self, player: int) -> bool:
        arm = self.choices[player - 1]
        return arm is not None and self.collisions[arm - 1] > 1


@dataclass
class SimulationTrace:
    """
    Slot-by-slot outcome of one run, one row per global slot t = 1..T.
    Allocate with `empty` and fill with `write`.
    """

    choices: Int[np.ndarray, "T M"]  # noqa: F821
    """Arm id per player, 0 while the player is absent."""
    arm_states: Float[np.ndarray, "T N"]  # noqa: F821
    counts: Int[np.ndarray, "T N"]  # noqa: F821
    """Number of players on each arm."""
    player_rewards: Float[np.ndarray, "T M"]  # noqa: F821
    rewards: Float[np.ndarray, "T"]  # noqa: F821
    """System reward per slot."""
    phases: Int[np.ndarray, "T M"]  # noqa: F821
    """PHASE_CODES value per player."""
    local: Int[np.ndarray, "T M"]  # noqa: F821
    """Local clock per player, 0 while absent."""
    seed: int
    config_digest: str = ""
    epoch_logs: dict[int, list[EpochRecord]] = field(default_factory=dict)

    def __post_init__(self):
        T, M = self.choices.shape
        N = self.arm_states.shape[1]
        expected = {
            "arm_states": (T, N),
            "counts": (T, N),
            "player_rewards": (T, M),
            "rewards": (T,),
            "phases": (T, M),
            "local": (T, M),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(
                    f"Trace array {name} has shape {getattr(self, name).shape}, expected {shape}"
                )

    @classmethod
    def empty(
        cls, horizon: int, n_arms: int, n_players: int, seed: int, config_digest: str = ""
    ) -> "SimulationTrace":
        return cls(
            choices=np.zeros((horizon, n_players), dtype=np.int32),
            arm_states=np.zeros((horizon, n_arms), dtype=np.float64),
            counts=np.zeros((horizon, n_arms), dtype=np.int32),
            player_rewards=np.zeros((horizon, n_players), dtype=np.float64),
            rewards=np.zeros(horizon, dtype=np.float64),
            phases=np.zeros((horizon, n_players), dtype=np.int8),
            local=np.zeros((horizon, n_players), dtype=np.int64),
            seed=seed,
            config_digest=config_digest,
        )

    def write(self, record: SlotRecord) -> None:
        if not 1 <= record.t <= self.horizon:
            raise ValueError(f"Slot {record.t} outside 1..{self.horizon}")
        i = record.t - 1
        self.choices[i] = [0 if c is None else c for c in record.choices]
        self.arm_states[i] = record.arm_states
        self.counts[i] = record.collisions
        self.player_rewards[i] = record.player_rewards
        self.rewards[i] = record.system_reward
        if record.phases:
            self.phases[i] = [PHASE_CODES.get(p, 0) for p in record.phases]
        if record.local_slots:
            self.local[i] = record.local_slots
        else:
            self.local[i] = np.where(self.choices[i] > 0, record.t, 0)

    def __len__(self) -> int:
        return self.choices.shape[0]

    @property
    def horizon(self) -> int:
        return self.choices.shape[0]

    @property
    def n_arms(self) -> int:
        return self.arm_states.shape[1]

    @property
    def n_players(self) -> int:
        return self.choices.shape[1]

    def system_rewards(self) -> np.ndarray:
        return self.rewards

    def cumulative_reward(self) -> np.ndarray:
        """R(t) for t = 0..T."""
        return np.concatenate([[0.0], np.cumsum(self.rewards)])

    def activation_counts(self) -> np.ndarray:
        """
        (T + 1, N) cumulative number of slots in which each arm was activated by
        at least one player, row t holding T_j(t).
        """
        activated = np.zeros((self.horizon + 1, self.n_arms), dtype=np.int64)
        activated[1:] = self.counts > 0
        return np.cumsum(activated, axis=0)

    def local_slots(self, player: int) -> np.ndarray:
        """The player's local clock at each global slot t = 1..T."""
        return self.local[:, player - 1]

    def collided(self) -> np.ndarray:
        """(T, M) whether each present player shared its arm with another."""
        present = self.choices > 0
        arm_index = np.where(present, self.choices - 1, 0)
        shared = np.take_along_axis(self.counts, arm_index, axis=1) > 1
        return present & shared

    def exploration_time(self, player: int) -> np.ndarray:
        """
        Largest per-arm count of exploration-epoch plays by the player up to
        each global slot t = 1..T.
        """
        arms = self.choices[:, player - 1]
        explored = (arms > 0) & (self.phases[:, player - 1] == PHASE_CODES[EXPLORATION])
        per_arm = np.zeros((self.horizon, self.n_arms), dtype=np.int64)
        rows = np.flatnonzero(explored)
        per_arm[rows, arms[rows] - 1] = 1
        return np.cumsum(per_arm, axis=0).max(axis=1)

    def exploitation_epoch_counts(self, player: int) -> np.ndarray:
        """n_I at each global slot t = 1..T, counting epochs started by then."""
        starts = np.array(
            [e.start for e in self.epoch_logs.get(player, []) if e.kind == EXPLOITATION],
            dtype=np.int64,
        )
        return np.searchsorted(starts, self.local_slots(player), side="right")

    def epoch_end_slots(self, player: int = 1) -> np.ndarray:
        """Global slots at which the player's completed epochs end."""
        local = self.local_slots(player)
        ends = np.array([e.start + e.length - 1 for e in self.epoch_logs.get(player, [])])
        # local clocks read 0 while the player is absent
        is_end = np.isin(local, ends) & (local > 0)
        return np.flatnonzero(is_end) + 1

    def collision_counts_by_phase(self) -> dict[str, int]:
        collided = self.collided()
        counts = {
            phase: int(np.sum(collided & (self.phases == code)))
            for phase, code in PHASE_CODES.items()
        }
        unknown = int(np.sum(collided & (self.phases == 0)))
        if unknown:
            counts["unknown"] = unknown
        return counts

    def to_dataframe(self) -> pd.DataFrame:
        rows, players = np.nonzero(self.choices > 0)
        arms = self.choices[rows, players]
        return pd.DataFrame(
            {
                "t": rows + 1,
                "player": players + 1,
                "arm": arms,
                "state": self.arm_states[rows, arms - 1],
                "collision": (self.counts[rows, arms - 1] > 1).astype(np.int64),
                "player_reward": self.player_rewards[rows, players],
            },
            columns=TRACE_COLUMNS,
        )

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "config_digest": self.config_digest,
            "horizon": self.horizon,
            "total_reward": float(self.rewards.sum()),
            "player_rewards": self.player_rewards.sum(axis=0).tolist(),
            "collisions_by_phase": self.collision_counts_by_phase(),
            "epoch_logs": {
                str(player): [list(e) for e in log] for player, log in self.epoch_logs.items()
            },
        }

    def save(self, csv_path: Path, summary_path: Optional[Path] = None) -> None:
        """Write the long-format CSV and, optionally, the JSON summary."""
        self.to_dataframe().to_csv(csv_path, index=False)
        if summary_path is not None:
            with open(summary_path, "w") as f:
                json.dump(self.summary(), f, indent=2, sort_keys=True)
