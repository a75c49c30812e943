import math
from abc import ABC, abstractmethod
from enum import Enum
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from jaxtyping import Float, Int

from src.utils.constants import EXPLOITATION, EXPLORATION
from src.utils.exceptions import ConfigError, ProtocolError


def oslash(k: int, l: int) -> int:
    """1-based cyclic shift: ((k - 1) mod l) + 1, a value in 1..l."""
    if k < 1 or l < 1:
        raise ValueError(f"oslash needs positive integers, got k={k}, l={l}")
    return (k - 1) % l + 1


def index(sample_mean: float, plays: int, t: float, L: float) -> float:
    """
    Upper confidence index of one arm: sample_mean + sqrt(L ln t / plays).

    :param sample_mean: mean of the states this player observed on the arm
    :param plays: number of this player's plays of the arm, at least 1
    :param t: current slot
    :param L: exploration coefficient, L = 0 reduces the index to the sample mean
    """
    if plays < 1:
        raise ValueError("Index of an arm that was never played is undefined")
    if t < 1:
        raise ValueError(f"Slot must be >= 1, got {t}")
    if L < 0:
        raise ValueError(f"L must be non-negative, got {L}")
    return sample_mean + math.sqrt(L * math.log(t) / plays)


def arm_indexes(
    sample_sum: Float[np.ndarray, "n_arms"],  # noqa: F821
    sample_count: Int[np.ndarray, "n_arms"],  # noqa: F821
    t: float,
    L: float,
) -> Float[np.ndarray, "n_arms"]:  # noqa: F821
    """Vectorized `index` over all arms."""
    counts = np.asarray(sample_count)
    if np.any(counts < 1):
        unplayed = (np.flatnonzero(counts < 1) + 1).tolist()
        raise ValueError(f"Arms {unplayed} were never played, their index is undefined")
    if L < 0:
        raise ValueError(f"L must be non-negative, got {L}")
    return np.asarray(sample_sum) / counts + np.sqrt(L * math.log(t) / counts)


def exploration_time(n_exploration: int) -> float:
    """Slots spent on each arm after n exploration epochs: (4^n - 1) / 3."""
    return (4**n_exploration - 1) / 3


def exploration_sufficient(n_exploration: int, t: float, D: float) -> bool:
    """Start an exploitation epoch iff (4^n_O - 1) / 3 > D ln t."""
    return exploration_time(n_exploration) > D * math.log(t)


def exploitation_assignment(k: int, m: int, ranked_arms: Sequence[int]) -> int:
    """Arm played by player k in subepoch m of an exploitation epoch."""
    M = len(ranked_arms)
    if not 1 <= k <= M:
        raise ValueError(f"Player id {k} out of range 1..{M}")
    if not 1 <= m <= M:
        raise ValueError(f"Subepoch {m} out of range 1..{M}")
    if len(set(ranked_arms)) != M:
        raise ValueError(f"Ranked arms must be distinct, got {list(ranked_arms)}")
    return ranked_arms[oslash(m - k + M + 1, M) - 1]


def exploration_assignment(k: int, m: int, n_arms: int) -> int:
    """Arm id (1..N) played by player k in subepoch m of an exploration epoch."""
    if not 1 <= k <= n_arms:
        raise ValueError(f"Player id {k} out of range 1..{n_arms}")
    if not 1 <= m <= n_arms:
        raise ValueError(f"Subepoch {m} out of range 1..{n_arms}")
    return oslash(m - k + n_arms + 1, n_arms)


def select_top_m(indexes: Sequence[float], M: int) -> list[int]:
    """
    Arm ids (1-based) of the M highest indexes, in non-increasing index order.
    Ties go to the lower arm id.
    """
    values = np.asarray(indexes, dtype=np.float64)
    if not 1 <= M <= values.size:
        raise ValueError(f"Cannot select {M} arms out of {values.size}")
    order = np.argsort(-values, kind="stable")
    return [int(i) + 1 for i in order[:M]]


class PolicyMode(str, Enum):
    PRE_AGREEMENT = "pre_agreement"
    NO_PRE_AGREEMENT = "no_pre_agreement"


class FixedParams(NamedTuple):
    L: float
    """Index exploration coefficient."""

    D: float
    """Exploration sufficiency coefficient."""

    def at(self, t: float) -> tuple[float, float]:
        return self.L, self.D


F_SCHEDULES: dict[str, Callable[[float], float]] = {
    "ln": math.log,
    "sqrt_ln": lambda t: math.sqrt(math.log(t)),
    "ln_squared": lambda t: math.log(t) ** 2,
}


class AdaptiveSchedule:
    """
    Time-varying coefficients D(t) = f(t)^a and L(t) = f(t)^b for an increasing,
    unbounded f. With 0 < b < a < 1, L(t), f(t)/D(t) and D(t)/L(t) all diverge.

    Each player needs its own instance: monotonicity of f is checked across
    the points the instance is queried at.
    """

    def __init__(
        self,
        f: str | Callable[[float], float] = "ln",
        a: float = 2 / 3,
        b: float = 1 / 3,
    ):
        if not 0 < b < a < 1:
            raise ConfigError(f"Adaptive exponents need 0 < b < a < 1, got a={a}, b={b}")
        if isinstance(f, str):
            if f not in F_SCHEDULES:
                raise ConfigError(
                    f"Invalid f schedule: {f}, must be one of {sorted(F_SCHEDULES)}"
                )
            self.f_name = f
            self.f = F_SCHEDULES[f]
        else:
            self.f_name = getattr(f, "__name__", "custom")
            self.f = f
        self.a = a
        self.b = b
        self._last_query: Optional[tuple[float, float]] = None

    def f_value(self, t: float) -> float:
        value = self.f(t)
        if self._last_query is not None:
            last_t, last_value = self._last_query
            if (t > last_t and value <= last_value) or (t < last_t and value >= last_value):
                raise ConfigError(
                    f"f is not increasing: f({last_t}) = {last_value}, f({t}) = {value}"
                )
        self._last_query = (t, value)
        return value

    def at(self, t: float) -> tuple[float, float]:
        """(L(t), D(t))"""
        if t < 2:
            raise ValueError(f"Adaptive coefficients are defined for t >= 2, got {t}")
        ft = self.f_value(t)
        return ft**self.b, ft**self.a


def adaptive_params(t: float, schedule: AdaptiveSchedule) -> tuple[float, float]:
    """(L(t), D(t)) of an adaptive schedule."""
    return schedule.at(t)


class EpochRecord(NamedTuple):
    kind: str
    """EXPLORATION or EXPLOITATION."""

    number: int
    """n for the n-th epoch of this kind."""

    start: int
    """First slot of the epoch (local clock)."""

    length: int

    subepoch_length: int


class EpochSchedule:
    """
    The epoch sequence of one player.

    Epoch kinds and lengths depend only on (D or D(t), N, M), never on
    observations, so players with equal parameters stay aligned.
    """

    def __init__(self, n_arms: int, n_players: int, params: FixedParams | AdaptiveSchedule):
        self.n_arms = n_arms
        self.n_players = n_players
        self.params = params
        self.n_exploration = 0
        self.n_exploitation = 0
        self.epoch_log: list[EpochRecord] = []

    @property
    def current(self) -> Optional[EpochRecord]:
        return self.epoch_log[-1] if self.epoch_log else None

    def epoch_at(self, t: int) -> tuple[EpochRecord, int, bool]:
        """
        Epoch containing slot t, starting a new one when the current one ended.
        Must be queried for every slot in order.

        :return: (epoch, subepoch m counted from 1, whether the epoch starts at t)
        """
        epoch = self.current
        started = epoch is None or t >= epoch.start + epoch.length
        if started:
            if epoch is not None and t != epoch.start + epoch.length:
                raise ProtocolError(
                    f"Slot {t} skips past the end of the epoch ending at "
                    f"{epoch.start + epoch.length - 1}"
                )
            epoch = self._start_epoch(t)
        m = (t - epoch.start) // epoch.subepoch_length + 1
        return epoch, m, started

    def _start_epoch(self, t: int) -> EpochRecord:
        if self.n_exploration == 0:
            kind = EXPLORATION
        else:
            _, D = self.params.at(t)
            kind = (
                EXPLOITATION
                if exploration_sufficient(self.n_exploration, t, D)
                else EXPLORATION
            )
        if kind == EXPLORATION:
            self.n_exploration += 1
            subepoch_length = 4 ** (self.n_exploration - 1)
            record = EpochRecord(
                kind, self.n_exploration, t, subepoch_length * self.n_arms, subepoch_length
            )
        else:
            self.n_exploitation += 1
            subepoch_length = 2 * 4 ** (self.n_exploitation - 1)
            record = EpochRecord(
                kind, self.n_exploitation, t, subepoch_length * self.n_players, subepoch_length
            )
        self.epoch_log.append(record)
        return record


def epoch_ends(
    n_arms: int, n_players: int, params: FixedParams | AdaptiveSchedule, until: int
) -> list[int]:
    """Last slots of the epochs that are complete by slot `until`."""
    schedule = EpochSchedule(n_arms, n_players, params)
    ends = []
    t = 1
    while True:
        epoch, _, _ = schedule.epoch_at(t)
        end = epoch.start + epoch.length - 1
        if end > until:
            return ends
        ends.append(end)
        t = end + 1


class Feedback(NamedTuple):
    arm: int
    """Arm the player played in the previous slot."""

    state: float
    """State value observed on that arm."""

    collision: bool
    """Whether another player activated the same arm."""


class BasePlayer(ABC):
    """
    Slot protocol shared by all players. Child classes implement `choose_arm`;
    `step` checks the feedback contract and updates the sample statistics.
    """

    def __init__(self, player_id: int, n_arms: int, n_players: int):
        if not 1 <= n_players <= n_arms:
            raise ConfigError(f"Need 1 <= M <= N, got M={n_players}, N={n_arms}")
        if not 1 <= player_id <= n_players:
            raise ValueError(f"Player id {player_id} out of range 1..{n_players}")
        self.player_id = player_id
        self.n_arms = n_arms
        self.n_players = n_players
        self.rng: Optional[np.random.Generator] = None
        self.local_t = 0
        self.last_arm: Optional[int] = None
        self.sample_count = np.zeros(n_arms, dtype=np.int64)
        self.sample_sum = np.zeros(n_arms, dtype=np.float64)

    @property
    def phase(self) -> Optional[str]:
        return None

    @property
    def sample_means(self) -> Float[np.ndarray, "n_arms"]:  # noqa: F821
        return np.divide(
            self.sample_sum,
            self.sample_count,
            out=np.zeros(self.n_arms),
            where=self.sample_count > 0,
        )

    def observe(self, feedback: Feedback) -> None:
        self.sample_count[feedback.arm - 1] += 1
        self.sample_sum[feedback.arm - 1] += feedback.state

    def step(self, t: int, feedback: Optional[Feedback] = None) -> int:
        """
        Absorb the feedback of slot t - 1 and return the arm to play at slot t.

        :param t: the player's local slot, 1 on its first active slot
        :param feedback: (arm, observed state, collision flag) of the previous slot
        """
        if t != self.local_t + 1:
            raise ProtocolError(
                f"Player {self.player_id} expected slot {self.local_t + 1}, got {t}"
            )
        if t > 1:
            if feedback is None:
                raise ProtocolError(f"Player {self.player_id} got no feedback for slot {t - 1}")
            if feedback.arm != self.last_arm:
                raise ProtocolError(
                    f"Feedback for arm {feedback.arm} but player {self.player_id} "
                    f"played arm {self.last_arm}"
                )
            self.observe(feedback)
        elif feedback is not None:
            raise ProtocolError("Feedback given before the first slot")

        arm = self.choose_arm(t, feedback)
        if not 1 <= arm <= self.n_arms:
            raise ProtocolError(f"Player {self.player_id} chose arm {arm} outside 1..{self.n_arms}")
        self.local_t = t
        self.last_arm = arm
        return arm

    def finish(self, feedback: Feedback) -> None:
        """Absorb the feedback of the last slot played; the player takes no further steps."""
        if feedback.arm != self.last_arm:
            raise ProtocolError(
                f"Feedback for arm {feedback.arm} but player {self.player_id} "
                f"played arm {self.last_arm}"
            )
        self.observe(feedback)
        self.last_arm = None

    @abstractmethod
    def choose_arm(self, t: int, feedback: Optional[Feedback]) -> int:
        raise NotImplementedError


class RUCBPlayer(BasePlayer):
    """
    Decentralized restless UCB player.

    Exploration epochs play every arm equally in a rotation offset by the player
    id. Exploitation epochs rank the arms once at the epoch start and rotate
    through the top M (pre-agreement), or hold one of the top M and re-draw it
    uniformly after a collision (no pre-agreement).
    """

    def __init__(
        self,
        player_id: int,
        n_arms: int,
        n_players: int,
        params: FixedParams | AdaptiveSchedule,
        mode: str | PolicyMode = PolicyMode.PRE_AGREEMENT,
        rng: Optional[np.random.Generator] = None,
        ranking_fn: Optional[Callable[["RUCBPlayer", int], Sequence[int]]] = None,
    ):
        """
        :param params: fixed (L, D) or an adaptive schedule (one instance per player)
        :param mode: pre_agreement or no_pre_agreement
        :param rng: generator for the no-pre-agreement draws; the environment
            binds its own generator at the start of a run
        :param ranking_fn: optional replacement for the index ranking, called as
            ranking_fn(player, t) at each exploitation-epoch start
        """
        super().__init__(player_id, n_arms, n_players)
        self.schedule = EpochSchedule(n_arms, n_players, params)
        try:
            self.mode = PolicyMode(mode)
        except ValueError:
            raise ConfigError(
                f"Invalid policy mode: {mode}, must be 'pre_agreement' or 'no_pre_agreement'"
            ) from None
        self.rng = rng
        self.ranking_fn = ranking_fn
        self.ranked_arms: list[int] = []
        self.current_target: Optional[int] = None
        self.subepoch = 0
        self._phase: Optional[str] = None
        self._exploit_target: Optional[int] = None

    @property
    def phase(self) -> Optional[str]:
        return self._phase

    @property
    def n_exploration(self) -> int:
        return self.schedule.n_exploration

    @property
    def n_exploitation(self) -> int:
        return self.schedule.n_exploitation

    @property
    def epoch_log(self) -> list[EpochRecord]:
        return self.schedule.epoch_log

    def rank_arms(self, t: int) -> list[int]:
        if self.ranking_fn is not None:
            ranked = [int(a) for a in self.ranking_fn(self, t)]
        else:
            L, _ = self.schedule.params.at(t)
            ranked = select_top_m(
                arm_indexes(self.sample_sum, self.sample_count, t, L), self.n_players
            )
        if len(ranked) != self.n_players or len(set(ranked)) != self.n_players:
            raise ProtocolError(f"Ranking must hold {self.n_players} distinct arms, got {ranked}")
        return ranked

    def _draw_target(self) -> int:
        if self.rng is None:
            raise ProtocolError("No-pre-agreement play needs a random generator")
        return self.ranked_arms[int(self.rng.integers(len(self.ranked_arms)))]

    def choose_arm(self, t: int, feedback: Optional[Feedback]) -> int:
        previous_phase = self._phase
        epoch, m, started = self.schedule.epoch_at(t)
        self._phase = epoch.kind
        self.subepoch = m

        if epoch.kind == EXPLORATION:
            arm = exploration_assignment(self.player_id, m, self.n_arms)
        else:
            if started:
                self.ranked_arms = self.rank_arms(t)
            if self.mode == PolicyMode.PRE_AGREEMENT:
                arm = exploitation_assignment(self.player_id, m, self.ranked_arms)
            else:
                collided = (
                    feedback is not None
                    and feedback.collision
                    and previous_phase == EXPLOITATION
                )
                if collided or self._exploit_target not in self.ranked_arms:
                    self._exploit_target = self._draw_target()
                arm = self._exploit_target
        self.current_target = arm
        return arm


class OraclePlayer(BasePlayer):
    """
    Benchmark player that knows the M best arms and holds its own one of them,
    so M oracle players engage the best arms constantly without collisions.
    """

    def __init__(self, player_id: int, n_arms: int, n_players: int, best_arms: Sequence[int]):
        super().__init__(player_id, n_arms, n_players)
        if len(best_arms) != n_players:
            raise ValueError(f"Oracle needs {n_players} best arms, got {list(best_arms)}")
        self.best_arms = [int(a) for a in best_arms]

    @property
    def phase(self) -> Optional[str]:
        return EXPLOITATION

    def choose_arm(self, t: int, feedback: Optional[Feedback]) -> int:
        return exploitation_assignment(self.player_id, 1, self.best_arms)
