import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from simple_parsing import Serializable

from src.models.arm import ArmModel
from src.models.environment import PlayerActivity, parse_collision_model
from src.models.rucb import AdaptiveSchedule, FixedParams, PolicyMode, RUCBPlayer
from src.utils.constants import REPORT_CADENCES
from src.utils.exceptions import ConfigError, ValidationError

# fields that do not change the simulated system
DIGEST_EXCLUDED = ("out_dir", "seeds", "report_cadence", "workers")


@dataclass
class ArmConfig(Serializable):
    states: List[float] = field(default_factory=list)
    """Reward value of each state, all positive."""
    kernel: List[List[float]] = field(default_factory=list)
    """Row-stochastic transition matrix used when the arm is played."""
    passive_mode: str = "frozen"
    """One of 'frozen', 'same_kernel', 'independent_resample', 'deterministic_cycle'."""
    initial_state: Optional[int] = None
    """Fixed starting state index. If None, drawn from the stationary distribution."""


@dataclass
class FixedParamsConfig(Serializable):
    L: Optional[float] = None
    """Index exploration coefficient. If None, use the L threshold."""
    D: Optional[float] = None
    """Exploration sufficiency coefficient. If None, use the D threshold for L."""


@dataclass
class AdaptiveParamsConfig(Serializable):
    f: str = "ln"
    """Increasing unbounded schedule: 'ln', 'sqrt_ln' or 'ln_squared'."""
    a: float = 2 / 3
    """D(t) = f(t)^a."""
    b: float = 1 / 3
    """L(t) = f(t)^b, with 0 < b < a < 1."""


@dataclass
class PolicyParamsConfig(Serializable):
    fixed: Optional[FixedParamsConfig] = None
    adaptive: Optional[AdaptiveParamsConfig] = None


@dataclass
class PolicyConfig(Serializable):
    mode: str = "pre_agreement"
    """'pre_agreement' or 'no_pre_agreement'."""
    params: PolicyParamsConfig = field(
        default_factory=lambda: PolicyParamsConfig(fixed=FixedParamsConfig())
    )


@dataclass
class PlayerScheduleConfig(Serializable):
    join_slot: int = 1
    """First global slot the player is present in."""
    absent: List[List[int]] = field(default_factory=list)
    """Inclusive [first, last] global slot ranges the player sits out."""


@dataclass
class ExperimentConfig(Serializable):
    arms: List[ArmConfig] = field(default_factory=list)
    n_players: int = 1
    """Number of players M."""
    horizon: int = 1000
    collision_model: str = "share"
    """'share' or 'zero'."""
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    seeds: List[int] = field(default_factory=lambda: [0])
    out_dir: str = "results"
    report_cadence: str = "epochs_and_powers_of_two"
    players: List[PlayerScheduleConfig] = field(default_factory=list)
    """Optional presence schedule per player. Empty means always present."""
    workers: int = 1
    """Processes for the seed sweep."""


def _fail(path: str, message: str) -> None:
    raise ConfigError(f"{path}: {message}")


def build_arms(config: ExperimentConfig) -> list[ArmModel]:
    if not config.arms:
        _fail("arms", "need at least one arm")
    arms = []
    for i, arm in enumerate(config.arms):
        try:
            arms.append(ArmModel(arm.states, arm.kernel, arm.passive_mode, arm.initial_state))
        except ValidationError as e:
            raise type(e)(f"arms[{i}].{_arm_field(str(e))}: {e}") from e
    return arms


def _arm_field(message: str) -> str:
    """Which ArmConfig field an ArmModel validation message is about."""
    if "passive mode" in message:
        return "passive_mode"
    if "initial_state" in message:
        return "initial_state"
    if "state values" in message:
        return "states"
    return "kernel"


def validate_config(config: ExperimentConfig) -> list[ArmModel]:
    """Check every field, raising with the dotted path of the first bad one."""
    arms = build_arms(config)
    n_arms = len(arms)
    if not 1 <= config.n_players <= n_arms:
        _fail("n_players", f"need 1 <= M <= N, got M={config.n_players}, N={n_arms}")
    if config.horizon < n_arms:
        _fail("horizon", f"must be >= N={n_arms}, got {config.horizon}")
    try:
        parse_collision_model(config.collision_model)
    except ConfigError as e:
        _fail("collision_model", str(e))
    try:
        PolicyMode(config.policy.mode)
    except ValueError:
        _fail("policy.mode", f"must be 'pre_agreement' or 'no_pre_agreement', got {config.policy.mode}")

    params = config.policy.params
    if (params.fixed is None) == (params.adaptive is None):
        _fail("policy.params", "give exactly one of 'fixed' or 'adaptive'")
    if params.fixed is not None:
        for name in ("L", "D"):
            value = getattr(params.fixed, name)
            if value is not None and value < 0:
                _fail(f"policy.params.fixed.{name}", f"must be >= 0, got {value}")
    else:
        adaptive = params.adaptive
        if not 0 < adaptive.b < adaptive.a < 1:
            bad = "b" if not 0 < adaptive.b < 1 else "a"
            _fail(
                f"policy.params.adaptive.{bad}",
                f"need 0 < b < a < 1, got a={adaptive.a}, b={adaptive.b}",
            )
        try:
            AdaptiveSchedule(adaptive.f, adaptive.a, adaptive.b)
        except ConfigError as e:
            _fail("policy.params.adaptive.f", str(e))

    if not config.seeds:
        _fail("seeds", "need at least one seed")
    if config.report_cadence not in REPORT_CADENCES:
        _fail("report_cadence", f"must be one of {REPORT_CADENCES}, got {config.report_cadence}")
    if config.players and len(config.players) != config.n_players:
        _fail("players", f"need one schedule per player ({config.n_players}), got {len(config.players)}")
    for i, player in enumerate(config.players):
        if player.join_slot < 1:
            _fail(f"players[{i}].join_slot", f"must be >= 1, got {player.join_slot}")
        for j, interval in enumerate(player.absent):
            if len(interval) != 2 or not 1 <= interval[0] <= interval[1]:
                _fail(f"players[{i}].absent[{j}]", f"need [first, last] with 1 <= first <= last, got {interval}")
    if config.workers < 1:
        _fail("workers", f"must be >= 1, got {config.workers}")
    return arms


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, "r") as f:
        raw = json.load(f)
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    try:
        config = ExperimentConfig.from_dict(raw)
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigError(f"Could not decode config: {e}") from e
    validate_config(config)
    return config


def config_digest(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON of the fields that define the simulated system."""
    semantic = {k: v for k, v in config.to_dict().items() if k not in DIGEST_EXCLUDED}
    canonical = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_activity(config: ExperimentConfig) -> Optional[list[PlayerActivity]]:
    if not config.players:
        return None
    return [
        PlayerActivity(
            join_slot=p.join_slot,
            absent=tuple((int(first), int(last)) for first, last in p.absent),
        )
        for p in config.players
    ]


def build_players(
    config: ExperimentConfig, params: Optional[FixedParams] = None
) -> list[RUCBPlayer]:
    """
    One RUCB player per id. Adaptive configs get a separate schedule per
    player; fixed configs need resolved (L, D) passed in as `params`.
    """
    n_arms = len(config.arms)
    players = []
    for k in range(1, config.n_players + 1):
        adaptive = config.policy.params.adaptive
        if adaptive is not None:
            player_params = AdaptiveSchedule(adaptive.f, adaptive.a, adaptive.b)
        elif params is not None:
            player_params = params
        else:
            raise ConfigError("Fixed-parameter players need resolved (L, D)")
        players.append(
            RUCBPlayer(k, n_arms, config.n_players, player_params, mode=config.policy.mode)
        )
    return players
