import argparse
import json
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from tqdm import tqdm

from src.models.config import (
    ExperimentConfig,
    build_activity,
    build_players,
    config_digest,
    load_config,
    validate_config,
)
from src.models.environment import run
from src.models.rucb import F_SCHEDULES, AdaptiveSchedule, FixedParams, epoch_ends
from src.utils.bounds import (
    SystemParams,
    d_threshold,
    l_threshold,
    regret_bound_terms_shared,
    regret_bound_terms_zero,
    system_params,
)
from src.utils.constants import EXPLOITATION
from src.utils.exceptions import ConfigError, PracticalModeWarning
from src.utils.regret import (
    RegretSeries,
    aggregate_series,
    budget_violations,
    collisions_by_half,
    measured_regret,
    regret_label,
    report_times,
    with_bounds,
    with_exploration_bound,
)


class ParamsReport(NamedTuple):
    L: Optional[float]
    """Configured L, or the threshold when the config leaves it open. None for adaptive runs."""
    D: Optional[float]
    l_threshold: float
    d_threshold: float
    """D threshold at the configured L."""
    l_valid: bool
    d_valid: bool
    system: SystemParams

    @property
    def binding(self) -> bool:
        return self.l_valid and self.d_valid

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "D": self.D,
            "l_threshold": self.l_threshold,
            "d_threshold": self.d_threshold,
            "l_valid": self.l_valid,
            "d_valid": self.d_valid,
            "mu": list(self.system.mu),
            "sigma": list(self.system.sigma),
            "gap_min": self.system.gap_min,
            "pi_min": self.system.pi_min,
            "eps_min": self.system.eps_min,
            "eps_max": self.system.eps_max,
            "s_min": self.system.s_min,
            "s_max": self.system.s_max,
            "smax_cardinality": self.system.smax_cardinality,
            "transient_constant": self.system.transient,
        }


def derive_params(config: ExperimentConfig) -> ParamsReport:
    """
    Thresholds for L and D from the true arm models, with the configured
    values and whether they meet them. Warns when they do not.
    """
    arms = validate_config(config)
    system = system_params(arms, config.n_players)
    if system.gap_min is None:
        raise ConfigError(
            "n_players: with M = N the gap mu_sigma(M) - mu_sigma(M+1) is undefined, "
            "so no D threshold exists"
        )
    if not system.distinct_means:
        raise ConfigError(
            "arms: the guarantee assumes different arms have different stationary means, "
            f"got mu={list(system.mu)}"
        )
    l_thr = l_threshold(system)
    fixed = config.policy.params.fixed
    if fixed is None:
        return ParamsReport(None, None, l_thr, d_threshold(l_thr, system), False, False, system)

    L = l_thr if fixed.L is None else fixed.L
    d_thr = d_threshold(L, system)
    D = d_thr if fixed.D is None else fixed.D
    report = ParamsReport(L, D, l_thr, d_thr, L >= l_thr, D >= d_thr, system)
    if not report.binding:
        warnings.warn(
            f"L={L} (threshold {l_thr:.6g}) or D={D} (threshold {d_thr:.6g}) is below "
            "the guarantee's thresholds, running in practical mode with non-binding bounds",
            PracticalModeWarning,
        )
    return report


def resolve_params(config: ExperimentConfig) -> tuple[Optional[FixedParams], bool]:
    """
    (L, D) to run with and whether bound comparisons are binding. Configs
    whose thresholds are undefined still run when they give both L and D.
    """
    fixed = config.policy.params.fixed
    try:
        report = derive_params(config)
    except ConfigError as e:
        if fixed is None or fixed.L is None or fixed.D is None:
            raise
        warnings.warn(f"{e}; running in practical mode", PracticalModeWarning)
        return FixedParams(fixed.L, fixed.D), False
    if fixed is None:
        return None, False
    return FixedParams(report.L, report.D), report.binding


def adaptive_d_values(config: ExperimentConfig) -> np.ndarray:
    """D(t) = f(t)^a indexed by slot t = 0..T; slots below 2 hold 0."""
    adaptive = config.policy.params.adaptive
    f = F_SCHEDULES[adaptive.f]
    d = np.zeros(config.horizon + 1)
    for t in range(2, config.horizon + 1):
        d[t] = f(t) ** adaptive.a
    return d


class SeedResult(NamedTuple):
    seed: int
    series: RegretSeries
    summary: dict


def run_seed(
    config: ExperimentConfig,
    seed: int,
    params: Optional[FixedParams],
    binding: bool,
    out_dir: Path,
    digest: str,
) -> SeedResult:
    """Simulate one seed and write its trace and regret series."""
    arms = validate_config(config)
    system = system_params(arms, config.n_players)
    players = build_players(config, params)
    trace = run(
        arms,
        players,
        config.horizon,
        config.collision_model,
        seed,
        config_digest=digest,
        activity=build_activity(config),
    )

    times = report_times(config.horizon, trace.epoch_end_slots(1), config.report_cadence)
    series = measured_regret(trace, system, config.n_players, regret_label(arms)).at(times)
    if params is not None:
        series = with_bounds(
            series, system, config.collision_model, params.L, params.D, config.n_players, binding
        )
        d_budget = params.D
    else:
        d_budget = adaptive_d_values(config)
        series = with_exploration_bound(series, system, d_budget[times], config.n_players)

    trace.save(out_dir / f"trace_seed{seed}.csv")
    series.to_dataframe().to_csv(out_dir / f"regret_seed{seed}.csv", index=False)

    summary = trace.summary()
    summary["final_regret"] = float(series.measured[-1])
    summary["budget_violations"] = budget_violations(trace, d_budget)
    summary["exploitation_collisions_by_half"] = list(collisions_by_half(trace, EXPLOITATION))
    return SeedResult(seed, series, summary)


def _finite(x: float) -> Optional[float]:
    return float(x) if math.isfinite(x) else None


def run_experiment(
    config: ExperimentConfig, out_dir: Optional[str | Path] = None
) -> dict:
    """
    Run every seed of the config and write trace_seed{s}.csv,
    regret_seed{s}.csv and the aggregate summary.json to the output folder.
    Outputs depend only on the config.
    """
    arms = validate_config(config)
    system = system_params(arms, config.n_players)
    params, binding = resolve_params(config)
    digest = config_digest(config)
    out_dir = Path(out_dir or config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [
                pool.submit(run_seed, config, seed, params, binding, out_dir, digest)
                for seed in config.seeds
            ]
            results = [future.result() for future in tqdm(futures, desc="Seeds")]
    else:
        results = []
        for seed in tqdm(config.seeds, desc="Seeds"):
            print(f"Running seed {seed}...")
            results.append(run_seed(config, seed, params, binding, out_dir, digest))

    aggregate = aggregate_series([r.series for r in results])
    rows = []
    for row in aggregate.itertuples(index=False):
        t = int(row.t)
        entry = {
            "t": t,
            "measured_regret_mean": float(row.measured_regret_mean),
            "measured_regret_ci95": [float(row.ci95_low), float(row.ci95_high)],
            "n_seeds": int(row.n_seeds),
            "epoch_end": bool(row.epoch_end),
            "bound_shared": None,
            "bound_zero": None,
        }
        if params is not None and t > system.n_arms:
            M, N = config.n_players, system.n_arms
            entry["bound_shared"] = regret_bound_terms_shared(t, system, params.L, params.D, M, N).total
            entry["bound_zero"] = regret_bound_terms_zero(t, system, params.L, params.D, M, N).total
        elif params is None:
            entry["exploration_bound"] = _finite(row.bound)
        rows.append(entry)

    collisions: dict[str, int] = {}
    for r in results:
        for phase, count in r.summary["collisions_by_phase"].items():
            collisions[phase] = collisions.get(phase, 0) + count

    summary = {
        "config_digest": digest,
        "label": results[0].series.label,
        "binding": binding,
        "collision_model": config.collision_model,
        "policy_mode": config.policy.mode,
        "L": None if params is None else params.L,
        "D": None if params is None else params.D,
        "transient_constant": system.transient,
        "seeds": [r.seed for r in results],
        "per_seed": [r.summary for r in results],
        "collisions_by_phase": collisions,
        "regret": rows,
    }
    summary_path = out_dir / "summary.json"
    print(f"Writing summary to {summary_path}")
    with open(summary_path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return summary


def bounds_report(config: ExperimentConfig, t: int) -> dict:
    """
    Bound terms for both collision models at slot t. The bounds only hold at
    epoch ends with threshold-valid parameters; anywhere else the report is
    flagged informational.
    """
    arms = validate_config(config)
    system = system_params(arms, config.n_players)
    params, binding = resolve_params(config)
    M, N = config.n_players, system.n_arms
    if params is None:
        adaptive = config.policy.params.adaptive
        schedule = AdaptiveSchedule(adaptive.f, adaptive.a, adaptive.b)
        L, D = schedule.at(t)
        params, binding = FixedParams(L, D), False
    else:
        schedule = params
    epoch_end = t in epoch_ends(N, M, schedule, t)
    shared = regret_bound_terms_shared(t, system, params.L, params.D, M, N)
    zero = regret_bound_terms_zero(t, system, params.L, params.D, M, N)
    return {
        "t": t,
        "L": params.L,
        "D": params.D,
        "binding": binding,
        "epoch_end": epoch_end,
        "informational": not (binding and epoch_end),
        "bound_shared": shared.total,
        "bound_zero": zero.total,
        "terms_shared": shared._asdict(),
        "terms_zero": zero._asdict(),
    }


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Decentralized restless bandit experiments")
    commands = parser.add_subparsers(dest="command", required=True)

    validate_parser = commands.add_parser("validate", help="Check a config file")
    validate_parser.add_argument("config", type=str, help="Path to experiment configuration file")

    derive_parser = commands.add_parser("derive-params", help="Thresholds for L and D")
    derive_parser.add_argument("config", type=str, help="Path to experiment configuration file")

    run_parser = commands.add_parser("run", help="Run a seed sweep")
    run_parser.add_argument("config", type=str, help="Path to experiment configuration file")
    run_parser.add_argument("--seeds", type=int, default=None, help="Run seeds 0..K-1 instead of the config's")
    run_parser.add_argument("--out", type=str, default=None, help="Output folder")

    bounds_parser = commands.add_parser("bounds", help="Regret bounds at one slot")
    bounds_parser.add_argument("config", type=str, help="Path to experiment configuration file")
    bounds_parser.add_argument("--t", type=int, required=True, help="Slot to evaluate at")

    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command == "validate":
            arms = validate_config(config)
            print(
                f"Config OK: {len(arms)} arms, {config.n_players} players, "
                f"digest {config_digest(config)}"
            )
        elif args.command == "derive-params":
            print(json.dumps(derive_params(config).to_dict(), indent=2, sort_keys=True))
        elif args.command == "run":
            if args.seeds is not None:
                if args.seeds < 1:
                    raise ConfigError(f"seeds: need at least one seed, got {args.seeds}")
                config.seeds = list(range(args.seeds))
            run_experiment(config, args.out)
        else:
            print(json.dumps(bounds_report(config, args.t), indent=2, sort_keys=True))
    except ValueError as e:
        # ConfigError and ValidationError, or a bound asked for outside its domain
        print(f"Error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
