import json
import math

import pandas as pd
import pytest

from conftest import reference_config
from src.models.config import config_from_dict
from src.scripts.run_experiment import (
    bounds_report,
    derive_params,
    main,
    run_experiment,
)
from src.utils.exceptions import ConfigError, PracticalModeWarning


def write_config(tmp_path, name="config.json", **overrides):
    path = tmp_path / name
    path.write_text(json.dumps(reference_config(**overrides)))
    return str(path)


THRESHOLD_PARAMS = {"mode": "pre_agreement", "params": {"fixed": {"L": None, "D": None}}}


class TestDeriveParams:
    def test_thresholds_from_true_models(self):
        report = derive_params(config_from_dict(reference_config(policy=THRESHOLD_PARAMS)))
        assert report.l_threshold == pytest.approx(25001.3, abs=0.05)
        assert report.L == report.l_threshold
        assert report.D == pytest.approx(4 * report.L * 36, rel=1e-9)
        assert report.binding

    def test_small_params_warn(self):
        with pytest.warns(PracticalModeWarning):
            report = derive_params(config_from_dict(reference_config()))
        assert not report.l_valid
        assert not report.binding

    def test_all_arms_best_is_rejected(self):
        with pytest.raises(ConfigError, match="undefined"):
            derive_params(config_from_dict(reference_config(n_players=3, policy=THRESHOLD_PARAMS)))

    def test_equal_means_rejected(self):
        raw = reference_config(policy=THRESHOLD_PARAMS)
        raw["arms"][0] = dict(raw["arms"][1])
        with pytest.raises(ConfigError, match="different stationary means"):
            derive_params(config_from_dict(raw))


class TestRunExperiment:
    def test_artifacts(self, tmp_path):
        config = config_from_dict(reference_config(horizon=1000))
        with pytest.warns(PracticalModeWarning):
            summary = run_experiment(config, tmp_path)
        files = sorted(p.name for p in tmp_path.iterdir())
        assert files == [
            "regret_seed0.csv",
            "regret_seed1.csv",
            "summary.json",
            "trace_seed0.csv",
            "trace_seed1.csv",
        ]
        assert summary["seeds"] == [0, 1]
        assert not summary["binding"]
        last = summary["regret"][-1]
        assert last["t"] == 1000
        assert last["n_seeds"] == 2
        low, high = last["measured_regret_ci95"]
        assert low <= last["measured_regret_mean"] <= high
        assert last["bound_shared"] > 0 and last["bound_zero"] > 0
        for per_seed in summary["per_seed"]:
            assert per_seed["budget_violations"] == {"exploration_time": 0, "exploitation_epochs": 0}

        regret = pd.read_csv(tmp_path / "regret_seed0.csv")
        assert list(regret.columns) == ["t", "regret", "regret_over_ln_t", "epoch_end", "bound"]

    def test_byte_identical_reruns(self, tmp_path):
        config = config_from_dict(reference_config(horizon=600))
        with pytest.warns(PracticalModeWarning):
            run_experiment(config, tmp_path / "a")
            run_experiment(config, tmp_path / "b")
        for name in ("summary.json", "trace_seed0.csv", "regret_seed1.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_parallel_sweep_matches_sequential(self, tmp_path):
        with pytest.warns(PracticalModeWarning):
            run_experiment(config_from_dict(reference_config(horizon=600, seeds=[0, 1, 2])), tmp_path / "seq")
            run_experiment(
                config_from_dict(reference_config(horizon=600, seeds=[0, 1, 2], workers=2)), tmp_path / "par"
            )
        assert (tmp_path / "seq" / "summary.json").read_bytes() == (tmp_path / "par" / "summary.json").read_bytes()

    def test_adaptive_run(self, tmp_path):
        raw = reference_config(
            horizon=800,
            seeds=[0],
            policy={"mode": "pre_agreement", "params": {"adaptive": {"f": "ln", "a": 0.6, "b": 0.3}}},
        )
        summary = run_experiment(config_from_dict(raw), tmp_path)
        assert summary["L"] is None
        assert not summary["binding"]
        assert summary["regret"][-1]["exploration_bound"] > 0
        assert summary["per_seed"][0]["budget_violations"]["exploitation_epochs"] == 0

    def test_join_leave_run(self, tmp_path):
        raw = reference_config(
            horizon=800,
            seeds=[0],
            collision_model="zero",
            players=[{"join_slot": 1, "absent": []}, {"join_slot": 100, "absent": [[300, 349]]}],
        )
        with pytest.warns(PracticalModeWarning):
            summary = run_experiment(config_from_dict(raw), tmp_path)
        trace = pd.read_csv(tmp_path / "trace_seed0.csv")
        assert len(trace) == 800 + 800 - 99 - 50

    def test_weak_regret_label(self, tmp_path):
        raw = reference_config(horizon=300, seeds=[0])
        for arm in raw["arms"]:
            arm["passive_mode"] = "independent_resample"
        with pytest.warns(PracticalModeWarning):
            summary = run_experiment(config_from_dict(raw), tmp_path)
        assert summary["label"] == "weak regret"


class TestBoundsReport:
    def test_matches_terms(self):
        raw = reference_config(policy={"mode": "pre_agreement", "params": {"fixed": {"L": 100.0, "D": 50.0}}})
        with pytest.warns(PracticalModeWarning):
            report = bounds_report(config_from_dict(raw), 10_000)
        terms = report["terms_shared"]
        assert report["bound_shared"] == pytest.approx(sum(terms.values()))
        assert report["bound_zero"] > report["bound_shared"]

    def test_epoch_end_flag(self):
        raw = reference_config(policy={"mode": "pre_agreement", "params": {"fixed": {"L": 2.0, "D": 1.0}}})
        with pytest.warns(PracticalModeWarning):
            at_end = bounds_report(config_from_dict(raw), 99)
            off_end = bounds_report(config_from_dict(raw), 100)
        assert at_end["epoch_end"] and not off_end["epoch_end"]
        # practical parameters keep every report informational
        assert at_end["informational"] and off_end["informational"]

    def test_binding_only_at_epoch_ends(self):
        config = config_from_dict(reference_config(policy=THRESHOLD_PARAMS))
        # threshold D keeps the schedule in exploration, whose epochs end at 4^n - 1
        at_end = bounds_report(config, 63)
        off_end = bounds_report(config, 64)
        assert at_end["binding"] and not at_end["informational"]
        assert not off_end["epoch_end"] and off_end["informational"]

    def test_adaptive_report_is_informational(self):
        raw = reference_config(policy={"mode": "pre_agreement", "params": {"adaptive": {"f": "ln", "a": 0.6, "b": 0.3}}})
        report = bounds_report(config_from_dict(raw), 1000)
        assert not report["binding"] and report["informational"]
        assert report["D"] == pytest.approx(math.log(1000) ** 0.6)


class TestMain:
    def test_validate(self, tmp_path, capsys):
        assert main(["validate", write_config(tmp_path)]) == 0
        assert "Config OK: 3 arms, 2 players" in capsys.readouterr().out

    def test_invalid_config_exits_2(self, tmp_path, capsys):
        assert main(["validate", write_config(tmp_path, n_players=5)]) == 2
        assert "n_players" in capsys.readouterr().err

    def test_derive_params(self, tmp_path, capsys):
        assert main(["derive-params", write_config(tmp_path, policy=THRESHOLD_PARAMS)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["l_threshold"] == pytest.approx(25001.3, abs=0.05)
        assert report["l_valid"] and report["d_valid"]

    def test_run_with_seed_count(self, tmp_path):
        out = tmp_path / "out"
        with pytest.warns(PracticalModeWarning):
            assert main(["run", write_config(tmp_path, horizon=300), "--seeds", "3", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["seeds"] == [0, 1, 2]
        assert len(list(out.glob("trace_seed*.csv"))) == 3

    def test_bounds(self, tmp_path, capsys):
        with pytest.warns(PracticalModeWarning):
            assert main(["bounds", write_config(tmp_path), "--t", "10000"]) == 0
        assert json.loads(capsys.readouterr().out)["t"] == 10_000

    def test_bounds_outside_domain(self, tmp_path, capsys):
        with pytest.warns(PracticalModeWarning):
            assert main(["bounds", write_config(tmp_path), "--t", "2"]) == 2
        assert "t > N" in capsys.readouterr().err
