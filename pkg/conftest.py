import copy

import numpy as np
import pytest

from src.models.arm import ArmModel

REFERENCE_ARMS = [
    {"states": [1.0, 2.0], "kernel": [[0.9, 0.1], [0.2, 0.8]], "passive_mode": "frozen"},
    {"states": [1.0, 2.0], "kernel": [[0.5, 0.5], [0.5, 0.5]], "passive_mode": "frozen"},
    {"states": [0.5, 1.5], "kernel": [[0.7, 0.3], [0.4, 0.6]], "passive_mode": "frozen"},
]


def reference_config(**overrides) -> dict:
    """Raw config dict of the three-arm, two-player reference system."""
    config = {
        "arms": copy.deepcopy(REFERENCE_ARMS),
        "n_players": 2,
        "horizon": 2000,
        "collision_model": "share",
        "policy": {"mode": "pre_agreement", "params": {"fixed": {"L": 2.0, "D": 5.0}}},
        "seeds": [0, 1],
        "out_dir": "results",
        "report_cadence": "epochs_and_powers_of_two",
        "players": [],
        "workers": 1,
    }
    config.update(overrides)
    return config


def make_reference_arms(passive_mode: str = "frozen") -> list[ArmModel]:
    return [ArmModel(a["states"], a["kernel"], passive_mode) for a in REFERENCE_ARMS]


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def reference_arms():
    return make_reference_arms()
