from pathlib import Path

import pytest

from gridmend.env import DecPomdpEnv, load_env_config
from gridmend.grid import network_from_dict

DATA = Path(__file__).resolve().parents[1] / "src" / "gridmend" / "data"


def two_bus_dict(s_max=1000.0, load_kw=80.0):
    return {
        "buses": [{"id": 1}, {"id": 2}],
        "lines": [{"id": 1, "from": 1, "to": 2, "r": 0.01, "x": 0.01, "s_max": s_max}],
        "generators": [{"id": "G", "kind": "dg", "bus": 1, "p_max": 100, "q_min": -50, "q_max": 50}],
        "loads": [{"id": "D", "bus": 2, "p_kw": load_kw, "q_kvar": 0, "cost": 2.5}],
    }


def chain3_dict(damageable=True):
    kind = "damageable" if damageable else "fixed"
    return {
        "buses": [{"id": 1}, {"id": 2}, {"id": 3}],
        "lines": [
            {"id": 1, "from": 1, "to": 2, "r": 0.01, "x": 0.01, "s_max": 1000, "kind": "fixed"},
            {"id": 2, "from": 2, "to": 3, "r": 0.01, "x": 0.01, "s_max": 1000, "kind": kind,
             "repair_time": 2, "repair_resources": 2},
        ],
        "generators": [{"id": "G", "kind": "dg", "bus": 1, "p_max": 500, "q_min": -200, "q_max": 200}],
        "loads": [
            {"id": "D2", "bus": 2, "p_kw": 50, "q_kvar": 10, "cost": 1.5},
            {"id": "D3", "bus": 3, "p_kw": 50, "q_kvar": 10, "cost": 1.5},
        ],
    }


@pytest.fixture
def two_bus():
    return network_from_dict(two_bus_dict())


@pytest.fixture(scope="session")
def toy_config():
    return load_env_config(DATA / "toy3_scenario.json")


@pytest.fixture
def toy_env(toy_config):
    return DecPomdpEnv(toy_config, seed=0)


@pytest.fixture(scope="session")
def ieee33_config():
    return load_env_config(DATA / "ieee33_scenario.json")
