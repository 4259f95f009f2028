import csv

import numpy as np
import pytest

from envkit import make_config, two_node_transport, two_station_net
from gridmend.env import POWER, TRANSPORT, AgentAction, ConfigError, DecPomdpEnv, MegSpec, MessSpec, RcSpec
from gridmend.env import TRACE_FIELDS
from gridmend.scenario import OutageScenario

IDLE = AgentAction(hl=POWER, magnitude=0.0)


def test_33_bus_default_has_one_unit_of_each_kind(ieee33_config):
    env = DecPomdpEnv(ieee33_config)
    assert env.kinds == ["meg", "mess", "rc"]
    obs = env.reset(seed=1)
    assert len(obs) == 3 and all(o.shape == (env.obs_dim,) for o in obs)


def test_same_seed_same_start(toy_config):
    a = DecPomdpEnv(toy_config).reset(seed=5)
    b = DecPomdpEnv(toy_config).reset(seed=5)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_zero_damage_shows_intact_lines(toy_config):
    env = DecPomdpEnv(toy_config)
    obs = env.reset(seed=0, scenario=OutageScenario(()))
    # one-hot over two candidates + transit flag + road volume, then the line flag
    assert all(o[4] == 0.0 for o in obs)
    res = env.step([IDLE, IDLE])
    assert all(o[4] == 0.0 for o in res.obs)
    assert res.reward == pytest.approx(1.0)


def test_observation_values_on_toy(toy_env):
    obs = toy_env.reset(seed=0, day=0)
    mess, rc = obs
    assert mess[:3].tolist() == [1.0, 0.0, 0.0]
    # synthetic days jitter the road profile; the feature is half the volume/capacity ratio
    assert mess[3] == pytest.approx(0.5 * toy_env.routes.volumes[0, 0] / 1000)
    assert mess[4] == 1.0  # line damaged in every toy scenario
    assert mess[7] == pytest.approx(0.5)  # SoC
    assert rc[5:8].tolist() == [0.0, 0.0, 1.0]  # not at a repair site, full resources
    assert np.all((np.abs(mess) <= 1) & (np.abs(rc) <= 1))


def test_all_loads_restorable_gives_lambda_one():
    cfg = make_config(two_station_net(dg_kw=500, loads=((2, 50), (3, 50))), two_node_transport(),
                      megs=[MegSpec("EG1", 1)])
    env = DecPomdpEnv(cfg)
    env.reset(seed=0)
    assert env.step([IDLE]).reward == pytest.approx(1.0)


def test_nothing_energised_gives_lambda_zero():
    cfg = make_config(two_station_net(loads=((2, 50),)), two_node_transport(hours=1.5),
                      megs=[MegSpec("EG1", 1)])
    env = DecPomdpEnv(cfg)
    env.reset(seed=0)
    res = env.step([AgentAction(hl=TRANSPORT, route=1)])
    assert res.reward == 0.0
    assert res.xi.tolist() == [0.0]


def test_sole_generator_gets_full_credit():
    cfg = make_config(two_station_net(loads=((2, 40),)), two_node_transport(),
                      megs=[MegSpec("EG1", 1)], messes=[MessSpec("ES1", 2)], rcs=[RcSpec("RC1", 0)])
    env = DecPomdpEnv(cfg)
    env.reset(seed=0)
    res = env.step([AgentAction(magnitude=1.0), IDLE, AgentAction(hl=POWER, repair=0)])
    assert res.reward == pytest.approx(1.0)
    np.testing.assert_allclose(res.xi, [1.0, 0.0, 0.0], atol=1e-9)


def test_generator_share_is_its_injection_over_restored_load():
    cfg = make_config(two_station_net(dg_kw=60, loads=((2, 100),)), two_node_transport(),
                      megs=[MegSpec("EG1", 1)])
    env = DecPomdpEnv(cfg)
    env.reset(seed=0)
    res = env.step([AgentAction(magnitude=40 / 150)])
    assert res.solution.total_restored == pytest.approx(100)
    assert res.xi[0] == pytest.approx(0.4, abs=1e-9)


def test_repair_crew_credited_with_flow_on_its_line():
    cfg = make_config(two_station_net(dg_kw=500, loads=((2, 50), (3, 50)), damageable=True),
                      two_node_transport(rc_lines=[2]), rcs=[RcSpec("RC1", 1)], damaged=[(2, 1, 2)])
    env = DecPomdpEnv(cfg)
    env.reset(seed=0)
    res = env.step([AgentAction(hl=POWER, repair=1)])
    assert env.out_lines() == []
    assert res.solution.total_restored == pytest.approx(100)
    assert res.xi[0] == pytest.approx(0.5, abs=1e-9)


def test_zero_restoration_gives_zero_contributions(toy_env):
    toy_env.reset(seed=0)
    from gridmend.milp.restoration import DispatchSolution
    assert toy_env.contribution(DispatchSolution("optimal", 0.0)).tolist() == [0.0, 0.0]


def test_transit_blocks_power_until_arrival():
    cfg = make_config(two_station_net(dg_kw=500), two_node_transport(hours=1.5),
                      messes=[MessSpec("ES1", 1)], horizon=6)
    env = DecPomdpEnv(cfg)
    env.reset(seed=0)
    env.step([AgentAction(hl=TRANSPORT, route=1)])
    assert env.in_transit(0)
    assert env.observe()[0][2] == 1.0
    res = env.step([AgentAction(hl=POWER, magnitude=1.0)])
    assert res.info["was_transit"] == [True] and res.info["acted_power"] == [False]
    assert not env.in_transit(0) and env.units["ES1"].location.node == 1
    res = env.step([AgentAction(hl=POWER, magnitude=1.0)])
    assert res.info["acted_power"] == [True]
    assert env.units["ES1"].soc > 0.5


def test_invalid_requests_are_reported_not_fatal(toy_env):
    toy_env.reset(seed=0)
    res = toy_env.step([AgentAction(hl=TRANSPORT, route=3), AgentAction(hl=POWER, repair=1)])
    assert len(res.info["invalid"]) == 2


def test_rc_repairs_toy_line_after_three_hours(toy_env):
    toy_env.reset(seed=0)
    go = [IDLE, AgentAction(hl=TRANSPORT, route=1)]
    toy_env.step(go)
    fix = [IDLE, AgentAction(hl=POWER, repair=1)]
    lams = [toy_env.step(fix).reward for _ in range(3)]
    assert toy_env.out_lines() == []
    assert lams[-1] > lams[0]
    assert toy_env.units["RC1"].resources == 8


def test_same_actions_same_results(toy_config):
    rng = np.random.default_rng(3)
    acts = [[AgentAction(int(rng.integers(2)), int(rng.integers(2)), float(rng.uniform(-1, 1)),
                         int(rng.integers(2))) for _ in range(2)] for _ in range(24)]
    runs = []
    for _ in range(2):
        env = DecPomdpEnv(toy_config)
        env.reset(seed=11)
        runs.append([(r.reward, r.xi.tolist(), [o.tolist() for o in r.obs])
                     for r in (env.step(a) for a in acts)])
    assert runs[0] == runs[1]


def test_episode_ends_after_horizon_and_trace_is_written(toy_env, tmp_path):
    toy_env.reset(seed=0)
    for _ in range(24):
        res = toy_env.step([IDLE, IDLE])
    assert res.done
    with pytest.raises(RuntimeError):
        toy_env.step([IDLE, IDLE])
    path = tmp_path / "trace.csv"
    toy_env.write_trace(path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 48 and tuple(rows[0]) == TRACE_FIELDS


def test_fleet_at_unknown_station_rejected():
    with pytest.raises(ConfigError, match="station 7"):
        make_config(two_station_net(dg_kw=10), two_node_transport(), megs=[MegSpec("EG1", 7)])
