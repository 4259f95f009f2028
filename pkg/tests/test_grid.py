import copy
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import DATA, chain3_dict, two_bus_dict
from gridmend.grid import (GenKind, LineKind, NetworkError, damageable_lines, load_network, network_from_dict)


@pytest.fixture(scope="module")
def ieee33():
    return load_network(DATA / "ieee33.json")


def test_bundled_33_bus_feeder(ieee33):
    assert len(ieee33.buses) == 33
    dgs = sorted(g.p_max for g in ieee33.generators if g.kind is GenKind.DG)
    assert dgs == [200, 300, 400]
    assert sum(g.is_pv for g in ieee33.generators) == 6
    assert len(ieee33.stations) == 5
    assert len(ieee33.tie_lines()) == 5


def test_33_bus_damageable_set_contains_reported_lines(ieee33):
    ends = {ieee33.line(i).ends for i in damageable_lines(ieee33)}
    for pair in [(4, 5), (14, 15), (2, 19), (3, 23), (6, 26), (31, 32)]:
        assert pair in ends


def test_damageable_lines_edge_cases():
    assert damageable_lines(network_from_dict(two_bus_dict())) == []
    raw = chain3_dict()
    for ln in raw["lines"]:
        ln.update(kind="damageable", repair_time=1, repair_resources=1)
    assert damageable_lines(network_from_dict(raw)) == [1, 2]


def test_minimal_two_bus_is_valid():
    net = network_from_dict(two_bus_dict())
    assert net.bus_ids == [1, 2] and len(net.lines) == 1


@pytest.mark.parametrize("mutate, message", [
    (lambda r: r["buses"].append({"id": 2}), "duplicate bus"),
    (lambda r: r["lines"][0].update(to=9), "unknown bus"),
    (lambda r: r["lines"][0].update(r=-0.1), "r >= 0"),
    (lambda r: r["lines"][0].update(s_max=0), "s_max"),
    (lambda r: r["lines"][0].update(kind="damageable"), "damageable"),
    (lambda r: r["loads"][0].update(cost=0), "shedding cost"),
    (lambda r: r["generators"][0].update(p_max=-1), "inverted"),
    (lambda r: r["lines"].clear(), "connect"),
    (lambda r: r["lines"][0].pop("x"), "missing field 'x'"),
    (lambda r: r.update(schema_version=99), "schema_version"),
])
def test_invalid_networks_are_rejected(mutate, message):
    raw = two_bus_dict()
    mutate(raw)
    with pytest.raises(NetworkError, match=message):
        network_from_dict(raw)


def test_essential_loads_must_cost_more():
    raw = chain3_dict()
    raw["loads"][0].update(essential=True, cost=1.0)
    with pytest.raises(NetworkError, match="essential"):
        network_from_dict(raw)


def test_parse_error_reports_position(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"buses": [\n  {"id": 1},\n  oops\n]}')
    with pytest.raises(NetworkError, match="line 3"):
        load_network(bad)


def test_round_trip(tmp_path, ieee33):
    path = tmp_path / "copy.json"
    ieee33.dump(path)
    assert load_network(path) == ieee33


@given(st.permutations(range(3)))
def test_element_order_is_canonical(order):
    raw = chain3_dict()
    raw["buses"] = [raw["buses"][i] for i in order]
    net = network_from_dict(copy.deepcopy(raw))
    assert net.bus_ids == [1, 2, 3]
    assert net == network_from_dict(chain3_dict())


def test_black_start_excludes_grid_following_pv(ieee33):
    bs = ieee33.black_start_buses()
    following = {g.bus for g in ieee33.generators if g.kind is GenKind.PV_FOLLOWING}
    forming = {g.bus for g in ieee33.generators if g.kind is not GenKind.PV_FOLLOWING}
    assert forming <= bs
    assert not (following - forming) & bs
