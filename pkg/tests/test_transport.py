import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmend.transport import (NoRouteError, Road, RouteTable, TransportGraph, available_moves,
                                move_mask, route_duration, travel_time)


def road(i, a, b, t, cap=100.0, vol=0.0):
    return Road(i, a, b, t, cap, volume=(vol,) * 24)


def test_travel_time_values():
    assert travel_time(road(0, 0, 1, 1.0), 0) == 1.0
    assert travel_time(road(0, 0, 1, 1.0, vol=100), 5) == pytest.approx(1.15)
    assert travel_time(road(0, 0, 1, 1.0, vol=200), 5) == pytest.approx(3.4)


@given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(0.1, 5), st.floats(1, 1e3))
def test_travel_time_nondecreasing_in_volume(v1, v2, t0, cap):
    r = road(0, 0, 1, t0, cap)
    lo, hi = sorted((v1, v2))
    assert travel_time(r, 0, lo) <= travel_time(r, 0, hi) + 1e-12


def test_congested_route_loses_to_clear_route():
    # direct road is congested to 3 h; the detour is 2 h
    three = Road(0, 0, 2, free_time=2.0, capacity=100.0, alpha=0.5, volume=(100.0,) * 24)
    assert travel_time(three, 0) == pytest.approx(3.0)
    g = TransportGraph(nodes=(0, 1, 2), roads=(three, road(1, 0, 1, 1.0), road(2, 1, 2, 1.0)))
    assert route_duration(g, 0, 2, 0) == 2


def test_chain_sums_then_rounds_up():
    g = TransportGraph(nodes=(0, 1, 2), roads=(road(0, 0, 1, 0.6), road(1, 1, 2, 0.6)))
    assert route_duration(g, 0, 2, 0) == 2
    assert route_duration(g, 1, 1, 0) == 0


def test_unreachable_destination_raises():
    g = TransportGraph(nodes=(0, 1, 2), roads=(road(0, 0, 1, 1.0),))
    with pytest.raises(NoRouteError):
        route_duration(g, 0, 2, 0)


def test_departure_hour_selects_volume():
    vol = tuple(0.0 if h < 12 else 200.0 for h in range(24))
    g = TransportGraph(nodes=(0, 1), roads=(Road(0, 0, 1, 1.0, 100.0, volume=vol),))
    assert route_duration(g, 0, 1, 3) == 1
    assert route_duration(g, 0, 1, 15) == 4  # ceil(3.4)


def _enumerate_best(g, s, d, t):
    best = math.inf
    adj = g.adjacency()

    def walk(u, seen, acc):
        nonlocal best
        if u == d:
            best = min(best, acc)
            return
        for v, idx in adj[u]:
            if v not in seen:
                walk(v, seen | {v}, acc + travel_time(g.roads[idx], t))

    walk(s, {s}, 0.0)
    return best


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=80, deadline=None)
def test_route_duration_matches_exhaustive_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    pairs = [p for p in itertools.combinations(range(n), 2) if rng.random() < 0.5]
    roads = tuple(Road(i, a, b, float(rng.uniform(0.2, 2)), 100.0,
                       volume=tuple(rng.uniform(0, 200, 24))) for i, (a, b) in enumerate(pairs))
    g = TransportGraph(nodes=tuple(range(n)), roads=roads)
    t = int(rng.integers(24))
    best = _enumerate_best(g, 0, n - 1, t)
    if math.isinf(best):
        with pytest.raises(NoRouteError):
            route_duration(g, 0, n - 1, t)
    else:
        assert route_duration(g, 0, n - 1, t) == math.ceil(best - 1e-9)


def test_mps_moves_keep_three_nearest_stations():
    # five stations on a line, 1 h apart
    roads = tuple(road(i, i, i + 1, 1.0) for i in range(4))
    g = TransportGraph(nodes=tuple(range(5)), roads=roads, ms_nodes={k + 1: k for k in range(5)})
    assert available_moves(g, "mess", 0) == [0, 1, 2, 3]
    assert available_moves(g, "meg", 2) == [2, 1, 3, 0]


def test_rc_moves_target_damaged_nodes_and_depot():
    roads = tuple(road(i, 0, i + 1, float(i + 1)) for i in range(6))
    g = TransportGraph(nodes=tuple(range(7)), roads=roads,
                       rc_nodes={10 + k: k + 1 for k in range(6)}, rc_depot=0)
    assert available_moves(g, "rc", 0) == [0, 1, 2, 3]
    assert available_moves(g, "rc", 0, damaged_lines=[14, 15]) == [0, 5, 6]
    assert available_moves(g, "rc", 6, damaged_lines=[11]) == [6, 0, 2]


def test_single_node_graph_only_stays():
    g = TransportGraph(nodes=(0,), roads=(), ms_nodes={1: 0})
    moves = available_moves(g, "meg", 0)
    assert moves == [0]
    assert move_mask(moves).tolist() == [True, False, False, False]


def test_route_table_volume_override():
    g = TransportGraph(nodes=(0, 1), roads=(road(0, 0, 1, 1.0),))
    table = RouteTable(g, volumes=np.full((24, 1), 200.0))
    assert table.travel_hours(0, 1, 0) == pytest.approx(3.4)


def test_bad_road_rejected():
    with pytest.raises(ValueError):
        Road(0, 0, 1, 0.0, 1.0)
    with pytest.raises(ValueError):
        TransportGraph(nodes=(0,), roads=(road(0, 0, 1, 1.0),))
