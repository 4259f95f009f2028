import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridmend.fleet import (LineDamage, Location, MegState, MessState, RcState, meg_power_from_action,
                            mess_power_from_action, mess_soc_step, rc_repair_step)


def mess(soc=0.5, node=0):
    return MessState("ES1", Location.at(node), soc=soc)


def test_mess_power_examples():
    assert mess_power_from_action(mess(0.5), 1.0) == (100.0, 0.0)
    assert mess_power_from_action(mess(0.9), 1.0) == (0.0, 0.0)
    assert mess_power_from_action(mess(0.1), -1.0) == (0.0, 0.0)
    ch, dis = mess_power_from_action(mess(0.8), 1.0)
    assert ch == pytest.approx(0.1 * 400 / 0.9)
    ch, dis = mess_power_from_action(mess(0.15), -1.0)
    assert ch == 0 and dis == pytest.approx(-0.05 * 400 * 0.9)


def test_soc_examples():
    assert mess_soc_step(mess(0.5), 100.0, 0.0) == pytest.approx(0.725)
    assert mess_soc_step(mess(0.725), 0.0, -90.0) == pytest.approx(0.475)
    assert mess_soc_step(mess(0.5), 100.0, 0.0, connected=False) == 0.5
    with pytest.raises(ValueError):
        mess_soc_step(mess(0.5), 10.0, -10.0)


@given(st.floats(0.1, 0.9), st.floats(-1, 1))
def test_action_keeps_soc_in_bounds_and_exclusive(soc, a):
    s = mess(soc)
    ch, dis = mess_power_from_action(s, a)
    assert ch == 0 or dis == 0
    assert ch >= 0 >= dis
    new = mess_soc_step(s, ch, dis)
    assert s.soc_min - 1e-9 <= new <= s.soc_max + 1e-9


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=60))
def test_energy_conservation_over_episode(actions):
    s = mess(0.5)
    start, energy = s.soc, 0.0
    for a in actions:
        ch, dis = mess_power_from_action(s, a)
        energy += ch * s.eta_c + dis / s.eta_d
        s = MessState(s.id, s.location, soc=mess_soc_step(s, ch, dis))
    assert abs((s.soc - start) * s.e_max - energy) / s.e_max < 1e-6


def test_meg_power_examples():
    g = MegState("EG1", Location.at(0))
    assert meg_power_from_action(g, 0.0) == 0.0
    assert meg_power_from_action(g, 1.0) == 150.0
    assert meg_power_from_action(g, 0.5) == 75.0
    assert meg_power_from_action(g, 3.0) == 150.0


def test_repair_needs_cumulative_hours():
    rc = RcState("RC1", Location.at(0))
    dmg = LineDamage(line=5, repair_time=2, resources=2)
    out = rc_repair_step(rc, dmg, True)
    assert not out.repaired and out.state.progress == {5: 1}
    out = rc_repair_step(out.state, dmg, True)
    assert out.repaired and out.state.resources == 8 and out.state.completed == (5,)
    # finished lines stay finished and consume nothing more
    again = rc_repair_step(out.state, dmg, True)
    assert not again.repaired and again.state.resources == 8


def test_repair_single_hour_and_refusal():
    out = rc_repair_step(RcState("RC1", Location.at(0)), LineDamage(1, 1, 2), True)
    assert out.repaired and out.state.resources == 8
    refused = rc_repair_step(RcState("RC1", Location.at(0), resources=1), LineDamage(1, 1, 2), True)
    assert refused.refused and not refused.repaired and refused.state.resources == 1


def test_progress_from_other_crews_stacks():
    out = rc_repair_step(RcState("RC1", Location.at(0)), LineDamage(1, 3, 2), True, others_progress=2)
    assert out.repaired


@given(st.lists(st.booleans(), max_size=40), st.integers(1, 6), st.integers(1, 4), st.integers(0, 10))
def test_repair_monotone_and_resources_accounted(flags, rt, rs, res):
    rc = RcState("RC1", Location.at(0), resources=res)
    dmg = LineDamage(1, rt, rs)
    was_done = False
    for f in flags:
        out = rc_repair_step(rc, dmg, f)
        rc = out.state
        done = 1 in rc.completed
        assert done or not was_done
        was_done = done
        assert rc.resources >= 0
        assert res - rc.resources == rs * len(rc.completed)
        assert rc.progress.get(1, 0) <= rt


def test_location_transitions():
    loc = Location.at(3).depart(5, 2)
    assert loc.in_transit and loc.hours_left == 2
    loc = loc.advance()
    assert loc.in_transit and loc.hours_left == 1
    assert loc.advance() == Location.at(5)
    assert Location.at(3).depart(3, 4) == Location.at(3)
    with pytest.raises(ValueError):
        loc.depart(1, 1)
    with pytest.raises(ValueError):
        Location.travelling(1, 0)


def test_soc_outside_bounds_rejected():
    with pytest.raises(ValueError):
        mess(0.95)
