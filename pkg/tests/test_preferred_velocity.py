"""Preferred-velocity strategies: oracles, limits, reduction identities."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdsim.core import Vec2, ZERO
from crowdsim.preferred_velocity import (
    NeighborSummary,
    PedestrianState,
    familiarity_direction,
    hmfv_preferred,
    lkf_direction,
    lkf_preferred_velocity,
    maybe_advance_waypoint,
    nervousness,
    preferred_force,
    preferred_speed_original,
    remaining_path_length,
    update_avg_speed,
    update_excitement,
    update_memory,
    waypoint_direction,
)

unit_angle = st.floats(0.0, 2.0 * math.pi, allow_nan=False)


def unit(ang):
    return Vec2(math.cos(ang), math.sin(ang))


def make_ped(**kwargs):
    kwargs.setdefault("id", 0)
    kwargs.setdefault("pos", Vec2(0.0, 0.0))
    return PedestrianState(**kwargs)


# -- state validation -------------------------------------------------------

def test_state_rejects_out_of_range_scalars():
    for name in ("p", "M", "D", "f"):
        with pytest.raises(ValueError):
            make_ped(**{name: 1.3})
    with pytest.raises(ValueError):
        make_ped(E=1.5, E_m=1.0)
    with pytest.raises(ValueError):
        make_ped(v0_initial=2.0, v_max=1.5)
    with pytest.raises(ValueError):
        make_ped(radius=0.0)


def test_state_avg_speed_default_honors_initial_nervousness():
    calm = make_ped(p=0.0)
    tense = make_ped(p=0.4)
    assert calm.avg_speed == calm.v0_initial
    assert math.isclose(tense.avg_speed, 0.6 * tense.v0_initial)
    assert math.isclose(nervousness(tense), 0.4)


def test_state_initial_direction_points_at_first_waypoint():
    p = make_ped(waypoints=[Vec2(0.0, 5.0)])
    assert p.last_direction == Vec2(0.0, 1.0)


# -- waypoint navigation ----------------------------------------------------

def test_waypoint_direction_axis_case():
    p = make_ped(waypoints=[Vec2(5.0, 0.0)])
    assert waypoint_direction(p) == Vec2(1.0, 0.0)


def test_waypoint_direction_3_4_5():
    p = make_ped(pos=Vec2(1.0, 1.0), waypoints=[Vec2(4.0, 5.0)])
    d = waypoint_direction(p)
    assert math.isclose(d.x, 0.6, rel_tol=1e-12)
    assert math.isclose(d.y, 0.8, rel_tol=1e-12)


def test_waypoint_direction_at_final_destination_keeps_last():
    p = make_ped(pos=Vec2(2.0, 3.0), waypoints=[Vec2(2.0, 3.0)])
    assert waypoint_direction(p) == p.last_direction


def test_advance_by_capture_radius():
    p = make_ped(pos=Vec2(4.8, 0.0), waypoints=[Vec2(5.0, 0.0), Vec2(10.0, 0.0)])
    assert maybe_advance_waypoint(p)
    assert p.waypoint_index == 1


def test_advance_by_half_plane_crossing():
    p = make_ped(
        pos=Vec2(6.0, 0.9),
        waypoints=[Vec2(0.0, 0.0), Vec2(5.0, 0.0), Vec2(5.0, 10.0)],
        waypoint_index=1,
    )
    # past x=5 perpendicular to the incoming leg, though 1.3 m from the point
    assert maybe_advance_waypoint(p)
    assert p.waypoint_index == 2


def test_no_half_plane_advance_on_first_waypoint():
    p = make_ped(pos=Vec2(6.0, 3.0), waypoints=[Vec2(5.0, 0.0), Vec2(5.0, 10.0)])
    assert not maybe_advance_waypoint(p)


def test_final_waypoint_never_advances():
    p = make_ped(pos=Vec2(5.0, 0.0), waypoints=[Vec2(5.0, 0.0)])
    assert not maybe_advance_waypoint(p)
    assert p.waypoint_index == 0


def test_remaining_path_length_polyline():
    p = make_ped(pos=Vec2(0.0, 0.0), waypoints=[Vec2(3.0, 4.0), Vec2(3.0, 10.0)])
    assert math.isclose(remaining_path_length(p), 11.0)


# -- pacing -----------------------------------------------------------------

def test_speed_without_deadline_is_initial():
    p = make_ped(waypoints=[Vec2(100.0, 0.0)])
    assert preferred_speed_original(p, t=3.0) == p.v0_initial


def test_speed_paced_by_deadline():
    p = make_ped(waypoints=[Vec2(10.0, 0.0)], deadline=20.0, v_max=3.0)
    assert math.isclose(preferred_speed_original(p, t=0.0), 0.5)


def test_speed_clamped_at_v_max():
    p = make_ped(waypoints=[Vec2(100.0, 0.0)], deadline=1.0, v_max=3.0)
    assert preferred_speed_original(p, t=0.0) == 3.0


def test_speed_zero_at_destination():
    p = make_ped(pos=Vec2(10.0, 0.0), waypoints=[Vec2(10.0, 0.0)], deadline=20.0)
    assert preferred_speed_original(p, t=0.0) == 0.0


def test_speed_finite_past_deadline():
    p = make_ped(waypoints=[Vec2(10.0, 0.0)], deadline=1.0, v_max=10.0, tau=0.5)
    # denominator clamps to tau, not (deadline - t) <= 0
    assert preferred_speed_original(p, t=5.0) == 10.0


# -- nervousness ------------------------------------------------------------

def test_nervousness_arithmetic():
    p = make_ped(v0_initial=1.0, v_max=1.0, avg_speed=0.5)
    assert nervousness(p) == 0.5
    p.avg_speed = 1.0
    assert nervousness(p) == 0.0
    p.avg_speed = 0.0
    assert nervousness(p) == 1.0


# -- hmfv -------------------------------------------------------------------

def test_hmfv_calm_limit_matches_original():
    p = make_ped(waypoints=[Vec2(10.0, 0.0)], p=0.0, v_max=3.0)
    speed, direction = hmfv_preferred(p, NeighborSummary())
    assert speed == p.v0_initial
    assert math.isclose(direction.x, 1.0, rel_tol=1e-15)


def test_hmfv_full_panic_is_pure_herding():
    p = make_ped(waypoints=[Vec2(10.0, 0.0)], v_max=3.0)
    p.p = 1.0
    nbrs = NeighborSummary(avg_pref_direction=Vec2(0.0, 0.7))
    speed, direction = hmfv_preferred(p, nbrs)
    assert speed == p.v_max
    assert math.isclose(direction.y, 1.0, rel_tol=1e-15)


def test_hmfv_speed_blend_arithmetic():
    p = make_ped(v0_initial=1.0, v_max=2.0, waypoints=[Vec2(10.0, 0.0)])
    p.p = 0.5
    speed, _ = hmfv_preferred(p, NeighborSummary(avg_pref_direction=Vec2(1.0, 0.0)))
    assert math.isclose(speed, 1.5)


def test_hmfv_zero_blend_falls_back_to_last_direction():
    p = make_ped(waypoints=[Vec2(10.0, 0.0)])
    p.p = 1.0
    _, direction = hmfv_preferred(p, NeighborSummary(avg_pref_direction=ZERO))
    assert direction == p.last_direction


# -- lkf direction ----------------------------------------------------------

def test_lkf_full_memory_returns_door():
    p = make_ped(M=1.0, vel=Vec2(1.0, 0.0))
    door = Vec2(0.0, 1.0)
    d = lkf_direction(p, NeighborSummary(), door)
    assert math.isclose(d.x, 0.0, abs_tol=1e-15)
    assert math.isclose(d.y, 1.0, rel_tol=1e-15)


def test_lkf_no_memory_empty_surroundings_keeps_own_motion():
    p = make_ped(vel=Vec2(0.0, -2.0))
    d = lkf_direction(p, NeighborSummary(), Vec2(1.0, 0.0))
    assert math.isclose(d.y, -1.0, rel_tol=1e-15)


def test_lkf_dense_crowd_follows_collective():
    p = make_ped(vel=Vec2(1.0, 0.0))
    nbrs = NeighborSummary(collective_direction=Vec2(0.0, 1.0), density_tilde=1.0)
    d = lkf_direction(p, nbrs, Vec2(1.0, 0.0))
    assert math.isclose(d.y, 1.0, rel_tol=1e-15)


# -- familiarity ------------------------------------------------------------

def test_familiarity_zero_is_lkf_bitwise():
    p = make_ped(vel=Vec2(0.3, -0.9), M=0.25, f=0.0)
    nbrs = NeighborSummary(
        collective_direction=unit(2.1), density_tilde=0.4, count=3
    )
    door = unit(0.6)
    a = lkf_direction(p, nbrs, door)
    b = familiarity_direction(p, nbrs, door)
    assert a.x == b.x and a.y == b.y


def test_familiarity_requires_route_target():
    p = make_ped(f=0.5)
    with pytest.raises(ValueError):
        familiarity_direction(p, NeighborSummary(), Vec2(1.0, 0.0))


def test_familiarity_full_knowledge_no_memory_is_route():
    p = make_ped(f=1.0, route_target=Vec2(0.0, 8.0), vel=Vec2(1.0, 0.0))
    d = familiarity_direction(p, NeighborSummary(), Vec2(1.0, 0.0))
    assert math.isclose(d.y, 1.0, rel_tol=1e-15)


def test_familiarity_half_blend_oracle():
    # inner = (1,0), route = (0,1), f = 0.5 -> Norm((0.5, 0.5))
    p = make_ped(f=0.5, route_target=Vec2(0.0, 8.0), vel=Vec2(2.0, 0.0))
    d = familiarity_direction(p, NeighborSummary(), ZERO)
    s = math.sqrt(2.0) / 2.0
    assert math.isclose(d.x, s, rel_tol=1e-12)
    assert math.isclose(d.y, s, rel_tol=1e-12)


# -- lkf preferred velocity -------------------------------------------------

def test_lkf_velocity_fully_dependent_is_neighbor_average():
    p = make_ped(D=1.0, E=0.7)
    nbrs = NeighborSummary(avg_velocity=Vec2(0.4, -0.2))
    v = lkf_preferred_velocity(p, nbrs, Vec2(1.0, 0.0))
    assert v.x == 0.4 and v.y == -0.2


def test_lkf_velocity_calm_independent():
    p = make_ped(D=0.0, E=0.0, v0_initial=1.5, v_max=1.5)
    v = lkf_preferred_velocity(p, NeighborSummary(), Vec2(1.0, 0.0))
    assert math.isclose(v.x, 1.5)
    assert v.y == 0.0


def test_lkf_velocity_excitement_amplifies():
    p = make_ped(D=0.0, E=0.5, v0_initial=1.0, v_max=1.0)
    v = lkf_preferred_velocity(p, NeighborSummary(), Vec2(1.0, 0.0))
    assert math.isclose(v.x, 1.5)


# -- psychological updates --------------------------------------------------

def test_memory_fixed_points():
    assert update_memory(0.0, False, 0.01, 0.5, 10.0) == 0.0
    assert update_memory(1.0, True, 0.01, 0.5, 10.0) == 1.0


def test_memory_one_euler_step():
    assert math.isclose(update_memory(0.0, True, 0.01, 1.0, 10.0), 0.01)


def test_memory_decay_direction():
    m = update_memory(0.8, False, 0.1, 0.5, 10.0)
    assert 0.0 < m < 0.8


@given(
    st.floats(0.0, 1.0, allow_nan=False),
    st.booleans(),
    st.floats(0.001, 1.0, allow_nan=False),
)
def test_memory_stays_in_unit_interval(M, visible, dt):
    m = update_memory(M, visible, dt, 0.5, 10.0)
    assert 0.0 <= m <= 1.0


def test_excitement_fixed_points():
    assert update_excitement(0.0, 1.5, 1.5, 1.0, 0.01, 2.0) == 0.0
    assert update_excitement(1.0, 0.0, 1.5, 1.0, 0.01, 2.0) == 1.0


def test_excitement_one_euler_step():
    assert math.isclose(update_excitement(0.0, 0.0, 1.5, 1.0, 0.1, 1.0), 0.1)


@given(
    st.floats(0.0, 2.0, allow_nan=False),
    st.floats(0.0, 3.0, allow_nan=False),
    st.floats(0.0, 2.0, allow_nan=False),
    st.floats(0.001, 1.0, allow_nan=False),
)
def test_excitement_stays_in_range(E, vbar, E_m, dt):
    E = min(E, E_m)
    e = update_excitement(E, vbar, 1.5, E_m, dt, 2.0)
    assert 0.0 <= e <= E_m


def test_avg_speed_tracks_projection():
    v = update_avg_speed(0.0, Vec2(1.0, 0.0), Vec2(1.0, 0.0), dt=0.5, window=1.0)
    assert math.isclose(v, 0.5)
    # motion against the intent counts as zero achieved speed
    v = update_avg_speed(1.0, Vec2(-1.0, 0.0), Vec2(1.0, 0.0), dt=0.5, window=1.0)
    assert math.isclose(v, 0.5)


# -- preferred force --------------------------------------------------------

def test_preferred_force_oracle():
    p = make_ped(mass=80.0, tau=0.5, vel=Vec2(0.5, 0.0))
    f = preferred_force(p, Vec2(1.5, 0.0))
    assert math.isclose(f.x, 160.0, rel_tol=1e-12)
    assert f.y == 0.0


def test_preferred_force_deceleration_sign():
    p = make_ped(mass=80.0, tau=0.5, vel=Vec2(2.0, 0.0), v0_initial=1.0, v_max=2.0)
    f = preferred_force(p, Vec2(1.0, 0.0))
    assert math.isclose(f.x, -160.0, rel_tol=1e-12)


def test_preferred_force_zero_when_satisfied():
    p = make_ped(vel=Vec2(1.5, 0.0))
    f = preferred_force(p, Vec2(1.5, 0.0))
    assert f.norm() == 0.0


@settings(max_examples=200)
@given(unit_angle, st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_preferred_force_linearity(ang, a, b):
    p = make_ped(mass=80.0, tau=0.5)
    va = unit(ang) * a
    vb = unit(ang + 1.0) * b
    lhs = preferred_force(p, va + vb)
    rhs = preferred_force(p, va) + preferred_force(p, vb) - preferred_force(p, ZERO)
    assert abs(lhs.x - rhs.x) <= 1e-12 * max(1.0, abs(lhs.x))
    assert abs(lhs.y - rhs.y) <= 1e-12 * max(1.0, abs(lhs.y))
