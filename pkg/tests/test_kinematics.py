import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rsrs.config import ActuationIdiosyncrasy, AgentState, Arena, ControlCommand
from rsrs.kinematics import WALL, integrate, integrate_all, normalize_angle, resolve_collisions

UNIT = ActuationIdiosyncrasy()
finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_straight_step():
    s = integrate(AgentState(0, 0, 0), ControlCommand(1.0, 0.0), UNIT, 0.13)
    assert (s.x, s.y, s.heading) == pytest.approx((0.13, 0.0, 0.0))


def test_turn_in_place():
    s = integrate(AgentState(0, 0, 0), ControlCommand(0.0, 0.75), UNIT, 0.13)
    assert s.heading == pytest.approx(0.0975)
    assert (s.x, s.y) == (0.0, 0.0)


def test_factors_scale_rates():
    idio = ActuationIdiosyncrasy(0.5, 2.0)
    s = integrate(AgentState(0, 0, 0), ControlCommand(1.0, 0.1), idio, 1.0)
    assert (s.x, s.heading) == pytest.approx((0.5, 0.2))


@given(finite)
def test_normalize_range(a):
    w = normalize_angle(a)
    assert -math.pi <= w < math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_normalize_pi_maps_to_minus_pi():
    assert normalize_angle(math.pi) == -math.pi
    assert normalize_angle(-math.pi) == -math.pi


def _euler_path(v, omega, dt, n):
    states = np.zeros((1, 3))
    path = [states[0].copy()]
    u = np.array([[v, omega]])
    for _ in range(n):
        states = integrate_all(states, u, np.ones((1, 2)), dt)
        path.append(states[0].copy())
    return np.array(path)


def test_euler_points_lie_on_their_own_circle():
    # Equal chords turning by a constant angle: exact circle of radius
    # v dt / (2 sin(omega dt / 2)) centred at (v dt / 2, v dt / (2 tan(omega dt / 2))).
    v, omega, dt = 0.15, 0.75, 0.13
    a = omega * dt
    path = _euler_path(v, omega, dt, 500)
    centre = np.array([v * dt / 2, v * dt / (2 * math.tan(a / 2))])
    radius = v * dt / (2 * math.sin(a / 2))
    d = np.hypot(*(path[:, :2] - centre).T)
    assert np.max(np.abs(d - radius)) < 1e-9


def test_euler_local_error_against_exact_arc():
    # From any exact arc state, one Euler step lands within v*omega*dt^2/2 of the arc.
    v, omega, dt = 0.15, 0.75, 0.13
    R = v / omega
    for k in range(100):
        t = k * dt
        h = omega * t
        exact = np.array([[R * math.sin(h), R * (1 - math.cos(h)), normalize_angle(h)]])
        nxt = integrate_all(exact, np.array([[v, omega]]), np.ones((1, 2)), dt)[0]
        h1 = omega * (t + dt)
        target = np.array([R * math.sin(h1), R * (1 - math.cos(h1))])
        assert np.hypot(*(nxt[:2] - target)) <= v * omega * dt**2 / 2 + 1e-12
        assert abs(normalize_angle(nxt[2] - h1)) < 1e-12


def test_full_turn_returns_near_start():
    v, omega, dt = 0.15, 0.75, 0.13
    n = math.ceil(2 * math.pi / (omega * dt))
    path = _euler_path(v, omega, dt, n)
    assert np.hypot(*path[-1, :2]) <= v * dt
    assert np.sum(np.diff(path[:, 2]) < 0) == 1  # the stored heading wrapped exactly once
    assert np.unwrap(path[:, 2])[-1] >= 2 * math.pi


def pair(a, b):
    return np.array([a, b], dtype=float)


ARENA = Arena(10, 10)


def test_head_on_both_stop():
    prev = pair((-0.1, 0, 0), (0.1, 0, math.pi))
    new = pair((-0.05, 0, 0), (0.05, 0, math.pi))
    out, stopped, events = resolve_collisions(prev, new, 0.075, ARENA)
    assert stopped.tolist() == [True, True]
    np.testing.assert_array_equal(out[:, :2], prev[:, :2])
    assert [(e.i, e.j) for e in events] == [(0, 1)]


def test_pushed_from_behind_unaffected():
    # j directly behind i and facing it: i carries on, j stops
    prev = pair((0.0, 0, 0), (-0.2, 0, 0))
    new = pair((0.02, 0, 0), (-0.1, 0, 0))
    out, stopped, _ = resolve_collisions(prev, new, 0.075, ARENA)
    assert stopped.tolist() == [False, True]
    np.testing.assert_array_equal(out[0], new[0])
    np.testing.assert_array_equal(out[1, :2], prev[1, :2])


def test_position_revert_keeps_turn():
    prev = pair((-0.1, 0, 0), (0.1, 0, math.pi))
    new = pair((-0.05, 0, 0.1), (0.05, 0, -3.0))
    out, _, _ = resolve_collisions(prev, new, 0.075, ARENA, revert="position")
    assert out[:, 2].tolist() == [0.1, -3.0]
    out, _, _ = resolve_collisions(prev, new, 0.075, ARENA, revert="pose")
    np.testing.assert_array_equal(out, prev)


def test_single_agent_no_events():
    s = np.array([[0.3, -0.2, 1.0]])
    out, stopped, events = resolve_collisions(s, s.copy(), 0.075, ARENA)
    np.testing.assert_array_equal(out, s)
    assert not stopped.any() and events == []


def test_wall_clamps_and_keeps_heading():
    prev = np.array([[4.9, 0.0, 0.3]])
    new = np.array([[5.2, 0.1, 0.3]])
    out, stopped, events = resolve_collisions(prev, new, 0.075, ARENA, tick=7)
    assert out[0].tolist() == [5.0 - 0.075, 0.1, 0.3]
    assert not stopped[0]
    assert events[0].j == WALL and events[0].tick == 7
    assert events[0].to_record()["j"] == "wall"


inside = st.floats(-4.5, 4.5)
heading = st.floats(-math.pi, math.pi, exclude_max=True)
agent = st.tuples(inside, inside, heading)


@given(st.lists(agent, min_size=1, max_size=8),
       st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=8, max_size=8))
def test_never_leaves_arena(agents, moves):
    prev = np.array(agents)
    new = prev.copy()
    new[:, :2] += np.array(moves[:len(agents)])
    out, _, _ = resolve_collisions(prev, new, 0.075, Arena(9.2, 9.2))
    assert np.all(np.abs(out[:, :2]) <= 4.6 - 0.075 + 1e-12)


@given(st.lists(agent, min_size=1, max_size=8))
def test_zero_radius_is_identity(agents):
    prev = np.array(agents)
    new = prev.copy()
    new[:, 0] += 0.01
    out, stopped, events = resolve_collisions(prev, new, 0.0, ARENA)
    np.testing.assert_array_equal(out, new)
    assert not stopped.any() and events == []


@given(agent, heading, st.floats(0.0, 0.15), st.floats(0, 0.05), st.floats(0, 0.05))
def test_two_agent_straight_motion_never_closer(a, hb, gap, s1, s2):
    # two bodies moving straight: resolution never leaves them closer than integration did
    x, y, h = a
    prev = pair((x, y, h), (x + gap * math.cos(hb), y + gap * math.sin(hb), hb))
    new = prev.copy()
    for k, s in enumerate((s1, s2)):
        new[k, 0] += s * math.cos(prev[k, 2])
        new[k, 1] += s * math.sin(prev[k, 2])
    out, _, _ = resolve_collisions(prev, new, 0.075, Arena(100, 100))
    d_new = np.hypot(*(new[1, :2] - new[0, :2]))
    d_out = np.hypot(*(out[1, :2] - out[0, :2]))
    assert d_out >= d_new - 1e-12
