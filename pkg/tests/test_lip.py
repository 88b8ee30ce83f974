"""Unit tests for lip.py: step map, matrices and the standing orbit."""
import math

import numpy as np
import pytest

from stepnav.exceptions import DynamicsError, PendulumBlowUpError
from stepnav.lip import (
    GaitControl,
    LipParams,
    LipState,
    com_trajectory,
    orbital_energy,
    rotation,
    step_map,
    step_matrices,
    within_step,
    wrap_angle,
)

PARAMS = LipParams()


def _random_state(rng) -> LipState:
    return LipState(
        q=tuple(rng.uniform(-0.2, 0.2, 2)),
        v=tuple(rng.uniform(-0.5, 0.5, 2)),
        theta=float(rng.uniform(-math.pi, math.pi)),
        stance_foot=tuple(rng.uniform(0.0, 10.0, 2)),
        stance_index=int(rng.choice([-1, 1])),
    )


def _rk4(q0: float, v0: float, w2: float, t: float, n: int = 2000) -> tuple[float, float]:
    h = t / n
    q, v = q0, v0
    for _ in range(n):
        k1q, k1v = v, w2 * q
        k2q, k2v = v + 0.5 * h * k1v, w2 * (q + 0.5 * h * k1q)
        k3q, k3v = v + 0.5 * h * k2v, w2 * (q + 0.5 * h * k2q)
        k4q, k4v = v + h * k3v, w2 * (q + h * k3q)
        q += h * (k1q + 2 * k2q + 2 * k3q + k4q) / 6
        v += h * (k1v + 2 * k2v + 2 * k3v + k4v) / 6
    return q, v


def test_omega0():
    assert PARAMS.omega0 == pytest.approx(math.sqrt(9.81))

def test_wrap_angle():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(1.5 * math.pi) == pytest.approx(-0.5 * math.pi)
    assert wrap_angle(0.25) == 0.25

def test_matrices_realize_frozen_frame_map():
    A, B = step_matrices(PARAMS)
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = _random_state(rng)
        u = GaitControl(f=tuple(rng.uniform(-0.3, 0.3, 2)), omega=float(rng.uniform(-0.5, 0.5)))
        nxt = step_map(x, u, PARAMS, reexpress=False, check_envelope=False)
        expected = A @ x.as_vector() + B @ u.as_vector()
        np.testing.assert_allclose(nxt.as_vector(), expected, atol=1e-12)

def test_within_step_matches_rk4():
    rng = np.random.default_rng(1)
    w2 = PARAMS.omega0 ** 2
    for _ in range(5):
        x = _random_state(rng)
        q, v = within_step(x, PARAMS, PARAMS.T)
        for axis in range(2):
            q_ref, v_ref = _rk4(x.q[axis], x.v[axis], w2, PARAMS.T)
            assert q[axis] == pytest.approx(q_ref, abs=1e-9)
            assert v[axis] == pytest.approx(v_ref, abs=1e-9)

def test_orbital_energy_conserved_within_step():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = _random_state(rng)
        q, v = within_step(x, PARAMS, 0.7 * PARAMS.T)
        later = LipState(q=tuple(q), v=tuple(v), theta=x.theta, stance_foot=x.stance_foot, stance_index=x.stance_index)
        np.testing.assert_allclose(orbital_energy(later, PARAMS), orbital_energy(x, PARAMS), atol=1e-12)

def test_equilibrium_only_flips_stance():
    x = LipState(q=(0.0, 0.0), v=(0.0, 0.0), theta=0.3, stance_foot=(1.0, 2.0), stance_index=1)
    nxt = step_map(x, GaitControl(f=(0.0, 0.0), omega=0.0), PARAMS)
    assert nxt.q == (0.0, 0.0)
    assert nxt.v == (0.0, 0.0)
    assert nxt.theta == 0.3
    assert nxt.stance_foot == (1.0, 2.0)
    assert nxt.stance_index == -1

def test_standing_state_sits_at_position():
    x = LipState.standing((2.0, 3.0), 0.4, PARAMS)
    np.testing.assert_allclose(x.com_position, [2.0, 3.0], atol=1e-12)
    assert x.q[1] == pytest.approx(-0.1)

def test_standing_orbit_is_periodic():
    x = LipState.standing((0.0, 0.0), 0.0, PARAMS, stance_index=1)
    nxt = step_map(x, GaitControl(f=(0.0, 2 * x.q[1]), omega=0.0), PARAMS)
    assert nxt.q[0] == pytest.approx(0.0, abs=1e-12)
    assert nxt.q[1] == pytest.approx(-x.q[1], abs=1e-12)
    assert nxt.v[1] == pytest.approx(-x.v[1], abs=1e-12)
    assert nxt.stance_index == -1
    # the CoM is back where it started
    np.testing.assert_allclose(nxt.com_position, x.com_position, atol=1e-12)

def test_heading_accumulates_turns():
    x = LipState.standing((0.0, 0.0), 0.0, PARAMS)
    turns = [0.1, -0.2, 0.3, 0.25]
    for omega in turns:
        x = step_map(x, GaitControl(f=(0.0, 2 * x.q[1]), omega=omega), PARAMS, check_envelope=False)
    assert x.theta == pytest.approx(wrap_angle(sum(turns) * PARAMS.T), abs=1e-12)
    assert x.stance_index == 1

def test_foot_advances_in_heading_frame():
    x = LipState(q=(0.0, 0.0), v=(0.0, 0.0), theta=math.pi / 2, stance_foot=(0.0, 0.0), stance_index=1)
    nxt = step_map(x, GaitControl(f=(0.1, -0.2), omega=0.0), PARAMS)
    np.testing.assert_allclose(nxt.stance_foot, [0.2, 0.1], atol=1e-12)

def test_reexpression_preserves_world_position():
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = _random_state(rng)
        u = GaitControl(f=tuple(rng.uniform(-0.3, 0.3, 2)), omega=float(rng.uniform(-0.5, 0.5)))
        frozen = step_map(x, u, PARAMS, reexpress=False, check_envelope=False)
        turned = step_map(x, u, PARAMS, check_envelope=False)
        # the frozen result is still expressed in the start-of-step frame
        back = rotation(x.theta)
        np.testing.assert_allclose(turned.com_position, np.asarray(frozen.stance_foot) + back @ frozen.q, atol=1e-12)
        np.testing.assert_allclose(turned.world_velocity, back @ np.asarray(frozen.v), atol=1e-12)

def test_com_trajectory_ends_at_flow_end():
    x = LipState.standing((1.0, 1.0), 0.2, PARAMS)
    pts = com_trajectory(x, PARAMS, samples=10)
    assert pts.shape == (10, 2)
    # the standing orbit returns the CoM to its start after one step
    np.testing.assert_allclose(pts[-1], [1.0, 1.0], atol=1e-12)

def test_blow_up_raises_with_state():
    x = LipState(q=(0.9, 0.0), v=(1.0, 0.0), theta=0.0, stance_foot=(0.0, 0.0), stance_index=1)
    with pytest.raises(PendulumBlowUpError) as exc:
        step_map(x, GaitControl(f=(0.0, 0.0), omega=0.0), PARAMS)
    assert exc.value.state is not None
    assert abs(exc.value.state.q[0]) > 1.0

def test_non_finite_input_raises():
    x = LipState(q=(math.nan, 0.0), v=(0.0, 0.0), theta=0.0, stance_foot=(0.0, 0.0), stance_index=1)
    with pytest.raises(DynamicsError):
        step_map(x, GaitControl(f=(0.0, 0.0), omega=0.0), PARAMS)

def test_bad_stance_index():
    with pytest.raises(DynamicsError):
        LipState(q=(0.0, 0.0), v=(0.0, 0.0), theta=0.0, stance_foot=(0.0, 0.0), stance_index=0)

def test_bad_params():
    with pytest.raises(DynamicsError):
        LipParams(H=0.0)
