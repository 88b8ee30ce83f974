"""Step-to-step Linear Inverted Pendulum dynamics with heading integration.

Public API:
    LipParams, LipState, GaitControl
    step_map(x, u, params)      # one walking step (pendulum flow, foot reset, turn)
    step_matrices(params)       # (A_L, B_L) of the frozen-frame affine step map
    orbital_energy(x, params)   # per-axis v²/2 − ω₀²q²/2
    com_trajectory(x, params)   # world CoM samples within the current step

The state is kept stance-relative and heading-aligned. Within a step the heading
frame is frozen at step start; after the foot reset the position and velocity are
re-expressed in the new heading frame. With that frame fixed the map is affine in
(x, u) and A_L, B_L realise it exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from loguru import logger

from .exceptions import DynamicsError, PendulumBlowUpError

# |q| above this is treated as a fall of the reduced-order model.
PENDULUM_ENVELOPE = 1.0

Vec2 = Tuple[float, float]


def wrap_angle(a: float) -> float:
    """Wrap to (−π, π]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class LipParams:
    H: float = 1.0
    T: float = 0.4
    g: float = 9.81

    def __post_init__(self):
        if not (self.H > 0 and self.T > 0 and self.g > 0):
            raise DynamicsError(f"LIP parameters must be positive, got H={self.H}, T={self.T}, g={self.g}")

    @property
    def omega0(self) -> float:
        return math.sqrt(self.g / self.H)


@dataclass(frozen=True)
class GaitControl:
    """Next stance-foot offset f (heading-aligned, relative to the current stance foot) and turn rate."""

    f: Vec2
    omega: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.f[0], self.f[1], self.omega])


@dataclass(frozen=True)
class LipState:
    q: Vec2
    v: Vec2
    theta: float
    stance_foot: Vec2
    stance_index: int

    def __post_init__(self):
        if self.stance_index not in (-1, 1):
            raise DynamicsError(f"stance_index must be -1 or +1, got {self.stance_index}")

    def as_vector(self) -> np.ndarray:
        """Ordered state [q_x, v_x, q_y, v_y, θ]."""
        return np.array([self.q[0], self.v[0], self.q[1], self.v[1], self.theta])

    @property
    def com_position(self) -> np.ndarray:
        """World-frame CoM: stance_foot + R(θ)·q."""
        return np.asarray(self.stance_foot) + rotation(self.theta) @ np.asarray(self.q)

    @property
    def world_velocity(self) -> np.ndarray:
        return rotation(self.theta) @ np.asarray(self.v)

    @classmethod
    def standing(
        cls,
        position: Vec2,
        theta: float,
        params: LipParams,
        stance_index: int = 1,
        half_width: float = 0.1,
    ) -> "LipState":
        """
        Step-in-place lateral periodic orbit with the CoM at `position`.

        The CoM sits half_width inboard of the stance foot and swings toward it, so
        the flow returns it to the same offset with mirrored velocity after T and the
        next foot lands 2·half_width to the other side. The sign follows the
        reachability rule: the next foot lands on side −stance_index.
        """
        w0, T = params.omega0, params.T
        c, s = math.cosh(w0 * T), math.sinh(w0 * T)
        q_y = -stance_index * half_width
        v_y = q_y * w0 * (1.0 - c) / s
        q = np.array([0.0, q_y])
        foot = np.asarray(position, dtype=float) - rotation(theta) @ q
        return cls(
            q=(0.0, q_y),
            v=(0.0, v_y),
            theta=wrap_angle(theta),
            stance_foot=(float(foot[0]), float(foot[1])),
            stance_index=stance_index,
        )


def _flow_coefficients(params: LipParams) -> tuple[float, float, float]:
    w0 = params.omega0
    return math.cosh(w0 * params.T), math.sinh(w0 * params.T), w0


def step_matrices(params: LipParams) -> tuple[np.ndarray, np.ndarray]:
    """
    A_L (5×5), B_L (5×3) on x = [q_x, v_x, q_y, v_y, θ], u = [f_x, f_y, ω],
    with the heading frame frozen at step start.
    """
    c, s, w0 = _flow_coefficients(params)
    block = np.array([[c, s / w0], [w0 * s, c]])
    A = np.zeros((5, 5))
    A[0:2, 0:2] = block
    A[2:4, 2:4] = block
    A[4, 4] = 1.0
    B = np.zeros((5, 3))
    B[0, 0] = -1.0
    B[2, 1] = -1.0
    B[4, 2] = params.T
    return A, B


def _check_finite(x: LipState, u: GaitControl) -> None:
    values = (*x.q, *x.v, x.theta, *x.stance_foot, *u.f, u.omega)
    if not all(math.isfinite(val) for val in values):
        raise DynamicsError(f"non-finite LIP input: state={x}, control={u}")


def step_map(
    x: LipState,
    u: GaitControl,
    params: LipParams,
    reexpress: bool = True,
    check_envelope: bool = True,
) -> LipState:
    """
    Advance one walking step.

    reexpress=False returns the post-reset state still expressed in the frame
    frozen at step start, which equals A_L·x + B_L·u exactly.
    Raises DynamicsError on non-finite input and PendulumBlowUpError when
    |q'| exceeds the validity envelope (check_envelope=True).
    """
    _check_finite(x, u)
    c, s, w0 = _flow_coefficients(params)
    q = np.asarray(x.q, dtype=float)
    v = np.asarray(x.v, dtype=float)
    f = np.asarray(u.f, dtype=float)

    q_end = q * c + v * (s / w0)
    v_end = q * (w0 * s) + v * c
    q_next = q_end - f
    v_next = v_end

    turn = u.omega * params.T
    foot = np.asarray(x.stance_foot) + rotation(x.theta) @ f
    theta_next = x.theta + turn
    if reexpress:
        back = rotation(-turn)
        q_next = back @ q_next
        v_next = back @ v_next
        theta_next = wrap_angle(theta_next)

    nxt = LipState(
        q=(float(q_next[0]), float(q_next[1])),
        v=(float(v_next[0]), float(v_next[1])),
        theta=float(theta_next),
        stance_foot=(float(foot[0]), float(foot[1])),
        stance_index=-x.stance_index,
    )
    if check_envelope and math.hypot(*nxt.q) > PENDULUM_ENVELOPE:
        logger.debug("pendulum blow-up: |q'|={:.3f}", math.hypot(*nxt.q))
        raise PendulumBlowUpError(f"|q'| = {math.hypot(*nxt.q):.3f} m exceeds envelope", state=nxt)
    return nxt


def within_step(x: LipState, params: LipParams, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Stance-relative (q, v) at time t ∈ [0, T] into the current step, frozen frame."""
    w0 = params.omega0
    c, s = math.cosh(w0 * t), math.sinh(w0 * t)
    q = np.asarray(x.q, dtype=float)
    v = np.asarray(x.v, dtype=float)
    return q * c + v * (s / w0), q * (w0 * s) + v * c


def com_trajectory(x: LipState, params: LipParams, samples: int = 10) -> np.ndarray:
    """World CoM positions at `samples` evenly spaced instants in (0, T]."""
    rot = rotation(x.theta)
    foot = np.asarray(x.stance_foot)
    pts = []
    for k in range(1, samples + 1):
        q, _ = within_step(x, params, params.T * k / samples)
        pts.append(foot + rot @ q)
    return np.array(pts)


def orbital_energy(x: LipState, params: LipParams) -> tuple[float, float]:
    """Per-axis orbital energy v²/2 − ω₀²q²/2."""
    w2 = params.omega0 ** 2
    return tuple(0.5 * vi * vi - 0.5 * w2 * qi * qi for qi, vi in zip(x.q, x.v))
