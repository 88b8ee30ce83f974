"""Policy input: raw navigation state and its fixed 75-value feature encoding.

Layout of the feature vector:
    [0:64]   8×8 max-pool of the 64×64 local occupancy grid, row-major
    [64:75]  p_x, p_y, v_x, v_y, θ, i_l, d_g, δθ_g, d_o, goal_x, goal_y (scaled)

Scaling constants are module-level and never change at runtime.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .lip import LipState, wrap_angle
from .world import (
    GRID_SIZE,
    Environment,
    min_obstacle_distance,
    render_local_grid,
    window_obstacles,
)

POOL = 8
POOLED_SIZE = (GRID_SIZE // POOL) ** 2
PROPRIO_SIZE = 11
FEATURE_SIZE = POOLED_SIZE + PROPRIO_SIZE

POSITION_SCALE = 10.0
VELOCITY_SCALE = 1.0
GOAL_DISTANCE_SCALE = 14.15  # diagonal of the 10 m × 10 m arena
ANGLE_SCALE = math.pi
OBSTACLE_DISTANCE_SCALE = 3.0

PROPRIO_NAMES = ("p_x", "p_y", "v_x", "v_y", "theta", "stance", "d_g", "dtheta_g", "d_o", "goal_x", "goal_y")

Vec2 = Tuple[float, float]


@dataclass(frozen=True)
class RawState:
    """Everything the policy observes at the start of a walking step."""

    grid: np.ndarray  # (64, 64) uint8
    position: Vec2
    velocity: Vec2
    theta: float
    stance_index: int
    d_g: float
    delta_theta_g: float
    d_o: float  # +inf when no obstacle is in the local window
    goal: Vec2


def goal_geometry(position, theta: float, goal) -> tuple[float, float]:
    """Distance to the goal and the goal bearing relative to the heading, wrapped."""
    dx, dy = goal[0] - position[0], goal[1] - position[1]
    return math.hypot(dx, dy), wrap_angle(math.atan2(dy, dx) - theta)


def build_raw_state(env: Environment, x: LipState) -> RawState:
    p = x.com_position
    pose = ((float(p[0]), float(p[1])), x.theta)
    d_g, bearing = goal_geometry(p, x.theta, env.goal)
    d_o = min_obstacle_distance(env, p, window_obstacles(env, pose))
    return RawState(
        grid=np.array(render_local_grid(env, pose).cells),
        position=pose[0],
        velocity=(float(x.v[0]), float(x.v[1])),
        theta=x.theta,
        stance_index=x.stance_index,
        d_g=d_g,
        delta_theta_g=bearing,
        d_o=d_o,
        goal=(float(env.goal[0]), float(env.goal[1])),
    )


def pool_grid(grid: np.ndarray) -> np.ndarray:
    """Max over disjoint 8×8 blocks, flattened row-major to 64 values."""
    g = np.asarray(grid, dtype=float)
    if g.shape != (GRID_SIZE, GRID_SIZE):
        raise ValueError(f"grid must be {GRID_SIZE}×{GRID_SIZE}, got {g.shape}")
    n = GRID_SIZE // POOL
    return g.reshape(n, POOL, n, POOL).max(axis=(1, 3)).ravel()


def proprio_block(s: RawState) -> np.ndarray:
    d_o = OBSTACLE_DISTANCE_SCALE if math.isinf(s.d_o) else s.d_o
    return np.array([
        s.position[0] / POSITION_SCALE,
        s.position[1] / POSITION_SCALE,
        s.velocity[0] / VELOCITY_SCALE,
        s.velocity[1] / VELOCITY_SCALE,
        s.theta / ANGLE_SCALE,
        float(s.stance_index),
        s.d_g / GOAL_DISTANCE_SCALE,
        s.delta_theta_g / ANGLE_SCALE,
        float(np.clip(d_o / OBSTACLE_DISTANCE_SCALE, -1.0, 1.0)),
        s.goal[0] / POSITION_SCALE,
        s.goal[1] / POSITION_SCALE,
    ])


def encode(s: RawState) -> np.ndarray:
    return np.concatenate([pool_grid(s.grid), proprio_block(s)])


# --- Compact grid text form for artifact rows ---

def pack_grid(grid: np.ndarray) -> str:
    return np.packbits(np.asarray(grid, dtype=np.uint8).ravel()).tobytes().hex()


def unpack_grid(text: str) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(bytes.fromhex(text), dtype=np.uint8))
    if bits.size != GRID_SIZE * GRID_SIZE:
        raise ValueError(f"packed grid holds {bits.size} cells, expected {GRID_SIZE * GRID_SIZE}")
    return bits.reshape(GRID_SIZE, GRID_SIZE)
