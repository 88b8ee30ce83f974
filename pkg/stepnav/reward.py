"""Navigation reward: five weighted sub-rewards in [0, 1] plus a terminal reward.

Pure functions without I/O or state. Every sub-reward is clamped to [0, 1], so a
running step scores in [0, 1] and a terminal step in [−80, 101].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

D_MAX = 3.0
PHI_MAX = math.pi / 4
HEADING_WINDOW = math.pi / 6
LATERAL_SPEED_LIMIT = 0.4

# h is normalised by half the local map's 6 m depth.
H_SCALE = 3.0


class Outcome(str, Enum):
    RUNNING = "running"
    GOAL = "goal"
    COLLISION = "collision"
    FALL = "fall"
    TIMEOUT = "timeout"

    @property
    def terminal(self) -> bool:
        return self is not Outcome.RUNNING


@dataclass(frozen=True)
class RewardParams:
    w: Tuple[float, float, float, float, float] = (0.2, 0.1, 0.25, 0.2, 0.25)
    a_g: float = 2.33
    b_g: float = 0.3
    a_theta: float = 1.39
    q_a: float = 0.5
    q_v: float = 0.7
    a_v: float = 15.0
    b_v: float = 0.5
    zeta: float = 0.4
    goal_radius: float = 0.3
    n_max: int = 100


@dataclass(frozen=True)
class StepContext:
    d_g: float
    d_g_prev: float
    delta_theta_g: float
    action: Tuple[float, float]
    action_prev: Optional[Tuple[float, float]]
    v: Tuple[float, float]
    h: Optional[float]
    h_prev: Optional[float]
    outcome: Outcome = Outcome.RUNNING
    n_step: int = 0

    @property
    def delta_d_g(self) -> float:
        return self.d_g_prev - self.d_g


@dataclass(frozen=True)
class RewardBreakdown:
    goal: float
    heading: float
    action: float
    velocity: float
    obstacle: float
    terminal: float
    total: float

    @property
    def components(self) -> tuple[float, float, float, float, float]:
        return (self.goal, self.heading, self.action, self.velocity, self.obstacle)


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def r_goal(ctx: StepContext, params: RewardParams = RewardParams()) -> float:
    dd = ctx.delta_d_g
    if dd < 0:
        return 0.0
    return _clamp01(params.b_g + params.a_g * dd)


def r_heading(ctx: StepContext, params: RewardParams = RewardParams()) -> float:
    err = abs(ctx.delta_theta_g)
    if err > HEADING_WINDOW:
        return 0.0
    return _clamp01(1.0 - params.a_theta * err ** 3)


def r_action(ctx: StepContext, params: RewardParams = RewardParams()) -> float:
    """
    Progress term d_c/3 − |φ_c|/(π/4) and smoothness term 1 − mean of the normalised
    per-component action changes. The first step of an episode has no previous
    action and counts as perfectly smooth.
    """
    d, phi = ctx.action
    r_p = _clamp01(d / D_MAX - abs(phi) / PHI_MAX)
    d_prev, phi_prev = ctx.action if ctx.action_prev is None else ctx.action_prev
    r_s = _clamp01(1.0 - 0.5 * (abs(d - d_prev) / D_MAX + abs(phi - phi_prev) / (2 * PHI_MAX)))
    return _clamp01(params.q_a * r_p + (1.0 - params.q_a) * r_s)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def r_velocity(ctx: StepContext, params: RewardParams = RewardParams()) -> float:
    v_x, v_y = ctx.v
    longitudinal = _sigmoid(params.a_v * (v_x - params.b_v))
    lateral = 1.0 if abs(v_y) <= LATERAL_SPEED_LIMIT else 0.0
    return _clamp01(params.q_v * longitudinal + (1.0 - params.q_v) * lateral)


def _h_bar(h: Optional[float]) -> float:
    return 1.0 if h is None else _clamp01(h / H_SCALE)


def r_obstacle(ctx: StepContext, params: RewardParams = RewardParams()) -> float:
    """
    Discrete barrier progress h̄[t] + (ζ − 1)·h̄[t−1]. No obstacle in the local window
    scores 1; a missing previous value counts as h̄ = 1.
    """
    if ctx.h is None:
        return 1.0
    raw = _h_bar(ctx.h) + (params.zeta - 1.0) * _h_bar(ctx.h_prev)
    return _clamp01(raw)


def terminal_reward(ctx: StepContext, params: RewardParams = RewardParams()) -> float:
    if ctx.outcome is Outcome.GOAL:
        return 60.0 * math.exp(-0.4 * ctx.n_step / params.n_max) + 40.0
    if ctx.outcome in (Outcome.COLLISION, Outcome.FALL):
        return -80.0
    if ctx.outcome is Outcome.TIMEOUT:
        return -70.0
    return 0.0


def total_reward(ctx: StepContext, params: RewardParams = RewardParams()) -> RewardBreakdown:
    parts = (
        r_goal(ctx, params),
        r_heading(ctx, params),
        r_action(ctx, params),
        r_velocity(ctx, params),
        r_obstacle(ctx, params),
    )
    running = float(np.dot(params.w, parts))
    terminal = terminal_reward(ctx, params)
    return RewardBreakdown(*parts, terminal=terminal, total=running + terminal)
