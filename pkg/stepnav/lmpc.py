"""LIP-MPC gait planner: subgoal in, first foot placement and turn rate out.

Public API:
    Subgoal, MpcConfig, MpcDiagnostics, MpcPlan
    LipMpcPlanner(cfg, params).plan(x, subgoal, half_planes)
    LipMpcPlanner(cfg, params).assemble_qp(x, subgoal, half_planes)

The turn rate is fixed to ω = φ_c/(N·T) for every predicted step, so every heading
along the horizon is known in advance and all constraints written in the local
stepping frames become linear in the foot placements. States are eliminated
(condensed form); the decision vector is z = [f_0x, f_0y, …, f_{N−1}x, f_{N−1}y]
in the heading frame of each step.

Indexing: step 0 is the step in progress. Its end state is already fixed by the
pendulum flow, so cost and state constraints apply to the end of predicted steps
1..N, the first positions and velocities the placements can move.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from loguru import logger

from .exceptions import NoGaitError
from .lip import GaitControl, LipParams, LipState, rotation, step_map
from .qp import ActiveSetSolver, QpProblem, QpSolution, OPTIMAL
from .reward import D_MAX, PHI_MAX
from .world import HalfPlane

NUMERICAL_FAILURE = "numerical-failure"


@dataclass(frozen=True)
class Subgoal:
    """Robot-centric polar target, clamped to d_c ∈ [0, 3], φ_c ∈ [−π/4, π/4] on construction."""

    d_c: float
    phi_c: float

    def __post_init__(self):
        object.__setattr__(self, "d_c", float(min(D_MAX, max(0.0, self.d_c))))
        object.__setattr__(self, "phi_c", float(min(PHI_MAX, max(-PHI_MAX, self.phi_c))))

    def as_tuple(self) -> tuple[float, float]:
        return (self.d_c, self.phi_c)


@dataclass(frozen=True)
class MpcConfig:
    N: int = 3
    T: float = 0.4
    v_x_max: float = 0.8
    v_y_max: float = 0.4
    f_min: float = -0.1
    f_max: float = 0.6
    w_min: float = 0.1
    w_max: float = 0.45
    k_omega: float = 0.3
    zeta: float = 0.4
    max_half_planes: int = 3
    max_iter: int = 200

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"horizon N must be ≥ 1, got {self.N}")
        if not self.w_min < self.w_max:
            raise ValueError(f"need w_min < w_max, got {self.w_min} ≥ {self.w_max}")

    def turn_rate(self, phi_c: float) -> float:
        return phi_c / (self.N * self.T)


@dataclass(frozen=True)
class MpcDiagnostics:
    status: str
    cost: float
    active_set: tuple[int, ...]
    wall_time: float
    iterations: int
    n_rows: int
    dropped_half_planes: int = 0


@dataclass(frozen=True)
class MpcPlan:
    gait: GaitControl
    predicted: tuple[LipState, ...]
    diagnostics: MpcDiagnostics


@dataclass
class _Prediction:
    """Affine maps z ↦ M·z + m for end-of-step positions and velocities (world-aligned axes)."""

    pos: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    vel: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    p_first: np.ndarray = None  # end of step 0, independent of z


class LipMpcPlanner:
    """One planner per episode worker; it owns a solver workspace."""

    def __init__(self, cfg: MpcConfig = MpcConfig(), params: LipParams = LipParams()):
        if abs(cfg.T - params.T) > 1e-12:
            raise ValueError(f"MPC step duration {cfg.T} differs from LIP step duration {params.T}")
        self.cfg = cfg
        self.params = params
        self.solver = ActiveSetSolver(max_iter=cfg.max_iter)

    # --- Prediction ---

    def _predict(self, x: LipState, omega: float) -> _Prediction:
        """
        Condensed prediction in axes aligned with the world, origin at the current
        stance foot. Foot k is placed at S_{k+1} = S_k + R(θ_k)·f_k.
        """
        N, T = self.cfg.N, self.params.T
        w0 = self.params.omega0
        c, s = math.cosh(w0 * T), math.sinh(w0 * T)
        n = 2 * N
        zero = np.zeros((2, n))

        q = (rotation(x.theta) @ np.asarray(x.q), zero.copy())
        v = (rotation(x.theta) @ np.asarray(x.v), zero.copy())
        foot = (np.zeros(2), zero.copy())

        pred = _Prediction()
        for k in range(N + 1):
            q_end = (c * q[0] + (s / w0) * v[0], c * q[1] + (s / w0) * v[1])
            v_end = (w0 * s * q[0] + c * v[0], w0 * s * q[1] + c * v[1])
            p_end = (foot[0] + q_end[0], foot[1] + q_end[1])
            if k == 0:
                pred.p_first = p_end[0]
            else:
                pred.pos.append(p_end)
                pred.vel.append(v_end)
            if k == N:
                break
            rot = rotation(x.theta + k * omega * T)
            place = zero.copy()
            place[:, 2 * k:2 * k + 2] = rot
            foot = (foot[0], foot[1] + place)
            q = (q_end[0], q_end[1] - place)
            v = v_end
        return pred

    # --- Assembly ---

    def _track(self, half_planes: Sequence[HalfPlane]) -> tuple[list[HalfPlane], int]:
        limit = self.cfg.max_half_planes
        if len(half_planes) <= limit:
            return list(half_planes), 0
        dropped = len(half_planes) - limit
        logger.debug("tracking {} half-planes, dropping the {} farthest", limit, dropped)
        return list(half_planes[:limit]), dropped

    def assemble_qp(
        self,
        x: LipState,
        sg: Subgoal,
        half_planes: Sequence[HalfPlane] = (),
    ) -> QpProblem:
        problem, _ = self._assemble(x, sg, half_planes)
        return problem

    def _assemble(self, x: LipState, sg: Subgoal, half_planes: Sequence[HalfPlane]):
        cfg, T = self.cfg, self.params.T
        N, n = cfg.N, 2 * cfg.N
        omega = cfg.turn_rate(sg.phi_c)
        pred = self._predict(x, omega)
        planes, dropped = self._track(half_planes)

        # Target relative to the current stance foot, world-aligned axes.
        com = rotation(x.theta) @ np.asarray(x.q)
        bearing = sg.phi_c + x.theta
        target = com + sg.d_c * np.array([math.cos(bearing), math.sin(bearing)])

        Q = np.zeros((n, n))
        cvec = np.zeros(n)
        const = 0.0
        for m_vec, M in pred.pos:
            resid = m_vec - target
            Q += 2.0 * M.T @ M
            cvec += 2.0 * M.T @ resid
            const += float(resid @ resid)
        Q = 0.5 * (Q + Q.T)

        rows: list[np.ndarray] = []
        rhs: list[float] = []

        def leq(a: np.ndarray, b: float) -> None:
            rows.append(a)
            rhs.append(b)

        # (a) velocity at the end of predicted steps, in that step's outgoing heading frame
        for k, (m_vec, M) in enumerate(pred.vel, start=1):
            back = rotation(x.theta + (k + 1) * omega * T).T
            loc_m, loc_M = back @ m_vec, back @ M
            leq(loc_M[0], cfg.v_x_max - loc_m[0])
            leq(-loc_M[0], cfg.v_x_max + loc_m[0])
            leq(loc_M[1], cfg.v_y_max - loc_m[1])
            leq(-loc_M[1], cfg.v_y_max + loc_m[1])

        # (b) reachability: forward box, lateral side alternating with the stance foot
        for k in range(N):
            side = -x.stance_index * (-1) ** k
            ex = np.zeros(n)
            ey = np.zeros(n)
            ex[2 * k] = 1.0
            ey[2 * k + 1] = side
            leq(ex, cfg.f_max)
            leq(-ex, -cfg.f_min)
            leq(ey, cfg.w_max)
            leq(-ey, -cfg.w_min)

        # (c) maneuverability: forward speed shrinks with turn rate
        for k, (m_vec, M) in enumerate(pred.vel, start=1):
            back = rotation(x.theta + (k + 1) * omega * T).T
            loc_m, loc_M = back @ m_vec, back @ M
            leq(loc_M[0], cfg.v_x_max - cfg.k_omega * abs(omega) - loc_m[0])

        # (d) discrete barrier h(p_{k+1}) ≥ ζ·h(p_k) per tracked half-plane
        foot_world = np.asarray(x.stance_foot)
        for plane in planes:
            normal = np.asarray(plane.normal)
            offset = plane.offset - float(normal @ foot_world)
            prev_m, prev_M = pred.p_first, np.zeros((2, n))
            for m_vec, M in pred.pos:
                # −(nᵀp_{k+1} − o) + ζ(nᵀp_k − o) ≤ 0
                a = -(normal @ M) + cfg.zeta * (normal @ prev_M)
                b = (normal @ m_vec - offset) - cfg.zeta * (normal @ prev_m - offset)
                leq(a, b)
                prev_m, prev_M = m_vec, M

        problem = QpProblem.build(Q, cvec, np.array(rows), np.array(rhs))
        return problem, (omega, const, dropped)

    # --- Solve ---

    def plan(self, x: LipState, sg: Subgoal, half_planes: Sequence[HalfPlane] = ()) -> MpcPlan:
        """
        Solve the condensed gait QP and return the first placement, the predicted
        post-placement states x_1..x_N and solve diagnostics.
        Raises NoGaitError when the QP is infeasible or runs out of iterations.
        """
        t0 = time.perf_counter()
        problem, (omega, const, dropped) = self._assemble(x, sg, half_planes)
        try:
            sol: QpSolution = self.solver.solve(problem)
        except np.linalg.LinAlgError as e:
            diag = MpcDiagnostics(
                status=NUMERICAL_FAILURE, cost=math.nan, active_set=(), wall_time=time.perf_counter() - t0,
                iterations=0, n_rows=problem.m, dropped_half_planes=dropped,
            )
            raise NoGaitError(f"gait QP {NUMERICAL_FAILURE} for subgoal {sg.as_tuple()}: {e}", diagnostics=diag) from e
        wall = time.perf_counter() - t0

        diag = MpcDiagnostics(
            status=sol.status,
            cost=sol.objective + const,
            active_set=sol.active_set,
            wall_time=wall,
            iterations=sol.iterations,
            n_rows=problem.m,
            dropped_half_planes=dropped,
        )
        if sol.status != OPTIMAL:
            raise NoGaitError(f"gait QP {sol.status} for subgoal {sg.as_tuple()}", diagnostics=diag)

        controls = [GaitControl(f=(float(sol.z[2 * k]), float(sol.z[2 * k + 1])), omega=omega)
                    for k in range(self.cfg.N)]
        predicted = []
        state = x
        for u in controls:
            state = step_map(state, u, self.params, check_envelope=False)
            predicted.append(state)
        return MpcPlan(gait=controls[0], predicted=tuple(predicted), diagnostics=diag)
