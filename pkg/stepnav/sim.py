"""Episode simulation: policy → subgoal → gait QP → LIP step → reward, once per walking step.

Public API:
    EpisodeConfig, Policy, LmpcDirectPolicy, SacPolicy, PolicySpec
    StepRecord, EpisodeTrace
    run_episode(env, policy, cfg, seed)
    evaluate(policy, suite, trials, seed)  → (MethodMetrics, traces)
    metrics_from_traces, time_ratio
    replay_rewards(trace, env)             # recompute rewards from logged states
    save_trace, load_trace, save_metrics

Outcomes are exclusive and checked in this order after every step: fall (no
feasible gait or pendulum blow-up), collision (anywhere along the CoM path of the
step), goal, timeout. The terminal reward is folded into the last record's total,
so an episode's accumulated reward is the sum of its record totals.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Optional, Protocol, Sequence, Union

import numpy as np
from loguru import logger

from ._records import read_artifact, write_artifact
from .exceptions import NoGaitError, ParseError, PendulumBlowUpError
from .features import RawState, build_raw_state, goal_geometry
from .lip import GaitControl, LipParams, LipState, com_trajectory, step_map
from .lmpc import LipMpcPlanner, MpcConfig, MpcDiagnostics, Subgoal
from .reward import Outcome, RewardBreakdown, RewardParams, StepContext, total_reward
from .sac import SacAgent, SacConfig, load_checkpoint
from .world import (
    ROBOT_RADIUS,
    Environment,
    collides_many,
    half_plane_value,
    nearest_half_planes,
    window_obstacles,
)

if TYPE_CHECKING:
    from .expert import ExpertConfig

POLICY_NAMES = ("lmpc-direct", "rrt-lmpc", "sac")


@dataclass(frozen=True)
class EpisodeConfig:
    n_max: int = 100
    goal_radius: float = 0.3
    subgoal_period: int = 1
    collision_samples: int = 10
    robot_radius: float = ROBOT_RADIUS

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be ≥ 1, got {self.n_max}")
        if self.subgoal_period < 1:
            raise ValueError(f"subgoal_period must be ≥ 1, got {self.subgoal_period}")


# --- Policies ---

class Policy(Protocol):
    name: str

    def reset(self, env: Environment, x: LipState, rng: np.random.Generator) -> None: ...

    def act(self, env: Environment, state: RawState, x: LipState) -> Subgoal: ...


class LmpcDirectPolicy:
    """Subgoal aimed straight at the goal, clamped to the action bounds."""

    name = "lmpc-direct"

    def reset(self, env: Environment, x: LipState, rng: np.random.Generator) -> None:
        pass

    def act(self, env: Environment, state: RawState, x: LipState) -> Subgoal:
        return Subgoal(state.d_g, state.delta_theta_g)


class SacPolicy:
    name = "sac"

    def __init__(self, agent: SacAgent, deterministic: bool = True):
        self.agent = agent
        self.deterministic = deterministic
        self._rng: Optional[np.random.Generator] = None

    def reset(self, env: Environment, x: LipState, rng: np.random.Generator) -> None:
        self._rng = rng

    def act(self, env: Environment, state: RawState, x: LipState) -> Subgoal:
        d_c, phi_c = self.agent.act(state, self.deterministic, self._rng)
        return Subgoal(float(d_c), float(phi_c))


@dataclass(frozen=True)
class PolicySpec:
    """Picklable recipe for a policy, so worker processes can build their own."""

    name: str
    checkpoint: Optional[str] = None
    sac: SacConfig = field(default_factory=SacConfig)
    expert: Optional["ExpertConfig"] = None
    deterministic: bool = True

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.name!r}; expected one of {POLICY_NAMES}")
        if self.name == "sac" and not self.checkpoint:
            raise ValueError("the sac policy needs a checkpoint")

    def build(self) -> Policy:
        if self.name == "lmpc-direct":
            return LmpcDirectPolicy()
        if self.name == "rrt-lmpc":
            from .expert import ExpertConfig, RrtLmpcPolicy
            return RrtLmpcPolicy(self.expert or ExpertConfig())
        agent = SacAgent(self.sac)
        load_checkpoint(self.checkpoint, agent)
        return SacPolicy(agent, self.deterministic)


# --- Records ---

@dataclass(frozen=True)
class StepRecord:
    step: int
    state: LipState  # after the step; unchanged on a fall
    subgoal: Subgoal
    gait: Optional[GaitControl]
    reward: RewardBreakdown
    d_g: float
    h: Optional[float]
    outcome: Outcome
    mpc: Optional[MpcDiagnostics] = None
    raw: Optional[RawState] = None  # observation the subgoal was chosen from
    next_raw: Optional[RawState] = None

    @property
    def wall_time(self) -> float:
        return self.mpc.wall_time if self.mpc is not None else math.nan


@dataclass
class EpisodeTrace:
    env_id: int
    policy: str
    seed: int
    initial: LipState
    step_duration: float
    records: list[StepRecord] = field(default_factory=list)
    trial: int = 0

    @property
    def outcome(self) -> Outcome:
        return self.records[-1].outcome if self.records else Outcome.RUNNING

    @property
    def n_steps(self) -> int:
        return len(self.records)

    @property
    def total_reward(self) -> float:
        return float(sum(r.reward.total for r in self.records))

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.GOAL

    @property
    def goal_time(self) -> float:
        return self.n_steps * self.step_duration if self.success else math.nan

    @property
    def wall_times(self) -> list[float]:
        return [r.wall_time for r in self.records]


# --- Episode loop ---

def _pose(x: LipState):
    p = x.com_position
    return (float(p[0]), float(p[1])), x.theta


def obstacle_margin(env: Environment, x: LipState, robot_radius: float = ROBOT_RADIUS) -> Optional[float]:
    """h at the CoM against the nearest obstacle in the local window; None when the window is empty."""
    pose = _pose(x)
    return half_plane_value(env, pose[0], robot_radius, obstacles=window_obstacles(env, pose))


def initial_state(env: Environment, params: LipParams) -> LipState:
    """Standing at the start, facing the goal."""
    heading = math.atan2(env.goal[1] - env.start[1], env.goal[0] - env.start[0])
    return LipState.standing(env.start, heading, params)


def run_episode(
    env: Environment,
    policy: Policy,
    cfg: EpisodeConfig = EpisodeConfig(),
    seed: int = 0,
    *,
    params: LipParams = LipParams(),
    mpc_cfg: MpcConfig = MpcConfig(),
    reward_params: RewardParams = RewardParams(),
    planner: Optional[LipMpcPlanner] = None,
    on_step: Optional[Callable[[StepRecord], None]] = None,
    trial: int = 0,
) -> EpisodeTrace:
    """
    Roll out one episode. Deterministic given (env, policy state, cfg, seed).
    Infeasible gaits and pendulum blow-ups end the episode as a fall; they never raise.
    """
    rng = np.random.default_rng(seed)
    planner = planner or LipMpcPlanner(mpc_cfg, params)
    x = initial_state(env, params)
    trace = EpisodeTrace(env_id=env.id, policy=policy.name, seed=seed, initial=x, step_duration=params.T, trial=trial)
    policy.reset(env, x, rng)

    raw = build_raw_state(env, x)
    h_prev = obstacle_margin(env, x, cfg.robot_radius)
    prev_action = None
    subgoal: Optional[Subgoal] = None

    for n in range(1, cfg.n_max + 1):
        if subgoal is None or (n - 1) % cfg.subgoal_period == 0:
            subgoal = policy.act(env, raw, x)

        pose = _pose(x)
        in_view = window_obstacles(env, pose)
        planes = nearest_half_planes(env, pose[0], len(in_view), cfg.robot_radius, obstacles=in_view)

        outcome = Outcome.RUNNING
        gait, diag, nxt = None, None, x
        try:
            plan = planner.plan(x, subgoal, planes)
            gait, diag = plan.gait, plan.diagnostics
            nxt = step_map(x, gait, params)
        except NoGaitError as e:
            logger.debug("env {} step {}: {}", env.id, n, e)
            outcome, diag = Outcome.FALL, e.diagnostics
        except PendulumBlowUpError as e:
            logger.debug("env {} step {}: {}", env.id, n, e)
            outcome = Outcome.FALL

        next_raw = build_raw_state(env, nxt)
        if outcome is Outcome.RUNNING:
            if collides_many(env, com_trajectory(x, params, cfg.collision_samples), cfg.robot_radius):
                outcome = Outcome.COLLISION
            elif next_raw.d_g < cfg.goal_radius:
                outcome = Outcome.GOAL
            elif n >= cfg.n_max:
                outcome = Outcome.TIMEOUT

        h = obstacle_margin(env, nxt, cfg.robot_radius)
        ctx = StepContext(
            d_g=next_raw.d_g,
            d_g_prev=raw.d_g,
            delta_theta_g=next_raw.delta_theta_g,
            action=subgoal.as_tuple(),
            action_prev=prev_action,
            v=nxt.v,
            h=h,
            h_prev=h_prev,
            outcome=outcome,
            n_step=n,
        )
        record = StepRecord(
            step=n,
            state=nxt,
            subgoal=subgoal,
            gait=gait,
            reward=total_reward(ctx, reward_params),
            d_g=next_raw.d_g,
            h=h,
            outcome=outcome,
            mpc=diag,
            raw=raw,
            next_raw=next_raw,
        )
        trace.records.append(record)
        if on_step is not None:
            on_step(record)
        if outcome.terminal:
            break
        x, raw, h_prev, prev_action = nxt, next_raw, h, subgoal.as_tuple()

    logger.debug("env {} {}: {} after {} steps, return {:.3f}",
                 env.id, policy.name, trace.outcome.value, trace.n_steps, trace.total_reward)
    return trace


def replay_rewards(
    trace: EpisodeTrace,
    env: Environment,
    reward_params: RewardParams = RewardParams(),
    robot_radius: float = ROBOT_RADIUS,
) -> list[RewardBreakdown]:
    """Recompute every step's reward from the logged states, subgoals and outcomes."""
    out = []
    prev, prev_action = trace.initial, None
    for rec in trace.records:
        d_g_prev, _ = goal_geometry(prev.com_position, prev.theta, env.goal)
        d_g, bearing = goal_geometry(rec.state.com_position, rec.state.theta, env.goal)
        ctx = StepContext(
            d_g=d_g,
            d_g_prev=d_g_prev,
            delta_theta_g=bearing,
            action=rec.subgoal.as_tuple(),
            action_prev=prev_action,
            v=rec.state.v,
            h=obstacle_margin(env, rec.state, robot_radius),
            h_prev=obstacle_margin(env, prev, robot_radius),
            outcome=rec.outcome,
            n_step=rec.step,
        )
        out.append(total_reward(ctx, reward_params))
        prev, prev_action = rec.state, rec.subgoal.as_tuple()
    return out


# --- Evaluation ---

@dataclass(frozen=True)
class MethodMetrics:
    method: str
    success_rates: tuple[float, ...]  # per trial, percent
    mean_rewards: tuple[float, ...]  # per trial
    goal_times: dict  # (trial, env_id) → goal time of successful episodes

    @property
    def trials(self) -> int:
        return len(self.success_rates)

    @property
    def success_mean(self) -> float:
        return float(np.mean(self.success_rates))

    @property
    def success_std(self) -> float:
        return float(np.std(self.success_rates))

    @property
    def reward_mean(self) -> float:
        return float(np.mean(self.mean_rewards))

    @property
    def reward_std(self) -> float:
        return float(np.std(self.mean_rewards))

    @property
    def mean_goal_time(self) -> float:
        return float(np.mean(list(self.goal_times.values()))) if self.goal_times else math.nan


def metrics_from_traces(method: str, traces: Sequence[EpisodeTrace]) -> MethodMetrics:
    trials = sorted({t.trial for t in traces})
    rates, rewards = [], []
    for trial in trials:
        group = [t for t in traces if t.trial == trial]
        rates.append(100.0 * sum(t.success for t in group) / len(group))
        rewards.append(float(np.mean([t.total_reward for t in group])))
    times = {(t.trial, t.env_id): t.goal_time for t in traces if t.success}
    return MethodMetrics(method=method, success_rates=tuple(rates), mean_rewards=tuple(rewards), goal_times=times)


def time_ratio(method: MethodMetrics, reference: MethodMetrics) -> float:
    """
    Mean goal time of `method` over the reference's, both taken over the
    (trial, environment) pairs where both succeeded. NaN when there are none.
    """
    shared = sorted(set(method.goal_times) & set(reference.goal_times))
    if not shared:
        return math.nan
    mine = float(np.mean([method.goal_times[k] for k in shared]))
    theirs = float(np.mean([reference.goal_times[k] for k in shared]))
    return mine / theirs


def episode_seed(seed: int, trial: int, env_id: int) -> int:
    return seed * 1_000_000 + trial * 10_000 + env_id


@dataclass(frozen=True)
class _Settings:
    episode: EpisodeConfig
    params: LipParams
    mpc: MpcConfig
    reward: RewardParams


def _run_trial(policy: Union[PolicySpec, Policy], jobs, settings: _Settings) -> list[EpisodeTrace]:
    if isinstance(policy, PolicySpec):
        policy = policy.build()
    planner = LipMpcPlanner(settings.mpc, settings.params)
    return [
        run_episode(env, policy, settings.episode, seed, params=settings.params, mpc_cfg=settings.mpc,
                    reward_params=settings.reward, planner=planner, trial=trial)
        for env, seed, trial in jobs
    ]


def evaluate(
    policy: Union[PolicySpec, Policy],
    suite: Sequence[Environment],
    trials: int = 4,
    seed: int = 0,
    *,
    episode_cfg: EpisodeConfig = EpisodeConfig(),
    params: LipParams = LipParams(),
    mpc_cfg: MpcConfig = MpcConfig(),
    reward_params: RewardParams = RewardParams(),
    workers: int = 1,
) -> tuple[MethodMetrics, list[EpisodeTrace]]:
    """
    Run every environment of the suite once per trial. Episode seeds depend only on
    (seed, trial, env id), so results do not depend on the worker count.
    A live Policy object can only be evaluated with workers=1.
    """
    if not suite:
        raise ValueError("evaluation suite is empty")
    if trials < 1:
        raise ValueError(f"trials must be ≥ 1, got {trials}")
    if workers > 1 and not isinstance(policy, PolicySpec):
        raise ValueError("parallel evaluation needs a PolicySpec")

    settings = _Settings(episode_cfg, params, mpc_cfg, reward_params)
    chunks = [[(env, episode_seed(seed, trial, env.id), trial) for env in suite] for trial in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, [policy] * trials, chunks, [settings] * trials))
    else:
        results = [_run_trial(policy, chunk, settings) for chunk in chunks]
    traces = [t for chunk in results for t in chunk]

    name = policy.name
    metrics = metrics_from_traces(name, traces)
    logger.info("{}: success {:.1f}% ± {:.1f}, reward {:.2f} ± {:.2f} over {} trials",
                name, metrics.success_mean, metrics.success_std, metrics.reward_mean, metrics.reward_std, trials)
    return metrics, traces


# --- Serialization ---

_TRACE_FIELDS = [
    "step", "q", "v", "theta", "stance_foot", "stance_index", "d_c", "phi_c", "f", "omega",
    "r_goal", "r_heading", "r_action", "r_velocity", "r_obstacle", "r_terminal", "reward",
    "d_g", "h", "outcome", "mpc_status", "mpc_cost", "mpc_iterations", "mpc_active",
]
_TRACE_TYPES = [
    "integer", "vector", "vector", "number", "vector", "integer", "number", "number", "vector", "number",
    "number", "number", "number", "number", "number", "number", "number",
    "number", "number", "string", "string", "number", "integer", "vector",
]


def _vec(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _opt(value: Optional[float]) -> str:
    return "" if value is None or (isinstance(value, float) and math.isnan(value)) else repr(float(value))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split())


def _state_meta(prefix: str, x: LipState) -> dict[str, str]:
    return {
        f"{prefix}q": _vec(x.q),
        f"{prefix}v": _vec(x.v),
        f"{prefix}theta": repr(x.theta),
        f"{prefix}stance_foot": _vec(x.stance_foot),
        f"{prefix}stance_index": str(x.stance_index),
    }


def _trace_row(rec: StepRecord) -> list[str]:
    r, x, diag = rec.reward, rec.state, rec.mpc
    return [
        str(rec.step), _vec(x.q), _vec(x.v), repr(x.theta), _vec(x.stance_foot), str(x.stance_index),
        repr(rec.subgoal.d_c), repr(rec.subgoal.phi_c),
        _vec(rec.gait.f) if rec.gait else "", repr(rec.gait.omega) if rec.gait else "",
        repr(r.goal), repr(r.heading), repr(r.action), repr(r.velocity), repr(r.obstacle),
        repr(r.terminal), repr(r.total),
        repr(rec.d_g), _opt(rec.h), rec.outcome.value,
        diag.status if diag else "", _opt(diag.cost) if diag else "", str(diag.iterations) if diag else "",
        " ".join(str(i) for i in diag.active_set) if diag else "",
    ]


def save_trace(trace: EpisodeTrace, path: Union[str, Path], metadata: Optional[dict] = None) -> Path:
    meta = {
        "env_id": str(trace.env_id),
        "policy": trace.policy,
        "episode_seed": str(trace.seed),
        "trial": str(trace.trial),
        "step_duration": repr(trace.step_duration),
        **_state_meta("initial_", trace.initial),
        "outcome": trace.outcome.value,
        "n_steps": str(trace.n_steps),
        "total_reward": repr(trace.total_reward),
        **(metadata or {}),
    }
    return write_artifact(path, "trace", meta, _TRACE_FIELDS, _TRACE_TYPES, (_trace_row(r) for r in trace.records))


def _state_from(q: str, v: str, theta: str, foot: str, stance: str) -> LipState:
    return LipState(q=_floats(q), v=_floats(v), theta=float(theta), stance_foot=_floats(foot), stance_index=int(stance))


def load_trace(path: Union[str, Path]) -> EpisodeTrace:
    """Reload a trace. Wall times and observations are not stored and come back empty."""
    art = read_artifact(path, expected_kind="trace")
    m = art.metadata
    try:
        trace = EpisodeTrace(
            env_id=int(m["env_id"]),
            policy=m["policy"],
            seed=int(m["episode_seed"]),
            initial=_state_from(m["initial_q"], m["initial_v"], m["initial_theta"],
                                m["initial_stance_foot"], m["initial_stance_index"]),
            step_duration=float(m["step_duration"]),
            trial=int(m.get("trial", "0")),
        )
        for row in art.rows:
            rec = dict(zip(_TRACE_FIELDS, row))
            gait = GaitControl(f=_floats(rec["f"]), omega=float(rec["omega"])) if rec["f"] else None
            diag = None
            if rec["mpc_status"]:
                diag = MpcDiagnostics(
                    status=rec["mpc_status"],
                    cost=float(rec["mpc_cost"]) if rec["mpc_cost"] else math.nan,
                    active_set=tuple(int(i) for i in rec["mpc_active"].split()),
                    wall_time=math.nan,
                    iterations=int(rec["mpc_iterations"]),
                    n_rows=0,
                )
            reward = RewardBreakdown(*(float(rec[k]) for k in (
                "r_goal", "r_heading", "r_action", "r_velocity", "r_obstacle", "r_terminal", "reward")))
            trace.records.append(StepRecord(
                step=int(rec["step"]),
                state=_state_from(rec["q"], rec["v"], rec["theta"], rec["stance_foot"], rec["stance_index"]),
                subgoal=Subgoal(float(rec["d_c"]), float(rec["phi_c"])),
                gait=gait,
                reward=reward,
                d_g=float(rec["d_g"]),
                h=float(rec["h"]) if rec["h"] else None,
                outcome=Outcome(rec["outcome"]),
                mpc=diag,
            ))
    except (KeyError, ValueError) as e:
        raise ParseError(f"{Path(path).name}: bad trace record: {e}") from e
    return trace


_METRICS_FIELDS = ["method", "success_rate", "success_std", "reward_mean", "reward_std", "time_ratio", "trials"]
_METRICS_TYPES = ["string", "number", "number", "number", "number", "number", "integer"]


def save_metrics(
    rows: Sequence[tuple[MethodMetrics, float]],
    path: Union[str, Path],
    metadata: Optional[dict] = None,
) -> Path:
    """One row per method: success rate ± std, accumulated reward ± std, time ratio."""
    data = [
        [m.method, repr(m.success_mean), repr(m.success_std), repr(m.reward_mean), repr(m.reward_std),
         _opt(ratio), str(m.trials)]
        for m, ratio in rows
    ]
    return write_artifact(path, "metrics", dict(metadata or {}), _METRICS_FIELDS, _METRICS_TYPES, data)
