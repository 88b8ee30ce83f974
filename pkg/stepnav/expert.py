"""RRT-LMPC expert: global RRT path, lookahead subgoals for the gait planner, demo collection.

Public API:
    ExpertConfig, RrtTree
    build_tree(env, start, goal, seed, cfg)   → (tree, goal index or None)
    rrt_plan(env, start, goal, seed, cfg)     → shortcut waypoint list
    extract_subgoal(path, pose, env, cfg)     → Subgoal
    RrtLmpcPolicy                             # episode-sim policy backed by the above
    DemoRecord, DemoDataset, collect_demonstrations
    replay_demo_rewards(dataset, envs)
    save_demos, load_demos
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from loguru import logger
from shapely.geometry import LineString, Point

from ._records import read_artifact, write_artifact
from .exceptions import ParseError, PlanningError
from .features import RawState, goal_geometry, pack_grid, unpack_grid
from .lip import LipParams, LipState
from .lmpc import MpcConfig, Subgoal
from .reward import Outcome, RewardParams, StepContext, total_reward
from .sac import Transition
from .world import ROBOT_RADIUS, Environment, collides, half_plane_value, segment_free, window_obstacles

Vec2 = tuple[float, float]

_DENSIFY = 0.1


@dataclass(frozen=True)
class ExpertConfig:
    step_size: float = 0.5
    goal_bias: float = 0.1
    max_samples: int = 20_000
    edge_spacing: float = 0.05
    lookahead: float = 3.0
    replan_deviation: float = 1.0
    robot_radius: float = ROBOT_RADIUS
    margin: float = 0.1  # extra tree inflation so tracking error stays clear

    def __post_init__(self):
        if self.step_size <= 0 or self.edge_spacing <= 0:
            raise ValueError("step_size and edge_spacing must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError(f"goal_bias must be in [0, 1], got {self.goal_bias}")
        if self.max_samples < 1:
            raise ValueError(f"max_samples must be ≥ 1, got {self.max_samples}")


# --- RRT ---

@dataclass
class RrtTree:
    nodes: list[Vec2]
    parent: list[Optional[int]]
    step_size: float
    goal_bias: float

    def path_to(self, index: int) -> list[Vec2]:
        out = []
        i: Optional[int] = index
        while i is not None:
            out.append(self.nodes[i])
            i = self.parent[i]
        return out[::-1]


def _tree_radius(env: Environment, start, goal, cfg: ExpertConfig) -> float:
    inflated = cfg.robot_radius + cfg.margin
    if collides(env, start, inflated) or collides(env, goal, inflated):
        return cfg.robot_radius
    return inflated


def build_tree(
    env: Environment,
    start,
    goal,
    seed: int,
    cfg: ExpertConfig = ExpertConfig(),
    radius: Optional[float] = None,
) -> tuple[RrtTree, Optional[int]]:
    """
    Grow a goal-biased RRT from start. Returns the tree and the index of the goal
    node, or None when the sample budget runs out. Every edge is checked at
    ≤ cfg.edge_spacing intervals against obstacles inflated by `radius`.
    """
    radius = cfg.robot_radius if radius is None else radius
    rng = np.random.default_rng(seed)
    lo = np.array(env.bounds[:2], dtype=float)
    hi = np.array(env.bounds[2:], dtype=float)
    goal_arr = np.asarray(goal, dtype=float)

    tree = RrtTree(nodes=[(float(start[0]), float(start[1]))], parent=[None],
                   step_size=cfg.step_size, goal_bias=cfg.goal_bias)
    points = np.empty((cfg.max_samples + 2, 2))
    points[0] = tree.nodes[0]
    count = 1

    for n in range(cfg.max_samples):
        sample = goal_arr if rng.random() < cfg.goal_bias else rng.uniform(lo, hi)
        dists = np.linalg.norm(points[:count] - sample, axis=1)
        near = int(np.argmin(dists))
        if dists[near] < 1e-9:
            continue
        if dists[near] <= cfg.step_size:
            new = sample
        else:
            new = points[near] + (sample - points[near]) * (cfg.step_size / dists[near])
        if not segment_free(env, points[near], new, radius, cfg.edge_spacing):
            continue
        points[count] = new
        tree.nodes.append((float(new[0]), float(new[1])))
        tree.parent.append(near)
        count += 1

        if np.linalg.norm(goal_arr - new) <= cfg.step_size and segment_free(env, new, goal_arr, radius, cfg.edge_spacing):
            tree.nodes.append((float(goal_arr[0]), float(goal_arr[1])))
            tree.parent.append(count - 1)
            logger.debug("rrt reached the goal after {} samples ({} nodes)", n + 1, len(tree.nodes))
            return tree, len(tree.nodes) - 1

    logger.debug("rrt exhausted {} samples ({} nodes)", cfg.max_samples, len(tree.nodes))
    return tree, None


def shortcut(env: Environment, path: Sequence[Vec2], radius: float, spacing: float) -> list[Vec2]:
    """Greedy pruning: from each kept waypoint jump to the farthest one reachable in a straight line."""
    out = [path[0]]
    i, last = 0, len(path) - 1
    while i < last:
        j = last
        while j > i + 1 and not segment_free(env, path[i], path[j], radius, spacing):
            j -= 1
        out.append(path[j])
        i = j
    return out


def rrt_plan(
    env: Environment,
    start,
    goal,
    seed: int,
    cfg: ExpertConfig = ExpertConfig(),
) -> list[Vec2]:
    """
    Collision-free shortcut polyline start → goal, deterministic in seed.
    Raises PlanningError when start or goal collides or no path is found.
    """
    for name, p in (("start", start), ("goal", goal)):
        if collides(env, p, cfg.robot_radius):
            raise PlanningError(f"env {env.id}: {name} {tuple(p)} is in collision")
    radius = _tree_radius(env, start, goal, cfg)
    tree, reached = build_tree(env, start, goal, seed, cfg, radius)
    if reached is None:
        raise PlanningError(f"env {env.id}: no path found within {cfg.max_samples} samples")
    return shortcut(env, tree.path_to(reached), radius, cfg.edge_spacing)


# --- Subgoal extraction ---

def _densify(path: Sequence[Vec2], spacing: float = _DENSIFY) -> np.ndarray:
    pts = [np.asarray(path[0], dtype=float)]
    for a, b in zip(path[:-1], path[1:]):
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / spacing)))
        for k in range(1, n + 1):
            pts.append(a + (b - a) * (k / n))
    return np.array(pts)


def extract_subgoal(
    path: Sequence[Vec2],
    pose: tuple[Vec2, float],
    env: Environment,
    cfg: ExpertConfig = ExpertConfig(),
) -> Subgoal:
    """
    Farthest-along path point within cfg.lookahead of the robot with a clear
    straight line to it, as a clamped robot-frame subgoal. Falls back to the
    nearest path point when nothing in range is visible.
    """
    if not path:
        raise PlanningError("cannot extract a subgoal from an empty path")
    position, theta = pose
    p = np.asarray(position, dtype=float)
    pts = _densify(path)
    dists = np.linalg.norm(pts - p, axis=1)
    in_range = np.flatnonzero(dists <= cfg.lookahead)

    target = None
    for i in in_range[::-1]:
        if segment_free(env, p, pts[i], cfg.robot_radius, cfg.edge_spacing):
            target = pts[i]
            break
    if target is None:
        target = pts[int(np.argmin(dists))]
        logger.warning("env {}: no visible path point within {} m of {}; using the nearest one",
                       env.id, cfg.lookahead, tuple(np.round(p, 3)))
    d, bearing = goal_geometry(p, theta, target)
    return Subgoal(d, bearing)


# --- Policy ---

class RrtLmpcPolicy:
    """
    Follows an RRT path by handing the gait planner lookahead subgoals. Replans
    when the robot strays more than cfg.replan_deviation from the path.

    strict=True re-raises PlanningError from the initial plan; otherwise the
    policy falls back to the straight start → goal line.
    """

    name = "rrt-lmpc"

    def __init__(self, cfg: ExpertConfig = ExpertConfig(), strict: bool = False):
        self.cfg = cfg
        self.strict = strict
        self.path: list[Vec2] = []
        self.replans = 0
        self._line: Optional[LineString] = None
        self._rng: Optional[np.random.Generator] = None

    def _plan(self, env: Environment, start) -> None:
        seed = int(self._rng.integers(2**31))
        self.path = rrt_plan(env, start, env.goal, seed, self.cfg)
        self._line = LineString(self.path)

    def reset(self, env: Environment, x: LipState, rng: np.random.Generator) -> None:
        self._rng = rng
        self.replans = 0
        start = tuple(float(v) for v in x.com_position)
        try:
            self._plan(env, start)
        except PlanningError:
            if self.strict:
                raise
            logger.warning("env {}: no RRT path; following the straight line to the goal", env.id)
            self.path = [start, tuple(env.goal)]
            self._line = LineString(self.path)

    def act(self, env: Environment, state: RawState, x: LipState) -> Subgoal:
        if self._line.distance(Point(state.position)) > self.cfg.replan_deviation:
            try:
                self._plan(env, state.position)
                self.replans += 1
                logger.debug("env {}: replanned at {}", env.id, state.position)
            except PlanningError as e:
                logger.warning("env {}: replan failed, keeping the old path: {}", env.id, e)
        return extract_subgoal(self.path, (state.position, state.theta), env, self.cfg)


# --- Demonstrations ---

@dataclass(frozen=True)
class DemoRecord:
    episode: int
    env_id: int
    step: int
    state: RawState
    action: Vec2
    reward: float
    next_state: RawState
    outcome: Outcome  # outcome of this step; RUNNING unless it ended the episode
    episode_outcome: Outcome
    episode_steps: int

    @property
    def done(self) -> bool:
        return self.outcome.terminal


@dataclass
class DemoDataset:
    records: list[DemoRecord] = field(default_factory=list)
    seed: int = 0
    source: str = "rrt-lmpc"

    def __len__(self) -> int:
        return len(self.records)

    @property
    def env_ids(self) -> list[int]:
        return sorted({r.env_id for r in self.records})

    def transitions(self, keep_grids: bool = False) -> list[Transition]:
        return [
            Transition.from_states(r.state, r.action, r.reward, r.next_state, r.done,
                                   demo=True, keep_grids=keep_grids)
            for r in self.records
        ]


def _state_margin(env: Environment, s: RawState, robot_radius: float) -> Optional[float]:
    pose = (s.position, s.theta)
    return half_plane_value(env, s.position, robot_radius, obstacles=window_obstacles(env, pose))


def replay_demo_rewards(
    dataset: DemoDataset,
    envs: Mapping[int, Environment],
    reward_params: RewardParams = RewardParams(),
    robot_radius: float = ROBOT_RADIUS,
) -> list[float]:
    """Recompute every stored reward from the logged raw states."""
    out = []
    prev_action = None
    for r in dataset.records:
        if r.step == 1:
            prev_action = None
        env = envs[r.env_id]
        ctx = StepContext(
            d_g=r.next_state.d_g,
            d_g_prev=r.state.d_g,
            delta_theta_g=r.next_state.delta_theta_g,
            action=tuple(r.action),
            action_prev=prev_action,
            v=r.next_state.velocity,
            h=_state_margin(env, r.next_state, robot_radius),
            h_prev=_state_margin(env, r.state, robot_radius),
            outcome=r.outcome,
            n_step=r.step,
        )
        out.append(total_reward(ctx, reward_params).total)
        prev_action = tuple(r.action)
    return out


@dataclass(frozen=True)
class _Collection:
    cfg: ExpertConfig
    episode_cfg: object
    params: LipParams
    mpc_cfg: MpcConfig
    reward_params: RewardParams


def _demo_episode(job):
    """Run one expert episode; returns (env_id, trace), with trace None when the env is unplannable."""
    from .sim import run_episode

    env, seed, settings = job
    policy = RrtLmpcPolicy(settings.cfg, strict=True)
    try:
        trace = run_episode(env, policy, settings.episode_cfg, seed, params=settings.params,
                            mpc_cfg=settings.mpc_cfg, reward_params=settings.reward_params)
    except PlanningError as e:
        logger.warning("skipping env {}: {}", env.id, e)
        return env.id, None
    return env.id, trace


def collect_demonstrations(
    envs: Sequence[Environment],
    n_target: int,
    seed: int = 0,
    cfg: ExpertConfig = ExpertConfig(),
    *,
    episode_cfg=None,
    params: LipParams = LipParams(),
    mpc_cfg: MpcConfig = MpcConfig(),
    reward_params: RewardParams = RewardParams(),
    include_failures: bool = False,
    workers: int = 1,
) -> DemoDataset:
    """
    Cycle RRT-LMPC episodes over envs until n_target transitions are gathered,
    then truncate to exactly n_target. Only goal-reaching episodes are kept unless
    include_failures is set. Unplannable environments are skipped.
    Raises PlanningError when a full pass over the environments yields nothing.
    """
    from .sim import EpisodeConfig, episode_seed

    if not envs:
        raise ValueError("no environments to collect demonstrations from")
    if n_target < 1:
        raise ValueError(f"n_target must be ≥ 1, got {n_target}")
    settings = _Collection(cfg, episode_cfg or EpisodeConfig(), params, mpc_cfg, reward_params)

    dataset = DemoDataset(seed=seed)
    episode = 0
    round_ = 0
    while len(dataset) < n_target:
        jobs = [(env, episode_seed(seed, round_, env.id), settings) for env in envs]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_demo_episode, jobs))
        else:
            results = [_demo_episode(job) for job in jobs]

        kept_before = len(dataset)
        for env_id, trace in results:
            if trace is None or len(dataset) >= n_target:
                continue
            if not (trace.success or include_failures):
                logger.debug("env {}: expert episode ended in {}; discarded", env_id, trace.outcome.value)
                continue
            for rec in trace.records:
                dataset.records.append(DemoRecord(
                    episode=episode,
                    env_id=env_id,
                    step=rec.step,
                    state=rec.raw,
                    action=rec.subgoal.as_tuple(),
                    reward=rec.reward.total,
                    next_state=rec.next_raw,
                    outcome=rec.outcome,
                    episode_outcome=trace.outcome,
                    episode_steps=trace.n_steps,
                ))
            episode += 1
        if len(dataset) == kept_before:
            raise PlanningError(f"no usable expert episodes in pass {round_} over {len(envs)} environments")
        logger.info("demo collection pass {}: {} transitions from {} episodes", round_, len(dataset), episode)
        round_ += 1

    del dataset.records[n_target:]
    return dataset


# --- Serialization ---

_STATE_FIELDS = ["grid", "position", "velocity", "theta", "stance_index", "d_g", "delta_theta_g", "d_o"]
_STATE_TYPES = ["string", "vector", "vector", "number", "integer", "number", "number", "number"]

_DEMO_FIELDS = (
    ["episode", "env_id", "step", "episode_steps", "episode_outcome", "outcome", "goal"]
    + _STATE_FIELDS
    + ["d_c", "phi_c", "reward", "done"]
    + [f"next_{f}" for f in _STATE_FIELDS]
)
_DEMO_TYPES = (
    ["integer", "integer", "integer", "integer", "string", "string", "vector"]
    + _STATE_TYPES
    + ["number", "number", "number", "boolean"]
    + _STATE_TYPES
)


def _vec(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _state_cells(s: RawState) -> list[str]:
    return [
        pack_grid(s.grid), _vec(s.position), _vec(s.velocity), repr(s.theta), str(s.stance_index),
        repr(s.d_g), repr(s.delta_theta_g), "" if math.isinf(s.d_o) else repr(s.d_o),
    ]


def _state_from(cells: Mapping[str, str], prefix: str, goal: Vec2) -> RawState:
    def floats(text):
        return tuple(float(t) for t in text.split())

    d_o = cells[f"{prefix}d_o"]
    return RawState(
        grid=unpack_grid(cells[f"{prefix}grid"]).astype(np.uint8),
        position=floats(cells[f"{prefix}position"]),
        velocity=floats(cells[f"{prefix}velocity"]),
        theta=float(cells[f"{prefix}theta"]),
        stance_index=int(cells[f"{prefix}stance_index"]),
        d_g=float(cells[f"{prefix}d_g"]),
        delta_theta_g=float(cells[f"{prefix}delta_theta_g"]),
        d_o=float(d_o) if d_o else math.inf,
        goal=goal,
    )


def save_demos(dataset: DemoDataset, path: Union[str, Path], metadata: Optional[dict] = None) -> Path:
    meta = {
        "source": dataset.source,
        "demo_seed": str(dataset.seed),
        "transitions": str(len(dataset)),
        "env_ids": " ".join(str(i) for i in dataset.env_ids),
        **(metadata or {}),
    }
    rows = (
        [str(r.episode), str(r.env_id), str(r.step), str(r.episode_steps), r.episode_outcome.value,
         r.outcome.value, _vec(r.state.goal)]
        + _state_cells(r.state)
        + [repr(float(r.action[0])), repr(float(r.action[1])), repr(r.reward), "true" if r.done else "false"]
        + _state_cells(r.next_state)
        for r in dataset.records
    )
    return write_artifact(path, "demos", meta, _DEMO_FIELDS, _DEMO_TYPES, rows)


def load_demos(path: Union[str, Path]) -> DemoDataset:
    art = read_artifact(path, expected_kind="demos")
    try:
        dataset = DemoDataset(seed=int(art.metadata.get("demo_seed", "0")),
                              source=art.metadata.get("source", "rrt-lmpc"))
        for row in art.rows:
            cells = dict(zip(_DEMO_FIELDS, row))
            goal = tuple(float(t) for t in cells["goal"].split())
            dataset.records.append(DemoRecord(
                episode=int(cells["episode"]),
                env_id=int(cells["env_id"]),
                step=int(cells["step"]),
                state=_state_from(cells, "", goal),
                action=(float(cells["d_c"]), float(cells["phi_c"])),
                reward=float(cells["reward"]),
                next_state=_state_from(cells, "next_", goal),
                outcome=Outcome(cells["outcome"]),
                episode_outcome=Outcome(cells["episode_outcome"]),
                episode_steps=int(cells["episode_steps"]),
            ))
    except (KeyError, ValueError) as e:
        raise ParseError(f"{Path(path).name}: bad demo record: {e}") from e
    return dataset
