"""Obstacle worlds: generation, geometric queries and robot-centric occupancy grids.

Public API:
    Environment, OccupancyGrid, HalfPlane
    generate_environment(seed, n_obstacles, goal_policy)
    generate_trap_environment(seed)
    training_suite(seed), unseen_suite(seed)
    min_obstacle_distance, half_plane_value, nearest_half_planes, collides, collides_many
    window_obstacles, render_local_grid
    save_environment, load_environment, load_suite

Environments are immutable after construction and safe to share across workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from shapely.geometry import Polygon as ShapelyPolygon

from ._records import read_artifact, write_artifact
from ._shapes import Circle, ConvexPolygon, Ellipse, Obstacle, obstacle_from_params
from .exceptions import GenerationError, ParseError

# Robot footprint: a disc of this radius.
ROBOT_RADIUS = 0.3

# Start/goal discs kept free during generation.
GENERATION_CLEARANCE = 1.0
MAX_REJECTIONS = 1000

DEFAULT_BOUNDS = (0.0, 0.0, 10.0, 10.0)
TRAINING_OBSTACLE_COUNTS = (0, 1, 2, 6, 8)
UNSEEN_GOAL = (10.0, 10.0)

# Local map: 64×64 cells, 4.5 m ahead, 1.5 m behind, ±3 m to the sides.
GRID_SIZE = 64
GRID_FORWARD = 4.5
GRID_BACKWARD = 1.5
GRID_LATERAL = 3.0
GRID_RESOLUTION = 6.0 / GRID_SIZE

# Minimum start→goal separation for random goals.
_MIN_GOAL_DISTANCE = 3.0

Vec2 = Tuple[float, float]
Pose = Tuple[Vec2, float]


@dataclass(frozen=True)
class Environment:
    id: int
    obstacles: Tuple[Obstacle, ...]
    start: Vec2
    goal: Vec2
    bounds: Tuple[float, float, float, float] = DEFAULT_BOUNDS

    def __post_init__(self):
        for name, pt in (("start", self.start), ("goal", self.goal)):
            if not _in_bounds(pt, self.bounds):
                raise GenerationError(f"{name} {pt} lies outside bounds {self.bounds}")
        if len(self.obstacles) > 8:
            raise GenerationError(f"at most 8 obstacles allowed, got {len(self.obstacles)}")


@dataclass(frozen=True)
class OccupancyGrid:
    """Row i runs from 4.5 m ahead (i=0) to 1.5 m behind; column j from +3 m (left) to −3 m."""

    cells: np.ndarray
    pose: Pose

    def __post_init__(self):
        if self.cells.shape != (GRID_SIZE, GRID_SIZE):
            raise ValueError(f"grid must be {GRID_SIZE}×{GRID_SIZE}, got {self.cells.shape}")
        self.cells.setflags(write=False)

    @property
    def occupied(self) -> int:
        return int(self.cells.sum())


@dataclass(frozen=True)
class HalfPlane:
    """Linear safety function h(p) = normal·p − offset, positive on the safe side."""

    normal: Tuple[float, float]
    offset: float

    def value(self, p) -> float:
        return float(np.dot(self.normal, p) - self.offset)


def _in_bounds(p: Vec2, bounds) -> bool:
    return bounds[0] <= p[0] <= bounds[2] and bounds[1] <= p[1] <= bounds[3]


# --- Grid geometry ---

def _cell_centers_robot() -> np.ndarray:
    """(64·64, 2) robot-frame cell centres in row-major order."""
    i = np.arange(GRID_SIZE)
    forward = GRID_FORWARD - (i + 0.5) * GRID_RESOLUTION
    lateral = GRID_LATERAL - (i + 0.5) * GRID_RESOLUTION
    fx, ly = np.meshgrid(forward, lateral, indexing="ij")
    return np.column_stack([fx.ravel(), ly.ravel()])


_CELL_CENTERS = _cell_centers_robot()


def robot_to_world(points: np.ndarray, pose: Pose) -> np.ndarray:
    (px, py), theta = pose
    c, s = math.cos(theta), math.sin(theta)
    return np.column_stack([
        px + c * points[:, 0] - s * points[:, 1],
        py + s * points[:, 0] + c * points[:, 1],
    ])


def window_polygon(pose: Pose) -> ShapelyPolygon:
    corners = np.array([
        [GRID_FORWARD, GRID_LATERAL],
        [-GRID_BACKWARD, GRID_LATERAL],
        [-GRID_BACKWARD, -GRID_LATERAL],
        [GRID_FORWARD, -GRID_LATERAL],
    ])
    return ShapelyPolygon(robot_to_world(corners, pose))


def window_obstacles(env: Environment, pose: Pose) -> Tuple[Obstacle, ...]:
    """Obstacles whose footprint intersects the local-map window at `pose`."""
    window = window_polygon(pose)
    return tuple(obs for obs in env.obstacles if obs.geometry().intersects(window))


def render_local_grid(env: Environment, pose: Pose) -> OccupancyGrid:
    """Cell = 1 iff its centre, mapped to the world through `pose`, lies inside an obstacle."""
    cells = np.zeros(GRID_SIZE * GRID_SIZE, dtype=np.uint8)
    if env.obstacles:
        centers = robot_to_world(_CELL_CENTERS, pose)
        for obs in window_obstacles(env, pose):
            cells |= obs.contains(centers).astype(np.uint8)
    return OccupancyGrid(cells=cells.reshape(GRID_SIZE, GRID_SIZE), pose=pose)


# --- Distance queries ---

def _signed_distances(obstacles: Sequence[Obstacle], pts: np.ndarray) -> np.ndarray:
    """(n_obstacles, k) signed distances."""
    return np.vstack([obs.signed_distance(pts) for obs in obstacles])


def min_obstacle_distance(env: Environment, p, obstacles: Optional[Sequence[Obstacle]] = None) -> float:
    """
    Signed Euclidean distance to the nearest obstacle boundary (negative inside).
    Pass `obstacles` to restrict the query, e.g. to window_obstacles(...).
    Returns +inf when there is nothing to measure against.
    """
    obstacles = env.obstacles if obstacles is None else obstacles
    if not obstacles:
        return math.inf
    return float(np.min(_signed_distances(obstacles, np.asarray(p, dtype=float))))


def collides(env: Environment, p, robot_radius: float = ROBOT_RADIUS) -> bool:
    """True iff the robot disc at p intersects an obstacle."""
    return bool(min_obstacle_distance(env, p) < robot_radius)


def collides_many(env: Environment, pts, robot_radius: float = ROBOT_RADIUS) -> bool:
    """True iff the robot disc at any of the (k, 2) points intersects an obstacle."""
    if not env.obstacles:
        return False
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return bool(np.min(_signed_distances(env.obstacles, pts)) < robot_radius)


def segment_free(env: Environment, a, b, robot_radius: float = ROBOT_RADIUS, spacing: float = 0.05) -> bool:
    """Collision check along a→b sampled at ≤ spacing metres."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    n = max(1, int(math.ceil(np.linalg.norm(b - a) / spacing)))
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return not collides_many(env, a + t * (b - a), robot_radius)


def _tangent_half_plane(obs: Obstacle, p: np.ndarray, robot_radius: float) -> HalfPlane:
    """Supporting half-plane at the obstacle point nearest p, pushed out by robot_radius."""
    x_star = obs.nearest_boundary_point(p)
    gap = p - x_star
    dist = float(np.linalg.norm(gap))
    if dist < 1e-12:
        normal = obs.outward_normal(x_star)
    else:
        sign = 1.0 if obs.signed_distance(p)[0] >= 0 else -1.0
        normal = sign * gap / dist
    offset = float(normal @ x_star) + robot_radius
    return HalfPlane(normal=(float(normal[0]), float(normal[1])), offset=offset)


def nearest_half_planes(
    env: Environment,
    p,
    k: int,
    robot_radius: float = ROBOT_RADIUS,
    obstacles: Optional[Sequence[Obstacle]] = None,
) -> list[HalfPlane]:
    """Tangent half-planes of the k nearest obstacles, nearest first."""
    obstacles = env.obstacles if obstacles is None else obstacles
    if k <= 0 or not obstacles:
        return []
    p = np.asarray(p, dtype=float)
    planes = [_tangent_half_plane(obs, p, robot_radius) for obs in obstacles]
    order = sorted(range(len(planes)), key=lambda i: (planes[i].value(p), i))
    return [planes[i] for i in order[:k]]


def half_plane_value(
    env: Environment,
    p,
    robot_radius: float = ROBOT_RADIUS,
    obstacles: Optional[Sequence[Obstacle]] = None,
) -> Optional[float]:
    """
    h(p) for the nearest obstacle's supporting half-plane. None when there are no
    obstacles; callers map that to maximal safety.
    """
    obstacles = env.obstacles if obstacles is None else obstacles
    if not obstacles:
        return None
    p = np.asarray(p, dtype=float)
    nearest = int(np.argmin(_signed_distances(obstacles, p)[:, 0]))
    return _tangent_half_plane(obstacles[nearest], p, robot_radius).value(p)


# --- Generation ---

def _random_obstacle(rng: np.random.Generator, bounds) -> Obstacle:
    cx = float(rng.uniform(bounds[0], bounds[2]))
    cy = float(rng.uniform(bounds[1], bounds[3]))
    kind = int(rng.integers(3))
    if kind == 0:
        return Circle(center=(cx, cy), radius=float(rng.uniform(0.3, 0.8)))
    if kind == 1:
        return Ellipse(
            center=(cx, cy),
            semi_axes=(float(rng.uniform(0.3, 0.9)), float(rng.uniform(0.3, 0.9))),
            rotation=float(rng.uniform(0.0, math.pi)),
        )
    n_vertices = int(rng.integers(3, 7))
    radius = float(rng.uniform(0.4, 0.9))
    # Sorted angles with a minimum gap keep the polygon convex and non-degenerate.
    while True:
        angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, n_vertices))
        gaps = np.diff(np.append(angles, angles[0] + 2.0 * math.pi))
        if np.min(gaps) > 0.3 and np.max(gaps) < math.pi - 0.1:
            break
    vertices = tuple((cx + radius * math.cos(a), cy + radius * math.sin(a)) for a in angles)
    return ConvexPolygon(vertices=vertices)


def generate_environment(
    seed: int,
    n_obstacles: int,
    goal_policy: Union[str, Vec2] = "random",
    bounds: Tuple[float, float, float, float] = DEFAULT_BOUNDS,
    env_id: Optional[int] = None,
    clearance: float = GENERATION_CLEARANCE,
) -> Environment:
    """
    Deterministic in its arguments. Start is (0, 0); goal_policy is "random" or a fixed
    point. Obstacles overlapping the start/goal clearance discs are resampled.
    Raises GenerationError after MAX_REJECTIONS rejected draws.
    """
    if not 0 <= n_obstacles <= 8:
        raise GenerationError(f"n_obstacles must be in [0, 8], got {n_obstacles}")
    rng = np.random.default_rng(seed)
    start = (0.0, 0.0)
    rejections = 0

    if isinstance(goal_policy, str):
        if goal_policy != "random":
            raise GenerationError(f"unknown goal policy {goal_policy!r}")
        while True:
            goal = (float(rng.uniform(bounds[0], bounds[2])), float(rng.uniform(bounds[1], bounds[3])))
            if math.dist(goal, start) >= _MIN_GOAL_DISTANCE:
                break
            rejections += 1
            if rejections >= MAX_REJECTIONS:
                raise GenerationError(f"seed {seed}: no goal found after {MAX_REJECTIONS} draws")
    else:
        goal = (float(goal_policy[0]), float(goal_policy[1]))

    anchors = np.array([start, goal])
    obstacles: list[Obstacle] = []
    while len(obstacles) < n_obstacles:
        candidate = _random_obstacle(rng, bounds)
        if np.min(candidate.signed_distance(anchors)) >= clearance:
            obstacles.append(candidate)
            continue
        rejections += 1
        if rejections >= MAX_REJECTIONS:
            raise GenerationError(
                f"seed {seed}: environment oversubscribed after {MAX_REJECTIONS} rejections "
                f"({len(obstacles)}/{n_obstacles} obstacles placed)"
            )

    env = Environment(
        id=seed if env_id is None else env_id,
        obstacles=tuple(obstacles),
        start=start,
        goal=goal,
        bounds=bounds,
    )
    logger.debug("generated env {} with {} obstacles after {} rejections", env.id, n_obstacles, rejections)
    return env


def generate_trap_environment(
    seed: int,
    env_id: Optional[int] = None,
    wall_length: float = 5.0,
    wall_thickness: float = 0.3,
) -> Environment:
    """A single long wall across the start→goal line, midway between them."""
    rng = np.random.default_rng(seed)
    bearing = float(rng.uniform(math.pi / 8, 3 * math.pi / 8))
    distance = float(rng.uniform(6.0, 9.0))
    goal = (distance * math.cos(bearing), distance * math.sin(bearing))
    mid = np.array(goal) / 2.0
    along = np.array([math.cos(bearing), math.sin(bearing)])
    across = np.array([-along[1], along[0]])
    hl, ht = wall_length / 2.0, wall_thickness / 2.0
    corners = [mid - ht * along - hl * across, mid + ht * along - hl * across,
               mid + ht * along + hl * across, mid - ht * along + hl * across]
    wall = ConvexPolygon(vertices=tuple((float(c[0]), float(c[1])) for c in corners))
    return Environment(id=seed if env_id is None else env_id, obstacles=(wall,), start=(0.0, 0.0), goal=goal)


def training_suite(seed: int, per_count: int = 10) -> list[Environment]:
    """per_count environments for each obstacle count in {0, 1, 2, 6, 8}, random goals."""
    envs = []
    for n in TRAINING_OBSTACLE_COUNTS:
        for _ in range(per_count):
            env_id = len(envs)
            envs.append(generate_environment(seed * 1000 + env_id, n, "random", env_id=env_id))
    return envs


def unseen_suite(seed: int, count: int = 25) -> list[Environment]:
    """count environments with eight obstacles and the shared goal (10, 10)."""
    return [
        generate_environment(seed * 1000 + 500 + i, 8, UNSEEN_GOAL, env_id=i)
        for i in range(count)
    ]


# --- Serialization ---

_ENV_FIELDS = ["kind", "params"]
_ENV_TYPES = ["string", "vector"]


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split()]


def save_environment(env: Environment, path: Union[str, Path], metadata: Optional[dict] = None) -> Path:
    meta = {
        "id": str(env.id),
        "bounds": _fmt(env.bounds),
        "start": _fmt(env.start),
        "goal": _fmt(env.goal),
        **(metadata or {}),
    }
    rows = [[obs.kind, _fmt(obs.params())] for obs in env.obstacles]
    return write_artifact(path, "environment", meta, _ENV_FIELDS, _ENV_TYPES, rows)


def load_environment(path: Union[str, Path]) -> Environment:
    art = read_artifact(path, expected_kind="environment")
    try:
        obstacles = tuple(obstacle_from_params(kind, _floats(params)) for kind, params in art.rows)
        bounds = tuple(_floats(art.metadata["bounds"]))
        return Environment(
            id=int(art.metadata["id"]),
            obstacles=obstacles,
            start=tuple(_floats(art.metadata["start"])),
            goal=tuple(_floats(art.metadata["goal"])),
            bounds=bounds,
        )
    except (KeyError, ValueError) as e:
        raise ParseError(f"{Path(path).name}: bad environment record: {e}") from e


def load_suite(directory: Union[str, Path]) -> list[Environment]:
    """All *.env files in a directory, ordered by file name."""
    directory = Path(directory)
    files = sorted(directory.glob("*.env"))
    if not files:
        raise FileNotFoundError(f"no .env files found in {directory}")
    return [load_environment(f) for f in files]
