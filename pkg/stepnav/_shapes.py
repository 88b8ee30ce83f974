"""Convex obstacle shapes: pure geometry without environment knowledge.

Every shape answers the same vectorised queries on (k, 2) point arrays:
contains, signed_distance (negative inside), nearest_boundary_point and
outward_normal. Circles and ellipses are analytic; polygons go through shapely.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple, Union

import numpy as np
import shapely
from shapely import affinity
from shapely.geometry import Point, Polygon as ShapelyPolygon

# Segments per quarter circle when a curved shape is rasterised for window tests and plots.
_QUAD_SEGS = 32

# Bisection on the ellipse secular equation halves a bracket of width < 2^60 each pass.
_ELLIPSE_BISECTIONS = 200


def _as_points(p) -> np.ndarray:
    return np.atleast_2d(np.asarray(p, dtype=float))


@dataclass(frozen=True)
class Circle:
    center: Tuple[float, float]
    radius: float
    kind = "circle"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"circle radius must be > 0, got {self.radius}")

    def params(self) -> list[float]:
        return [*self.center, self.radius]

    def contains(self, pts) -> np.ndarray:
        d = _as_points(pts) - np.asarray(self.center)
        return np.einsum("ij,ij->i", d, d) <= self.radius ** 2

    def signed_distance(self, pts) -> np.ndarray:
        return np.linalg.norm(_as_points(pts) - np.asarray(self.center), axis=1) - self.radius

    def nearest_boundary_point(self, p) -> np.ndarray:
        d = np.asarray(p, dtype=float) - np.asarray(self.center)
        norm = np.linalg.norm(d)
        direction = d / norm if norm > 0 else np.array([1.0, 0.0])
        return np.asarray(self.center) + self.radius * direction

    def outward_normal(self, boundary_point) -> np.ndarray:
        d = np.asarray(boundary_point) - np.asarray(self.center)
        return d / np.linalg.norm(d)

    def geometry(self):
        return Point(self.center).buffer(self.radius, quad_segs=_QUAD_SEGS)


def _ellipse_first_quadrant(e0: float, e1: float, y0: np.ndarray, y1: np.ndarray):
    """
    Closest point on the ellipse (x0/e0)² + (x1/e1)² = 1 to (y0, y1), first quadrant,
    e0 ≥ e1 > 0. Returns (x0, x1, distance). Handles points inside the ellipse.
    """
    x0 = np.empty_like(y0)
    x1 = np.empty_like(y1)

    general = (y0 > 0) & (y1 > 0)
    on_minor = (y0 == 0) & (y1 > 0)
    on_major = y1 == 0

    # Major axis (y1 == 0): closed form.
    numer0 = e0 * y0
    denom0 = e0 * e0 - e1 * e1
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = on_major & (numer0 < denom0)
        xde0 = np.where(inner, numer0 / np.where(denom0 > 0, denom0, 1.0), 0.0)
    x0 = np.where(inner, e0 * xde0, np.where(on_major, e0, x0))
    x1 = np.where(inner, e1 * np.sqrt(np.clip(1.0 - xde0 ** 2, 0.0, None)), np.where(on_major, 0.0, x1))

    # Minor axis (y0 == 0, y1 > 0).
    x0 = np.where(on_minor, 0.0, x0)
    x1 = np.where(on_minor, e1, x1)

    if np.any(general):
        g0, g1 = y0[general], y1[general]
        z0, z1 = g0 / e0, g1 / e1
        g = z0 * z0 + z1 * z1 - 1.0
        r0 = (e0 / e1) ** 2
        n0 = r0 * z0
        s0 = z1 - 1.0
        s1 = np.where(g < 0, 0.0, np.hypot(n0, z1) - 1.0)
        for _ in range(_ELLIPSE_BISECTIONS):
            s = 0.5 * (s0 + s1)
            val = (n0 / (s + r0)) ** 2 + (z1 / (s + 1.0)) ** 2 - 1.0
            s0 = np.where(val > 0, s, s0)
            s1 = np.where(val < 0, s, s1)
        s = 0.5 * (s0 + s1)
        x0[general] = r0 * g0 / (s + r0)
        x1[general] = g1 / (s + 1.0)

    return x0, x1, np.hypot(x0 - y0, x1 - y1)


@dataclass(frozen=True)
class Ellipse:
    center: Tuple[float, float]
    semi_axes: Tuple[float, float]
    rotation: float
    kind = "ellipse"

    def __post_init__(self):
        if not (self.semi_axes[0] > 0 and self.semi_axes[1] > 0):
            raise ValueError(f"ellipse semi-axes must be > 0, got {self.semi_axes}")

    def params(self) -> list[float]:
        return [*self.center, *self.semi_axes, self.rotation]

    def _to_local(self, pts) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        d = _as_points(pts) - np.asarray(self.center)
        return np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]])

    def _to_world(self, local: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return np.column_stack([c * local[:, 0] - s * local[:, 1], s * local[:, 0] + c * local[:, 1]]) + np.asarray(self.center)

    def contains(self, pts) -> np.ndarray:
        loc = self._to_local(pts)
        a, b = self.semi_axes
        return (loc[:, 0] / a) ** 2 + (loc[:, 1] / b) ** 2 <= 1.0

    def _closest_local(self, pts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        loc = self._to_local(pts)
        a, b = self.semi_axes
        swap = a < b
        if swap:
            loc = loc[:, ::-1]
            a, b = b, a
        sx, sy = np.sign(loc[:, 0]), np.sign(loc[:, 1])
        x0, x1, dist = _ellipse_first_quadrant(a, b, np.abs(loc[:, 0]), np.abs(loc[:, 1]))
        closest = np.column_stack([np.where(sx < 0, -x0, x0), np.where(sy < 0, -x1, x1)])
        inside = (loc[:, 0] / a) ** 2 + (loc[:, 1] / b) ** 2 < 1.0
        if swap:
            closest = closest[:, ::-1]
        return closest, dist, inside

    def signed_distance(self, pts) -> np.ndarray:
        _, dist, inside = self._closest_local(pts)
        return np.where(inside, -dist, dist)

    def nearest_boundary_point(self, p) -> np.ndarray:
        closest, _, _ = self._closest_local(p)
        return self._to_world(closest)[0]

    def outward_normal(self, boundary_point) -> np.ndarray:
        loc = self._to_local(boundary_point)[0]
        a, b = self.semi_axes
        grad_local = np.array([loc[0] / a ** 2, loc[1] / b ** 2])
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        grad = np.array([c * grad_local[0] - s * grad_local[1], s * grad_local[0] + c * grad_local[1]])
        return grad / np.linalg.norm(grad)

    def geometry(self):
        unit = Point(0.0, 0.0).buffer(1.0, quad_segs=_QUAD_SEGS)
        shape = affinity.scale(unit, self.semi_axes[0], self.semi_axes[1], origin=(0, 0))
        shape = affinity.rotate(shape, self.rotation, origin=(0, 0), use_radians=True)
        return affinity.translate(shape, *self.center)


@dataclass(frozen=True)
class ConvexPolygon:
    vertices: Tuple[Tuple[float, float], ...]
    kind = "polygon"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3:
            raise ValueError("polygon needs at least 3 vertices")
        edges = np.roll(v, -1, axis=0) - v
        nxt = np.roll(edges, -1, axis=0)
        cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        if np.any(cross <= 0):
            raise ValueError("polygon must be convex and counterclockwise")
        if self._shape.area <= 1e-6:
            raise ValueError(f"polygon area {self._shape.area:.2e} m² is degenerate")

    @cached_property
    def _shape(self) -> ShapelyPolygon:
        return ShapelyPolygon(self.vertices)

    def params(self) -> list[float]:
        return [c for vertex in self.vertices for c in vertex]

    def contains(self, pts) -> np.ndarray:
        p = _as_points(pts)
        return shapely.intersects_xy(self._shape, p[:, 0], p[:, 1])

    def signed_distance(self, pts) -> np.ndarray:
        p = _as_points(pts)
        shape = self._shape
        dist = shapely.distance(shape.exterior, shapely.points(p))
        return np.where(shapely.contains_xy(shape, p[:, 0], p[:, 1]), -dist, dist)

    def nearest_boundary_point(self, p) -> np.ndarray:
        ring = self._shape.exterior
        return np.asarray(ring.interpolate(ring.project(Point(p))).coords[0])

    def outward_normal(self, boundary_point) -> np.ndarray:
        v = np.asarray(self.vertices, dtype=float)
        a, b = v, np.roll(v, -1, axis=0)
        ab = b - a
        t = np.clip(np.einsum("ij,ij->i", np.asarray(boundary_point) - a, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
        gap = np.linalg.norm(a + t[:, None] * ab - boundary_point, axis=1)
        e = ab[int(np.argmin(gap))]
        normal = np.array([e[1], -e[0]])  # CCW winding: right-hand perpendicular points out
        return normal / np.linalg.norm(normal)

    def geometry(self):
        return self._shape


Obstacle = Union[Circle, Ellipse, ConvexPolygon]


def obstacle_from_params(kind: str, params: list[float]) -> Obstacle:
    if kind == "circle" and len(params) == 3:
        return Circle(center=(params[0], params[1]), radius=params[2])
    if kind == "ellipse" and len(params) == 5:
        return Ellipse(center=(params[0], params[1]), semi_axes=(params[2], params[3]), rotation=params[4])
    if kind == "polygon" and len(params) >= 6 and len(params) % 2 == 0:
        return ConvexPolygon(vertices=tuple((params[i], params[i + 1]) for i in range(0, len(params), 2)))
    raise ValueError(f"bad obstacle record: {kind} with {len(params)} parameters")
