"""Scalar 2D primitives: points, lines, convex polygons, chords, cross ratios.

Everything here is double precision with a configurable tolerance.  Lines are
stored as coefficient triples of a*x + b*y + c = 0, and line-line
intersections are homogeneous so that parallel supporting lines are handled
without special casing points at infinity.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

EPS = 1e-10


class GeometryError(ValueError):
    """Invalid geometric input (non-convex polygon, exterior point, ...)."""


class DegeneracyError(GeometryError):
    """A general-position assumption was violated."""


class Point(NamedTuple):
    x: float
    y: float


class HPoint(NamedTuple):
    """Homogeneous point; hw == 0 encodes a direction (point at infinity)."""

    hx: float
    hy: float
    hw: float

    def is_at_infinity(self, eps: float = EPS) -> bool:
        return abs(self.hw) <= eps * max(abs(self.hx), abs(self.hy))

    def to_point(self) -> Point:
        if self.hw == 0.0:
            raise DegeneracyError("homogeneous point at infinity")
        return Point(self.hx / self.hw, self.hy / self.hw)


class Line(NamedTuple):
    a: float
    b: float
    c: float

    def __call__(self, p: Point) -> float:
        return self.a * p[0] + self.b * p[1] + self.c


def line_through(p: Point, q: Point) -> Line:
    a = q[1] - p[1]
    b = p[0] - q[0]
    if a == 0.0 and b == 0.0:
        raise GeometryError("coincident points define no line")
    return Line(a, b, -(a * p[0] + b * p[1]))


def line_point_dir(p: Point, dx: float, dy: float) -> Line:
    a = dy
    b = -dx
    return Line(a, b, -(a * p[0] + b * p[1]))


def orientation(a: Point, b: Point, c: Point, eps: float = EPS) -> int:
    """Sign of twice the signed area of triangle abc (+1 ccw, -1 cw, 0 flat)."""
    area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    scale = max(
        abs(b[0] - a[0]), abs(c[1] - a[1]), abs(b[1] - a[1]), abs(c[0] - a[0]), 1.0
    )
    if abs(area2) <= eps * scale * scale:
        return 0
    return 1 if area2 > 0.0 else -1


def intersect_lines(l1: Line, l2: Line, eps: float = EPS) -> HPoint:
    """Homogeneous intersection (cross product of coefficient triples)."""
    hx = l1.b * l2.c - l1.c * l2.b
    hy = l1.c * l2.a - l1.a * l2.c
    hw = l1.a * l2.b - l1.b * l2.a
    norm = max(abs(hx), abs(hy), abs(hw))
    s1 = math.hypot(l1.a, l1.b)
    s2 = math.hypot(l2.a, l2.b)
    if norm <= eps * s1 * s2 * max(1.0, abs(l1.c) / s1, abs(l2.c) / s2):
        raise DegeneracyError("identical lines have no unique intersection")
    return HPoint(hx / norm, hy / norm, hw / norm)


def cross_ratio(x: float, p: float, q: float, y: float, eps: float = EPS) -> float:
    """Cross ratio (|p-y| |q-x|) / (|q-y| |p-x|) of four collinear scalars."""
    scale = max(abs(x), abs(p), abs(q), abs(y), 1.0)
    if abs(q - y) <= eps * scale or abs(p - x) <= eps * scale:
        raise GeometryError("cross ratio is infinite (coincident denominator pair)")
    return (abs(p - y) * abs(q - x)) / (abs(q - y) * abs(p - x))


class Chord(NamedTuple):
    """A chord of the polygon: endpoints on the boundary plus their edges."""

    p0: Point
    p1: Point
    e0: int
    e1: int


class ConvexPolygon:
    """Strictly convex polygon given by a counterclockwise vertex cycle.

    Edge i joins ``vertices[i]`` to ``vertices[i+1]``; its line is oriented so
    the interior is on the negative side.  Boundary points are addressed by a
    parameter t in [0, m): t = i + fraction along edge i.
    """

    def __init__(self, vertices: Sequence[tuple[float, float]], eps: float = EPS):
        pts = [Point(float(x), float(y)) for x, y in vertices]
        if len(pts) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        m = len(pts)
        for i in range(m):
            if not (math.isfinite(pts[i].x) and math.isfinite(pts[i].y)):
                raise GeometryError("non-finite vertex coordinate")
            if orientation(pts[i], pts[(i + 1) % m], pts[(i + 2) % m], eps) <= 0:
                raise GeometryError(
                    f"vertices {i},{i+1},{i+2} are not a strict counterclockwise turn"
                )
        self.vertices = pts
        self.m = m
        self.edge_lines = [
            line_through(pts[i], pts[(i + 1) % m]) for i in range(m)
        ]
        self.eps = eps
        xs = [p.x for p in pts]
        ys = [p.y for p in pts]
        self.diameter = math.hypot(max(xs) - min(xs), max(ys) - min(ys))
        # normalized (unit-normal) edge coefficients, used by the kernels
        arr = np.empty((m, 3), dtype=np.float64)
        for i, (a, b, c) in enumerate(self.edge_lines):
            s = math.hypot(a, b)
            arr[i] = (a / s, b / s, c / s)
        self.edges_abc = arr

    def __repr__(self):
        return f"ConvexPolygon({self.m} vertices)"

    def signed_depth(self, p: Point) -> float:
        """Distance to the boundary, negative inside (unit-normal lines)."""
        a = self.edges_abc
        return float(np.max(a[:, 0] * p[0] + a[:, 1] * p[1] + a[:, 2]))

    def contains_interior(self, p: Point, eps: float | None = None) -> bool:
        band = (self.eps if eps is None else eps) * self.diameter
        return self.signed_depth(p) < -band

    def boundary_point(self, t: float) -> Point:
        t = t % self.m
        i = int(t)
        f = t - i
        v0 = self.vertices[i]
        v1 = self.vertices[(i + 1) % self.m]
        return Point(v0.x + f * (v1.x - v0.x), v0.y + f * (v1.y - v0.y))

    def boundary_param(self, edge: int, q: Point) -> float:
        v0 = self.vertices[edge]
        v1 = self.vertices[(edge + 1) % self.m]
        dx, dy = v1.x - v0.x, v1.y - v0.y
        f = ((q.x - v0.x) * dx + (q.y - v0.y) * dy) / (dx * dx + dy * dy)
        return edge + min(max(f, 0.0), 1.0)

    def ray_exit(self, p: Point, dx: float, dy: float) -> tuple[float, int]:
        """Parameter t > 0 and edge index where ray p + t*(dx,dy) leaves K."""
        t_best = math.inf
        e_best = -1
        for i, (a, b, c) in enumerate(self.edge_lines):
            den = a * dx + b * dy
            if den > 0.0:
                t = -(a * p[0] + b * p[1] + c) / den
                if t < t_best:
                    t_best = t
                    e_best = i
        if e_best < 0:
            raise GeometryError("ray does not exit polygon (point outside?)")
        return t_best, e_best

    def chord_params(self, p: Point, dx: float, dy: float) -> tuple[float, int, float, int]:
        """(t_back, e_back, t_fwd, e_fwd) for the chord through p along (dx,dy).

        t_back < 0 < t_fwd; p + t*(dx,dy) lies on the named edge line.
        """
        t_fwd = math.inf
        e_fwd = -1
        t_back = -math.inf
        e_back = -1
        for i, (a, b, c) in enumerate(self.edge_lines):
            den = a * dx + b * dy
            if den == 0.0:
                continue
            t = -(a * p[0] + b * p[1] + c) / den
            if den > 0.0:
                if t < t_fwd:
                    t_fwd = t
                    e_fwd = i
            else:
                if t > t_back:
                    t_back = t
                    e_back = i
        if e_fwd < 0 or e_back < 0 or not (t_back < 0.0 < t_fwd):
            raise GeometryError("chord direction degenerate or point not interior")
        return t_back, e_back, t_fwd, e_fwd


def chord_through(K: ConvexPolygon, p: Point, q: Point) -> Chord:
    """Chord of K through interior points p, q; the ray p -> q exits at p1."""
    if not K.contains_interior(p) or not K.contains_interior(q):
        raise GeometryError("chord endpoints must be strictly interior")
    dx, dy = q[0] - p[0], q[1] - p[1]
    if math.hypot(dx, dy) <= K.eps * K.diameter:
        raise GeometryError("coincident points define no chord")
    t0, e0, t1, e1 = K.chord_params(p, dx, dy)
    return Chord(
        Point(p[0] + t0 * dx, p[1] + t0 * dy),
        Point(p[0] + t1 * dx, p[1] + t1 * dy),
        e0,
        e1,
    )
