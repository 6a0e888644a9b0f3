"""Funk and Hilbert distances in a convex polygon, plus metric balls.

Distances are in natural-log units.  All closed forms work on the chord
parameters (t_back, t_fwd) of the line through the two points, which keeps
every operation to one O(m) sweep over the polygon edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import (
    ConvexPolygon,
    GeometryError,
    HPoint,
    Line,
    Point,
    intersect_lines,
    line_point_dir,
    line_through,
)


def _require_interior(K: ConvexPolygon, p: Point, name: str = "point") -> None:
    if not K.contains_interior(p):
        raise GeometryError(f"{name} {tuple(p)} is not strictly interior to K")


def funk_distance(K: ConvexPolygon, p: Point, q: Point) -> float:
    """Asymmetric Funk distance ln(|p-y| / |q-y|), y = exit of ray p -> q."""
    _require_interior(K, p, "p")
    _require_interior(K, q, "q")
    dx, dy = q[0] - p[0], q[1] - p[1]
    if math.hypot(dx, dy) <= K.eps * K.diameter:
        return 0.0
    t_fwd, _ = K.ray_exit(p, dx, dy)
    # q sits at t=1 along d; the exit point beyond q at t_fwd > 1
    return math.log(t_fwd / (t_fwd - 1.0))


def hilbert_distance(K: ConvexPolygon, p: Point, q: Point) -> float:
    """Hilbert distance between interior points of K."""
    _require_interior(K, p, "p")
    _require_interior(K, q, "q")
    dx, dy = q[0] - p[0], q[1] - p[1]
    if math.hypot(dx, dy) <= K.eps * K.diameter:
        return 0.0
    t0, _, t1, _ = K.chord_params(p, dx, dy)
    # chord order <x, p, q, y> at parameters t0 < 0, 0, 1, t1 > 1
    return 0.5 * math.log((t1 * (1.0 - t0)) / ((t1 - 1.0) * (-t0)))


def point_at_distance(K: ConvexPolygon, p: Point, u: tuple[float, float], r: float) -> Point:
    """The point at Hilbert distance r from p along the unit direction u."""
    _require_interior(K, p, "p")
    if not math.isfinite(r) or r < 0.0:
        raise GeometryError("radius must be finite and nonnegative")
    if r == 0.0:
        return p
    t0, _, t1, _ = K.chord_params(p, u[0], u[1])
    E = math.exp(2.0 * r)
    den = t1 - E * t0
    if abs(den) <= K.eps * max(abs(t1), abs(E * t0)):
        # cannot happen for t0 < 0 < t1, E > 0; guard for corrupt input
        raise GeometryError("degenerate chord parameters")
    t = t0 * t1 * (1.0 - E) / den
    return Point(p[0] + t * u[0], p[1] + t * u[1])


def hilbert_midpoint(K: ConvexPolygon, p: Point, q: Point) -> Point:
    """The point z on segment pq with equal Hilbert distance to p and q."""
    _require_interior(K, p, "p")
    _require_interior(K, q, "q")
    dx, dy = q[0] - p[0], q[1] - p[1]
    if math.hypot(dx, dy) <= K.eps * K.diameter:
        raise GeometryError("midpoint of coincident points is undefined")
    t0, _, t1, _ = K.chord_params(p, dx, dy)
    # scalars along the chord: x=t0, p=0, q=1, y=t1
    rho = math.sqrt(((-t0) * (1.0 - t0)) / (t1 * (t1 - 1.0)))
    t = (t0 + rho * t1) / (1.0 + rho)
    return Point(p[0] + t * dx, p[1] + t * dy)


@dataclass
class HilbertBall:
    """Hilbert ball: convex polygon with at most 2m sides around its center."""

    center: Point
    radius: float
    boundary: ConvexPolygon


def hilbert_ball(K: ConvexPolygon, p: Point, r: float) -> HilbertBall:
    """Ball boundary built sector by sector from supporting-edge apexes.

    For each boundary interval of K seen from p (bounded by the directions to
    the vertices of K and to the antipodal chord endpoints), the ball edge is
    the line through the apex of the two supporting edge lines and one witness
    point at distance r.  Apexes at infinity fall out of the homogeneous
    representation as edges parallel to the supporting pair.
    """
    from .sectors import sectors  # local import to avoid a cycle

    _require_interior(K, p, "p")
    if not (math.isfinite(r) and r > 0.0):
        raise GeometryError("ball radius must be positive and finite")
    secs = sectors(K, p)
    edge_lines: list[Line] = []
    last_pair = None
    for sec in secs:
        if (sec.front_edge, sec.back_edge) == last_pair:
            continue
        last_pair = (sec.front_edge, sec.back_edge)
        mid = K.boundary_point(0.5 * (sec.t0 + sec.t1) if sec.t1 > sec.t0
                               else 0.5 * (sec.t0 + sec.t1 + K.m))
        ux, uy = mid.x - p.x, mid.y - p.y
        s = math.hypot(ux, uy)
        q = point_at_distance(K, p, (ux / s, uy / s), r)
        apex: HPoint = intersect_lines(
            K.edge_lines[sec.front_edge], K.edge_lines[sec.back_edge]
        )
        if apex.is_at_infinity():
            edge_lines.append(line_point_dir(q, apex.hx, apex.hy))
        else:
            edge_lines.append(line_through(apex.to_point(), q))
    verts = []
    n = len(edge_lines)
    for i in range(n):
        h = intersect_lines(edge_lines[i], edge_lines[(i + 1) % n])
        verts.append(h.to_point())
    # drop near-duplicate consecutive vertices from merged sectors
    clean = []
    tol = 1e-12 * K.diameter
    for v in verts:
        if not clean or math.hypot(v.x - clean[-1].x, v.y - clean[-1].y) > tol:
            clean.append(v)
    if len(clean) > 1 and math.hypot(clean[0].x - clean[-1].x, clean[0].y - clean[-1].y) <= tol:
        clean.pop()
    boundary = ConvexPolygon(clean, eps=K.eps)
    return HilbertBall(center=p, radius=r, boundary=boundary)
