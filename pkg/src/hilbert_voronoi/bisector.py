"""Bisector pieces between two sites and the tracing machinery.

A piece is the maximal part of the (p, p')-bisector lying in a fixed pair of
sectors of p and p'.  Projecting everything from the two supporting-edge
apexes onto the line through the sites reduces the piece to scalars
x, y, x', y', o and coefficients A, B, C with the linear reciprocal relation
A = B/alpha - C/alpha'.  Clearing denominators makes the piece a quadratic
curve in homogeneous coordinates, so every exit event is a quadratic solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    ConvexPolygon,
    DegeneracyError,
    GeometryError,
    HPoint,
    Line,
    Point,
    intersect_lines,
    line_through,
)
from .metric import hilbert_distance, hilbert_midpoint
from .sectors import Sector, SectorFan, sectors

_BIG = 1e12  # scalar stand-in for a projection point at infinity


class WidenedRegionError(DegeneracyError):
    """The whole sector-pair region is equidistant (a widened bisector)."""


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


class PairFrame:
    """Shared line frame of a site pair: scalars live along the line p -> p'."""

    def __init__(self, K: ConvexPolygon, p: Point, q: Point):
        dx, dy = q.x - p.x, q.y - p.y
        d = math.hypot(dx, dy)
        if d <= K.eps * K.diameter:
            raise GeometryError("coincident sites")
        self.K = K
        self.p = p
        self.q = q
        self.d = d
        self.ux = dx / d
        self.uy = dy / d
        self.big = _BIG * K.diameter

    def scal(self, z: Point) -> float:
        return (z.x - self.p.x) * self.ux + (z.y - self.p.y) * self.uy

    def point(self, s: float) -> Point:
        return Point(self.p.x + s * self.ux, self.p.y + s * self.uy)

    def line_scal(self, L: Line) -> float:
        """Scalar where L crosses the frame line; clamped for near-parallel."""
        num = -(L.a * self.p.x + L.b * self.p.y + L.c)
        den = L.a * self.ux + L.b * self.uy
        lim = self.big
        if den == 0.0:
            return math.copysign(lim, num if num != 0.0 else 1.0)
        s = num / den
        if abs(s) > lim:
            return math.copysign(lim, s)
        return s


def equalizing_point(x: float, p: float, y: float,
                     xprime: float, pprime: float, yprime: float,
                     eps: float = 1e-12) -> float:
    """The unique scalar o strictly between p and p' with equal cross ratios.

    o satisfies (o,p; y,x) = (o,p'; y',x'), written as the cross-multiplied
    quadratic P1 (x-o)(o-y') = P2 (x'-o)(o-y) with P1 = (p-y)(x'-p') and
    P2 = (p'-y')(x-p).
    """
    P1 = (p - y) * (xprime - pprime)
    P2 = (pprime - yprime) * (x - p)
    a2 = P2 - P1
    a1 = P1 * (x + yprime) - P2 * (xprime + y)
    a0 = P2 * xprime * y - P1 * x * yprime
    lo, hi = (p, pprime) if p < pprime else (pprime, p)
    span = hi - lo
    roots: list[float] = []
    scale = max(abs(a2) * max(abs(lo), abs(hi), 1.0) ** 2, abs(a1), abs(a0), 1.0)
    if abs(a2) * max(abs(lo), abs(hi), 1.0) <= 1e-14 * max(abs(a1), 1e-300):
        if a1 != 0.0:
            roots = [-a0 / a1]
    else:
        disc = a1 * a1 - 4.0 * a2 * a0
        if disc < 0.0:
            if disc > -1e-14 * scale * scale:
                disc = 0.0
            else:
                raise DegeneracyError("equalizing-point quadratic has no real root")
        sq = math.sqrt(disc)
        q = -0.5 * (a1 + math.copysign(sq, a1 if a1 != 0.0 else 1.0))
        roots = []
        if q != 0.0:
            roots.append(a0 / q)
        if a2 != 0.0:
            roots.append(q / a2)
    inside = [r for r in roots if lo + eps * span < r < hi - eps * span]
    if len(inside) != 1:
        raise DegeneracyError(
            f"expected exactly one equalizing point in ({lo}, {hi}), got {inside}"
        )
    return inside[0]


def curve_coefficients(x: float, p: float, y: float,
                       xprime: float, pprime: float, yprime: float,
                       o: float) -> tuple[float, float, float]:
    """Coefficients of the reciprocal relation A = B/alpha - C/alpha'."""
    P1 = (p - y) * (xprime - pprime)
    P2 = (pprime - yprime) * (x - p)
    A = P1 - P2
    B = (x - o) * P1 + P2 * (o - y)
    C = P1 * (o - yprime) + (xprime - o) * P2
    return A, B, C


def _apex_cross_point(a: HPoint, px: float, py: float, pw: float) -> np.ndarray:
    """Homogeneous line through apex a and homogeneous point (px,py,pw)."""
    return np.array(
        [
            a.hy * pw - a.hw * py,
            a.hw * px - a.hx * pw,
            a.hx * py - a.hy * px,
        ]
    )


@dataclass
class BisectorPiece:
    """One parameterized bisector piece between sites p and p'."""

    frame: PairFrame
    sec_p: Sector
    sec_q: Sector
    e: int
    f: int
    ep: int
    fp: int
    a: HPoint
    ap: HPoint
    x: float
    y: float
    xp: float
    yp: float
    o: float
    A: float
    B: float
    C: float
    coeffs: np.ndarray       # (3,3): z(t) = c0 + c1 t + c2 t^2, homogeneous rows
    linear: bool
    widened: bool = False    # equal edge pairs: a 2D equidistant region, traced
                             # along its canonical closing segment
    alpha_range: tuple[float, float] | None = None

    @property
    def signature(self) -> tuple[int, int, int, int]:
        return (self.e, self.f, self.ep, self.fp)

    def point(self, t: float) -> Point:
        c = self.coeffs
        v = c[0] + t * (c[1] + t * c[2])
        if v[2] == 0.0:
            raise DegeneracyError("bisector piece point at infinity")
        return Point(v[0] / v[2], v[1] / v[2])

    def tangent(self, t: float) -> tuple[float, float]:
        c = self.coeffs
        v = c[0] + t * (c[1] + t * c[2])
        dv = c[1] + 2.0 * t * c[2]
        w = v[2]
        return (
            (dv[0] * w - v[0] * dv[2]) / (w * w),
            (dv[1] * w - v[1] * dv[2]) / (w * w),
        )

    def param_of_point(self, z: Point) -> float:
        fr = self.frame
        if self.linear:
            c = self.coeffs
            dx, dy = c[1][0], c[1][1]
            return ((z.x - c[0][0]) * dx + (z.y - c[0][1]) * dy) / (dx * dx + dy * dy)
        a = self.a
        if a.is_at_infinity():
            wx, wy = a.hx, a.hy
            den = _cross(wx, wy, fr.ux, fr.uy)
            s = -_cross(wx, wy, fr.p.x - z.x, fr.p.y - z.y) / den
        else:
            ax, ay = a.hx / a.hw, a.hy / a.hw
            zx, zy = z.x - ax, z.y - ay
            den = _cross(zx, zy, fr.ux, fr.uy)
            if den == 0.0:
                raise DegeneracyError("point projects to infinity on the site line")
            s = -_cross(zx, zy, fr.p.x - ax, fr.p.y - ay) / den
        return s - self.o

    def alpha_prime(self, alpha: float) -> float:
        den = self.B - self.A * alpha
        if den == 0.0:
            raise DegeneracyError("alpha' undefined at piece endpoint")
        return self.C * alpha / den

    def crossing_params(self, L: Line) -> list[float]:
        """Real curve parameters where the piece crosses line L."""
        c = self.coeffs
        c0 = L.a * c[0][0] + L.b * c[0][1] + L.c * c[0][2]
        c1 = L.a * c[1][0] + L.b * c[1][1] + L.c * c[1][2]
        c2 = L.a * c[2][0] + L.b * c[2][1] + L.c * c[2][2]
        scale = max(abs(c0), abs(c1), abs(c2))
        if scale == 0.0:
            return []
        c0, c1, c2 = c0 / scale, c1 / scale, c2 / scale
        if abs(c2) <= 1e-14:
            if c1 == 0.0:
                return []
            return [-c0 / c1]
        disc = c1 * c1 - 4.0 * c2 * c0
        if disc < 0.0:
            return []
        sq = math.sqrt(disc)
        qq = -0.5 * (c1 + math.copysign(sq, c1 if c1 != 0.0 else 1.0))
        roots = []
        if c2 != 0.0:
            roots.append(qq / c2)
        if qq != 0.0:
            roots.append(c0 / qq)
        return sorted(set(roots))


def _unwrapped_arcs(K: ConvexPolygon, sec_p: Sector, sec_q: Sector
                    ) -> tuple[float, float, float, float]:
    """Outer-arc intervals of the two sectors on a common unwrapped axis."""
    m = K.m

    def unwrap(t0, t1):
        return (t0, t1 if t1 > t0 else t1 + m)

    a0, a1 = unwrap(sec_p.t0, sec_p.t1)
    b0, b1 = unwrap(sec_q.t0, sec_q.t1)
    if b0 >= a1:
        b0, b1 = b0 - m, b1 - m
    if a0 >= b1:
        a0, a1 = a0 - m, a1 - m
    return a0, a1, b0, b1


def arc_overlap(K: ConvexPolygon, sec_p: Sector, sec_q: Sector) -> tuple[float, float] | None:
    """Overlap of the two sectors' outer boundary arcs, unwrapped; None if empty."""
    a0, a1, b0, b1 = _unwrapped_arcs(K, sec_p, sec_q)
    lo, hi = max(a0, b0), min(a1, b1)
    if hi - lo <= 1e-12:
        return None
    return lo, hi


def _equal_pair_piece(K: ConvexPolygon, frame: PairFrame,
                      sec_p: Sector, sec_q: Sector,
                      a: HPoint, ap: HPoint,
                      x: float, y: float, xp: float, yp: float,
                      anchor: Point | None) -> BisectorPiece:
    """Piece for two sectors exposing the same (front, back) edge pair.

    The distance difference is constant along each ray through the shared
    apex.  Generically exactly one ray of the pencil is equidistant and the
    piece is that line; if every ray ties, the region is a widened (2D)
    bisector and the trace follows the canonical segment from the entry
    anchor to the midpoint of the outer-arc overlap.
    """
    ov = arc_overlap(K, sec_p, sec_q)
    if ov is None:
        raise DegeneracyError("equal sector edge pairs with empty arc overlap")
    lo, hi = ov
    e = sec_p.front_edge
    na, nb = -K.edges_abc[e, 0], -K.edges_abc[e, 1]   # inward unit normal
    eps_in = 1e-7 * K.diameter

    cx = sum(v.x for v in K.vertices) / K.m
    cy = sum(v.y for v in K.vertices) / K.m

    def probe(tb: float) -> Point:
        bp = K.boundary_point(tb % K.m)
        z = Point(bp.x + eps_in * na, bp.y + eps_in * nb)
        if K.signed_depth(z) > -0.1 * eps_in:
            # arc endpoint sits on a polygon vertex; the edge normal exits
            # across the adjacent edge, so step toward the vertex average
            dx, dy = cx - bp.x, cy - bp.y
            s = math.hypot(dx, dy)
            z = Point(bp.x + eps_in * dx / s, bp.y + eps_in * dy / s)
        return z

    def diff_at(tb: float) -> float:
        z = probe(tb)
        return hilbert_distance(K, z, frame.p) - hilbert_distance(K, z, frame.q)

    inner = [lo + f * (hi - lo) for f in (0.1, 0.3, 0.5, 0.7, 0.9)]
    if all(abs(diff_at(t)) < 1e-9 for t in inner):
        # whole pencil ties: widened region
        if anchor is None:
            raise WidenedRegionError(
                "equal sector edge pairs: widened bisector region needs an anchor"
            )
        target = K.boundary_point(0.5 * (lo + hi))
        dx, dy = target.x - anchor.x, target.y - anchor.y
        s = math.hypot(dx, dy)
        if s <= 1e-12 * K.diameter:
            raise DegeneracyError("widened-region anchor already on the boundary")
        coeffs = np.array(
            [[anchor.x, anchor.y, 1.0], [dx / s, dy / s, 0.0], [0.0, 0.0, 0.0]]
        )
        nan = math.nan
        return BisectorPiece(
            frame=frame, sec_p=sec_p, sec_q=sec_q,
            e=sec_p.front_edge, f=sec_p.back_edge,
            ep=sec_q.front_edge, fp=sec_q.back_edge, a=a, ap=ap,
            x=x, y=y, xp=xp, yp=yp, o=nan, A=nan, B=nan, C=nan,
            coeffs=coeffs, linear=True, widened=True,
        )
    h_lo = diff_at(lo)
    h_hi = diff_at(hi)
    if h_lo * h_hi > 0.0:
        raise DegeneracyError("equal-pair sector region holds no bisector ray")
    t_a, t_b = lo, hi
    v_a = h_lo
    for _ in range(100):
        t_m = 0.5 * (t_a + t_b)
        v_m = diff_at(t_m)
        if (v_m < 0.0) == (v_a < 0.0):
            t_a, v_a = t_m, v_m
        else:
            t_b = t_m
    zstar = probe(0.5 * (t_a + t_b))
    if a.is_at_infinity():
        s = math.hypot(a.hx, a.hy)
        dx, dy = a.hx / s, a.hy / s
    else:
        dx, dy = zstar.x - a.hx / a.hw, zstar.y - a.hy / a.hw
        s = math.hypot(dx, dy)
        if s <= 1e-12 * K.diameter:
            raise DegeneracyError("equal-pair apex coincides with the bisector point")
        dx, dy = dx / s, dy / s
    if dx * na + dy * nb < 0.0:
        dx, dy = -dx, -dy
    coeffs = np.array([[zstar.x, zstar.y, 1.0], [dx, dy, 0.0], [0.0, 0.0, 0.0]])
    nan = math.nan
    return BisectorPiece(
        frame=frame, sec_p=sec_p, sec_q=sec_q,
        e=sec_p.front_edge, f=sec_p.back_edge,
        ep=sec_q.front_edge, fp=sec_q.back_edge, a=a, ap=ap,
        x=x, y=y, xp=xp, yp=yp, o=nan, A=nan, B=nan, C=nan,
        coeffs=coeffs, linear=True,
    )


def make_piece(K: ConvexPolygon, frame: PairFrame,
               sec_p: Sector, sec_q: Sector,
               anchor: Point | None = None) -> BisectorPiece:
    """Build the bisector piece for one sector pair of the two sites.

    ``anchor`` is required for widened pieces (both sectors expose the same
    edge pair): there the distance difference is constant along rays through
    the common apex, so either no bisector point lies in the region or the
    whole region is equidistant.  In the latter case the canonical trace runs
    straight from the anchor (entry) point to the midpoint of the overlap of
    the two outer arcs.
    """
    e, f = sec_p.front_edge, sec_p.back_edge
    ep, fp = sec_q.front_edge, sec_q.back_edge
    x = frame.line_scal(K.edge_lines[e])
    y = frame.line_scal(K.edge_lines[f])
    xp = frame.line_scal(K.edge_lines[ep])
    yp = frame.line_scal(K.edge_lines[fp])
    a = intersect_lines(K.edge_lines[e], K.edge_lines[f])
    ap = intersect_lines(K.edge_lines[ep], K.edge_lines[fp])
    if e == ep and f == fp:
        return _equal_pair_piece(K, frame, sec_p, sec_q, a, ap,
                                 x, y, xp, yp, anchor)
    o = equalizing_point(x, 0.0, y, xp, frame.d, yp)
    A, B, C = curve_coefficients(x, 0.0, y, xp, frame.d, yp, o)
    o_pt = frame.point(o)
    linear = {e, f} == {ep, fp}
    if linear:
        if a.is_at_infinity():
            dx, dy = a.hx, a.hy
        else:
            dx, dy = o_pt.x - a.hx / a.hw, o_pt.y - a.hy / a.hw
        s = math.hypot(dx, dy)
        coeffs = np.array(
            [[o_pt.x, o_pt.y, 1.0], [dx / s, dy / s, 0.0], [0.0, 0.0, 0.0]]
        )
    else:
        # S(alpha) = S0 + alpha*w on the site line, S0 at scalar o
        S0 = (o_pt.x, o_pt.y, 1.0)
        w = (frame.ux, frame.uy, 0.0)
        g0 = _apex_cross_point(a, *S0)
        g1 = _apex_cross_point(a, *w)
        aS0 = _apex_cross_point(ap, *S0)
        aw = _apex_cross_point(ap, *w)
        h0 = B * aS0
        h1 = -A * aS0 + C * aw
        c0 = np.cross(g0, h0)
        c1 = np.cross(g0, h1) + np.cross(g1, h0)
        c2 = np.cross(g1, h1)
        coeffs = np.vstack([c0, c1, c2])
        scale = np.max(np.abs(coeffs))
        if scale == 0.0:
            raise DegeneracyError("degenerate bisector piece")
        coeffs = coeffs / scale
        # If the three coordinate quadratics share a root, the parameterization
        # has a base point (all coordinates vanish there) and the curve is
        # really a line.  Deflate to the linear factor: z(t) = c2*t + (c1+c2*t*).
        j = int(np.argmax(np.abs(coeffs[2])))
        if abs(coeffs[2][j]) > 1e-14:
            disc = coeffs[1][j] ** 2 - 4.0 * coeffs[2][j] * coeffs[0][j]
            if disc >= 0.0:
                sq = math.sqrt(disc)
                for tstar in ((-coeffs[1][j] + sq) / (2.0 * coeffs[2][j]),
                              (-coeffs[1][j] - sq) / (2.0 * coeffs[2][j])):
                    if abs(tstar) > 1e6:
                        continue
                    v = coeffs[0] + tstar * (coeffs[1] + tstar * coeffs[2])
                    if np.max(np.abs(v)) <= 1e-9 * (1.0 + tstar * tstar):
                        d = coeffs[1] + coeffs[2] * tstar
                        coeffs = np.vstack([d, coeffs[2], np.zeros(3)])
                        coeffs = coeffs / np.max(np.abs(coeffs))
                        break
    return BisectorPiece(
        frame=frame, sec_p=sec_p, sec_q=sec_q,
        e=e, f=f, ep=ep, fp=fp, a=a, ap=ap,
        x=x, y=y, xp=xp, yp=yp, o=o, A=A, B=B, C=C,
        coeffs=coeffs, linear=linear,
    )


def widened_entry_piece(K: ConvexPolygon, frame: PairFrame,
                        fan_p: "SectorFan", fan_q: "SectorFan",
                        ip: int, iq: int, z: Point) -> BisectorPiece:
    """Canonical segment through a widened region entered at boundary point z.

    Travel is ccw around frame.p: the region is left through whichever
    lateral sector chord ends at the ccw end of the outer-arc overlap, at the
    point where the adjacent piece's curve crosses that chord.
    """
    sec_p, sec_q = fan_p[ip], fan_q[iq]
    a0, a1, b0, b1 = _unwrapped_arcs(K, sec_p, sec_q)
    if min(a1, b1) - max(a0, b0) <= 1e-12:
        raise DegeneracyError("widened entry outside the outer-arc overlap")
    # the region's interior corner: the lateral chords bounding the overlap
    # (one from each site, or the region would contain a site) meet there,
    # and the strict bisector resumes at that corner
    if a1 < b1:
        hi_chord = line_through(frame.p, K.boundary_point(sec_p.t1))
    else:
        hi_chord = line_through(frame.q, K.boundary_point(sec_q.t1))
    if b0 > a0:
        lo_chord = line_through(frame.q, K.boundary_point(sec_q.t0))
    else:
        lo_chord = line_through(frame.p, K.boundary_point(sec_p.t0))
    corner = intersect_lines(hi_chord, lo_chord)
    if corner.is_at_infinity():
        raise DegeneracyError("widened region has no interior corner")
    target = corner.to_point()
    if K.signed_depth(target) > -1e-12 * K.diameter:
        raise DegeneracyError("widened-region corner is not interior")
    dx, dy = target.x - z.x, target.y - z.y
    s = math.hypot(dx, dy)
    if s <= 1e-12 * K.diameter:
        raise DegeneracyError("widened entry coincides with its continuation point")
    coeffs = np.array([[z.x, z.y, 1.0], [dx / s, dy / s, 0.0], [0.0, 0.0, 0.0]])
    nan = math.nan
    return BisectorPiece(
        frame=frame, sec_p=sec_p, sec_q=sec_q,
        e=sec_p.front_edge, f=sec_p.back_edge,
        ep=sec_q.front_edge, fp=sec_q.back_edge,
        a=intersect_lines(K.edge_lines[sec_p.front_edge],
                          K.edge_lines[sec_p.back_edge]),
        ap=intersect_lines(K.edge_lines[sec_q.front_edge],
                           K.edge_lines[sec_q.back_edge]),
        x=nan, y=nan, xp=nan, yp=nan, o=nan, A=nan, B=nan, C=nan,
        coeffs=coeffs, linear=True, widened=True,
    )


@dataclass
class TraceArc:
    """A traversed stretch of one piece, from t0 to t1 in trace order."""

    piece: BisectorPiece
    t0: float
    t1: float
    z0: Point
    z1: Point
    direction: int = 1     # sign of parameter travel; the sweep may pass
                           # through t = infinity (rational parameterization)

    def reversed(self) -> "TraceArc":
        return TraceArc(self.piece, self.t1, self.t0, self.z1, self.z0,
                        -self.direction)

    def param_at(self, frac: float) -> float:
        """Parameter a fraction of the way along the arc, in travel order."""
        phi0 = math.atan(self.t0)
        phi1 = math.atan(self.t1)
        span = ((phi1 - phi0) * self.direction) % math.pi
        phi = phi0 + self.direction * frac * span
        return math.tan(phi)

    def midpoint(self) -> Point:
        return self.piece.point(self.param_at(0.5))


# trace event kinds
SECTOR = "sector"
BOUNDARY = "boundary"
STOPLINE = "stopline"


@dataclass
class TraceEvent:
    kind: str
    t: float
    z: Point
    edge: int = -1         # boundary edge for BOUNDARY events
    step_p: int = 0        # sector increments (both may fire at once in
    step_q: int = 0        # symmetric configurations)


class TraceState:
    def __init__(self, piece: BisectorPiece, t: float, z: Point, direction: int,
                 ip: int, iq: int, orientation: int):
        self.piece = piece
        self.t = t
        self.z = z
        self.direction = direction
        self.ip = ip
        self.iq = iq
        self.orientation = orientation


class BisectorTracer:
    """Steps along the (p, q)-bisector, one sector pair at a time.

    ``orientation`` is +1 to walk counterclockwise around site p.
    """

    def __init__(self, K: ConvexPolygon, p: Point, q: Point,
                 fan_p: SectorFan | None = None, fan_q: SectorFan | None = None):
        self.K = K
        self.p = p
        self.q = q
        self.fan_p = fan_p if fan_p is not None else sectors(K, p)
        self.fan_q = fan_q if fan_q is not None else sectors(K, q)
        self.frame = PairFrame(K, p, q)

    def _piece(self, ip: int, iq: int) -> BisectorPiece:
        return make_piece(self.K, self.frame, self.fan_p[ip], self.fan_q[iq])

    def _pick_direction(self, piece: BisectorPiece, t: float, orientation: int) -> int:
        tx, ty = piece.tangent(t)
        s = math.hypot(tx, ty)
        if s == 0.0:
            raise DegeneracyError("stationary bisector parameterization")
        cr = _cross(piece.point(t).x - self.p.x, piece.point(t).y - self.p.y, tx, ty)
        if cr == 0.0:
            raise DegeneracyError("tangent aligned with the site ray")
        return orientation if cr > 0.0 else -orientation

    def start(self, z0: Point, orientation: int = 1,
              ip: int | None = None, iq: int | None = None) -> TraceState:
        if ip is None:
            ip = self.fan_p.locate_point(z0)
        if iq is None:
            iq = self.fan_q.locate_point(z0)
        piece = self._piece(ip, iq)
        t = piece.param_of_point(z0)
        direction = self._pick_direction(piece, t, orientation)
        return TraceState(piece, t, z0, direction, ip, iq, orientation)

    def _corner_lines(self, site: Point, sec: Sector) -> list[tuple[Line, Point, int]]:
        out = []
        for tb, step in ((sec.t0, -1), (sec.t1, +1)):
            corner = self.K.boundary_point(tb)
            out.append((line_through(site, corner), corner, step))
        return out

    def next_event(self, st: TraceState,
                   stop_lines: list[Line] | None = None) -> TraceEvent:
        """Earliest exit event of the current piece in the trace direction.

        Coincident events (within a geometric tolerance) are merged: in
        symmetric configurations both sites can change sector at one point,
        and a boundary hit dominates any sector change at the same point.
        """
        piece = st.piece
        K = self.K
        tol = 1e-11 * (1.0 + abs(st.t))
        # The parameterization is a Moebius/rational sweep of the curve: travel
        # continues through t = +-infinity, so order events on the circle
        # atan(t), and never past a pole of the parameterization (where the
        # curve leaves the affine plane).
        phi0 = math.atan(st.t)

        def travel(t: float) -> float:
            return ((math.atan(t) - phi0) * st.direction) % math.pi

        poles: list[float] = []
        cw = (piece.coeffs[0][2], piece.coeffs[1][2], piece.coeffs[2][2])
        if abs(cw[2]) > 1e-300:
            disc = cw[1] * cw[1] - 4.0 * cw[2] * cw[0]
            if disc >= 0.0:
                sq_ = math.sqrt(disc)
                poles = [(-cw[1] + sq_) / (2.0 * cw[2]), (-cw[1] - sq_) / (2.0 * cw[2])]
        elif abs(cw[1]) > 1e-300:
            poles = [-cw[0] / cw[1]]
        gate = min((travel(tp) for tp in poles if travel(tp) > 1e-12),
                   default=math.pi)

        def admissible(troot: float) -> bool:
            ahead = (troot - st.t) * st.direction
            if 0.0 <= ahead <= tol:
                return False        # the event just advanced through
            k = travel(troot)
            return 1e-15 < k < min(gate - 1e-12, math.pi - 1e-12)

        near = 1e-9 * K.diameter

        def at_current(z: Point) -> bool:
            # crossings at the current position were already consumed by the
            # coincident-event grouping of the previous step
            return math.hypot(z.x - st.z.x, z.y - st.z.y) <= near

        def leaves_region(troot: float) -> bool:
            # a curve can meet a chord near-tangentially and cross it twice
            # within a sliver; only a crossing that actually leaves the
            # current sector pair is an exit event
            zpast = piece.point(math.tan(math.atan(troot)
                                         + st.direction * 1e-9))
            return (self.fan_p.locate_point(zpast) != st.ip
                    or self.fan_q.locate_point(zpast) != st.iq)

        cands: list[tuple[float, str, Point, int, int, int]] = []
        sp = piece.sec_p
        sq = piece.sec_q
        for (L, corner, step) in self._corner_lines(self.p, sp):
            for troot in piece.crossing_params(L):
                if not admissible(troot):
                    continue
                z = piece.point(troot)
                if at_current(z):
                    continue
                if (z.x - self.p.x) * (corner.x - self.p.x) + \
                   (z.y - self.p.y) * (corner.y - self.p.y) <= 0.0:
                    continue
                if not leaves_region(troot):
                    continue
                cands.append((troot, SECTOR, z, step, 0, -1))
        for (L, corner, step) in self._corner_lines(self.q, sq):
            for troot in piece.crossing_params(L):
                if not admissible(troot):
                    continue
                z = piece.point(troot)
                if at_current(z):
                    continue
                if (z.x - self.q.x) * (corner.x - self.q.x) + \
                   (z.y - self.q.y) * (corner.y - self.q.y) <= 0.0:
                    continue
                if not leaves_region(troot):
                    continue
                cands.append((troot, SECTOR, z, 0, step, -1))
        for e in {sp.front_edge, sq.front_edge}:
            for troot in piece.crossing_params(K.edge_lines[e]):
                if not admissible(troot):
                    continue
                z = piece.point(troot)
                if at_current(z):
                    continue
                v0 = K.vertices[e]
                v1 = K.vertices[(e + 1) % K.m]
                wx, wy = v1.x - v0.x, v1.y - v0.y
                frac = ((z.x - v0.x) * wx + (z.y - v0.y) * wy) / (wx * wx + wy * wy)
                if -1e-7 <= frac <= 1.0 + 1e-7:
                    cands.append((troot, BOUNDARY, z, 0, 0, e))
        for L in stop_lines or ():
            for troot in piece.crossing_params(L):
                if not admissible(troot):
                    continue
                cands.append((troot, STOPLINE, piece.point(troot), 0, 0, -1))
        if not cands:
            raise DegeneracyError("bisector trace found no exit event")
        cands.sort(key=lambda c: travel(c[0]))
        t0, _, z0, _, _, _ = cands[0]
        same_tol = 1e-9 * K.diameter
        group = [c for c in cands
                 if math.hypot(c[2].x - z0.x, c[2].y - z0.y) <= same_tol]
        kinds = {c[1] for c in group}
        if BOUNDARY in kinds:
            c = next(c for c in group if c[1] == BOUNDARY)
            return TraceEvent(BOUNDARY, c[0], c[2], edge=c[5])
        if STOPLINE in kinds:
            c = next(c for c in group if c[1] == STOPLINE)
            return TraceEvent(STOPLINE, c[0], c[2])
        step_p = max(min(sum(c[3] for c in group), 1), -1)
        step_q = max(min(sum(c[4] for c in group), 1), -1)
        return TraceEvent(SECTOR, t0, z0, step_p=step_p, step_q=step_q)

    def advance(self, st: TraceState, ev: TraceEvent) -> TraceState:
        """State after an event; only sector events continue the trace."""
        if ev.kind != SECTOR:
            raise ValueError(f"cannot advance through event kind {ev.kind}")
        ip = (st.ip + ev.step_p) % len(self.fan_p)
        iq = (st.iq + ev.step_q) % len(self.fan_q)
        sp, sq = self.fan_p[ip], self.fan_q[iq]
        piece = make_piece(self.K, self.frame, sp, sq, anchor=ev.z)
        if piece.widened:
            # widened region: run its canonical closing segment outward
            return TraceState(piece, 0.0, ev.z, +1, ip, iq, st.orientation)
        t = piece.param_of_point(ev.z)
        direction = self._pick_direction(piece, t, st.orientation)
        return TraceState(piece, t, piece.point(t), direction, ip, iq, st.orientation)


def trace_half(tracer: BisectorTracer, z0: Point, orientation: int,
               max_steps: int | None = None) -> list[TraceArc]:
    """Trace from z0 in one orientation until the boundary of K."""
    K = tracer.K
    st = tracer.start(z0, orientation)
    arcs: list[TraceArc] = []
    limit = max_steps if max_steps is not None else 8 * K.m + 16
    for _ in range(limit):
        ev = tracer.next_event(st)
        arcs.append(TraceArc(st.piece, st.t, ev.t, st.z, ev.z, st.direction))
        if ev.kind == BOUNDARY:
            return arcs
        st = tracer.advance(st, ev)
    raise DegeneracyError("bisector trace failed to terminate")


def trace_full_bisector(K: ConvexPolygon, p: Point, q: Point) -> list[TraceArc]:
    """Full (p, q)-bisector: a chain of arcs from boundary to boundary.

    The chain runs counterclockwise around p; both of its endpoints are on
    the boundary of K.
    """
    tracer = BisectorTracer(K, p, q)
    z0 = hilbert_midpoint(K, p, q)
    fwd = trace_half(tracer, z0, +1)
    bwd = trace_half(tracer, z0, -1)
    return [a.reversed() for a in reversed(bwd)] + fwd


def chain_pieces(chain: list[TraceArc]) -> list[tuple[int, int, int, int]]:
    """Distinct consecutive piece signatures along a traced chain."""
    out: list[tuple[int, int, int, int]] = []
    for arc in chain:
        sig = arc.piece.signature
        if not out or out[-1] != sig:
            out.append(sig)
    return out


def boundary_score(K: ConvexPolygon, t: float, site: Point) -> float:
    """Limit potential of a site at boundary point b(t).

    For interior z -> b, d(z, p) - d(z, p') tends to
    boundary_score(t, p) - boundary_score(t, p').
    """
    b = K.boundary_point(t)
    edge = int(t % K.m)
    v0 = K.vertices[edge]
    v1 = K.vertices[(edge + 1) % K.m]
    wx, wy = v1.x - v0.x, v1.y - v0.y
    wn = math.hypot(wx, wy)
    dx, dy = site.x - b.x, site.y - b.y
    dist_pb = math.hypot(dx, dy)
    if dist_pb == 0.0:
        raise GeometryError("site on the boundary")
    tex, _ = K.ray_exit(site, dx, dy)
    far = math.hypot(tex * dx, tex * dy)          # |site - y|
    by = dist_pb + far                             # |b - y|
    sin_th = abs(_cross(wx / wn, wy / wn, dx / dist_pb, dy / dist_pb))
    if sin_th == 0.0:
        raise DegeneracyError("site collinear with a boundary edge at b")
    return 0.5 * (math.log(by / far) + math.log(dist_pb) + math.log(sin_th))


def boundary_sign(K: ConvexPolygon, t: float, p: Point, q: Point) -> float:
    """Negative where p wins the boundary point b(t) in the limit sense."""
    return boundary_score(K, t, p) - boundary_score(K, t, q)


def boundary_bisector_point(K: ConvexPolygon, p: Point, q: Point,
                            sec_p: Sector, sec_q: Sector) -> Point | None:
    """Where the (p,q)-bisector meets the boundary inside a sector pair.

    Returns None when the bisector does not reach the boundary within the
    overlap of the two sectors' outer arcs.  The two sectors must expose the
    same edge of K.
    """
    if sec_p.front_edge != sec_q.front_edge:
        return None
    m = K.m
    ov = arc_overlap(K, sec_p, sec_q)
    if ov is None:
        return None
    lo, hi = ov
    if sec_p.back_edge == sec_q.back_edge:
        # widened region: the whole overlap arc is equidistant in the limit;
        # its midpoint is the canonical representative
        return K.boundary_point(0.5 * (lo + hi))
    frame = PairFrame(K, p, q)
    piece = make_piece(K, frame, sec_p, sec_q)
    e = sec_p.front_edge
    for troot in piece.crossing_params(K.edge_lines[e]):
        z = piece.point(troot)
        tb = K.boundary_param(e, z)
        for shift in (0.0, -m, m):
            if lo - 1e-9 <= tb + shift <= hi + 1e-9:
                return z
    return None
