"""Voronoi diagram representation and shared construction machinery.

A diagram is a set of cells, one per active site.  Each cell boundary is a
counterclockwise cyclic list of elements: ``ArcElement`` (a stretch of the
bisector with a neighboring site) or ``BoundaryElement`` (a stretch of the
polygon boundary, split at polygon vertices).  Cells are star-shaped around
their sites, so a cell boundary is an angular graph and can be reassembled by
sorting elements around the site.

The two builders share ``ChainWalker`` (traces the frontier between an owner
group and a rival group of sites, switching pair members at Voronoi
vertices), ``boundary_walk`` (ownership walk along the polygon boundary via
the boundary limit potential), and ``rebuild_cell`` (clip a cell against a
traced frontier and reassemble it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .bisector import (
    BOUNDARY,
    SECTOR,
    BisectorTracer,
    TraceArc,
    TraceEvent,
    TraceState,
    WidenedRegionError,
    boundary_bisector_point,
    boundary_score,
    widened_entry_piece,
)
from .geometry import ConvexPolygon, DegeneracyError, GeometryError, Point
from .sectors import SectorFan, sectors


# ---------------------------------------------------------------------------
# cell elements

@dataclass
class ArcElement:
    """Bisector stretch with a neighbor site, ccw around the owning site."""

    neighbor: int
    arc: TraceArc

    @property
    def start(self) -> Point:
        return self.arc.z0

    @property
    def end(self) -> Point:
        return self.arc.z1

    def midpoint(self) -> Point:
        return self.arc.midpoint()


@dataclass
class BoundaryElement:
    """Polygon boundary stretch; params unwrapped, t0 < t1 <= t0 + m."""

    t0: float
    t1: float
    p0: Point
    p1: Point

    @property
    def start(self) -> Point:
        return self.p0

    @property
    def end(self) -> Point:
        return self.p1

    def t_mid(self) -> float:
        return 0.5 * (self.t0 + self.t1)


def boundary_elements(K: ConvexPolygon, t0: float, t1: float) -> list[BoundaryElement]:
    """Boundary stretch t0 -> t1 (unwrapped, ccw), split at polygon vertices."""
    if t1 < t0:
        raise GeometryError("boundary stretch must be unwrapped (t1 >= t0)")
    cuts = [t0]
    c = math.floor(t0) + 1.0
    while c < t1 - 1e-12:
        if c > t0 + 1e-12:
            cuts.append(c)
        c += 1.0
    cuts.append(t1)
    out = []
    for a, b in zip(cuts, cuts[1:]):
        if b - a > 1e-12:
            out.append(BoundaryElement(a, b, K.boundary_point(a), K.boundary_point(b)))
    return out


def _arc_travel(arc: TraceArc, t: float) -> float:
    return ((math.atan(t) - math.atan(arc.t0)) * arc.direction) % math.pi


def _arc_total(arc: TraceArc) -> float:
    return _arc_travel(arc, arc.t1)


def arc_contains_param(arc: TraceArc, t: float, margin: float = 1e-12) -> bool:
    tr = _arc_travel(arc, t)
    return margin < tr < _arc_total(arc) - margin


def point_on_arc(K: ConvexPolygon, arc: TraceArc, z: Point) -> float | None:
    """Arc parameter of z if z lies strictly inside the arc, else None."""
    try:
        t = arc.piece.param_of_point(z)
    except DegeneracyError:
        return None
    if not arc_contains_param(arc, t):
        return None
    w = arc.piece.point(t)
    if math.hypot(w.x - z.x, w.y - z.y) > 1e-7 * K.diameter:
        return None
    return t


def split_arc_element(el: ArcElement, params_points: list[tuple[float, Point]]
                      ) -> list[ArcElement]:
    """Split an arc element at interior parameters, in travel order."""
    arc = el.arc
    items = sorted(params_points, key=lambda pp: _arc_travel(arc, pp[0]))
    out = []
    t_prev, z_prev = arc.t0, arc.z0
    for t, z in items:
        out.append(ArcElement(el.neighbor,
                              TraceArc(arc.piece, t_prev, t, z_prev, z, arc.direction)))
        t_prev, z_prev = t, z
    out.append(ArcElement(el.neighbor,
                          TraceArc(arc.piece, t_prev, arc.t1, z_prev, arc.z1,
                                   arc.direction)))
    return out


def _el_len(K: ConvexPolygon, el) -> float:
    if isinstance(el, BoundaryElement):
        return (el.t1 - el.t0) * K.diameter
    return math.hypot(el.end.x - el.start.x, el.end.y - el.start.y)


# ---------------------------------------------------------------------------
# boundary limit potentials, vectorized

def boundary_scores(K: ConvexPolygon, ts, sites_xy: np.ndarray) -> np.ndarray:
    """(T, S) matrix of boundary limit potentials at boundary params ts.

    Matches ``bisector.boundary_score`` applied pointwise.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=np.float64)) % K.m
    S = np.asarray(sites_xy, dtype=np.float64).reshape(-1, 2)
    m = K.m
    e = np.minimum(np.floor(ts).astype(int), m - 1)
    V = np.asarray([(v.x, v.y) for v in K.vertices])
    V0 = V[e]
    V1 = V[(e + 1) % m]
    frac = (ts - e)[:, None]
    b = V0 + frac * (V1 - V0)                          # (T, 2)
    w = V1 - V0
    w = w / np.hypot(w[:, 0], w[:, 1])[:, None]        # (T, 2)
    d = S[None, :, :] - b[:, None, :]                  # (T, S, 2)
    dist = np.hypot(d[:, :, 0], d[:, :, 1])            # (T, S)
    A = K.edges_abc
    val = S @ A[:, :2].T + A[:, 2]                     # (S, m)
    den = np.einsum("tsk,mk->tsm", d, A[:, :2])        # (T, S, m)
    with np.errstate(divide="ignore", invalid="ignore"):
        tt = -val[None, :, :] / den
        tt = np.where(den > 0.0, tt, np.inf)
        tfwd = np.min(tt, axis=2)                      # (T, S)
        far = tfwd * dist
        by = dist + far
        sin_th = np.abs(w[:, None, 0] * d[:, :, 1] - w[:, None, 1] * d[:, :, 0]) / dist
        return 0.5 * (np.log(by / far) + np.log(dist) + np.log(sin_th))


# ---------------------------------------------------------------------------
# the diagram

class AugmentedDiagram:
    """Cells over K for the active subset of a global site list."""

    def __init__(self, K: ConvexPolygon, sites: list[Point]):
        self.K = K
        self.sites = [Point(float(s[0]), float(s[1])) for s in sites]
        self.sites_xy = np.asarray([(s.x, s.y) for s in self.sites],
                                   dtype=np.float64).reshape(-1, 2)
        self.cells: dict[int, list] = {}
        self.fan_cache: dict[int, SectorFan] = {}

    # -- basic accessors ----------------------------------------------------

    @property
    def active(self) -> list[int]:
        return sorted(self.cells)

    def site(self, i: int) -> Point:
        return self.sites[i]

    def fan(self, i: int) -> SectorFan:
        f = self.fan_cache.get(i)
        if f is None:
            f = sectors(self.K, self.sites[i])
            self.fan_cache[i] = f
        return f

    def add_site(self, p: Point) -> int:
        self.sites.append(Point(float(p[0]), float(p[1])))
        self.sites_xy = np.asarray([(s.x, s.y) for s in self.sites],
                                   dtype=np.float64).reshape(-1, 2)
        return len(self.sites) - 1

    def set_full_cell(self, i: int) -> None:
        """Cell of a lone site: the whole polygon, one element per edge."""
        self.cells[i] = boundary_elements(self.K, 0.0, float(self.K.m))

    def neighbors(self, i: int) -> list[int]:
        out = set()
        for el in self.cells[i]:
            if isinstance(el, ArcElement):
                out.add(el.neighbor)
        return sorted(out)

    # -- derived structure --------------------------------------------------

    def voronoi_edges(self) -> list[tuple[tuple[int, int], list[TraceArc]]]:
        """Arcs per unordered site pair, taken from the lower-index cell."""
        edges: dict[tuple[int, int], list[TraceArc]] = {}
        for i in self.active:
            for el in self.cells[i]:
                if isinstance(el, ArcElement) and el.neighbor > i:
                    edges.setdefault((i, el.neighbor), []).append(el.arc)
        return sorted(edges.items())

    @staticmethod
    def edge_piece_count(arcs: list[TraceArc]) -> int:
        count = 0
        prev = None
        for a in arcs:
            sig = a.piece.signature
            if sig != prev:
                count += 1
                prev = sig
        return count

    def voronoi_vertices(self) -> list[tuple[Point, tuple[int, int, int]]]:
        """Points where two arc elements with different neighbors meet."""
        h = 1e-7 * self.K.diameter
        seen: dict[tuple, tuple[Point, tuple[int, int, int]]] = {}
        for i in self.active:
            cell = self.cells[i]
            for k, el in enumerate(cell):
                nxt = cell[(k + 1) % len(cell)]
                if isinstance(el, ArcElement) and isinstance(nxt, ArcElement) \
                        and el.neighbor != nxt.neighbor:
                    z = el.end
                    if self.K.signed_depth(z) > -1e-9 * self.K.diameter:
                        continue   # two edges meeting on the polygon boundary
                    triple = tuple(sorted((i, el.neighbor, nxt.neighbor)))
                    key = (triple, round(z.x / h), round(z.y / h))
                    seen.setdefault(key, (z, triple))
        return sorted(seen.values(), key=lambda vt: (vt[1], vt[0].x, vt[0].y))

    def statistics(self) -> dict:
        edges = self.voronoi_edges()
        return {
            "sites": len(self.active),
            "edges": len(edges),
            "vertices": len(self.voronoi_vertices()),
            "pieces": sum(self.edge_piece_count(arcs) for _, arcs in edges),
            "triangles": sum(len(c) for c in self.cells.values()),
        }

    # -- queries ------------------------------------------------------------

    def classify(self, pts: np.ndarray) -> np.ndarray:
        """Nearest-site labels by greedy descent on the cell adjacency graph.

        From any cell, some neighbor is strictly nearer unless the point is
        already in the cell (segments are geodesics, so crossing a cell
        boundary toward the query never increases the site distance).
        """
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        active = self.active
        out = np.full(len(pts), active[0], dtype=np.int64)
        if len(active) == 1:
            return out
        neigh = {i: np.asarray(sorted(set(self.neighbors(i)) | {i}))
                 for i in active}
        edges = self.K.edges_abc
        for _ in range(4 * len(active) + 16):
            moved = False
            for i in active:
                mask = out == i
                if not mask.any():
                    continue
                cand = neigh[i]
                dm = _kernels.distance_matrix(edges, pts[mask], self.sites_xy[cand])
                new = cand[np.argmin(dm, axis=1)]
                if np.any(new != i):
                    moved = True
                    out[mask] = new
            if not moved:
                return out
        raise DegeneracyError("cell-adjacency descent failed to converge")

    def locate_triangle(self, i: int, q: Point) -> int:
        """Index of the spoke triangle (element) of cell i containing q's direction."""
        cell = self.cells[i]
        s = self.sites[i]
        raw = [math.atan2(el.start.y - s.y, el.start.x - s.x) for el in cell]
        base = raw[0]
        ang = [(a - base) % (2.0 * math.pi) for a in raw]
        th = (math.atan2(q.y - s.y, q.x - s.x) - base) % (2.0 * math.pi)
        import bisect as _bisect
        k = _bisect.bisect_right(ang, th) - 1
        return k % len(cell)

    def cell_boundary_samples(self, i: int, count: int,
                              rng: np.random.Generator) -> np.ndarray:
        cell = self.cells[i]
        out = []
        for _ in range(count):
            el = cell[int(rng.integers(len(cell)))]
            f = float(rng.uniform(0.05, 0.95))
            if isinstance(el, BoundaryElement):
                z = self.K.boundary_point(el.t0 + f * (el.t1 - el.t0))
            else:
                z = el.arc.piece.point(el.arc.param_at(f))
            out.append((z.x, z.y))
        return np.asarray(out)


# ---------------------------------------------------------------------------
# frontier tracing

class RivalMismatch(Exception):
    """A start point's true neighbor differs from the requested rival.

    Raised when a third site is strictly nearer than the requested pair just
    inside a boundary entry point (several bisectors can end on one polygon
    vertex; the boundary handover there does not name the interior neighbor).
    """

    def __init__(self, jnew: int):
        super().__init__(f"true neighbor at the start point is site {jnew}")
        self.jnew = jnew


class ChainWalker:
    """Traces the frontier between owner sites and rival sites.

    Travel is counterclockwise around the current owner.  When a third site
    of either group becomes nearest on the current arc, the arc is truncated
    at the equidistant point (a Voronoi vertex of the result) and the pair
    member on that side switches.
    """

    SAMPLES = 8

    def __init__(self, K: ConvexPolygon, sites_xy: np.ndarray,
                 owner_ids, rival_ids, fan_cache: dict[int, SectorFan]):
        self.K = K
        self.sxy = np.asarray(sites_xy, dtype=np.float64)
        self.owner_ids = sorted(owner_ids)
        self.rival_ids = sorted(rival_ids)
        self.rival_set = set(self.rival_ids)
        self.all_ids = np.asarray(sorted(set(self.owner_ids) | self.rival_set))
        self.fan_cache = fan_cache
        self._tracers: dict[tuple[int, int], BisectorTracer] = {}

    def site(self, i: int) -> Point:
        return Point(self.sxy[i, 0], self.sxy[i, 1])

    def _fan(self, i: int) -> SectorFan:
        f = self.fan_cache.get(i)
        if f is None:
            f = sectors(self.K, self.site(i))
            self.fan_cache[i] = f
        return f

    def tracer(self, iO: int, iR: int) -> BisectorTracer:
        tr = self._tracers.get((iO, iR))
        if tr is None:
            tr = BisectorTracer(self.K, self.site(iO), self.site(iR),
                                self._fan(iO), self._fan(iR))
            self._tracers[(iO, iR)] = tr
        return tr

    def start(self, z: Point, iO: int, iR: int, inward: bool = False):
        tr = self.tracer(iO, iR)
        ip0 = tr.fan_p.locate_point(z)
        iq0 = tr.fan_q.locate_point(z)
        # z may sit on a sector chord (boundary re-entry points often do), in
        # which case point location is ambiguous: try neighboring pairs until
        # one holds a bisector passing through z
        near = 1e-7 * self.K.diameter
        last_err: Exception | None = None
        fallback: TraceState | None = None
        for dp, dq in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1),
                       (1, -1), (-1, 1), (1, 1), (-1, -1)):
            ip, iq = ip0 + dp, iq0 + dq
            try:
                st = tr.start(z, +1, ip=ip, iq=iq)
            except WidenedRegionError:
                if dp or dq:
                    continue
                # boundary entry into a widened (2D-equidistant) region: run
                # its canonical segment to the region's interior corner
                if not inward:
                    raise DegeneracyError(
                        "frontier trace starts inside a widened region"
                    )
                piece = widened_entry_piece(self.K, tr.frame, tr.fan_p,
                                            tr.fan_q, ip0, iq0, z)
                # the canonical segment must continue the counterclockwise
                # travel around the owner; at the far endpoint of a frontier
                # component it runs clockwise instead, and starting there
                # would retrace the component backwards
                po = self.site(iO)
                if (z.x - po.x) * piece.coeffs[1][1] \
                        - (z.y - po.y) * piece.coeffs[1][0] <= 0.0:
                    raise DegeneracyError(
                        "widened entry runs clockwise around the owner")
                return TraceState(piece, 0.0, z, +1, ip0, iq0, +1)
            except DegeneracyError as e:
                last_err = e
                continue
            w = st.piece.point(st.t)
            if math.hypot(w.x - z.x, w.y - z.y) > near:
                continue
            # probe a step along the curve: it must head into the polygon and
            # keep the pair equidistant there (a conic can pass through the
            # start point with a branch that is not the actual bisector,
            # especially at polygon vertices)
            phi = math.atan(st.t) + st.direction * 1e-7
            zp = st.piece.point(math.tan(phi))
            if self.K.signed_depth(zp) > -1e-12 * self.K.diameter:
                if inward:
                    last_err = DegeneracyError(
                        "frontier trace at a boundary start heads out of the polygon"
                    )
                    continue
                zp = z
            do = float(self._dist_at(zp, np.asarray([iO]))[0])
            dr = float(self._dist_at(zp, np.asarray([iR]))[0])
            # distances blow up toward the boundary (gradient ~ 1/depth), so
            # the probe's tiny off-curve error inflates the difference there
            depth_zp = abs(self.K.signed_depth(zp))
            eq_tol = 1e-6 * (1.0 + do) \
                + 1e-10 * self.K.diameter / max(depth_zp, 1e-7 * self.K.diameter)
            if abs(do - dr) > eq_tol:
                last_err = DegeneracyError(
                    "candidate start curve is not the pair bisector"
                )
                continue
            others = self.all_ids[(self.all_ids != iO) & (self.all_ids != iR)]
            if others.size:
                dth = self._dist_at(zp, others)
                j = int(np.argmin(dth))
                if float(dth[j]) < do - 1e-6 * (1.0 + do):
                    raise RivalMismatch(int(others[j]))
            # several pairs' curves can pass the tests at a polygon vertex
            # (all their conics meet there); the one whose probe point lies in
            # its own sector pair carries the departing arc
            np_ = len(tr.fan_p)
            nq_ = len(tr.fan_q)
            if tr.fan_p.locate_point(zp) == ip % np_ \
                    and tr.fan_q.locate_point(zp) == iq % nq_:
                return st
            if fallback is None:
                fallback = st
        if fallback is not None:
            return fallback
        if inward:
            # no candidate pair even holds a bisector through z: the walk may
            # have named a rival whose cell only touches z on the boundary;
            # ask the sites themselves from just inside
            depth = self.K.signed_depth(z)
            if depth > -1e-9 * self.K.diameter:
                eps = 1e-7 * self.K.diameter
                abc = self.K.edges_abc
                e = int(np.argmax(abc[:, 0] * z.x + abc[:, 1] * z.y
                                  + abc[:, 2]))
                zin = Point(z.x - eps * self.K.edges_abc[e, 0],
                            z.y - eps * self.K.edges_abc[e, 1])
                if self.K.signed_depth(zin) < -0.1 * eps:
                    do = float(self._dist_at(zin, np.asarray([iO]))[0])
                    others = self.all_ids[self.all_ids != iO]
                    dth = self._dist_at(zin, others)
                    j = int(others[int(np.argmin(dth))])
                    if j != iR and np.isfinite(do):
                        raise RivalMismatch(j)
        raise last_err or DegeneracyError("no sector pair holds the start point")

    def _dist_at(self, z: Point, ids: np.ndarray) -> np.ndarray:
        return _kernels.distance_matrix(
            self.K.edges_abc, np.asarray([[z.x, z.y]]), self.sxy[ids])[0]

    def _scan_switch(self, arc: TraceArc, iO: int, iR: int):
        """First point on the arc where a third site becomes nearest, or None."""
        others = self.all_ids[(self.all_ids != iO) & (self.all_ids != iR)]
        if others.size == 0:
            return None
        band = 1e-11 * self.K.diameter
        fracs, zs = [], []
        end_clipped = False
        for k in range(1, self.SAMPLES + 1):
            f = k / self.SAMPLES
            z = arc.piece.point(arc.param_at(f))
            if self.K.signed_depth(z) > -band:
                end_clipped = end_clipped or k == self.SAMPLES
                continue
            fracs.append(f)
            zs.append((z.x, z.y))
        if end_clipped:
            # the arc runs into the polygon boundary, where distances blow up
            # and the endpoint cannot be sampled; approach it geometrically so
            # a takeover hiding in the tail is still seen
            f = 1.0 - 1.0 / self.SAMPLES
            while True:
                f = 0.5 * (f + 1.0)
                if 1.0 - f < 1e-13:
                    break
                z = arc.piece.point(arc.param_at(f))
                if self.K.signed_depth(z) > -band:
                    break
                fracs.append(f)
                zs.append((z.x, z.y))
        if not zs:
            return None
        dm = _kernels.distance_matrix(self.K.edges_abc, np.asarray(zs), self.sxy[others])
        dcur = _kernels.distance_matrix(self.K.edges_abc, np.asarray(zs),
                                        self.sxy[[iO]])[:, 0]
        h = np.min(dm, axis=1) - dcur
        tol = 1e-10 * (1.0 + np.abs(dcur))
        bad = np.nonzero(h < -tol)[0]
        if bad.size == 0:
            return None
        k = int(bad[0])
        f_lo = fracs[k - 1] if k > 0 else 0.0
        f_hi = fracs[k]

        def h_of(f: float) -> float:
            z = arc.piece.point(arc.param_at(f))
            d = self._dist_at(z, others)
            dc = self._dist_at(z, np.asarray([iO]))[0]
            return float(np.min(d) - dc)

        for _ in range(60):
            fm = 0.5 * (f_lo + f_hi)
            if h_of(fm) < 0.0:
                f_hi = fm
            else:
                f_lo = fm
        fstar = 0.5 * (f_lo + f_hi)
        tstar = arc.param_at(fstar)
        zstar = arc.piece.point(tstar)
        if self.K.signed_depth(zstar) > -1e-8 * self.K.diameter:
            # the tie happens (to within the noise floor of the blown-up
            # distances there) where the arc exits the polygon; the boundary
            # event stands and the handover happens on the boundary
            return None
        jnew = int(others[int(np.argmin(self._dist_at(zstar, others)))])
        side = "rival" if jnew in self.rival_set else "owner"
        return tstar, zstar, jnew, side

    def step(self, st, iO: int, iR: int):
        """One trace step.  Returns one of
        ('switch', truncated_arc, zstar, jnew, side),
        ('boundary', arc, event), ('sector', arc, event)."""
        tr = self.tracer(iO, iR)
        ev = tr.next_event(st)
        if ev.kind == SECTOR and \
                self.K.signed_depth(ev.z) > -1e-8 * self.K.diameter:
            # the arc grazes the polygon boundary at a sector-chord corner
            # (often a polygon vertex) without a clean edge-crossing root;
            # treat it as the boundary exit it geometrically is
            abc = self.K.edges_abc
            e = int(np.argmax(abc[:, 0] * ev.z.x + abc[:, 1] * ev.z.y
                              + abc[:, 2]))
            ev = TraceEvent(BOUNDARY, ev.t, ev.z, edge=e)
        arc = TraceArc(st.piece, st.t, ev.t, st.z, ev.z, st.direction)
        sw = self._scan_switch(arc, iO, iR)
        if sw is not None:
            tstar, zstar, jnew, side = sw
            trunc = TraceArc(st.piece, st.t, tstar, st.z, zstar, st.direction)
            return ("switch", trunc, zstar, jnew, side)
        if ev.kind == BOUNDARY:
            return ("boundary", arc, ev)
        return ("sector", arc, ev)


def boundary_walk(K: ConvexPolygon, sites_xy: np.ndarray, owner: int,
                  other_ids, t_from: float,
                  fan_cache: dict[int, SectorFan]) -> tuple[float, int, Point]:
    """Walk ccw along the polygon boundary from t_from while ``owner`` owns it.

    Returns (unwrapped boundary param, next owner, exact transition point)
    where ownership first passes to another site, in the limit-potential
    sense.
    """
    other_ids = np.asarray(sorted(other_ids))
    ids = np.concatenate([[owner], other_ids])
    m = K.m

    def psi(t: float) -> tuple[float, int]:
        sc = boundary_scores(K, [t % m], sites_xy[ids])[0]
        j = int(np.argmin(sc[1:]))
        return sc[0] - sc[1 + j], int(other_ids[j])

    # widened regions make the potentials exactly tie along whole boundary
    # stretches; ownership there is split canonically at the stretch midpoint
    tie = 1e-9
    eps0 = 1e-7
    v0, r0 = psi(t_from + eps0)
    if v0 > tie:
        # ownership flips exactly at the start (a potential jump at a polygon
        # vertex, or a third site tying exactly where the frontier exits):
        # the walk is empty and the transition is the start point
        return t_from, r0, K.boundary_point(t_from % m)
    step = 0.02
    t_strict = t_from + eps0
    t_lo = t_from + eps0
    t_hi = None
    t = t_lo
    limit = t_from + m + 1.0
    while t < limit:
        chunk = np.arange(t + step, min(t + 64 * step, limit) + 1e-12, step)
        sc = boundary_scores(K, chunk % m, sites_xy[ids])
        diff = sc[:, 0] - np.min(sc[:, 1:], axis=1)
        bad = np.nonzero(diff > tie)[0]
        if bad.size:
            k = int(bad[0])
            t_lo = chunk[k - 1] if k > 0 else t
            t_hi = chunk[k]
            owned = np.nonzero(diff[:k] < -tie)[0]
            if owned.size:
                t_strict = chunk[owned[-1]]
            break
        owned = np.nonzero(diff < -tie)[0]
        if owned.size:
            t_strict = chunk[owned[-1]]
        t = chunk[-1]
    if t_hi is None:
        raise DegeneracyError("boundary walk found no ownership transition")
    # first strict loss of ownership
    a, b = t_lo, t_hi
    for _ in range(60):
        tm = 0.5 * (a + b)
        if psi(tm)[0] > tie:
            b = tm
        else:
            a = tm
    t_loss = 0.5 * (a + b)
    # end of strict ownership
    a, b = t_strict, t_loss
    for _ in range(60):
        tm = 0.5 * (a + b)
        if psi(tm)[0] > -tie:
            b = tm
        else:
            a = tm
    t_keep = 0.5 * (a + b)
    _, rival = psi(t_loss)
    if t_loss - t_keep > 1e-6:
        # tied stretch: the canonical transition is its midpoint
        t_bis = 0.5 * (t_keep + t_loss)
    else:
        t_bis = t_loss

    # exact refinement: the transition is where the (owner, rival) bisector
    # meets the boundary inside the current sector pair
    bpt = K.boundary_point(t_bis % m)
    so = Point(sites_xy[owner, 0], sites_xy[owner, 1])
    sr = Point(sites_xy[rival, 0], sites_xy[rival, 1])
    for i, s in ((owner, so), (rival, sr)):
        if i not in fan_cache:
            fan_cache[i] = sectors(K, s)
    sec_o = fan_cache[owner][fan_cache[owner].locate_point(bpt)]
    sec_r = fan_cache[rival][fan_cache[rival].locate_point(bpt)]
    try:
        z = boundary_bisector_point(K, so, sr, sec_o, sec_r)
    except DegeneracyError:
        # the bisected point sits near a sector chord and the located pair
        # holds no bisector; the bisected point itself is accurate enough
        z = None
    # the refinement may only polish the bisected point; a large move means it
    # intersected a curve branch from the wrong sector pair (common when the
    # transition sits exactly on a polygon vertex, where the scores jump)
    if z is not None and math.hypot(z.x - bpt.x, z.y - bpt.y) <= 1e-6 * K.diameter:
        edge = int(t_bis % m)
        tz = K.boundary_param(edge, z)
        t_re = t_from + ((tz - t_from) % m)
        return t_re, rival, z
    t_re = t_from + ((t_bis - t_from) % m)
    return t_re, rival, bpt


# ---------------------------------------------------------------------------
# cell clipping and reassembly

def assemble_star(K: ConvexPolygon, site: Point, elems: list,
                  tol: float | None = None) -> list:
    """Order cell elements ccw around the site and verify chain closure."""
    min_len = 1e-10 * K.diameter
    els = [e for e in elems if _el_len(K, e) > min_len]
    if not els:
        raise DegeneracyError("cell reassembly got no elements")
    ang = [math.atan2(e.start.y - site.y, e.start.x - site.x) for e in els]
    order = sorted(range(len(els)), key=lambda k: ang[k])
    els = [els[k] for k in order]
    tol = tol if tol is not None else 1e-6 * K.diameter
    for k, e in enumerate(els):
        nxt = els[(k + 1) % len(els)]
        gap = math.hypot(e.end.x - nxt.start.x, e.end.y - nxt.start.y)
        if gap > tol:
            raise DegeneracyError(
                f"cell boundary chain around {tuple(site)} has a gap of {gap:.3g}"
            )
    return els


def rebuild_cell(K: ConvexPolygon, site_idx: int, site: Point,
                 old_elements: list, border_elements: list,
                 cross_points: list[Point], cross_ts: list[float],
                 keep_interior, keep_bd) -> list:
    """Clip a cell against a traced frontier and reassemble it.

    ``keep_interior(z) > 0`` / ``keep_bd(t) > 0`` decide which side of the
    frontier stays with the cell; crossings of the frontier with the old cell
    boundary arrive as explicit points/params (the traced vertices and
    boundary transitions), so splits are exact.  The keep tests sample three
    interior points and go with the largest-magnitude value, so stretches
    that graze a tied (widened) region are decided by their decisive part.
    """
    m = K.m
    fracs = (0.25, 0.5, 0.75)

    def decide(vals) -> bool:
        v = max(vals, key=abs)
        return v > 0.0

    kept: list = []
    for el in old_elements:
        if isinstance(el, ArcElement):
            hits = []
            for z in cross_points:
                t = point_on_arc(K, el.arc, z)
                if t is not None:
                    hits.append((t, z))
            subs = split_arc_element(el, hits) if hits else [el]
            for sub in subs:
                vals = []
                for f in fracs:
                    z = sub.arc.piece.point(sub.arc.param_at(f))
                    if K.signed_depth(z) > -1e-12 * K.diameter:
                        continue    # degenerate sliver touching the boundary
                    vals.append(keep_interior(z))
                if vals and decide(vals):
                    kept.append(sub)
        else:
            hits_t = []
            for t in cross_ts:
                tt = el.t0 + ((t - el.t0) % m)
                if el.t0 + 1e-9 < tt < el.t1 - 1e-9:
                    hits_t.append(tt)
            cuts = [el.t0] + sorted(hits_t) + [el.t1]
            for a, b in zip(cuts, cuts[1:]):
                if b - a <= 1e-12:
                    continue
                if decide([keep_bd(a + f * (b - a)) for f in fracs]):
                    kept.append(BoundaryElement(a, b, K.boundary_point(a % m),
                                                K.boundary_point(b % m)))
    return assemble_star(K, site, kept + list(border_elements))
