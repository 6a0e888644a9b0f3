"""Divide-and-conquer construction of the Hilbert Voronoi diagram.

Sites are split by a vertical line at the median x-coordinate (pre-sorted
with a y tie-break; the split is placed at the midpoint between the two
middle sites so the halves are strictly separated).  Each half is built
recursively; the merge discovers the components of the left/right frontier
B(S_L, S_R) from their endpoints on the polygon boundary (ownership of the
boundary passes between the groups there), traces each component through the
interior with ``ChainWalker`` -- counterclockwise around the current left
owner, switching pair members at Voronoi vertices of the result -- and clips
both sub-diagrams' cells against the traced chain.

Each component terminates on the polygon boundary (a chain can never close
into a loop, since that would bound a region owned by no site); the trace
asserts this with a step limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, oracle
from .bisector import TraceArc
from .diagram import (
    ArcElement,
    AugmentedDiagram,
    ChainWalker,
    RivalMismatch,
    boundary_scores,
    boundary_walk,
    rebuild_cell,
)
from .geometry import ConvexPolygon, DegeneracyError, GeometryError, Point


@dataclass
class MergeChain:
    """The frontier B(S_L, S_R) of one merge, as traced chain components.

    Each component is a list of ``(left_site, right_site, arc)`` triples in
    travel order; both of its endpoints lie on the polygon boundary.
    """

    components: list[list[tuple[int, int, TraceArc]]] = field(default_factory=list)
    endpoints: list[tuple[float, float]] = field(default_factory=list)
    vertices: list[tuple[Point, tuple[int, int, int]]] = field(default_factory=list)


def nearest_in_subdiagram(diagram: AugmentedDiagram, q: Point) -> tuple[int, tuple[int, int]]:
    """Closest active site of a (sub)diagram, with its containing spoke triangle."""
    q = Point(float(q[0]), float(q[1]))
    active = np.asarray(diagram.active)
    d = _kernels.distance_matrix(diagram.K.edges_abc,
                                 np.asarray([[q.x, q.y]]),
                                 diagram.sites_xy[active])[0]
    finite = np.isfinite(d)
    for i in np.nonzero(~finite)[0]:
        s = diagram.sites[int(active[i])]
        if math.hypot(s.x - q.x, s.y - q.y) <= 1e-12 * diagram.K.diameter:
            d[i] = 0.0       # boundary q coinciding with nothing; site itself
    i = int(active[int(np.argmin(d))])
    if not diagram.K.contains_interior(q):
        return i, (i, 0)
    return i, (i, diagram.locate_triangle(i, q))


# ---------------------------------------------------------------------------
# merge

def _group_transitions(K: ConvexPolygon, sxy: np.ndarray,
                       left_ids: list[int], right_ids: list[int],
                       fan_cache: dict) -> list[tuple[float, Point, int, int]]:
    """Points on the polygon boundary where ownership crosses between groups.

    Walks the whole boundary once with ``boundary_walk`` (which refines each
    handover exactly) and keeps the handovers whose two sides belong to
    different groups.  Returns (param in [0,m), exact point, owner before,
    owner after).
    """
    ids = np.asarray(sorted(left_ids) + sorted(right_ids))
    m = K.m
    # start the walk where boundary ownership is least ambiguous
    ts = np.arange(0.0, m, 1.0 / 16.0) + 1.0 / 37.0
    sc = boundary_scores(K, ts, sxy[ids])
    part = np.partition(sc, 1, axis=1)
    gap = part[:, 1] - part[:, 0]
    k0 = int(np.argmax(gap))
    t0 = float(ts[k0])
    owner = int(ids[int(np.argmin(sc[k0]))])

    left_set = set(left_ids)
    out: list[tuple[float, Point, int, int]] = []
    t = t0
    guard = 8 * len(ids) + 16
    for _ in range(guard):
        others = [int(i) for i in ids if i != owner]
        t_next, new_owner, z = boundary_walk(K, sxy, owner, others, t, fan_cache)
        if t_next >= t0 + m - 1e-9:
            break
        if t_next <= t + 1e-12:
            t_next = t + 1e-9
        if (owner in left_set) != (new_owner in left_set):
            out.append((t_next % m, z, owner, new_owner))
        owner, t = new_owner, t_next
    else:
        raise DegeneracyError("boundary ownership walk failed to close")
    return out


def _vertex_branches(K: ConvexPolygon, sxy: np.ndarray,
                     left_ids: list[int], right_ids: list[int]
                     ) -> list[tuple[float, Point, int, int]]:
    """Frontier branches ending at polygon vertices.

    The boundary limit potential jumps at a vertex, so a cell of one group
    can touch the boundary in a single vertex while the other group owns the
    adjacent boundary stretches on both sides -- the scan along the boundary
    never sees it.  The cell still subtends a positive angle at the vertex,
    so sweep directions across the interior cone of each vertex at a small
    radius and emit one branch per group change.
    """
    m = K.m
    eps = 1e-6 * K.diameter
    N = 96
    lxy = sxy[np.asarray(left_ids)]
    rxy = sxy[np.asarray(right_ids)]
    out: list[tuple[float, Point, int, int]] = []
    for v in range(m):
        pv = K.vertices[v]
        nxt = K.vertices[(v + 1) % m]
        prv = K.vertices[(v - 1) % m]
        a0 = math.atan2(nxt.y - pv.y, nxt.x - pv.x)
        span = (math.atan2(prv.y - pv.y, prv.x - pv.x) - a0) % (2.0 * math.pi)
        ang = a0 + span * (np.arange(N) + 0.5) / N
        pts = np.stack([pv.x + eps * np.cos(ang), pv.y + eps * np.sin(ang)],
                       axis=1)
        dl = _kernels.distance_matrix(K.edges_abc, pts, lxy)
        dr = _kernels.distance_matrix(K.edges_abc, pts, rxy)
        il = np.argmin(dl, axis=1)
        ir = np.argmin(dr, axis=1)
        is_left = dl[np.arange(N), il] < dr[np.arange(N), ir]
        for k in range(N - 1):
            if is_left[k] != is_left[k + 1]:
                kl = k if is_left[k] else k + 1
                kr = k + 1 if is_left[k] else k
                out.append((float(v), pv,
                            left_ids[int(il[kl])], right_ids[int(ir[kr])]))
    return out


def _merge_chain(K: ConvexPolygon, sxy: np.ndarray,
                 left_ids: list[int], right_ids: list[int],
                 fan_cache: dict) -> tuple[MergeChain, list[float]]:
    """Trace every component of B(S_L, S_R); returns the chain and the
    boundary params of all component endpoints."""
    left_set = set(left_ids)
    walker = ChainWalker(K, sxy, left_ids, right_ids, fan_cache)
    # frontier endpoints: group ownership transitions inside boundary edges,
    # plus branches pinching into polygon vertices (where the boundary
    # potentials jump and the scan cannot see them)
    seeds: list[tuple[float, Point, int, int]] = []
    for tk, zk, before, after in _group_transitions(K, sxy, left_ids,
                                                    right_ids, fan_cache):
        if min(tk % 1.0, 1.0 - tk % 1.0) < 1e-7:
            continue        # at a vertex: the sweep below covers it
        iO = before if before in left_set else after
        iR = after if after not in left_set else before
        seeds.append((tk, zk, iO, iR))
    seeds.extend(_vertex_branches(K, sxy, left_ids, right_ids))
    if len(left_ids) + len(right_ids) >= 2 and not seeds:
        raise DegeneracyError("left/right frontier never reaches the boundary")

    def settle(z: Point, iO: int, iR: int, inward: bool = False):
        for _ in range(len(left_ids) + len(right_ids) + 1):
            try:
                return walker.start(z, iO, iR, inward=inward), iO, iR
            except RivalMismatch as exc:
                if exc.jnew in left_set:
                    iO = exc.jnew
                else:
                    iR = exc.jnew
        raise DegeneracyError("merge trace start pair did not settle")

    chain = MergeChain()
    consumed = [False] * len(seeds)
    endpoint_ts: list[float] = []
    m = K.m
    n_tot = len(left_ids) + len(right_ids)
    step_limit = 16 * K.m * n_tot + 16 * n_tot + 64

    def trace_component(st, iO: int, iR: int):
        comp: list[tuple[int, int, TraceArc]] = []
        verts: list[tuple[Point, tuple[int, int, int]]] = []
        for _ in range(step_limit):
            kind, arc, *rest = walker.step(st, iO, iR)
            comp.append((iO, iR, arc))
            if kind == "switch":
                zstar, jnew, side = rest
                verts.append((zstar, tuple(sorted((iO, iR, jnew)))))
                if side == "owner":
                    iO = jnew
                else:
                    iR = jnew
                st, iO, iR = settle(zstar, iO, iR)
            elif kind == "sector":
                st = walker.tracer(iO, iR).advance(st, rest[0])
            else:  # boundary: the component terminates here
                ev = rest[0]
                t_exit = K.boundary_param(ev.edge, ev.z) % m
                return comp, verts, t_exit, ev.z, iO, iR
        raise DegeneracyError(
            "merge chain component failed to terminate on the boundary")

    def pinch_restart(t_exit: float):
        """Start pair for the branch leaving a pinch point on the boundary.

        A component can run into a polygon vertex where a region of the other
        group touches the boundary in a single point: the boundary potentials
        jump over it and the scan sees no ownership transition, but the
        frontier continues on the other side.  The continuation leaves the
        pinch counterclockwise along the boundary, so probe just inside a
        nudged boundary point to name its pair.
        """
        zb = K.boundary_point((t_exit + 1e-5) % m)
        e = int((t_exit + 1e-5) % m)
        eps = 1e-7 * K.diameter
        zin = Point(zb.x - eps * K.edges_abc[e, 0],
                    zb.y - eps * K.edges_abc[e, 1])
        pt = np.asarray([[zin.x, zin.y]])
        dl = _kernels.distance_matrix(K.edges_abc, pt, sxy[np.asarray(left_ids)])[0]
        dr = _kernels.distance_matrix(K.edges_abc, pt, sxy[np.asarray(right_ids)])[0]
        return left_ids[int(np.argmin(dl))], right_ids[int(np.argmin(dr))]

    def seed_near(t_exit: float) -> bool:
        return any(min((t_exit - tk2) % m, (tk2 - t_exit) % m) < 1e-5 * m
                   for tk2, _, _, _ in seeds)

    # Every component is traced exactly once, from its departing endpoint:
    # the counterclockwise-around-owner travel direction heads into the
    # polygon at one endpoint and out of it at the other, so start attempts
    # at arriving endpoints fail (immediately, or just after a widened entry
    # segment that has no counterclockwise continuation) and are skipped.
    # Exits are matched to the arriving seeds afterwards, so a vertex hosting
    # several branch endpoints accounts for each of them once.
    exits: list[float] = []
    for k, (tk, zk, iO, iR) in enumerate(seeds):
        try:
            st, iO, iR = settle(zk, iO, iR, inward=True)
            parts = []
            t_start = tk
            for _ in range(n_tot + 1):
                comp, verts, t_exit, z_exit, iO, iR = trace_component(st, iO, iR)
                parts.append((comp, verts, t_start, t_exit))
                if seed_near(t_exit):
                    break
                # a branch endpoint the seed discovery missed (a cell of the
                # other group touching the boundary in one point): restart
                # just past the touch
                iO, iR = pinch_restart(t_exit)
                st, iO, iR = settle(z_exit, iO, iR, inward=True)
                t_start = t_exit
            else:
                raise DegeneracyError(
                    "merge chain kept pinching past every known endpoint")
        except DegeneracyError:
            continue
        consumed[k] = True
        # a seed placed at the arriving endpoint of a component can settle
        # onto the pair of a component departing from the same point and
        # retrace it; drop exact retraces (their seed is then accounted for
        # as a start, and the arriving component's exit needs no seed)
        tol = 1e-6 * K.diameter

        def same_pt(a: Point, b: Point) -> bool:
            return math.hypot(a.x - b.x, a.y - b.y) < tol

        dup = [any(same_pt(c[0][2].z0, comp[0][2].z0)
                   and same_pt(c[-1][2].z1, comp[-1][2].z1)
                   for c in chain.components)
               for comp, _, _, _ in parts]
        if all(dup) and parts:
            continue
        if any(dup):
            raise DegeneracyError("merge chain partially retraced a component")
        for comp, verts, t_start, t_exit in parts:
            chain.components.append(comp)
            chain.vertices.extend(verts)
            chain.endpoints.append((t_start, t_exit))
            endpoint_ts.extend((t_start, t_exit))
            exits.append(t_exit)
    for t_exit in exits:
        best, dist = -1, math.inf
        for k2, (tk2, _, _, _) in enumerate(seeds):
            if consumed[k2]:
                continue
            d = min((t_exit - tk2) % m, (tk2 - t_exit) % m)
            if d < dist:
                best, dist = k2, d
        if best >= 0 and dist < 1e-5 * m:
            consumed[best] = True
    if not all(consumed):
        raise DegeneracyError("untraced left/right frontier component")
    return chain, endpoint_ts


def merge(left: AugmentedDiagram, right: AugmentedDiagram,
          ell: float | None = None) -> AugmentedDiagram:
    """Merge two sub-diagrams over the same site list, separated by x = ell.

    Returns a diagram whose cells are the left cells clipped to the left of
    the traced frontier, the right cells clipped to its right, and the
    frontier arcs spliced into both.
    """
    K = left.K
    left_ids = left.active
    right_ids = right.active
    if set(left_ids) & set(right_ids):
        raise GeometryError("merge halves must be disjoint")
    fan_cache = left.fan_cache
    fan_cache.update(right.fan_cache)
    sxy = left.sites_xy

    out = AugmentedDiagram(K, left.sites)
    out.fan_cache = fan_cache
    if not right_ids or not left_ids:
        out.cells = {**left.cells, **right.cells}
        return out

    chain, endpoint_ts = _merge_chain(K, sxy, left_ids, right_ids, fan_cache)
    cross_pts = [z for z, _ in chain.vertices]
    arcs = [ira for comp in chain.components for ira in comp]
    affected_left = sorted({i for i, _, _ in arcs})
    affected_right = sorted({j for _, j, _ in arcs})

    def group_keep(i: int, other_ids: list[int]):
        oxy = sxy[np.asarray(other_ids)]
        ixy = sxy[[i]]

        def keep_interior(z: Point) -> float:
            pt = np.asarray([[z.x, z.y]])
            do = float(np.min(_kernels.distance_matrix(K.edges_abc, pt, oxy)))
            di = float(_kernels.distance_matrix(K.edges_abc, pt, ixy)[0, 0])
            return do - di

        def keep_bd(t: float) -> float:
            do = float(np.min(boundary_scores(K, [t % K.m], oxy)))
            di = float(boundary_scores(K, [t % K.m], ixy)[0, 0])
            return do - di

        return keep_interior, keep_bd

    new_cells: dict[int, list] = {}
    for i in affected_left:
        border = [ArcElement(r, arc) for (o, r, arc) in arcs if o == i]
        ki, kb = group_keep(i, right_ids)
        new_cells[i] = rebuild_cell(K, i, left.site(i), left.cells[i], border,
                                    cross_pts, endpoint_ts, ki, kb)
    for j in affected_right:
        border = [ArcElement(o, arc.reversed())
                  for (o, r, arc) in reversed(arcs) if r == j]
        ki, kb = group_keep(j, left_ids)
        new_cells[j] = rebuild_cell(K, j, right.site(j), right.cells[j], border,
                                    cross_pts, endpoint_ts, ki, kb)

    out.cells = {**left.cells, **right.cells, **new_cells}
    return out


# ---------------------------------------------------------------------------
# recursion

def build_dnc(K: ConvexPolygon, S) -> AugmentedDiagram:
    """Build the diagram by divide and conquer over the x-sorted sites."""
    from .ric import SiteSet
    if isinstance(S, SiteSet):
        sites = S.sites
    else:
        sites = oracle.validate_sites(K, [Point(float(s[0]), float(s[1]))
                                          for s in S])
    order = sorted(range(len(sites)), key=lambda i: (sites[i].x, sites[i].y))
    fan_cache: dict = {}

    def leaf(i: int) -> AugmentedDiagram:
        dg = AugmentedDiagram(K, sites)
        dg.fan_cache = fan_cache
        dg.set_full_cell(i)
        return dg

    def rec(ids: list[int]) -> AugmentedDiagram:
        if len(ids) == 1:
            return leaf(ids[0])
        h = len(ids) // 2
        xa, xb = sites[ids[h - 1]].x, sites[ids[h]].x
        if xb - xa <= 1e-12 * K.diameter:
            raise DegeneracyError(
                "median sites share an x-coordinate; the halves are not "
                "strictly separated")
        ell = 0.5 * (xa + xb)
        return merge(rec(ids[:h]), rec(ids[h:]), ell)

    return rec(order)
