"""Randomized incremental construction of the Hilbert Voronoi diagram.

Sites are inserted in a seeded shuffled order (numpy PCG64, so the order is
stable across platforms for a given seed).  Each insertion locates the
nearest existing site through the history DAG, finds a first point of the new
cell boundary on the segment toward that site, traces the boundary
counterclockwise with rival switching, and rebuilds the affected cells.  The
history DAG records, per destroyed cell version, the site whose insertion
destroyed it; point location descends those links with one distance
comparison per node and finishes with a radial search over the winning
cell's spokes.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, oracle
from .diagram import (
    ArcElement,
    AugmentedDiagram,
    BoundaryElement,
    ChainWalker,
    RivalMismatch,
    _arc_total,
    _arc_travel,
    boundary_elements,
    boundary_walk,
    rebuild_cell,
)
from .bisector import TraceArc, boundary_score
from .geometry import ConvexPolygon, DegeneracyError, GeometryError, Point
from .metric import hilbert_distance


class SiteSet:
    """Validated sites plus an insertion order."""

    def __init__(self, K: ConvexPolygon, sites, order=None,
                 jitter: float = 0.0, seed: int = 0):
        self.K = K
        self.sites = oracle.validate_sites(K, [Point(float(s[0]), float(s[1]))
                                               for s in sites],
                                           jitter=jitter, seed=seed)
        n = len(self.sites)
        if order is None:
            order = list(range(n))
        order = [int(i) for i in order]
        if sorted(order) != list(range(n)):
            raise GeometryError("insertion order must be a permutation of the sites")
        self.order = order

    def __len__(self):
        return len(self.sites)


class FanNode:
    """One version of one site's spoke fan; a node of the history DAG."""

    __slots__ = ("site", "elements", "base", "ang",
                 "destroyed_by", "next_same", "next_new")

    def __init__(self, site: int, elements: list, base: float, ang: list[float]):
        self.site = site
        self.elements = elements
        self.base = base
        self.ang = ang
        self.destroyed_by = -1
        self.next_same: FanNode | None = None
        self.next_new: FanNode | None = None


class HistoryDag:
    def __init__(self):
        self.root: FanNode | None = None
        self.current: dict[int, FanNode] = {}
        self.created = 0
        self.destroyed = 0
        self.node_count = 0


@dataclass
class RicState:
    K: ConvexPolygon
    diagram: AugmentedDiagram
    dag: HistoryDag
    inserted: list[int] = field(default_factory=list)


def _make_fan(dg: AugmentedDiagram, i: int, dag: HistoryDag) -> FanNode:
    cell = dg.cells[i]
    s = dg.sites[i]
    raw = [math.atan2(el.start.y - s.y, el.start.x - s.x) for el in cell]
    base = raw[0]
    ang = [(a - base) % (2.0 * math.pi) for a in raw]
    dag.node_count += 1
    return FanNode(i, cell, base, ang)


def _radial_search(node: FanNode, s: Point, q: Point) -> int:
    th = (math.atan2(q.y - s.y, q.x - s.x) - node.base) % (2.0 * math.pi)
    k = bisect_right(node.ang, th) - 1
    return k % len(node.ang)


def locate(dag: HistoryDag, diagram: AugmentedDiagram,
           q: Point) -> tuple[int, tuple[int, int]]:
    """Site whose cell contains q, plus its containing spoke triangle."""
    if dag.root is None:
        raise GeometryError("empty diagram")
    if not diagram.K.contains_interior(q):
        raise GeometryError("query point must be strictly interior")
    K = diagram.K
    node = dag.root
    while node.destroyed_by >= 0:
        d_here = hilbert_distance(K, q, diagram.sites[node.site])
        d_new = hilbert_distance(K, q, diagram.sites[node.destroyed_by])
        node = node.next_new if d_new < d_here else node.next_same
    k = _radial_search(node, diagram.sites[node.site], q)
    return node.site, (node.site, k)


def _cell_entry_point(dg: AugmentedDiagram, idx: int,
                      nearest: int) -> tuple[Point, int]:
    """First crossing of the new cell boundary on the segment site -> nearest."""
    K = dg.K
    p = dg.sites[idx]
    s = dg.sites[nearest]
    active = np.asarray(dg.active)

    def excess(t: float) -> tuple[float, int]:
        z = Point(p.x + t * (s.x - p.x), p.y + t * (s.y - p.y))
        d = _kernels.distance_matrix(K.edges_abc, np.asarray([[z.x, z.y]]),
                                     dg.sites_xy[active])[0]
        j = int(np.argmin(d))
        return hilbert_distance(K, z, p) - float(d[j]), int(active[j])

    lo, hi = 1e-9, 1.0 - 1e-9
    v_lo, _ = excess(lo)
    v_hi, _ = excess(hi)
    if not (v_lo < 0.0 < v_hi):
        raise DegeneracyError("no cell-boundary crossing on the locate segment")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        v, _ = excess(mid)
        if v < 0.0:
            lo = mid
        else:
            hi = mid
    t0 = 0.5 * (lo + hi)
    z0 = Point(p.x + t0 * (s.x - p.x), p.y + t0 * (s.y - p.y))
    _, rival = excess(t0)
    return z0, rival


def _trace_new_cell(dg: AugmentedDiagram, idx: int, z0: Point, r0: int):
    """Closed ccw boundary of the new cell, with vertices and bd transitions."""
    K = dg.K
    active = dg.active
    walker = ChainWalker(K, dg.sites_xy, [idx], active, dg.fan_cache)
    elements: list = []
    vertices: list[tuple[Point, tuple[int, int, int]]] = []
    transitions: list[float] = []
    def start_settled(z: Point, iR: int, inward: bool = False):
        for _ in range(len(active) + 1):
            try:
                return walker.start(z, idx, iR, inward=inward), iR
            except RivalMismatch as exc:
                iR = exc.jnew
        raise DegeneracyError("trace start rival did not settle")

    iR = r0
    st, iR = start_settled(z0, iR)
    start_sig = st.piece.signature
    start_t = st.t
    start_dir = st.direction
    arcs_done = 0
    limit = 16 * K.m + 8 * len(active) + 64
    for _ in range(limit):
        kind, arc, *rest = walker.step(st, idx, iR)
        if arcs_done >= 1 and iR == r0 and arc.direction == start_dir \
                and arc.piece.signature == start_sig:
            tr = _arc_travel(arc, start_t)
            if 1e-12 < tr <= _arc_total(arc) + 1e-12:
                elements.append(ArcElement(
                    iR, TraceArc(arc.piece, arc.t0, start_t, arc.z0, z0,
                                 arc.direction)))
                return elements, vertices, transitions
        elements.append(ArcElement(iR, arc))
        arcs_done += 1
        if kind == "switch":
            zstar, jnew, side = rest
            if side != "rival":
                raise DegeneracyError("owner switch in a single-owner trace")
            vertices.append((zstar, tuple(sorted((idx, iR, jnew)))))
            st, iR = start_settled(zstar, jnew)
        elif kind == "sector":
            ev = rest[0]
            st = walker.tracer(idx, iR).advance(st, ev)
        else:  # boundary
            ev = rest[0]
            t_exit = K.boundary_param(ev.edge, ev.z)
            t_re, new_rival, z_re = boundary_walk(
                K, dg.sites_xy, idx, active, t_exit, dg.fan_cache)
            transitions.append(t_exit % K.m)
            transitions.append(t_re % K.m)
            elements.extend(boundary_elements(K, t_exit, t_re))
            st, iR = start_settled(z_re, new_rival, inward=True)
    raise DegeneracyError("new-cell trace failed to close")


def _insert_index(state: RicState, idx: int) -> None:
    dg = state.diagram
    dag = state.dag
    K = state.K
    if not dg.cells:
        dg.set_full_cell(idx)
        fan = _make_fan(dg, idx, dag)
        dag.root = fan
        dag.current[idx] = fan
        dag.created += len(dg.cells[idx])
        state.inserted.append(idx)
        return
    p = dg.sites[idx]
    nearest, _ = locate(dag, dg, p)
    z0, r0 = _cell_entry_point(dg, idx, nearest)
    elements, vertices, transitions = _trace_new_cell(dg, idx, z0, r0)
    affected = sorted({el.neighbor for el in elements
                       if isinstance(el, ArcElement)})
    cross_pts = [z for z, _ in vertices]

    destroyed = sum(len(dg.cells[r]) for r in affected)
    new_cells: dict[int, list] = {idx: elements}
    for r in affected:
        border = [ArcElement(idx, el.arc.reversed())
                  for el in reversed(elements)
                  if isinstance(el, ArcElement) and el.neighbor == r]
        s_r = dg.sites[r]

        def keep_interior(z, s_r=s_r):
            return hilbert_distance(K, z, p) - hilbert_distance(K, z, s_r)

        def keep_bd(t, s_r=s_r):
            return boundary_score(K, t % K.m, p) - boundary_score(K, t % K.m, s_r)

        new_cells[r] = rebuild_cell(K, r, s_r, dg.cells[r], border,
                                    cross_pts, transitions,
                                    keep_interior, keep_bd)
    for i, cell in new_cells.items():
        dg.cells[i] = cell
    created = sum(len(c) for c in new_cells.values())

    new_fan = _make_fan(dg, idx, dag)
    for r in affected:
        old = dag.current[r]
        old.destroyed_by = idx
        old.next_new = new_fan
        old.next_same = _make_fan(dg, r, dag)
        dag.current[r] = old.next_same
    dag.current[idx] = new_fan
    dag.created += created
    dag.destroyed += destroyed
    state.inserted.append(idx)


def insert_site(state: RicState, p: Point) -> RicState:
    """Insert one new site into a live construction state."""
    dg = state.diagram
    p = Point(float(p[0]), float(p[1]))
    if not state.K.contains_interior(p):
        raise GeometryError("site must be strictly interior")
    for i in dg.active:
        s = dg.sites[i]
        if math.hypot(s.x - p.x, s.y - p.y) <= 1e-12 * state.K.diameter:
            raise GeometryError("duplicate site")
    idx = dg.add_site(p)
    _insert_index(state, idx)
    return state


def build_ric(K: ConvexPolygon, S, seed: int = 0
              ) -> tuple[AugmentedDiagram, HistoryDag]:
    """Build the diagram by randomized incremental insertion.

    ``S`` is a SiteSet or a sequence of points; the insertion order is the
    seeded PCG64 shuffle of the (validated) site list.  Deterministic for a
    given seed.
    """
    if isinstance(S, SiteSet):
        sites = S.sites
    else:
        sites = oracle.validate_sites(K, [Point(float(s[0]), float(s[1]))
                                          for s in S])
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(sites))
    dg = AugmentedDiagram(K, sites)
    dag = HistoryDag()
    state = RicState(K, dg, dag)
    for idx in order:
        _insert_index(state, int(idx))
    return dg, dag


def structural_change_count(dag: HistoryDag) -> int:
    """Total spoke triangles created plus destroyed across all insertions."""
    return dag.created + dag.destroyed
