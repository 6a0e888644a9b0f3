"""Independent verification oracles and instance generators.

Everything here is deliberately dumb: brute-force argmins, bisection on the
continuous distance difference, and explicit validation of generated
instances.  The diagram builders are never consulted for distances, so these
routines can serve as ground truth for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import ConvexPolygon, DegeneracyError, GeometryError, Point, intersect_lines
from .metric import hilbert_distance

TIE_EPS = 1e-9


def nearest_site_bruteforce(K: ConvexPolygon, sites: list[Point],
                            q: Point) -> tuple[int, float, list[int]]:
    """(argmin site index, distance, indices within TIE_EPS of the minimum)."""
    if not K.contains_interior(q):
        raise GeometryError("query point must be strictly interior")
    dists = [hilbert_distance(K, q, s) for s in sites]
    best = min(range(len(sites)), key=lambda i: (dists[i], i))
    ties = [i for i in range(len(sites)) if dists[i] - dists[best] <= TIE_EPS]
    return best, dists[best], ties


def classify_bruteforce(K: ConvexPolygon, sites: list[Point],
                        pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized nearest-site labels and distances for many points."""
    arr = np.asarray([(s.x, s.y) for s in sites], dtype=np.float64)
    return _kernels.nearest_site(K.edges_abc, np.asarray(pts, dtype=np.float64), arr)


def distance_matrix(K: ConvexPolygon, sites: list[Point],
                    pts: np.ndarray) -> np.ndarray:
    arr = np.asarray([(s.x, s.y) for s in sites], dtype=np.float64)
    return _kernels.distance_matrix(K.edges_abc, np.asarray(pts, dtype=np.float64), arr)


def bisector_point_oracle(K: ConvexPolygon, p: Point, pprime: Point,
                          direction: tuple[float, float],
                          rel_tol: float = 1e-12) -> Point:
    """Bisector point on the ray from p along ``direction`` by sign bisection.

    The ray must cross the (p, p')-bisector exactly once before leaving K
    (true inside the star-shaped cell of p).
    """
    ux, uy = direction
    s = math.hypot(ux, uy)
    if s == 0.0:
        raise GeometryError("zero direction")
    ux, uy = ux / s, uy / s
    t_exit, _ = K.ray_exit(p, ux, uy)

    def diff(t: float) -> float:
        z = Point(p.x + t * ux, p.y + t * uy)
        return hilbert_distance(K, z, p) - hilbert_distance(K, z, pprime)

    lo = 1e-9 * t_exit
    hi = None
    steps = 256
    prev_t, prev_d = lo, diff(lo)
    if prev_d > 0.0:
        raise GeometryError("ray starts on the far side of the bisector")
    for k in range(1, steps + 1):
        t = t_exit * (1.0 - 1e-9) * k / steps
        if t <= prev_t:
            continue
        d = diff(t)
        if d > 0.0:
            lo, hi = prev_t, t
            break
        prev_t, prev_d = t, d
    if hi is None:
        raise GeometryError("no sign change of the distance difference on the ray")
    while hi - lo > rel_tol * t_exit:
        mid = 0.5 * (lo + hi)
        if diff(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    t = 0.5 * (lo + hi)
    return Point(p.x + t * ux, p.y + t * uy)


# ---------------------------------------------------------------------------
# general position

def general_position_violation(K: ConvexPolygon, sites: list[Point],
                               eps: float = 1e-9
                               ) -> tuple[int, int, int, int] | None:
    """First (site_i, site_j, edge_a, edge_b) whose site line runs through the
    apex of the two edge lines, or None.  Parallel edge pairs (apex at
    infinity) are exempt: the bisector machinery handles those regions
    canonically, so they are not fatal degeneracies."""
    m = K.m
    apexes = []
    pairs = []
    for a in range(m):
        for b in range(a + 1, m):
            try:
                h = intersect_lines(K.edge_lines[a], K.edge_lines[b])
            except DegeneracyError:
                continue
            if h.is_at_infinity():
                continue
            apexes.append((h.hx, h.hy, h.hw))
            pairs.append((a, b))
    if not apexes:
        return None
    ah = np.asarray(apexes)                     # (P, 3)
    scale = K.diameter
    n = len(sites)
    for i in range(n):
        for j in range(i + 1, n):
            p, q = sites[i], sites[j]
            la = q.y - p.y
            lb = p.x - q.x
            lc = -(la * p.x + lb * p.y)
            norm = math.hypot(la, lb)
            if norm == 0.0:
                return (i, j, -1, -1)
            res = np.abs(ah[:, 0] * la + ah[:, 1] * lb + ah[:, 2] * lc) / norm
            # finite apexes: distance from apex to the line; infinite apexes:
            # residual ~ parallelism of the line with the shared direction
            denom = np.maximum(np.abs(ah[:, 2]) * scale, 1.0)
            bad = np.nonzero(res < eps * denom)[0]
            if bad.size:
                a, b = pairs[int(bad[0])]
                return (i, j, a, b)
    return None


def validate_sites(K: ConvexPolygon, sites: list[Point],
                   eps: float = 1e-9, jitter: float = 0.0,
                   seed: int = 0) -> list[Point]:
    """Checked (and optionally jittered) site list.

    Raises GeometryError for non-interior or duplicate sites and
    DegeneracyError for general-position violations when jitter is 0.
    """
    out = [Point(float(s[0]), float(s[1])) for s in sites]
    for i, s in enumerate(out):
        if not K.contains_interior(s):
            raise GeometryError(f"site {i} at {tuple(s)} is not strictly interior")
    for i in range(len(out)):
        for j in range(i + 1, len(out)):
            if math.hypot(out[i].x - out[j].x, out[i].y - out[j].y) \
                    <= 1e-12 * K.diameter:
                raise GeometryError(f"sites {i} and {j} coincide")
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        for attempt in range(16):
            if general_position_violation(K, out, eps) is None:
                return out
            moved = []
            for s in out:
                for _ in range(64):
                    cand = Point(s.x + rng.uniform(-jitter, jitter) * K.diameter,
                                 s.y + rng.uniform(-jitter, jitter) * K.diameter)
                    if K.contains_interior(cand):
                        moved.append(cand)
                        break
                else:
                    raise GeometryError("jitter pushed a site out of the polygon")
            out = moved
        raise DegeneracyError("jitter failed to reach general position")
    bad = general_position_violation(K, out, eps)
    if bad is not None:
        raise DegeneracyError(
            f"general-position violation: sites {bad[0]},{bad[1]} collinear with "
            f"the apex of edges {bad[2]},{bad[3]}"
        )
    return out


# ---------------------------------------------------------------------------
# instance generation

def random_polygon(m: int, rng: np.random.Generator) -> ConvexPolygon:
    """Random strictly convex m-gon: jittered regular angles on an ellipse
    (points on a strictly convex curve are always in strictly convex
    position, and the jitter bound keeps the polygon from degenerating into
    a sliver)."""
    for _ in range(500):
        u = rng.uniform(0.1, 0.9, m)
        ang = (np.arange(m) + u) * (2.0 * math.pi / m)
        pts = [(1.2 * math.cos(a), math.sin(a)) for a in ang]
        try:
            return ConvexPolygon(pts)
        except GeometryError:
            continue
    raise GeometryError(f"failed to sample a convex {m}-gon")


def random_instance(m: int, n: int, seed: int,
                    depth: float = 0.02) -> tuple[ConvexPolygon, list[Point]]:
    """Deterministic random instance: convex m-gon plus n interior sites in
    general position (resampled on violation)."""
    rng = np.random.default_rng(seed)
    K = random_polygon(m, rng)
    band = depth * K.diameter
    sites: list[Point] = []
    attempts = 0
    while len(sites) < n:
        attempts += 1
        if attempts > 200 * n + 1000:
            raise GeometryError("site sampling failed to converge")
        x, y = rng.uniform(-1.5, 1.5, 2)
        cand = Point(x, y)
        if K.signed_depth(cand) >= -band:
            continue
        if any(math.hypot(cand.x - s.x, cand.y - s.y) < 1e-4 * K.diameter
               for s in sites):
            continue
        trial = sites + [cand]
        if general_position_violation(K, trial) is not None:
            continue
        sites = trial
    return K, sites


@dataclass
class LowerBoundInstance:
    K: ConvexPolygon
    sites: list[Point]
    delta: float
    m: int
    n: int


def generate_lower_bound(m: int, n: int, delta: float = 1e-4) -> LowerBoundInstance:
    """Worst-case family: near-rectangle with a bulged left side and sites on
    a short horizontal segment through the middle.

    The vertical strip between consecutive sites crosses all m-4 sector
    boundaries induced by the left-side vertices, so the diagram carries at
    least (m-4)*(n-1) bisector pieces.
    """
    if m < 5:
        raise GeometryError("need at least 5 polygon vertices")
    if n < 2:
        raise GeometryError("need at least 2 sites")
    if not (0.0 < delta < 0.05):
        raise GeometryError("delta out of range")
    H = 1.1   # half-height; rectangle is slightly taller than wide
    W = 1.0   # half-width
    k = m - 4
    # keep the bulge vertices in a middle band so every chord from a vertex
    # through the site strip is shallow enough to exit through the right side;
    # jitter their heights a little so no two bulge edges meet exactly on the
    # axis the site strip runs along
    ys = np.linspace(0.4 * H, -0.4 * H, k)
    if k > 1:
        ys = ys + 0.3 * (0.8 * H / (k - 1)) * np.cos(7.3 * np.arange(k))
    left = [(-W - delta * (1.0 - (y / H) ** 2), float(y)) for y in ys]
    verts = [(W, -H), (W, H), (-W, H)] + left + [(-W, -H)]
    K = ConvexPolygon(verts)
    span = 0.2 * W
    xs = np.linspace(-span / 2.0, span / 2.0, n)
    bump = delta * delta
    sites = [Point(float(xs[j]), bump * (((j * 37) % n) / max(n - 1, 1) - 0.5))
             for j in range(n)]
    # the chords from every left vertex through the site strip must reach the
    # right side of K; this is the property the counting argument rests on
    right_edge = 0
    for vx, vy in left:
        for s in sites:
            dx, dy = s.x - vx, s.y - vy
            _, e = K.ray_exit(Point(vx, vy), dx, dy)
            if e != right_edge:
                raise GeometryError(
                    "lower-bound construction failed: a vertex chord misses "
                    "the right side (delta too large for this m, n)"
                )
    return LowerBoundInstance(K=K, sites=sites, delta=delta, m=m, n=n)


# ---------------------------------------------------------------------------
# diagram verification

@dataclass
class VerifyReport:
    ok: bool = True
    checks: dict = field(default_factory=dict)

    def record(self, name: str, ok: bool, detail) -> None:
        self.checks[name] = {"ok": bool(ok), "detail": detail}
        self.ok = self.ok and bool(ok)


def sample_points(K: ConvexPolygon, grid: int = 200, samples: int = 10000,
                  seed: int = 0) -> np.ndarray:
    """Interior grid points of K plus uniform random interior points."""
    xs = [v.x for v in K.vertices]
    ys = [v.y for v in K.vertices]
    gx = np.linspace(min(xs), max(xs), grid)
    gy = np.linspace(min(ys), max(ys), grid)
    X, Y = np.meshgrid(gx, gy)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    band = 1e-6 * K.diameter
    a = K.edges_abc
    depth = np.max(pts @ a[:, :2].T + a[:, 2][None, :], axis=1)
    pts = pts[depth < -band]
    rng = np.random.default_rng(seed)
    extra = []
    while len(extra) < samples:
        cand = np.column_stack([
            rng.uniform(min(xs), max(xs), samples),
            rng.uniform(min(ys), max(ys), samples),
        ])
        d = np.max(cand @ a[:, :2].T + a[:, 2][None, :], axis=1)
        extra.extend(cand[d < -band].tolist())
    return np.vstack([pts, np.asarray(extra[:samples])])


def verify_diagram(diagram, K: ConvexPolygon, sites: list[Point],
                   grid: int = 200, samples: int = 10000,
                   seed: int = 0) -> VerifyReport:
    """Compare a built diagram against brute force; check the size bounds."""
    rep = VerifyReport()
    n = len(sites)
    m = K.m
    pts = sample_points(K, grid, samples, seed)
    labels = diagram.classify(pts)
    dm = distance_matrix(K, sites, pts)
    best = np.min(dm, axis=1)
    got = dm[np.arange(len(pts)), labels]
    bad = np.nonzero(got - best > TIE_EPS)[0]
    rep.record("labels", bad.size == 0,
               {"points": int(len(pts)), "mismatches": int(bad.size),
                "worst_excess": float(np.max(got - best)) if len(pts) else 0.0})

    edges = diagram.voronoi_edges()
    verts = diagram.voronoi_vertices()
    pieces_per_edge = [len(chain) for (_, chain) in edges]
    rep.record("edge_count", len(edges) <= 3 * n,
               {"edges": len(edges), "bound": 3 * n})
    rep.record("vertex_count", len(verts) <= 2 * n,
               {"vertices": len(verts), "bound": 2 * n})
    rep.record("pieces_per_edge",
               all(c <= 4 * m for c in pieces_per_edge),
               {"max": max(pieces_per_edge, default=0), "bound": 4 * m})

    worst_res = 0.0
    for (z, triple) in verts:
        ds = [hilbert_distance(K, z, sites[i]) for i in triple]
        worst_res = max(worst_res, max(ds) - min(ds))
    rep.record("vertex_equidistance", worst_res <= 1e-8,
               {"worst_residual": worst_res})

    # star-shapedness: midpoints of site->boundary-sample segments stay in cell
    rng = np.random.default_rng(seed + 1)
    star_bad = 0
    probes = []
    owners = []
    for i in range(n):
        bpts = diagram.cell_boundary_samples(i, 20, rng)
        s = sites[i]
        for b in bpts:
            for f in (0.25, 0.5, 0.75):
                probes.append((s.x + f * (b[0] - s.x), s.y + f * (b[1] - s.y)))
                owners.append(i)
    if probes:
        arr = np.asarray(probes)
        band = 1e-7 * K.diameter
        a = K.edges_abc
        depth = np.max(arr @ a[:, :2].T + a[:, 2][None, :], axis=1)
        keep = depth < -band
        arr = arr[keep]
        own = np.asarray(owners)[keep]
        dmp = distance_matrix(K, sites, arr)
        bestp = np.min(dmp, axis=1)
        star_bad = int(np.sum(dmp[np.arange(len(arr)), own] - bestp > TIE_EPS))
    rep.record("star_shaped", star_bad == 0, {"bad_probes": star_bad})
    return rep
