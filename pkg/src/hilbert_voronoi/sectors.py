"""Sector decomposition of K around a site.

The chords through the site and each vertex of K cut the polygon into at most
2m triangular regions.  Within one sector every chord through the site meets
the same pair of polygon edges: ``front_edge`` beyond the sector point and
``back_edge`` beyond the site.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

from .geometry import ConvexPolygon, GeometryError, Point


@dataclass(frozen=True)
class Sector:
    site: Point
    index: int
    t0: float           # boundary params of the outer arc (ccw, t1 may wrap)
    t1: float
    theta0: float       # direction angles from the site, theta1 > theta0
    theta1: float
    front_edge: int     # edge of K beyond points of the sector
    back_edge: int      # edge of K beyond the site


class SectorFan:
    """All sectors of one site, with locate-by-direction support."""

    def __init__(self, K: ConvexPolygon, site: Point, sectors: list[Sector]):
        self.K = K
        self.site = site
        self.sectors = sectors
        self._theta0 = [s.theta0 for s in sectors]

    def __len__(self):
        return len(self.sectors)

    def __iter__(self):
        return iter(self.sectors)

    def __getitem__(self, i: int) -> Sector:
        return self.sectors[i % len(self.sectors)]

    def locate_direction(self, dx: float, dy: float) -> int:
        """Index of the sector whose angular interval contains (dx, dy)."""
        base = self._theta0[0]
        th = (math.atan2(dy, dx) - base) % (2.0 * math.pi) + base
        i = bisect.bisect_right(self._theta0, th) - 1
        return i % len(self.sectors)

    def locate_point(self, z: Point) -> int:
        return self.locate_direction(z.x - self.site.x, z.y - self.site.y)


def sectors(K: ConvexPolygon, p: Point) -> SectorFan:
    """Sector fan of site p, counterclockwise; merged sectors are deduplicated."""
    if not K.contains_interior(p):
        raise GeometryError("sector site must be strictly interior")
    m = K.m
    params: list[float] = []
    for j, v in enumerate(K.vertices):
        params.append(float(j))
        # antipodal endpoint of the chord through v and p
        dx, dy = p.x - v.x, p.y - v.y
        t, e = K.ray_exit(p, dx, dy)
        w = Point(p.x + t * dx, p.y + t * dy)
        params.append(K.boundary_param(e, w))
    params.sort()
    # merge params that coincide (site on a vertex chord)
    tol = 1e-12 * m
    merged: list[float] = []
    for t in params:
        if merged and t - merged[-1] <= tol:
            continue
        merged.append(t)
    if merged and (merged[0] + m) - merged[-1] <= tol:
        merged.pop()
    secs: list[Sector] = []
    base = None
    for i, t0 in enumerate(merged):
        t1 = merged[(i + 1) % len(merged)]
        mid = 0.5 * (t0 + t1) if t1 > t0 else 0.5 * (t0 + t1 + m)
        b = K.boundary_point(mid)
        ux, uy = b.x - p.x, b.y - p.y
        front = int(mid % m)
        _, back = K.ray_exit(p, -ux, -uy)
        th0 = math.atan2(K.boundary_point(t0).y - p.y, K.boundary_point(t0).x - p.x)
        th1 = math.atan2(K.boundary_point(t1).y - p.y, K.boundary_point(t1).x - p.x)
        if base is None:
            base = th0
        th0 = (th0 - base) % (2.0 * math.pi) + base
        th1 = (th1 - base) % (2.0 * math.pi) + base
        if th1 <= th0:
            th1 += 2.0 * math.pi
        secs.append(
            Sector(
                site=p, index=i, t0=t0, t1=t1,
                theta0=th0, theta1=th1, front_edge=front, back_edge=back,
            )
        )
    return SectorFan(K, p, secs)
