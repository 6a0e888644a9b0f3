"""Bulk distance kernels: Hilbert distances from many points to many sites.

Two interchangeable backends compute the same arrays:

* ``numba``  -- @njit(parallel) loops, compiled on first use (default when
  numba imports cleanly);
* ``numpy``  -- vectorized broadcasting, chunked to bound memory.

Select explicitly with the environment variable
``HILBERT_VORONOI_BACKEND=numba|numpy``.  Polygons enter as the (m, 3) array
of unit-normal edge-line coefficients (``ConvexPolygon.edges_abc``).
"""

from __future__ import annotations

import math
import os

import numpy as np

_INF = math.inf


def _chosen_backend() -> str:
    env = os.environ.get("HILBERT_VORONOI_BACKEND", "").strip().lower()
    if env in ("numba", "numpy"):
        return env
    if env:
        raise ValueError(f"HILBERT_VORONOI_BACKEND must be numba or numpy, got {env!r}")
    try:
        import numba  # noqa: F401
        return "numba"
    except ImportError:
        return "numpy"


BACKEND = _chosen_backend()


def _distance_matrix_numpy(edges: np.ndarray, pts: np.ndarray,
                           sites: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """(N, n) Hilbert distances, vectorized over a bounded chunk of points."""
    N = pts.shape[0]
    n = sites.shape[0]
    out = np.empty((N, n), dtype=np.float64)
    a = edges[:, 0]
    b = edges[:, 1]
    c = edges[:, 2]
    for lo in range(0, N, chunk):
        hi = min(lo + chunk, N)
        p = pts[lo:hi]                                   # (C, 2)
        d = sites[None, :, :] - p[:, None, :]            # (C, n, 2)
        # den/val per edge: (C, n, m)
        den = d[:, :, 0:1] * a[None, None, :] + d[:, :, 1:2] * b[None, None, :]
        val = (p[:, None, 0:1] * a[None, None, :]
               + p[:, None, 1:2] * b[None, None, :] + c[None, None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -val / den
        t_fwd = np.min(np.where(den > 0.0, t, _INF), axis=2)
        t_back = np.max(np.where(den < 0.0, t, -_INF), axis=2)
        same = np.all(d == 0.0, axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = 0.5 * np.log((t_fwd * (1.0 - t_back))
                             / ((t_fwd - 1.0) * (-t_back)))
        h = np.where(same, 0.0, h)
        out[lo:hi] = h
    return out


try:  # pragma: no cover - exercised through the public wrappers
    from numba import njit, prange

    @njit(cache=True, parallel=True, fastmath=False)
    def _distance_matrix_numba(edges, pts, sites):  # pragma: no cover
        N = pts.shape[0]
        n = sites.shape[0]
        m = edges.shape[0]
        out = np.empty((N, n), dtype=np.float64)
        for i in prange(N):
            px = pts[i, 0]
            py = pts[i, 1]
            for j in range(n):
                dx = sites[j, 0] - px
                dy = sites[j, 1] - py
                if dx == 0.0 and dy == 0.0:
                    out[i, j] = 0.0
                    continue
                t_fwd = _INF
                t_back = -_INF
                for k in range(m):
                    den = edges[k, 0] * dx + edges[k, 1] * dy
                    if den == 0.0:
                        continue
                    t = -(edges[k, 0] * px + edges[k, 1] * py + edges[k, 2]) / den
                    if den > 0.0:
                        if t < t_fwd:
                            t_fwd = t
                    else:
                        if t > t_back:
                            t_back = t
                out[i, j] = 0.5 * math.log(
                    (t_fwd * (1.0 - t_back)) / ((t_fwd - 1.0) * (-t_back))
                )
        return out

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def distance_matrix(edges: np.ndarray, pts: np.ndarray,
                    sites: np.ndarray) -> np.ndarray:
    """Hilbert distances d(pts[i], sites[j]) as an (N, n) array.

    All points and sites must be strictly interior to the polygon; the
    kernels do not revalidate.
    """
    edges = np.ascontiguousarray(edges, dtype=np.float64)
    pts = np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 2)
    sites = np.ascontiguousarray(sites, dtype=np.float64).reshape(-1, 2)
    if BACKEND == "numba" and HAVE_NUMBA:
        return _distance_matrix_numba(edges, pts, sites)
    return _distance_matrix_numpy(edges, pts, sites)


def nearest_site(edges: np.ndarray, pts: np.ndarray,
                 sites: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per point: (index of the nearest site, its distance); lowest index wins ties."""
    dm = distance_matrix(edges, pts, sites)
    idx = np.argmin(dm, axis=1)
    return idx, dm[np.arange(dm.shape[0]), idx]
