"""Ray marching against a cell set: which directions from a point see the set.

A ray from ``x`` in direction ``s`` is sampled at ``x + k*step*s`` for
``k = 1, 2, ...`` while it stays within ``reach`` of the domain center; it
hits when a sample rounds to a member cell.  Samples farther than
``box_radius`` from the set's bounding ball cannot round to a member and are
skipped, which leaves the result identical to naive marching.

The compiled kernel is used when the extension is built; otherwise the NumPy
implementation below runs.  Both are exposed for benchmarking.
"""

from __future__ import annotations

import numpy as np

try:
    from ._raycast import cast_hits as cast_hits_compiled
except ImportError:  # extension not built
    cast_hits_compiled = None

BACKEND = "cython" if cast_hits_compiled is not None else "python"


def cast_hits_python(points, dirs, member, dims, offset, h, center, reach, step, box_center, box_radius, chunk=1 << 18):
    points = np.ascontiguousarray(points, float)
    dirs = np.ascontiguousarray(dirs, float)
    member = np.asarray(member, np.uint8)
    dims = np.asarray(dims, np.int64)
    center = np.asarray(center, float)
    box_center = np.asarray(box_center, float)
    P, n = points.shape
    M = dirs.shape[0]
    out = np.zeros((P, M), np.uint8)
    strides = np.ones(n, np.int64)
    for d in range(n - 2, -1, -1):
        strides[d] = strides[d + 1] * dims[d + 1]
    rows_per_chunk = max(1, chunk // max(M, 1))
    for s in range(0, P, rows_per_chunk):
        pts = points[s:s + rows_per_chunk]
        xc = pts - center
        b = xc @ dirs.T
        q = np.sum(xc * xc, axis=1)[:, None]
        disc = b * b - (q - reach * reach)
        ok = disc > 0
        texit = -b + np.sqrt(np.where(ok, disc, 0.0))
        xb = pts - box_center
        b2 = xb @ dirs.T
        q2 = np.sum(xb * xb, axis=1)[:, None]
        disc2 = b2 * b2 - (q2 - box_radius * box_radius)
        ok &= disc2 >= 0
        root = np.sqrt(np.where(disc2 >= 0, disc2, 0.0))
        tin, tout = -b2 - root, np.minimum(-b2 + root, texit)
        with np.errstate(invalid="ignore"):
            k0 = np.maximum(np.ceil(tin / step), 1).astype(np.int64)
            k1 = np.floor(tout / step).astype(np.int64)
        ok &= k1 >= k0
        pi, dj = np.nonzero(ok)
        k = k0[pi, dj]
        kend = k1[pi, dj]
        hit = np.zeros(pi.size, bool)
        active = np.ones(pi.size, bool)
        while True:
            a = np.nonzero(active)[0]
            if a.size == 0:
                break
            t = (k[a] * step)[:, None]
            pos = pts[pi[a]] + t * dirs[dj[a]]
            idx = np.floor((pos - center) / h + 0.5).astype(np.int64) + offset
            inside = np.all((idx >= 0) & (idx < dims), axis=1)
            lin = np.where(inside, idx @ strides, 0)
            got = inside & (member[lin] != 0)
            hit[a[got]] = True
            k[a] += 1
            active[a[got | (k[a] > kend[a])]] = False
        out[s + pi[hit], dj[hit]] = 1
    return out


def cast_hits(points, dirs, member, dims, offset, h, center, reach, step, box_center, box_radius, backend=None):
    """(P, M) uint8 matrix: 1 where the ray from point i along direction j hits."""
    backend = backend or BACKEND
    if backend == "cython":
        if cast_hits_compiled is None:
            raise RuntimeError("compiled kernel not available")
        return cast_hits_compiled(
            np.ascontiguousarray(points, float), np.ascontiguousarray(dirs, float),
            np.ascontiguousarray(member, np.uint8), np.ascontiguousarray(dims, np.int64), int(offset), float(h),
            np.ascontiguousarray(center, float), float(reach), float(step),
            np.ascontiguousarray(box_center, float), float(box_radius),
        )
    if backend == "python":
        return cast_hits_python(points, dirs, member, dims, offset, h, center, reach, step, box_center, box_radius)
    raise ValueError(f"unknown backend {backend!r}")
