# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled ray-marching kernel; mirrors raycast.cast_hits_python exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, ceil

cnp.import_array()


def cast_hits(double[:, ::1] points, double[:, ::1] dirs, cnp.uint8_t[::1] member,
              long[::1] dims, long offset, double h, double[::1] center, double reach,
              double step, double[::1] box_center, double box_radius):
    cdef Py_ssize_t P = points.shape[0], M = dirs.shape[0], n = points.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out_arr = np.zeros((P, M), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, d
    cdef long k, k0, k1, idx, lin
    cdef double b, q, disc, texit, tin, tout, t, pd
    cdef double xc[3]
    cdef double xb[3]
    cdef bint inside
    with nogil:
        for i in range(P):
            for d in range(n):
                xc[d] = points[i, d] - center[d]
                xb[d] = points[i, d] - box_center[d]
            for j in range(M):
                b = 0.0
                q = 0.0
                for d in range(n):
                    b = b + xc[d] * dirs[j, d]
                    q = q + xc[d] * xc[d]
                disc = b * b - (q - reach * reach)
                if disc <= 0.0:
                    continue
                texit = -b + sqrt(disc)
                b = 0.0
                q = 0.0
                for d in range(n):
                    b = b + xb[d] * dirs[j, d]
                    q = q + xb[d] * xb[d]
                disc = b * b - (q - box_radius * box_radius)
                if disc < 0.0:
                    continue
                tin = -b - sqrt(disc)
                tout = -b + sqrt(disc)
                if tout > texit:
                    tout = texit
                k0 = <long>ceil(tin / step)
                if k0 < 1:
                    k0 = 1
                k1 = <long>floor(tout / step)
                for k in range(k0, k1 + 1):
                    t = k * step
                    lin = 0
                    inside = True
                    for d in range(n):
                        pd = points[i, d] + t * dirs[j, d]
                        idx = <long>floor((pd - center[d]) / h + 0.5) + offset
                        if idx < 0 or idx >= dims[d]:
                            inside = False
                            break
                        lin = lin * dims[d] + idx
                    if inside and member[lin]:
                        out[i, j] = 1
                        break
    return out_arr
