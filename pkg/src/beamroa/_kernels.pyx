# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference versions."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def schur_psd_block(const double[:, ::1] W, const long[::1] ptr, const int[::1] ii,
                    const int[::1] jj, const double[::1] vv, const long[::1] eq,
                    double[:, ::1] M):
    cdef Py_ssize_t neq = eq.shape[0]
    cdef Py_ssize_t p, q, s, t
    cdef long ep, eqq
    cdef int a, b
    cdef double vs, acc
    for p in range(neq):
        ep = eq[p]
        for q in range(p, neq):
            eqq = eq[q]
            acc = 0.0
            for s in range(ptr[p], ptr[p + 1]):
                a = ii[s]
                b = jj[s]
                vs = vv[s]
                for t in range(ptr[q], ptr[q + 1]):
                    acc += vs * vv[t] * W[a, ii[t]] * W[jj[t], b]
            M[ep, eqq] += acc
            if q != p:
                M[eqq, ep] += acc


def upwind_step(const double[:, ::1] r, const double[::1] speeds, double dt, double dx,
                const double[:, ::1] B, const double[:, :, ::1] G,
                const double[:, ::1] kappa, bint nonlinear):
    cdef Py_ssize_t nodes = r.shape[0]
    cdef Py_ssize_t nv = r.shape[1]
    cdef Py_ssize_t j, i, k, l
    cdef double acc, gi, lam, rk
    out_arr = np.empty((nodes, nv))
    cdef double[:, ::1] out = out_arr
    for j in range(nodes):
        for i in range(nv):
            acc = 0.0
            for k in range(nv):
                acc -= B[i, k] * r[j, k]
            if nonlinear:
                gi = 0.0
                for k in range(nv):
                    rk = r[j, k]
                    if rk == 0.0:
                        continue
                    for l in range(nv):
                        gi += rk * G[i, k, l] * r[j, l]
                acc += gi
            out[j, i] = r[j, i] + dt * acc
            lam = dt / dx * speeds[i]
            if speeds[i] < 0:
                if j < nodes - 1:
                    out[j, i] -= lam * (r[j + 1, i] - r[j, i])
            else:
                if j > 0:
                    out[j, i] -= lam * (r[j, i] - r[j - 1, i])
    for i in range(6):
        out[nodes - 1, i] = -out[nodes - 1, i + 6]
    for i in range(6):
        acc = 0.0
        for k in range(6):
            acc += kappa[i, k] * out[0, k]
        out[0, i + 6] = acc
    return out_arr
