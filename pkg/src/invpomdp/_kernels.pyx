# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: grid belief update, cell transition table, backward sweep.

Semantics match ``_kernels_py``; see that module for the contracts.
"""

import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport ddot
from libc.math cimport exp, sqrt, erfc, fabs, isfinite, M_PI

cnp.import_array()

cdef enum:
    DEMAND_GAUSS = 0
    DEMAND_EXP = 1
    DEMAND_DIRAC = 2


cdef double CDF_CUT = -10.0


cdef inline double _ndtr(double x) nogil:
    return 0.5 * erfc(-x / sqrt(2.0))


def grid_weights(Py_ssize_t n, double delta):
    w = np.full(n, delta)
    if n > 1:
        w[0] = 0.5 * delta
        w[n - 1] = 0.5 * delta
    return w


def grid_filter_step(const double[::1] z, Py_ssize_t lo, Py_ssize_t hi, double a, double y,
                     double x0, double delta, int kind, double d_mean, double d_var,
                     double noise_var, double min_z):
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t i, j, k, lo_new = -1, hi_new = -1
    cdef double[::1] w = grid_weights(n, delta)
    cdef double[::1] kern
    cdef double[::1] pred = np.zeros(n)
    cdef double[::1] u = np.zeros(n)
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    cdef double s, off, xj, src, frac, r, lik, mass = 0.0, kept = 0.0
    cdef double norm_d, norm_e, rate

    with nogil:
        if kind == DEMAND_DIRAC:
            for j in range(n):
                xj = x0 + delta * j
                src = (xj - a + d_mean - x0) / delta
                if src < 0.0 or src > n - 1:
                    pred[j] = 0.0
                    continue
                k = <Py_ssize_t>src
                if k >= n - 1:
                    pred[j] = z[n - 1]
                    continue
                frac = src - k
                pred[j] = (1.0 - frac) * z[k] + frac * z[k + 1]
        else:
            with gil:
                kern = np.empty(2 * n - 1)
            if kind == DEMAND_GAUSS:
                norm_d = 1.0 / sqrt(2.0 * M_PI * d_var)
                for k in range(2 * n - 1):
                    off = delta * (k - (n - 1)) + a - d_mean
                    kern[k] = norm_d * exp(-0.5 * off * off / d_var)
            else:
                rate = 1.0 / d_mean
                for k in range(2 * n - 1):
                    off = delta * (k - (n - 1)) + a
                    kern[k] = rate * exp(-rate * off) if off >= 0.0 else 0.0
            for j in range(n):
                s = 0.0
                for i in range(lo, hi + 1):
                    s += z[i] * w[i] * kern[i - j + n - 1]
                pred[j] = s

        if noise_var > 0.0:
            norm_e = 1.0 / sqrt(2.0 * M_PI * noise_var)
        for j in range(n):
            xj = x0 + delta * j
            if noise_var > 0.0:
                r = y - xj
                lik = norm_e * exp(-0.5 * r * r / noise_var)
            else:
                lik = 1.0 - fabs(xj - y) / delta
                if lik < 0.0:
                    lik = 0.0
            u[j] = pred[j] * lik
            mass += u[j] * w[j]

    if not (mass > 0.0) or not isfinite(mass):
        return np.asarray(z), lo, hi, 0.0, 1

    with nogil:
        for j in range(n):
            u[j] /= mass
            if u[j] > min_z:
                if lo_new < 0:
                    lo_new = j
                hi_new = j
        if lo_new < 0:
            for j in range(n):
                if u[j] > 0.0:
                    if lo_new < 0:
                        lo_new = j
                    hi_new = j
        for j in range(lo_new, hi_new + 1):
            out[j] = u[j]
            kept += u[j] * w[j]
        for j in range(lo_new, hi_new + 1):
            out[j] /= kept
    return out_arr, lo_new, hi_new, 1.0 - kept, 0


def transition_table(const double[::1] centers, const double[::1] actions, const double[::1] edges,
                     double d_mean, double scale):
    cdef Py_ssize_t m = centers.shape[0], na = actions.shape[0], ne = edges.shape[0]
    cdef Py_ssize_t nc = ne + 1
    cdef Py_ssize_t i, k, j
    cdef double mu, prev, c, acc, diff, z
    P_arr = np.empty((m, na, nc))
    cdef double[:, :, ::1] P = P_arr
    with nogil:
        for i in range(m):
            for k in range(na):
                mu = centers[i] + actions[k] - d_mean
                prev = 0.0
                acc = 0.0
                for j in range(ne):
                    diff = edges[j] - mu
                    if scale > 0.0:
                        z = diff / scale
                        # the cdf is below 1e-23 under CDF_CUT and exactly 1 in double above 9
                        if z <= CDF_CUT:
                            c = 0.0
                        elif z >= 9.0:
                            c = 1.0
                        else:
                            c = _ndtr(z)
                    else:
                        c = 1.0 if diff > 0.0 else 0.0
                    P[i, k, j] = c - prev if c > prev else 0.0
                    acc += P[i, k, j]
                    prev = c
                P[i, k, nc - 1] = 1.0 - acc if acc < 1.0 else 0.0
    return P_arr


def backward_sweep(const double[:, :, ::1] P, const double[:, ::1] cost, const double[::1] v_next,
                   double discount):
    cdef Py_ssize_t m = P.shape[0], na = P.shape[1], mj = P.shape[2]
    cdef Py_ssize_t i, k, best_k
    cdef int n = <int>mj, inc = 1
    cdef double q, best, ev
    v_arr = np.empty(m)
    best_arr = np.empty(m, dtype=np.intp)
    cdef double[::1] v = v_arr
    cdef Py_ssize_t[::1] arg = best_arr
    with nogil:
        for i in range(m):
            best = 0.0
            best_k = -1
            for k in range(na):
                ev = ddot(&n, <double*>&P[i, k, 0], &inc, <double*>&v_next[0], &inc)
                q = cost[i, k] + discount * ev
                if best_k < 0 or q < best:
                    best = q
                    best_k = k
            v[i] = best
            arg[i] = best_k
    return v_arr, best_arr
