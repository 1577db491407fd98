"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Both implementations follow the same arithmetic contract; the test suite
runs each against the other.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

DEMAND_GAUSS = 0
DEMAND_EXP = 1
DEMAND_DIRAC = 2

STATUS_OK = 0
STATUS_ZERO_MASS = 1


def grid_weights(n: int, delta: float) -> np.ndarray:
    w = np.full(n, delta)
    if n > 1:
        w[0] = w[-1] = 0.5 * delta
    return w


def _demand_kernel(offsets, kind, d_mean, d_var):
    if kind == DEMAND_GAUSS:
        return np.exp(-0.5 * (offsets - d_mean) ** 2 / d_var) / math.sqrt(2.0 * math.pi * d_var)
    rate = 1.0 / d_mean
    return np.where(offsets >= 0.0, rate * np.exp(-rate * np.maximum(offsets, 0.0)), 0.0)


def grid_filter_step(z, lo, hi, a, y, x0, delta, kind, d_mean, d_var, noise_var, min_z):
    """One Bayesian update of a grid density.

    Returns ``(z_new, lo_new, hi_new, trimmed_mass, status)``.  ``z`` is zero
    outside ``[lo, hi]``; the returned density is zero outside the new span.
    """
    n = z.shape[0]
    w = grid_weights(n, delta)
    zw = np.zeros(n)
    zw[lo:hi + 1] = z[lo:hi + 1] * w[lo:hi + 1]
    grid = x0 + delta * np.arange(n)

    if kind == DEMAND_DIRAC:
        # prediction is the prior density shifted by a - d_mean
        pred = np.interp(grid - a + d_mean, grid, z, left=0.0, right=0.0)
    else:
        # pred[j] = sum_i f_D((i - j) delta + a) zw[i]
        offsets = delta * np.arange(-(n - 1), n) + a
        kern = _demand_kernel(offsets, kind, d_mean, d_var)
        pred = _toeplitz_apply(zw, lo, hi, kern, n)

    if noise_var > 0:
        r = y - grid
        lik = np.exp(-0.5 * r * r / noise_var) / math.sqrt(2.0 * math.pi * noise_var)
    else:
        lik = np.maximum(0.0, 1.0 - np.abs(grid - y) / delta)

    u = pred * lik
    mass = float(np.dot(u, w))
    if not (mass > 0.0) or not math.isfinite(mass):
        return z, lo, hi, 0.0, STATUS_ZERO_MASS
    u = u / mass

    above = np.flatnonzero(u > min_z)
    if above.size == 0:
        above = np.flatnonzero(u > 0.0)
    lo_new, hi_new = int(above[0]), int(above[-1])
    out = np.zeros(n)
    out[lo_new:hi_new + 1] = u[lo_new:hi_new + 1]
    kept = float(np.dot(out, w))
    out /= kept
    return out, lo_new, hi_new, 1.0 - kept, STATUS_OK


def _toeplitz_apply(zw, lo, hi, kern, n):
    # entry j pairs zw[i] with kern[(i - j) + (n - 1)]
    idx_i = np.arange(lo, hi + 1)
    idx = idx_i[:, None] - np.arange(n)[None, :] + (n - 1)
    return zw[lo:hi + 1] @ kern[idx]


CDF_CUT = -10.0


def transition_table(centers, actions, edges, d_mean, scale):
    """Cell transition probabilities ``P[i, k, j]``.

    Cell ``j`` collects next means in ``[edges[j-1], edges[j])``; the first
    cell also takes everything below ``edges[0]`` and the last everything at
    or above ``edges[-1]``.  The last column is the complement so rows sum
    to one.  The normal cdf is taken as exactly 0 below ``CDF_CUT``
    standard deviations (it is under 1e-23 there).
    """
    mu = centers[:, None] + actions[None, :] - d_mean
    diff = edges[None, None, :] - mu[:, :, None]
    if scale > 0:
        z = diff / scale
        cdf = np.where(z <= CDF_CUT, 0.0, ndtr(z))
    else:
        cdf = (diff > 0).astype(float)
    nc = edges.shape[0] + 1
    P = np.empty(mu.shape + (nc,))
    P[:, :, 0] = cdf[:, :, 0]
    P[:, :, 1:nc - 1] = cdf[:, :, 1:] - cdf[:, :, :-1]
    P[:, :, nc - 1] = 1.0 - P[:, :, :nc - 1].sum(axis=2)
    np.maximum(P, 0.0, out=P)
    return P


def backward_sweep(P, cost, v_next, discount):
    """One stage of backward induction; ties go to the lowest action index."""
    q = cost + discount * (P @ v_next)
    best = np.argmin(q, axis=1)
    return q[np.arange(q.shape[0]), best], best
