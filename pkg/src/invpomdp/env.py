"""Partially observed single-product inventory system.

The true inventory ``x`` evolves as ``x' = L(x + a - d)`` and the decision
maker only sees ``y = x + eta``.  Costs are an ordering cost ``K 1{a>0} + c a``
plus a piecewise-linear holding/backorder cost charged on the next level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .config import ProblemConfig, substream

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def dynamics_step(x, a, d, kind: str = "backorders"):
    w = np.asarray(x, dtype=float) + a - d
    if kind == "backorders":
        out = w
    elif kind == "lost_sales":
        out = np.maximum(w, 0.0)
    else:
        raise ValueError(f"unknown dynamics kind {kind!r}")
    return float(out) if np.ndim(out) == 0 else out


def observe(x, eta):
    return x + eta


def ordering_cost(a, fixed_cost: float, unit_cost: float):
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr < 0):
        raise ValueError("order quantity must be nonnegative")
    out = np.where(a_arr > 0, fixed_cost, 0.0) + unit_cost * a_arr
    return float(out) if out.ndim == 0 else out


def holding_cost(x, slope_pos: float = 1.0, slope_neg: float = 5.0):
    x_arr = np.asarray(x, dtype=float)
    out = np.where(x_arr > 0, slope_pos * x_arr, -slope_neg * x_arr)
    return float(out) if out.ndim == 0 else out


def normal_positive_part(mu, sd):
    """E[max(X, 0)] for X ~ N(mu, sd^2); ``sd`` may be zero."""
    mu = np.asarray(mu, dtype=float)
    sd = np.asarray(sd, dtype=float)
    safe = np.where(sd > 0, sd, 1.0)
    r = mu / safe
    smooth = mu * ndtr(r) + safe * _INV_SQRT_2PI * np.exp(-0.5 * r * r)
    return np.where(sd > 0, smooth, np.maximum(mu, 0.0))


def normal_holding(mu, sd, slope_pos: float, slope_neg: float):
    """E[h(X)] for X ~ N(mu, sd^2) and h piecewise linear with the given slopes."""
    return (slope_pos + slope_neg) * normal_positive_part(mu, sd) - slope_neg * np.asarray(mu)


def _exp_positive_part(w, mean):
    # E[(w - D)^+], D ~ Exp(mean)
    w = np.asarray(w, dtype=float)
    pos = w - mean * (1.0 - np.exp(-np.maximum(w, 0.0) / mean))
    return np.where(w > 0, pos, 0.0)


def expected_holding(w, cfg: ProblemConfig):
    """E[h(L(w - D))] for post-order level ``w`` under the configured demand."""
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("expected_holding: non-finite inventory level")
    hp, hn = cfg.holding_slope_pos, cfg.backorder_slope
    if cfg.demand_kind == "gaussian":
        sd = math.sqrt(cfg.demand_var)
        pos = normal_positive_part(w - cfg.demand_mean, sd)
        mean_next = w - cfg.demand_mean
    else:
        pos = _exp_positive_part(w, cfg.demand_mean)
        mean_next = w - cfg.demand_mean
    if cfg.dynamics_kind == "lost_sales":
        return hp * pos
    return (hp + hn) * pos - hn * mean_next


def expected_stage_cost(x, a, cfg: ProblemConfig):
    """c(x, a) = K 1{a>0} + c a + E[h(L(x + a - D))]."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(a)):
        raise ValueError("expected_stage_cost: non-finite input")
    out = ordering_cost(a, cfg.fixed_cost, cfg.unit_cost) + expected_holding(x + a, cfg)
    return float(out) if np.ndim(out) == 0 else out


def demand_pdf(d, cfg: ProblemConfig):
    d = np.asarray(d, dtype=float)
    if cfg.demand_kind == "gaussian":
        var = cfg.demand_var
        return np.exp(-0.5 * (d - cfg.demand_mean) ** 2 / var) / math.sqrt(2 * math.pi * var)
    rate = 1.0 / cfg.demand_mean
    return np.where(d >= 0, rate * np.exp(-rate * np.maximum(d, 0.0)), 0.0)


def stage_cost_quad(x: float, a: float, cfg: ProblemConfig) -> float:
    """Expected stage cost by adaptive quadrature over the demand density.

    Slow reference path; the closed forms in :func:`expected_stage_cost` are
    checked against it.
    """
    if cfg.demand_kind == "gaussian" and cfg.demand_var == 0:
        nxt = dynamics_step(x, a, cfg.demand_mean, cfg.dynamics_kind)
        return ordering_cost(a, cfg.fixed_cost, cfg.unit_cost) + holding_cost(
            nxt, cfg.holding_slope_pos, cfg.backorder_slope)

    def integrand(d):
        nxt = dynamics_step(x, a, d, cfg.dynamics_kind)
        return holding_cost(nxt, cfg.holding_slope_pos, cfg.backorder_slope) * demand_pdf(d, cfg)

    # the mass outside these limits is below 1e-25
    kink = x + a
    if cfg.demand_kind == "gaussian":
        sd = math.sqrt(cfg.demand_var)
        lo, hi = cfg.demand_mean - 12.0 * sd, cfg.demand_mean + 12.0 * sd
    else:
        lo, hi = 0.0, 60.0 * cfg.demand_mean
    pieces = [(lo, kink), (kink, hi)] if lo < kink < hi else [(lo, hi)]
    total = sum(integrate.quad(integrand, p, q, limit=200, epsabs=1e-11, epsrel=1e-11)[0]
                for p, q in pieces)
    return ordering_cost(a, cfg.fixed_cost, cfg.unit_cost) + total


def sample_demand(rng: np.random.Generator, cfg: ProblemConfig, size=None):
    if cfg.demand_kind == "gaussian":
        return cfg.demand_mean + math.sqrt(cfg.demand_var) * rng.standard_normal(size)
    return cfg.demand_mean * rng.standard_exponential(size)


@dataclass
class Trajectory:
    x: np.ndarray  # true levels x_0..x_T
    a: np.ndarray  # orders a_0..a_{T-1}
    y: np.ndarray  # observations y_0..y_T
    d: np.ndarray  # demands d_0..d_{T-1}
    cost: np.ndarray  # realized stage costs c_0..c_{T-1}

    def discounted_cost(self, discount: float) -> float:
        w = discount ** np.arange(len(self.cost))
        return math.fsum(w * self.cost)


class EpisodeNoise:
    """Exogenous randomness of one episode drawn from named substreams.

    Draws are made up front, so two policies fed the same ``EpisodeNoise``
    face the same initial level, demands and measurement errors.
    """

    def __init__(self, cfg: ProblemConfig, seed: int, episode: int = 0):
        T = cfg.len_episode
        self.x0 = cfg.initial_mean + math.sqrt(cfg.initial_var) * \
            substream(seed, "init", episode).standard_normal()
        self.eta = math.sqrt(cfg.noise_var) * substream(seed, "noise", episode).standard_normal(T + 1)
        self.d = sample_demand(substream(seed, "demand", episode), cfg, T)


def sample_episode(policy: Callable[[int, np.ndarray, np.ndarray], float],
                   cfg: ProblemConfig, seed: int, episode: int = 0) -> Trajectory:
    """Run one episode.

    ``policy(t, y_hist, a_hist)`` sees observations ``y_0..y_t`` and past
    orders ``a_0..a_{t-1}``; its output is clipped to ``[0, max_action]``.
    Stage costs are realized: ordering cost plus holding cost of ``x_{t+1}``.
    """
    T = cfg.len_episode
    noise = EpisodeNoise(cfg, seed, episode)
    x = np.empty(T + 1)
    y = np.empty(T + 1)
    a = np.empty(T)
    cost = np.empty(T)
    x[0] = noise.x0
    y[0] = observe(x[0], noise.eta[0])
    for t in range(T):
        a[t] = min(max(float(policy(t, y[: t + 1], a[:t])), 0.0), cfg.max_action)
        x[t + 1] = dynamics_step(x[t], a[t], noise.d[t], cfg.dynamics_kind)
        y[t + 1] = observe(x[t + 1], noise.eta[t + 1])
        cost[t] = ordering_cost(a[t], cfg.fixed_cost, cfg.unit_cost) + holding_cost(
            x[t + 1], cfg.holding_slope_pos, cfg.backorder_slope)
    return Trajectory(x=x, a=a, y=y, d=noise.d.copy(), cost=cost)
