"""Closed-form Gaussian belief recursion.

With normal initial level, demand and measurement noise, every posterior of
the inventory level is normal.  Its variance follows a deterministic
recursion, so the mean alone drives an ordinary inventory problem whose
demand ``D*_t`` and holding cost ``h*_t`` depend on the stage.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ProblemConfig
from .env import holding_cost, normal_holding, ordering_cost


@dataclass(frozen=True)
class GaussBelief:
    mean: float
    var: float
    t: int = 0


@dataclass(frozen=True)
class DStarParams:
    mean: float
    var: float
    t: int


def posterior_init(prior_mean: float, prior_var: float, noise_var: float,
                   y0: float) -> GaussBelief:
    """Condition the N(prior_mean, prior_var) initial level on ``y0``."""
    total = prior_var + noise_var
    if total <= 0:
        raise ValueError("prior and noise variances are both zero")
    mean = (noise_var * prior_mean + prior_var * y0) / total
    return GaussBelief(mean=mean, var=prior_var * noise_var / total, t=0)


def variance_step(var: float, demand_var: float, noise_var: float) -> float:
    pred = var + demand_var
    total = pred + noise_var
    if total == 0:
        return 0.0
    return pred * noise_var / total


def sigma_limit(demand_var: float, noise_var: float) -> float:
    """Fixed point of :func:`variance_step`."""
    if demand_var == 0 or noise_var == 0:
        return 0.0
    r = noise_var / demand_var
    # (sqrt(1+4r) - 1)/2 written without cancellation
    return demand_var * 2.0 * r / (math.sqrt(1.0 + 4.0 * r) + 1.0)


def mean_update(b: GaussBelief, a: float, y_next: float, cfg: ProblemConfig) -> GaussBelief:
    pred_mean = b.mean + a - cfg.demand_mean
    pred_var = b.var + cfg.demand_var
    total = pred_var + cfg.noise_var
    if total == 0:
        return GaussBelief(mean=pred_mean, var=0.0, t=b.t + 1)
    mean = (cfg.noise_var * pred_mean + pred_var * y_next) / total
    return GaussBelief(mean=mean, var=variance_step(b.var, cfg.demand_var, cfg.noise_var),
                       t=b.t + 1)


def dstar_var(var: float, demand_var: float, noise_var: float) -> float:
    pred = var + demand_var
    total = pred + noise_var
    if total == 0:
        return 0.0
    return pred * pred / total


class VarianceTable:
    """Posterior variances and equivalent-demand variances for ``t = 0..n``.

    The posterior variance does not depend on actions or observations, so it
    is computed once per configuration.
    """

    def __init__(self, cfg: ProblemConfig, n: int | None = None):
        n = cfg.len_episode if n is None else n
        self.demand_var = cfg.demand_var
        self.noise_var = cfg.noise_var
        total = cfg.initial_var + cfg.noise_var
        if total <= 0:
            raise ValueError("initial_var and noise_var are both zero")
        post = np.empty(n + 1)
        post[0] = cfg.initial_var * cfg.noise_var / total
        for t in range(n):
            post[t + 1] = variance_step(post[t], cfg.demand_var, cfg.noise_var)
        self.post_var = post
        self.dstar_var = np.array([dstar_var(v, cfg.demand_var, cfg.noise_var) for v in post])
        self.initial_mean_var = cfg.initial_var ** 2 / total

    def __len__(self):
        return len(self.post_var)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "post_var", "dstar_var"])
            for t, (v, dv) in enumerate(zip(self.post_var, self.dstar_var)):
                w.writerow([t, repr(float(v)), repr(float(dv))])


def dstar_params(t: int, cfg: ProblemConfig, table: VarianceTable | None = None) -> DStarParams:
    if table is None or len(table) <= t:
        table = VarianceTable(cfg, max(t, cfg.len_episode))
    return DStarParams(mean=cfg.demand_mean, var=float(table.dstar_var[t]), t=t)


def effective_holding(t: int, x, cfg: ProblemConfig, table: VarianceTable | None = None):
    """h*_t(x) = E[h(x + Z_t)] with Z_t ~ N(0, sigma_{t+1}^2)."""
    if table is None or len(table) <= t + 1:
        table = VarianceTable(cfg, max(t + 1, cfg.len_episode))
    s = math.sqrt(table.post_var[t + 1])
    return effective_holding_sd(x, s, cfg)


def effective_holding_sd(x, sd: float, cfg: ProblemConfig):
    if sd == 0:
        return holding_cost(x, cfg.holding_slope_pos, cfg.backorder_slope)
    out = normal_holding(x, sd, cfg.holding_slope_pos, cfg.backorder_slope)
    return float(out) if np.ndim(out) == 0 else out


def belief_stage_cost(mean, var: float, a, cfg: ProblemConfig):
    """Expected stage cost when the level is N(mean, var) and demand is Gaussian.

    The next level is N(mean + a - D, var + demand_var), so the holding part
    is one normal expectation.
    """
    sd = math.sqrt(var + cfg.demand_var)
    mu = np.asarray(mean, dtype=float) + a - cfg.demand_mean
    out = ordering_cost(a, cfg.fixed_cost, cfg.unit_cost) + normal_holding(
        mu, sd, cfg.holding_slope_pos, cfg.backorder_slope)
    return float(out) if np.ndim(out) == 0 else out


def veinott_check(t: int, unit_cost: float, cfg: ProblemConfig,
                  lo: float = -50.0, hi: float = 0.0, step: float = 0.5):
    """Look for ``z < y`` with (h*_t(y) - h*_t(z)) / (y - z) < -unit_cost.

    Returns ``(found, (z, y))``; the witness is ``None`` when no secant on
    the scanned grid is steep enough.
    """
    xs = np.arange(lo, hi + 0.5 * step, step)
    hs = np.asarray(effective_holding(t, xs, cfg), dtype=float)
    slopes = np.diff(hs) / np.diff(xs)
    k = int(np.argmin(slopes))
    if slopes[k] < -unit_cost:
        return True, (float(xs[k]), float(xs[k + 1]))
    return False, None
