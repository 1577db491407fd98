"""Posterior density of the inventory level sampled on a uniform grid."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import kernels
from .config import ProblemConfig
from .env import expected_stage_cost


class BeliefError(RuntimeError):
    """The posterior vanished on the grid (observation inconsistent with it)."""


def build_grid(lower: float, upper: float, step: float) -> np.ndarray:
    """Points ``lower + i*step`` up to ``upper`` (inclusive when it falls on the lattice)."""
    if not step > 0:
        raise ValueError("grid step must be positive")
    if not lower < upper:
        raise ValueError("grid lower bound must be below the upper bound")
    n = int(math.floor((upper - lower) / step + 1e-9)) + 1
    return lower + step * np.arange(n)


@dataclass(frozen=True)
class BeliefGrid:
    grid: np.ndarray
    density: np.ndarray
    lo: int
    hi: int
    trimmed_mass: float = 0.0
    delta: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "delta", float(self.grid[1] - self.grid[0]))
        self.density.setflags(write=False)

    @property
    def support_mask(self) -> np.ndarray:
        mask = np.zeros(self.grid.shape, dtype=bool)
        mask[self.lo:self.hi + 1] = True
        return mask

    @property
    def weights(self) -> np.ndarray:
        return kernels.grid_weights(len(self.grid), self.delta)

    def mass(self) -> float:
        return float(np.dot(self.density, self.weights))

    def mean(self) -> float:
        return float(np.dot(self.density * self.weights, self.grid))

    def var(self) -> float:
        m = self.mean()
        return float(np.dot(self.density * self.weights, (self.grid - m) ** 2))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "density"])
            for x, z in zip(self.grid, self.density):
                w.writerow([repr(float(x)), repr(float(z))])


def _trim(grid, z, min_z, weights):
    above = np.flatnonzero(z > min_z)
    if above.size == 0:
        above = np.flatnonzero(z > 0)
    lo, hi = int(above[0]), int(above[-1])
    out = np.zeros_like(z)
    out[lo:hi + 1] = z[lo:hi + 1]
    kept = float(np.dot(out, weights))
    return out / kept, lo, hi, 1.0 - kept


def init_belief(p0: Callable[[np.ndarray], np.ndarray], grid: np.ndarray,
                min_zvalue: float = 0.0) -> BeliefGrid:
    """Sample ``p0`` on the grid, normalise, and trim values at or below ``min_zvalue``."""
    grid = np.asarray(grid, dtype=float)
    w = kernels.grid_weights(len(grid), grid[1] - grid[0])
    z = np.asarray(p0(grid), dtype=float)
    if np.any(z < 0) or not np.all(np.isfinite(z)):
        raise ValueError("initial density must be finite and nonnegative")
    mass = float(np.dot(z, w))
    if not mass > 0:
        raise BeliefError("initial density has no mass on the grid")
    z, lo, hi, trimmed = _trim(grid, z / mass, min_zvalue, w)
    return BeliefGrid(grid=grid, density=z, lo=lo, hi=hi, trimmed_mass=trimmed)


def normal_density(mean: float, var: float):
    def pdf(x):
        return np.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2 * math.pi * var)
    return pdf


def point_mass(grid: np.ndarray, x: float) -> BeliefGrid:
    """All mass on the grid point nearest ``x``."""
    grid = np.asarray(grid, dtype=float)
    k = int(np.argmin(np.abs(grid - x)))
    w = kernels.grid_weights(len(grid), grid[1] - grid[0])
    z = np.zeros_like(grid)
    z[k] = 1.0 / w[k]
    return BeliefGrid(grid=grid, density=z, lo=k, hi=k)


def initial_belief(cfg: ProblemConfig, grid: np.ndarray | None = None) -> BeliefGrid:
    """The prior on the whole grid; trimming starts with the first update."""
    if grid is None:
        grid = build_grid(cfg.grid_lower, cfg.grid_upper, cfg.delta)
    if cfg.initial_var == 0:
        return point_mass(grid, cfg.initial_mean)
    return init_belief(normal_density(cfg.initial_mean, cfg.initial_var), grid)


def _demand_kind(cfg: ProblemConfig) -> int:
    if cfg.demand_kind == "exponential":
        return kernels.DEMAND_EXP
    if cfg.demand_var == 0:
        return kernels.DEMAND_DIRAC
    return kernels.DEMAND_GAUSS


def next_belief(z: BeliefGrid, a: float, y: float, cfg: ProblemConfig) -> BeliefGrid:
    """Predict through the demand, weight by the observation likelihood, trim.

    The prediction integrates the demand density against the current belief
    with trapezoid weights; after normalising, grid values at or below
    ``cfg.min_zvalue`` outside the outermost surviving points are cut and
    the rest renormalised.
    """
    dens = np.ascontiguousarray(z.density, dtype=float)
    out, lo, hi, trimmed, status = kernels.grid_filter_step(
        dens, z.lo, z.hi, float(a), float(y), float(z.grid[0]), z.delta,
        _demand_kind(cfg), cfg.demand_mean, cfg.demand_var, cfg.noise_var, cfg.min_zvalue)
    if status != kernels.STATUS_OK:
        raise BeliefError(f"posterior has zero mass on the grid (a={a!r}, y={y!r})")
    return BeliefGrid(grid=z.grid, density=out, lo=int(lo), hi=int(hi), trimmed_mass=trimmed)


def condition_on(z: BeliefGrid, y: float, cfg: ProblemConfig) -> BeliefGrid:
    """Measurement update only (no demand step); used for the first observation."""
    w = z.weights
    if cfg.noise_var > 0:
        lik = np.exp(-0.5 * (y - z.grid) ** 2 / cfg.noise_var)
    else:
        lik = np.maximum(0.0, 1.0 - np.abs(z.grid - y) / z.delta)
    u = z.density * lik
    mass = float(np.dot(u, w))
    if not mass > 0 or not math.isfinite(mass):
        raise BeliefError(f"posterior has zero mass on the grid (y={y!r})")
    out, lo, hi, trimmed = _trim(z.grid, u / mass, cfg.min_zvalue, w)
    return BeliefGrid(grid=z.grid, density=out, lo=lo, hi=hi, trimmed_mass=trimmed)


def belief_expected_cost(z: BeliefGrid, a: float, cfg: ProblemConfig) -> float:
    sl = slice(z.lo, z.hi + 1)
    w = z.weights[sl] * z.density[sl]
    return math.fsum(w * expected_stage_cost(z.grid[sl], a, cfg))
