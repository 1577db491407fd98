"""Discretized mean-belief MDP and its finite-horizon solution.

States are cells ``[x_i, x_{i+1})`` of an even grid over the posterior mean
(the last cell is ``[x_m, inf)`` and the first also absorbs everything
below ``x_2``).  Transitions and costs are stage dependent through the
deterministic posterior variance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .belief_gauss import VarianceTable, belief_stage_cost
from .belief_grid import build_grid
from .config import ProblemConfig
from .env import expected_stage_cost

N_GAUSS_LEGENDRE = 64


def action_grid(max_action: float, step: float) -> np.ndarray:
    n = int(math.floor(max_action / step + 1e-9)) + 1
    return step * np.arange(n)


def cell_centers(grid: np.ndarray) -> np.ndarray:
    c = np.empty_like(grid)
    c[:-1] = 0.5 * (grid[:-1] + grid[1:])
    c[-1] = grid[-1]
    return c


def cell_index(grid: np.ndarray, x) -> np.ndarray:
    """Cell holding each mean ``x``; values outside the grid clamp to the end cells."""
    dx = grid[1] - grid[0]
    k = np.floor((np.asarray(x, dtype=float) - grid[0]) / dx + 1e-12).astype(int)
    return np.clip(k, 0, len(grid) - 1)


def transition_scale(t: int, cfg: ProblemConfig, table: VarianceTable) -> float:
    """Std of the step in the posterior mean from stage ``t`` to ``t + 1``.

    ``dstar`` uses the equivalent-demand variance; ``sigma`` uses the
    stage's posterior standard deviation instead.
    """
    if cfg.transition_scale == "dstar":
        return math.sqrt(table.dstar_var[t])
    return math.sqrt(table.post_var[t])


def transition_row(i: int, a: float, t: int, cfg: ProblemConfig, grid: np.ndarray,
                   table: VarianceTable | None = None) -> np.ndarray:
    table = table or VarianceTable(cfg)
    P = kernels.py.transition_table(cell_centers(grid)[i:i + 1], np.array([float(a)]),
                                    grid[1:], cfg.demand_mean, transition_scale(t, cfg, table))
    return P[0, 0]


def _truncnorm_nodes(lo, hi, mu, sd, n=N_GAUSS_LEGENDRE):
    """Gauss-Legendre nodes/weights for E[f(X) | lo <= X < hi], X ~ N(mu, sd^2).

    Weights are normalised per cell, so a cell far in the tail still gets a
    proper (boundary-concentrated) conditional law.
    """
    xg, wg = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)[..., None]
    nodes = 0.5 * (hi + lo)[..., None] + half * xg
    if sd > 0:
        r = (nodes - mu[..., None]) / sd
        logw = -0.5 * r * r
        logw -= logw.max(axis=-1, keepdims=True)
        w = wg * np.exp(logw)
    else:
        w = np.broadcast_to(wg, nodes.shape).copy()
    w /= w.sum(axis=-1, keepdims=True)
    return nodes, w


def _cell_costs(lo, hi, centers, a, t, cfg, table):
    sd = transition_scale(t, cfg, table)
    nodes, w = _truncnorm_nodes(lo, hi, centers + a - cfg.demand_mean, sd)
    if cfg.quant_cost == "cell":
        vals = expected_stage_cost(nodes, a, cfg)
    else:
        vals = belief_stage_cost(nodes, table.post_var[t], a, cfg)
    return np.sum(w * vals, axis=-1)


def stage_costs(t: int, cfg: ProblemConfig, grid: np.ndarray, actions: np.ndarray,
                table: VarianceTable) -> np.ndarray:
    """Cell costs ``c[i, k]`` for stage ``t``.

    Conditional mean of the stage cost over the cell under a normal law
    centred at ``cell centre + a - mean demand`` with the transition scale.
    ``quant_cost = "cell"`` integrates the full-information cost c(x, a);
    ``"belief"`` integrates the belief cost, which also charges the stage's
    posterior variance.
    """
    dx = grid[1] - grid[0]
    centers = cell_centers(grid)
    out = np.empty((len(grid), len(actions)))
    for k, a in enumerate(actions):
        out[:, k] = _cell_costs(grid, grid + dx, centers, a, t, cfg, table)
    return out


def stage_cost(i: int, a: float, t: int, cfg: ProblemConfig, grid: np.ndarray,
               table: VarianceTable | None = None) -> float:
    table = table or VarianceTable(cfg)
    dx = grid[1] - grid[0]
    lo = grid[i:i + 1]
    return float(_cell_costs(lo, lo + dx, cell_centers(grid)[i:i + 1], float(a), t, cfg,
                             table)[0])


@dataclass
class QuantizedMDP:
    grid: np.ndarray
    actions: np.ndarray
    P: list[np.ndarray]  # per stage, (m, n_actions, m)
    cost: list[np.ndarray]  # per stage, (m, n_actions)
    horizon: int
    discount: float

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])


def build_mdp(cfg: ProblemConfig, dx: float) -> QuantizedMDP:
    grid = build_grid(cfg.grid_lower, cfg.grid_upper, dx)
    actions = action_grid(cfg.max_action, cfg.action_step)
    table = VarianceTable(cfg)
    centers = cell_centers(grid)
    edges = np.ascontiguousarray(grid[1:])
    P, C = [], []
    for t in range(cfg.len_episode):
        P.append(kernels.transition_table(centers, actions, edges, cfg.demand_mean,
                                          transition_scale(t, cfg, table)))
        C.append(stage_costs(t, cfg, grid, actions, table))
    return QuantizedMDP(grid=grid, actions=actions, P=P, cost=C,
                        horizon=cfg.len_episode, discount=cfg.discount)


@dataclass
class TabularPolicy:
    grid: np.ndarray
    action: np.ndarray  # (T, m)
    value: np.ndarray  # (T + 1, m); last row is zero

    @property
    def horizon(self) -> int:
        return self.action.shape[0]

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def __call__(self, t: int, mean) -> np.ndarray:
        return self.action[t, cell_index(self.grid, mean)]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "action", "value"])
            for t in range(self.horizon):
                for x, a, v in zip(self.grid, self.action[t], self.value[t]):
                    w.writerow([t, repr(float(x)), repr(float(a)), repr(float(v))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "TabularPolicy":
        rows = list(csv.DictReader(open(path, newline="")))
        if not rows or set(rows[0]) != {"t", "x", "action", "value"}:
            raise ValueError(f"{path}: not a tabular policy CSV")
        T = max(int(r["t"]) for r in rows) + 1
        grid = np.array([float(r["x"]) for r in rows if int(r["t"]) == 0])
        act = np.zeros((T, len(grid)))
        val = np.zeros((T + 1, len(grid)))
        for r in rows:
            t = int(r["t"])
            i = int(np.argmin(np.abs(grid - float(r["x"]))))
            act[t, i] = float(r["action"])
            val[t, i] = float(r["value"])
        return cls(grid=grid, action=act, value=val)


def backward_induction(mdp: QuantizedMDP) -> TabularPolicy:
    m = len(mdp.grid)
    V = np.zeros((mdp.horizon + 1, m))
    A = np.zeros((mdp.horizon, m))
    for t in range(mdp.horizon - 1, -1, -1):
        v, best = kernels.backward_sweep(mdp.P[t], mdp.cost[t], V[t + 1], mdp.discount)
        V[t] = v
        A[t] = mdp.actions[best]
    return TabularPolicy(grid=mdp.grid, action=A, value=V)


def solve(cfg: ProblemConfig, dx: float) -> tuple[QuantizedMDP, TabularPolicy]:
    mdp = build_mdp(cfg, dx)
    return mdp, backward_induction(mdp)


def bellman_residual(mdp: QuantizedMDP, policy: TabularPolicy) -> float:
    """Largest change from one more synchronous Bellman sweep on every stage."""
    worst = 0.0
    for t in range(mdp.horizon):
        q = mdp.cost[t] + mdp.discount * (mdp.P[t] @ policy.value[t + 1])
        worst = max(worst, float(np.max(np.abs(q.min(axis=1) - policy.value[t]))))
    return worst


@dataclass(frozen=True)
class SSFit:
    s: float | None
    S: float | None
    residual: float | None
    n_fit: int


def extract_sS(policy: TabularPolicy, t: int, max_action: float | None = None) -> SSFit:
    """Read an (s, S) rule off stage ``t`` of a tabular policy.

    ``s`` is the highest grid point that orders (plus half a cell).  ``S``
    averages the post-order level ``x_i + a_i`` over ordering states; states
    whose order hits ``max_action`` are left out of the fit, since there the
    cap binds rather than the target level.
    """
    a = policy.action[t]
    ordering = np.flatnonzero(a > 0)
    if ordering.size == 0:
        return SSFit(None, None, None, 0)
    s = float(policy.grid[ordering[-1]] + 0.5 * policy.dx)
    if max_action is not None:
        ordering = ordering[a[ordering] < max_action - 1e-9]
    if ordering.size == 0:
        return SSFit(s, None, None, 0)
    levels = policy.grid[ordering] + a[ordering]
    S = float(levels.mean())
    return SSFit(s, S, float(np.max(np.abs(levels - S))), int(ordering.size))


def threshold_violations(policy: TabularPolicy, t: int) -> int:
    """Cells breaking the 'order-up-to below s, zero above' shape at stage ``t``.

    Counts increases of the action while scanning upward plus nonzero orders
    above the lowest zero-order cell that sits above the ordering region.
    """
    a = policy.action[t]
    rises = int(np.sum(np.diff(a) > 1e-9))
    ordering = np.flatnonzero(a > 0)
    if ordering.size == 0:
        return rises
    zeros_after = np.flatnonzero(a == 0)
    first_zero = zeros_after[0] if zeros_after.size else len(a)
    stray = int(np.sum(ordering > first_zero))
    return rises + stray

