"""Monte-Carlo policy evaluation, method comparison and policy slices."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .belief_gauss import VarianceTable, belief_stage_cost, posterior_init
from .belief_grid import (belief_expected_cost, build_grid, condition_on, initial_belief,
                          next_belief)
from .config import ProblemConfig
from .env import EpisodeNoise, dynamics_step, holding_cost, ordering_cost
from .mdp_quant import TabularPolicy


class PolicyAdapter:
    """Maps a batch of encoded states at stage ``t`` to order quantities.

    ``encoding`` is ``"history"`` (padded observation/action vector) or
    ``"belief"`` (posterior mean and stage index).
    """

    encoding = "belief"

    def act(self, t: int, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ConstantPolicy(PolicyAdapter):
    def __init__(self, a: float, encoding: str = "belief"):
        self.a = float(a)
        self.encoding = encoding

    def act(self, t, states):
        return np.full(len(states), self.a)


class TabularAdapter(PolicyAdapter):
    encoding = "belief"

    def __init__(self, policy: TabularPolicy):
        self.policy = policy

    def act(self, t, states):
        return self.policy(t, states[:, 0])


class NetPolicy(PolicyAdapter):
    def __init__(self, actor: nn.Mlp, encoding: str):
        self.actor = actor
        self.encoding = encoding

    def act(self, t, states):
        return nn.forward(self.actor, states)[:, 0]


class SSPolicy(PolicyAdapter):
    """Order up to ``S`` whenever the posterior mean is below ``s``."""

    encoding = "belief"

    def __init__(self, s: float, S: float):
        self.s, self.S = s, S

    def act(self, t, states):
        x = states[:, 0]
        return np.where(x < self.s, self.S - x, 0.0)


def history_width(T: int) -> int:
    return 2 * T + 2


def _noise_batch(cfg: ProblemConfig, seed: int, episodes: range):
    draws = [EpisodeNoise(cfg, seed, e) for e in episodes]
    x0 = np.array([d.x0 for d in draws])
    eta = np.array([d.eta for d in draws]).reshape(len(draws), cfg.len_episode + 1)
    dem = np.array([d.d for d in draws]).reshape(len(draws), cfg.len_episode)
    return x0, eta, dem


def _run_chunk(adapter: PolicyAdapter, cfg: ProblemConfig, seed: int, episodes: range):
    T = cfg.len_episode
    n = len(episodes)
    x0, eta, dem = _noise_batch(cfg, seed, episodes)
    x = x0.copy()
    y = x + eta[:, 0]
    hist = np.zeros((n, history_width(T)))
    hist[:, 1] = y
    if cfg.is_gaussian:
        table = VarianceTable(cfg)
        mean = np.array([posterior_init(cfg.initial_mean, cfg.initial_var, cfg.noise_var, yy).mean
                         for yy in y])
        grid_beliefs = None
    else:
        table = None
        mean = None
        grid = build_grid(cfg.grid_lower, cfg.grid_upper, cfg.delta)
        b0 = initial_belief(cfg, grid)
        grid_beliefs = [condition_on(b0, yy, cfg) for yy in y]

    belief_cost = np.zeros((n, T))
    realized = np.zeros((n, T))
    for t in range(T):
        if adapter.encoding == "history":
            states = hist
        else:
            if mean is None:
                m_now = np.array([b.mean() for b in grid_beliefs])
            else:
                m_now = mean
            states = np.column_stack([m_now, np.full(n, float(t))])
        a = np.clip(np.asarray(adapter.act(t, states), dtype=float), 0.0, cfg.max_action)

        if cfg.is_gaussian:
            belief_cost[:, t] = belief_stage_cost(mean, table.post_var[t], a, cfg)
        else:
            belief_cost[:, t] = [belief_expected_cost(b, aa, cfg)
                                 for b, aa in zip(grid_beliefs, a)]
        x = dynamics_step(x, a, dem[:, t], cfg.dynamics_kind)
        y = x + eta[:, t + 1]
        realized[:, t] = ordering_cost(a, cfg.fixed_cost, cfg.unit_cost) + holding_cost(
            x, cfg.holding_slope_pos, cfg.backorder_slope)

        hist[:, 0] = t + 1
        hist[:, 2 * t + 2] = a
        hist[:, 2 * t + 3] = y
        if cfg.is_gaussian:
            pred_var = table.post_var[t] + cfg.demand_var
            total = pred_var + cfg.noise_var
            pred_mean = mean + a - cfg.demand_mean
            mean = (cfg.noise_var * pred_mean + pred_var * y) / total if total > 0 else pred_mean
        elif t + 1 < T:
            grid_beliefs = [next_belief(b, aa, yy, cfg) for b, aa, yy in zip(grid_beliefs, a, y)]

    disc = cfg.discount ** np.arange(T)
    return belief_cost @ disc, realized @ disc


def _mean_stderr(costs: np.ndarray):
    n = len(costs)
    mean = math.fsum(costs) / n
    if n < 2:
        return mean, None
    var = math.fsum((costs - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass
class EvalReport:
    method: str
    n_episodes: int
    mean: float
    stderr: float | None
    seconds: float
    seed: int
    accounting: str = "belief"
    mean_realized: float | None = None
    stderr_realized: float | None = None
    costs: np.ndarray = field(default=None, repr=False)

    @property
    def ci95(self):
        if self.stderr is None:
            return None
        return self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr


def evaluate_policy(adapter: PolicyAdapter, cfg: ProblemConfig, n_episodes: int, seed: int,
                    method: str = "policy", threads: int = 1, chunk: int = 1000) -> EvalReport:
    """Average total discounted cost over ``n_episodes`` simulated episodes.

    Episode ``e`` draws its initial level, demands and measurement errors
    from substreams keyed by ``(seed, e)``, so every policy evaluated with
    the same seed sees the same randomness.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    t0 = time.perf_counter()
    chunks = [range(s, min(s + chunk, n_episodes)) for s in range(0, n_episodes, chunk)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda r: _run_chunk(adapter, cfg, seed, r), chunks))
    else:
        parts = [_run_chunk(adapter, cfg, seed, r) for r in chunks]
    belief = np.concatenate([p[0] for p in parts])
    realized = np.concatenate([p[1] for p in parts])
    primary = belief if cfg.cost_accounting == "belief" else realized
    mean, se = _mean_stderr(primary)
    mean_r, se_r = _mean_stderr(realized)
    return EvalReport(method=method, n_episodes=n_episodes, mean=mean, stderr=se,
                      seconds=time.perf_counter() - t0, seed=seed,
                      accounting=cfg.cost_accounting, mean_realized=mean_r,
                      stderr_realized=se_r, costs=primary)


def paired_difference(a: EvalReport, b: EvalReport):
    """Mean and standard error of per-episode ``a - b`` (common random numbers)."""
    d = a.costs - b.costs
    return _mean_stderr(d)


def compare_methods(cfg: ProblemConfig, methods: list[tuple[str, PolicyAdapter]],
                    n_episodes: int, seed: int, threads: int = 1) -> list[EvalReport]:
    return [evaluate_policy(adapter, cfg, n_episodes, seed, method=label, threads=threads)
            for label, adapter in methods]


def write_reports(reports: list[EvalReport], path: str | Path, include_time: bool = True) -> None:
    """One row per report; ``paired_diff`` is against the first row.

    With ``include_time=False`` the wall-clock column is left out so the file
    is reproducible byte for byte.
    """
    base = reports[0] if reports else None
    head = ["method", "time"] if include_time else ["method"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head + ["value", "stderr", "ci95_low", "ci95_high", "value_realized",
                           "stderr_realized", "paired_diff", "paired_diff_stderr",
                           "n_episodes", "seed"])
        for r in reports:
            ci = r.ci95 or (None, None)
            d, dse = paired_difference(r, base) if base is not None else (None, None)
            row = [r.method, _fmt(r.seconds)] if include_time else [r.method]
            w.writerow(row + [_fmt(r.mean), _fmt(r.stderr), _fmt(ci[0]), _fmt(ci[1]),
                              _fmt(r.mean_realized), _fmt(r.stderr_realized), _fmt(d),
                              _fmt(dse), r.n_episodes, r.seed])


def _fmt(v):
    return "" if v is None else repr(float(v))


def policy_slice(adapter: PolicyAdapter, cfg: ProblemConfig, t: int, y_lo: float, y_hi: float,
                 step: float) -> np.ndarray:
    """Action as a function of the observation, as a ``(k, 2)`` array.

    At ``t = 0`` the observation ``y0`` is encoded as the history
    ``[0, y0, 0, ...]`` or as the posterior mean after ``y0``.  For later
    stages only belief encodings are supported and the value on the axis
    is taken as the posterior mean itself.
    """
    ys = np.arange(y_lo, y_hi + 0.5 * step, step)
    if adapter.encoding == "history":
        if t != 0:
            raise ValueError("history slices are defined at t = 0 only")
        states = np.zeros((len(ys), history_width(cfg.len_episode)))
        states[:, 1] = ys
    else:
        if t == 0 and cfg.is_gaussian:
            means = np.array([posterior_init(cfg.initial_mean, cfg.initial_var,
                                             cfg.noise_var, y).mean for y in ys])
        elif t == 0:
            grid = build_grid(cfg.grid_lower, cfg.grid_upper, cfg.delta)
            b0 = initial_belief(cfg, grid)
            means = np.array([condition_on(b0, y, cfg).mean() for y in ys])
        else:
            means = ys
        states = np.column_stack([means, np.full(len(ys), float(t))])
    a = np.clip(adapter.act(t, states), 0.0, cfg.max_action)
    return np.column_stack([ys, a])


def write_slice(curve: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y0", "action"])
        for y, a in curve:
            w.writerow([repr(float(y)), repr(float(a))])


def best_constant_policy(cfg: ProblemConfig, n_episodes: int, seed: int,
                         levels=None, encoding: str = "history"):
    """Grid search over constant order quantities; returns (level, report)."""
    levels = np.arange(0.0, 4.0 + 1e-9, 0.5) if levels is None else levels
    best = None
    for a in levels:
        rep = evaluate_policy(ConstantPolicy(a, encoding), cfg, n_episodes, seed,
                              method=f"constant {a:g}")
        if best is None or rep.mean < best[1].mean:
            best = (float(a), rep)
    return best
