"""DDPG for the partially observed inventory problem.

Two state encodings are supported: the padded history
``[t, y0, a0, y1, ..., a_{t-1}, y_t, 0, ...]`` and, for Gaussian models,
the posterior mean paired with the stage index.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .belief_gauss import VarianceTable, belief_stage_cost, posterior_init
from .belief_grid import (belief_expected_cost, build_grid, condition_on, initial_belief,
                          next_belief)
from .config import ProblemConfig, substream
from .env import EpisodeNoise, dynamics_step, holding_cost, ordering_cost
from .evalharness import NetPolicy, evaluate_policy, history_width

log = logging.getLogger(__name__)

MODES = ("histories", "beliefs")


class TrainingDiverged(RuntimeError):
    pass


def encode_history(y, a, t: int, T: int) -> np.ndarray:
    """History vector at stage ``t`` from observations ``y[0..t]`` and orders ``a[0..t-1]``."""
    h = np.zeros(history_width(T))
    h[0] = t
    h[1] = y[0]
    for k in range(t):
        h[2 * k + 2] = a[k]
        h[2 * k + 3] = y[k + 1]
    return h


def split_history(h_next: np.ndarray):
    """Recover ``(hist_t, a_t)`` from ``hist_{t+1}``; works on single vectors or batches."""
    h_next = np.asarray(h_next, dtype=float)
    single = h_next.ndim == 1
    h = np.atleast_2d(h_next).copy()
    t = np.rint(h[:, 0]).astype(int) - 1
    if np.any(t < 0):
        raise ValueError("hist_{t+1} must have t + 1 >= 1")
    rows = np.arange(len(h))
    a = h[rows, 2 * t + 2].copy()
    h[rows, 2 * t + 2] = 0.0
    h[rows, 2 * t + 3] = 0.0
    h[:, 0] = t
    return (h[0], a[0]) if single else (h, a)


def epsilon(steps_done: int, eps_start: float, eps_end: float, decay: float) -> float:
    return eps_end + (eps_start - eps_end) * math.exp(-steps_done / decay)


def select_action(state: np.ndarray, actor: nn.Mlp, eps: float, rng: np.random.Generator,
                  exploration_noise: float, max_action: float) -> float:
    """Greedy actor output with probability ``1 - eps``, else a N(0, exploration_noise) draw.

    ``exploration_noise`` is a variance.  Both branches are clipped to
    ``[0, max_action]``, so about half of the exploratory draws become 0.
    """
    if rng.random() < eps:
        a = math.sqrt(exploration_noise) * rng.standard_normal()
    else:
        a = float(nn.forward(actor, state)[0])
    return min(max(a, 0.0), max_action)


class ReplayBuffer:
    """FIFO ring of transitions ``(state, action, cost, next_state, done)``.

    In history mode ``state`` and ``action`` are read back out of
    ``next_state`` with :func:`split_history`, matching the layout where one
    next-history vector carries the whole transition.
    """

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = capacity
        self.state = np.zeros((capacity, state_dim))
        self.action = np.zeros(capacity)
        self.cost = np.zeros(capacity)
        self.next_state = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self._n = 0
        self._head = 0

    def __len__(self):
        return self._n

    def push(self, state, action, cost, next_state, done):
        if not math.isfinite(cost):
            raise ValueError("non-finite cost")
        i = self._head
        self.state[i] = state
        self.action[i] = action
        self.cost[i] = cost
        self.next_state[i] = next_state
        self.done[i] = float(done)
        self._head = (i + 1) % self.capacity
        self._n = min(self._n + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform minibatch without replacement."""
        idx = rng.choice(self._n, size=batch_size, replace=False)
        return (self.state[idx], self.action[idx], self.cost[idx], self.next_state[idx],
                self.done[idx])


def bounded_action_grad(mu: np.ndarray, g: np.ndarray, max_action: float) -> np.ndarray:
    """dQ/da passed straight through the clip, minus any push further out of bounds.

    The critic is evaluated at the clipped action.  Where the raw actor
    output already sits at or below 0 (an exact zero order) and descent
    would lower it further, the gradient is dropped, likewise above
    ``max_action``.  Without this the critic's smoothing of the fixed-cost
    jump at a = 0 drives the output into the flat part of the logistic.
    """
    out_low = (mu <= 0.0) & (g > 0.0)
    out_high = (mu >= max_action) & (g < 0.0)
    return np.where(out_low | out_high, 0.0, g)


@dataclass
class Agent:
    actor: nn.Mlp
    critic: nn.Mlp
    actor_target: nn.Mlp
    critic_target: nn.Mlp
    actor_opt: nn.AdamState
    critic_opt: nn.AdamState


def state_dim(cfg: ProblemConfig, mode: str) -> int:
    if mode == "histories":
        return history_width(cfg.len_episode)
    if mode == "beliefs":
        return 2
    raise ValueError(f"unknown mode {mode!r}")


def make_agent(cfg: ProblemConfig, mode: str, rng: np.random.Generator,
               hidden_act: str = "relu") -> Agent:
    d = state_dim(cfg, mode)
    H = cfg.hidden
    # the head spans [actor_floor, max_action]; clipping to [0, max_action]
    # then yields exact zero orders, which the fixed cost K rewards
    actor = nn.init_mlp([d, H, H, 1], rng, hidden=hidden_act, output="scaled_sigmoid",
                        out_scale=cfg.max_action - cfg.actor_floor, out_shift=cfg.actor_floor)
    critic = nn.init_mlp([d + 1, H, H, 1], rng, hidden=hidden_act, output="linear")
    return Agent(
        actor=actor, critic=critic, actor_target=actor.copy(), critic_target=critic.copy(),
        actor_opt=nn.AdamState.for_net(actor, cfg.lr_actor, cfg.beta1, cfg.beta2),
        critic_opt=nn.AdamState.for_net(critic, cfg.lr_critic, cfg.beta1, cfg.beta2),
    )


def train_step(buffer: ReplayBuffer, agent: Agent, cfg: ProblemConfig,
               rng: np.random.Generator):
    """One call of the training routine; returns ``(critic_loss, actor_loss)`` or ``None``.

    The critic fits ``c + (1 - done) * discount * Q'(s', clip(mu'(s')))`` for
    ``cti`` Adam steps on one minibatch; the actor then takes ``ati`` steps
    down ``E[Q(s, clip(mu(s)))]`` (Q is a cost-to-go), and both targets are
    blended in with rate ``tau``.
    """
    if len(buffer) < cfg.batch_size:
        return None
    s, a, c, s2, done = buffer.sample(cfg.batch_size, rng)
    B = len(c)
    a2 = np.clip(nn.forward(agent.actor_target, s2), 0.0, cfg.max_action)
    q2 = nn.forward(agent.critic_target, np.column_stack([s2, a2]))[:, 0]
    target = c + (1.0 - done) * cfg.discount * q2
    sa = np.column_stack([s, a])

    critic_loss = float("nan")
    for _ in range(cfg.cti):
        q, cache = nn.forward_cached(agent.critic, sa)
        err = q[:, 0] - target
        critic_loss = float(np.mean(err * err))
        grads, _ = nn.backward(agent.critic, cache, (2.0 / B) * err[:, None])
        nn.adam_step(agent.critic.params(), grads, agent.critic_opt)

    actor_loss = float("nan")
    for _ in range(cfg.ati):
        mu, a_cache = nn.forward_cached(agent.actor, s)
        q, c_cache = nn.forward_cached(agent.critic,
                                       np.column_stack([s, np.clip(mu, 0.0, cfg.max_action)]))
        actor_loss = float(np.mean(q))
        _, g_in = nn.backward(agent.critic, c_cache, np.full((B, 1), 1.0 / B))
        grads, _ = nn.backward(agent.actor, a_cache, bounded_action_grad(mu, g_in[:, -1:],
                                                                         cfg.max_action))
        nn.adam_step(agent.actor.params(), grads, agent.actor_opt)

    nn.soft_update(agent.actor_target, agent.actor, cfg.tau)
    nn.soft_update(agent.critic_target, agent.critic, cfg.tau)
    return critic_loss, actor_loss


@dataclass
class TrainLogRow:
    episode: int
    eval_mean: float | None
    eval_stderr: float | None
    critic_loss: float
    actor_loss: float
    epsilon: float


@dataclass
class TrainResult:
    mode: str
    agent: Agent
    log: list[TrainLogRow] = field(default_factory=list)
    critic_losses: list[float] = field(default_factory=list)
    seconds: float = 0.0
    steps_done: int = 0

    @property
    def encoding(self) -> str:
        return "history" if self.mode == "histories" else "belief"

    def policy(self) -> NetPolicy:
        return NetPolicy(self.agent.actor, self.encoding)

    def write_log(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["episode", "eval_mean", "eval_stderr", "critic_loss", "actor_loss",
                        "epsilon"])
            for r in self.log:
                w.writerow([r.episode, _fmt(r.eval_mean), _fmt(r.eval_stderr),
                            _fmt(r.critic_loss), _fmt(r.actor_loss), _fmt(r.epsilon)])


def _fmt(v):
    return "" if v is None else repr(float(v))


class _Episode:
    """Filtering and cost bookkeeping for one training episode."""

    def __init__(self, cfg: ProblemConfig, mode: str, y0: float, table, b0):
        self.cfg, self.mode, self.table = cfg, mode, table
        T = cfg.len_episode
        self.hist = np.zeros(history_width(T))
        self.hist[1] = y0
        if mode == "beliefs":
            self.mean = posterior_init(cfg.initial_mean, cfg.initial_var, cfg.noise_var,
                                       y0).mean
        else:
            self.belief = condition_on(b0, y0, cfg)

    def state(self, t: int) -> np.ndarray:
        if self.mode == "beliefs":
            return np.array([self.mean, float(t)])
        return self.hist.copy()

    def cost(self, t: int, a: float) -> float:
        if self.mode == "beliefs":
            return belief_stage_cost(self.mean, self.table.post_var[t], a, self.cfg)
        return belief_expected_cost(self.belief, a, self.cfg)

    def advance(self, t: int, a: float, y_next: float) -> None:
        cfg = self.cfg
        self.hist[0] = t + 1
        self.hist[2 * t + 2] = a
        self.hist[2 * t + 3] = y_next
        if self.mode == "beliefs":
            pv = self.table.post_var[t] + cfg.demand_var
            total = pv + cfg.noise_var
            pred = self.mean + a - cfg.demand_mean
            self.mean = (cfg.noise_var * pred + pv * y_next) / total if total > 0 else pred
        elif t + 1 < cfg.len_episode:
            self.belief = next_belief(self.belief, a, y_next, cfg)


def run_training(cfg: ProblemConfig, mode: str, episodes: int, seed: int | None = None,
                 eval_every: int = 0, eval_episodes: int = 500,
                 hidden_act: str = "relu") -> TrainResult:
    """Train actor and critic for a fixed number of episodes.

    Randomness comes from named substreams of ``seed``: weights, per-episode
    exogenous draws, exploration and replay sampling.  With ``eval_every``
    the greedy actor is evaluated on ``eval_episodes`` held-out episodes at
    those checkpoints.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "beliefs" and not cfg.is_gaussian:
        raise ValueError("beliefs mode needs the Gaussian model")
    seed = cfg.rng_seed if seed is None else seed
    t_start = time.perf_counter()
    agent = make_agent(cfg, mode, substream(seed, "weights"), hidden_act)
    buffer = ReplayBuffer(cfg.replay_capacity, state_dim(cfg, mode))
    explore = substream(seed, "exploration")
    replay_rng = substream(seed, "replay")
    table = VarianceTable(cfg) if cfg.is_gaussian else None
    b0 = None if mode == "beliefs" else initial_belief(
        cfg, build_grid(cfg.grid_lower, cfg.grid_upper, cfg.delta))
    result = TrainResult(mode=mode, agent=agent)
    T = cfg.len_episode
    steps = 0
    ep_losses = []
    for ep in range(episodes):
        noise = EpisodeNoise(cfg, seed, ep)
        x = noise.x0
        y = x + noise.eta[0]
        epi = _Episode(cfg, mode, y, table, b0)
        for t in range(T):
            eps = epsilon(steps, cfg.eps_start, cfg.eps_end, cfg.eps_decay)
            s = epi.state(t)
            a = select_action(s, agent.actor, eps, explore, cfg.exploration_noise,
                              cfg.max_action)
            if cfg.train_cost == "belief":
                c = epi.cost(t, a)
            x = dynamics_step(x, a, noise.d[t], cfg.dynamics_kind)
            y = x + noise.eta[t + 1]
            if cfg.train_cost == "realized":
                c = ordering_cost(a, cfg.fixed_cost, cfg.unit_cost) + holding_cost(
                    x, cfg.holding_slope_pos, cfg.backorder_slope)
            epi.advance(t, a, y)
            done = t == T - 1
            buffer.push(s, a, c, epi.state(t + 1), done)
            out = train_step(buffer, agent, cfg, replay_rng)
            if out is not None:
                result.critic_losses.append(out[0])
                ep_losses.append(out)
            steps += 1
        if not (agent.actor.all_finite() and agent.critic.all_finite()):
            raise TrainingDiverged(f"non-finite network parameters after episode {ep}")
        last = ep == episodes - 1
        if eval_every and ((ep + 1) % eval_every == 0 or last):
            rep = evaluate_policy(NetPolicy(agent.actor, result.encoding), cfg,
                                  eval_episodes, seed=seed + 1_000_003)
            cl = float(np.mean([l[0] for l in ep_losses])) if ep_losses else float("nan")
            al = float(np.mean([l[1] for l in ep_losses])) if ep_losses else float("nan")
            result.log.append(TrainLogRow(ep + 1, rep.mean, rep.stderr, cl, al,
                                          epsilon(steps, cfg.eps_start, cfg.eps_end,
                                                  cfg.eps_decay)))
            log.info("episode %d: eval %.3f +- %.3f, critic %.4f, actor %.3f", ep + 1,
                     rep.mean, rep.stderr or 0.0, cl, al)
            ep_losses = []
    result.seconds = time.perf_counter() - t_start
    result.steps_done = steps
    return result
