"""Problem configuration, config-file loading and seeded random streams."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemConfig:
    # model
    initial_mean: float = 2.0
    initial_var: float = 4.0
    demand_kind: str = "gaussian"
    demand_mean: float = 1.0
    demand_var: float = 1.0
    noise_var: float = 1.0
    fixed_cost: float = 1.0
    unit_cost: float = 0.1
    holding_slope_pos: float = 1.0
    backorder_slope: float = 5.0
    discount: float = 0.99
    len_episode: int = 4
    dynamics_kind: str = "backorders"
    max_action: float = 12.0
    # belief grid
    grid_lower: float = -20.0
    grid_upper: float = 30.0
    delta: float = 0.5
    min_zvalue: float = 1e-4
    # quantized MDP
    action_step: float = 0.1
    transition_scale: str = "dstar"
    quant_cost: str = "cell"
    # DDPG
    batch_size: int = 512
    exploration_noise: float = 8.0
    tau: float = 0.005
    eps_start: float = 0.9
    eps_end: float = 0.05
    eps_decay: float = 200.0
    cti: int = 3
    ati: int = 1
    lr_actor: float = 1e-5
    lr_target_actor: float = 1e-5
    lr_critic: float = 1e-3
    lr_target_critic: float = 1e-3
    beta1: float = 0.999
    beta2: float = 0.999
    hidden: int = 64
    actor_floor: float = -3.0
    replay_capacity: int = 100_000
    train_cost: str = "belief"
    # evaluation
    cost_accounting: str = "belief"
    rng_seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type in ("float", float):
                object.__setattr__(self, f.name, float(v))
            elif f.type in ("int", int):
                if isinstance(v, float) and not v.is_integer():
                    raise ConfigError(f"{f.name}: expected an integer, got {v!r}")
                object.__setattr__(self, f.name, int(v))
        self.validate()

    def validate(self) -> None:
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(f"{key}: {msg} (got {getattr(self, key)!r})")

        for key in ("initial_mean", "demand_mean", "fixed_cost", "unit_cost",
                    "grid_lower", "grid_upper", "delta", "max_action"):
            need(np.isfinite(getattr(self, key)), key, "must be finite")
        need(self.initial_var >= 0, "initial_var", "must be >= 0")
        need(self.demand_var >= 0, "demand_var", "must be >= 0")
        need(self.noise_var >= 0, "noise_var", "must be >= 0")
        need(self.fixed_cost >= 0, "fixed_cost", "must be >= 0")
        need(self.unit_cost >= 0, "unit_cost", "must be >= 0")
        need(self.holding_slope_pos >= 0, "holding_slope_pos", "must be >= 0")
        need(self.backorder_slope >= 0, "backorder_slope", "must be >= 0")
        need(0.0 <= self.discount <= 1.0, "discount", "must lie in [0, 1]")
        need(self.len_episode >= 1, "len_episode", "must be a positive integer")
        need(self.max_action >= 0, "max_action", "must be >= 0")
        need(self.delta > 0, "delta", "must be > 0")
        need(self.grid_lower < self.grid_upper, "grid_lower", "must be below grid_upper")
        need(self.min_zvalue >= 0, "min_zvalue", "must be >= 0")
        need(self.action_step > 0, "action_step", "must be > 0")
        need(0.0 <= self.eps_end <= self.eps_start <= 1.0, "eps_start",
             "need 0 <= eps_end <= eps_start <= 1")
        need(self.eps_decay > 0, "eps_decay", "must be > 0")
        need(0.0 <= self.tau <= 1.0, "tau", "must lie in [0, 1]")
        need(self.batch_size >= 1, "batch_size", "must be >= 1")
        need(self.exploration_noise >= 0, "exploration_noise", "must be >= 0")
        need(self.cti >= 0, "cti", "must be >= 0")
        need(self.ati >= 0, "ati", "must be >= 0")
        need(self.hidden >= 1, "hidden", "must be >= 1")
        need(self.actor_floor <= 0, "actor_floor", "must be <= 0")
        need(self.replay_capacity >= self.batch_size, "replay_capacity",
             "must be >= batch_size")
        need(0.0 <= self.beta1 < 1.0, "beta1", "must lie in [0, 1)")
        need(0.0 <= self.beta2 < 1.0, "beta2", "must lie in [0, 1)")
        need(self.demand_kind in ("gaussian", "exponential"), "demand_kind",
             "must be 'gaussian' or 'exponential'")
        if self.demand_kind == "exponential":
            need(self.demand_mean > 0, "demand_mean", "exponential demand needs a positive mean")
        need(self.dynamics_kind in ("backorders", "lost_sales"), "dynamics_kind",
             "must be 'backorders' or 'lost_sales'")
        need(self.transition_scale in ("dstar", "sigma"), "transition_scale",
             "must be 'dstar' or 'sigma'")
        need(self.quant_cost in ("cell", "belief"), "quant_cost",
             "must be 'cell' or 'belief'")
        need(self.train_cost in ("belief", "realized"), "train_cost",
             "must be 'belief' or 'realized'")
        need(self.cost_accounting in ("belief", "realized"), "cost_accounting",
             "must be 'belief' or 'realized'")

    @property
    def is_gaussian(self) -> bool:
        return self.demand_kind == "gaussian"

    def replace(self, **changes) -> "ProblemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        """Render as the flat ``key = value`` format read by :func:`load_config`."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def non_gaussian_config(**overrides) -> ProblemConfig:
    """Exponential demand with mean 1, standard normal noise, N(2, 4) start."""
    return ProblemConfig(demand_kind="exponential", demand_mean=1.0, demand_var=1.0,
                         **overrides)


_FIELD_TYPES = {f.name: f.type for f in fields(ProblemConfig)}

# symbol-style spellings accepted in config files
ALIASES = {
    "sigma_eta_sq": "noise_var",
    "sigma_d_sq": "demand_var",
    "d_bar": "demand_mean",
    "k": "fixed_cost",
    "c_tilde": "unit_cost",
    "alpha": "discount",
    "t": "len_episode",
}


def parse_config(text: str, base: ProblemConfig | None = None) -> ProblemConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = ALIASES.get(key.lower(), key)
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kind = _FIELD_TYPES[key]
        if kind in ("str", str):
            values[key] = value.strip("'\"")
            continue
        try:
            num = float(value)
        except ValueError:
            raise ConfigError(f"{key}: non-numeric value {value!r}") from None
        values[key] = num
    base = base or ProblemConfig()
    return base.replace(**values)


def load_config(path: str | Path | None) -> ProblemConfig:
    if path is None:
        return ProblemConfig()
    return parse_config(Path(path).read_text())


# named substreams, so each source of randomness replays on its own
_STREAMS = {
    "init": 0,
    "noise": 1,
    "demand": 2,
    "exploration": 3,
    "replay": 4,
    "weights": 5,
    "eval": 6,
    "episode": 7,
}


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(_STREAMS[name], *map(int, keys)))
    return np.random.default_rng(ss)
