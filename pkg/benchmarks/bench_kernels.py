"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N time for each backend and
the speedup, and checks that both backends return the same numbers.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from invpomdp import kernels
from invpomdp.belief_gauss import VarianceTable
from invpomdp.belief_grid import build_grid, initial_belief
from invpomdp.config import ProblemConfig
from invpomdp.mdp_quant import action_grid, cell_centers


def cases(cfg: ProblemConfig):
    grid = build_grid(cfg.grid_lower, cfg.grid_upper, 0.1)
    b = initial_belief(cfg.replace(delta=0.1), grid)
    dens = np.ascontiguousarray(b.density)
    filt = (dens, b.lo, b.hi, 1.5, 2.0, float(grid[0]), 0.1, kernels.DEMAND_GAUSS,
            cfg.demand_mean, cfg.demand_var, cfg.noise_var, cfg.min_zvalue)

    qgrid = build_grid(cfg.grid_lower, cfg.grid_upper, 0.3)
    actions = action_grid(cfg.max_action, cfg.action_step)
    sd = float(np.sqrt(VarianceTable(cfg).dstar_var[0]))
    trans = (cell_centers(qgrid), actions, np.ascontiguousarray(qgrid[1:]), cfg.demand_mean, sd)

    P = kernels.py.transition_table(*trans)
    rng = np.random.default_rng(0)
    cost = rng.uniform(0, 10, size=P.shape[:2])
    v = rng.uniform(0, 10, size=P.shape[0])
    sweep = (P, cost, v, cfg.discount)
    return {"grid_filter_step (dx 0.1)": ("grid_filter_step", filt),
            "transition_table (dx 0.3)": ("transition_table", trans),
            "backward_sweep (dx 0.3)": ("backward_sweep", sweep)}


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                       rtol=1e-10, atol=1e-12)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        print("compiled extension not built; only the numpy backend is available")
    cfg = ProblemConfig()
    print(f"{'kernel':<28}{'numpy [ms]':>12}{'cython [ms]':>13}{'speedup':>9}  agree")
    for label, (name, inputs) in cases(cfg).items():
        fpy = getattr(kernels.py, name)
        n = 3
        t_py = min(timeit.repeat(lambda: fpy(*inputs), number=n, repeat=args.repeat)) / n
        if kernels.compiled is None:
            print(f"{label:<28}{1e3 * t_py:>12.3f}{'-':>13}{'-':>9}  -")
            continue
        fc = getattr(kernels.compiled, name)
        t_c = min(timeit.repeat(lambda: fc(*inputs), number=n, repeat=args.repeat)) / n
        ok = _same(fpy(*inputs), fc(*inputs))
        print(f"{label:<28}{1e3 * t_py:>12.3f}{1e3 * t_c:>13.3f}{t_py / t_c:>9.1f}  {ok}")


if __name__ == "__main__":
    main()
