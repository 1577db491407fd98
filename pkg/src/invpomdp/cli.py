"""Command-line entry point: ``invpomdp <command> [options]``.

Every command writes its CSV outputs plus ``manifest.json`` into
``--out-dir``; ``invpomdp replay --manifest <file>`` reruns a command from
its manifest.  Wall-clock times go to the manifest only, so the CSVs of a
replay are byte-identical to the original.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels, nn
from .belief_gauss import VarianceTable, mean_update, posterior_init
from .belief_grid import BeliefError, build_grid, condition_on, initial_belief, next_belief
from .config import ConfigError, ProblemConfig, load_config, substream
from .ddpg import TrainingDiverged, run_training
from .evalharness import (NetPolicy, TabularAdapter, evaluate_policy, history_width,
                          policy_slice, write_reports, write_slice)
from .mdp_quant import TabularPolicy, extract_sS, solve

MANIFEST = "manifest.json"


class CliError(RuntimeError):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="base seed (default: rng_seed from the config)")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--out-dir", default="out", help="output directory (default: out)")
    p.add_argument("--force", action="store_true", help="overwrite a non-empty --out-dir")
    p.add_argument("--threads", type=int, default=1, help="cap on evaluation threads")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invpomdp", description="Inventory control with noisy inventory observations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("solve-quant", help="solve the discretized mean-belief MDP")
    p.add_argument("--dx", type=float, required=True, help="cell width of the mean grid")
    p.add_argument("--episodes", type=int, default=3000, help="evaluation episodes")
    _common(p)

    p = sub.add_parser("train-ddpg", help="train a DDPG actor and critic")
    p.add_argument("--mode", choices=["histories", "beliefs"], required=True)
    p.add_argument("--episodes", type=int, default=15000)
    p.add_argument("--eval-every", type=int, default=1000)
    p.add_argument("--eval-episodes", type=int, default=500)
    _common(p)

    p = sub.add_parser("eval", help="evaluate a saved policy (CSV table or network JSON)")
    p.add_argument("--policy", required=True)
    p.add_argument("--episodes", type=int, default=3000)
    _common(p)

    p = sub.add_parser("slice", help="action as a function of the observation")
    p.add_argument("--policy", required=True)
    p.add_argument("--t", type=int, default=0)
    p.add_argument("--y-lo", type=float, default=-4.0)
    p.add_argument("--y-hi", type=float, default=8.0)
    p.add_argument("--step", type=float, default=0.25)
    _common(p)

    p = sub.add_parser("filter-demo", help="grid filter against the closed-form Gaussian filter")
    p.add_argument("--sequences", type=int, default=100)
    p.add_argument("--delta", type=float, default=0.1, help="grid step for the demo")
    _common(p)

    p = sub.add_parser("compare", help="quantized and DDPG methods side by side")
    p.add_argument("--dx", default="1.0,0.5,0.3", help="comma-separated cell widths")
    p.add_argument("--episodes", type=int, default=3000)
    p.add_argument("--ddpg-episodes", type=int, default=15000,
                   help="training episodes per DDPG mode (0 skips DDPG)")
    _common(p)

    p = sub.add_parser("replay", help="rerun a command from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", default=None, help="default: <manifest dir>-replay")
    p.add_argument("--force", action="store_true")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


# ---------------------------------------------------------------- helpers

def _prepare_out_dir(path: Path, force: bool) -> None:
    if path.exists() and not path.is_dir():
        raise CliError(f"{path} exists and is not a directory")
    if path.exists() and any(path.iterdir()) and not force:
        raise CliError(f"{path} is not empty; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)


def _load_policy(path: str, cfg: ProblemConfig):
    p = Path(path)
    if not p.exists():
        raise CliError(f"policy file {p} not found")
    if p.suffix == ".csv":
        return TabularAdapter(TabularPolicy.from_csv(p))
    net = nn.load(p)
    if net.in_dim == 2:
        return NetPolicy(net, "belief")
    if net.in_dim == history_width(cfg.len_episode):
        return NetPolicy(net, "history")
    raise CliError(f"{p}: input width {net.in_dim} fits neither encoding for "
                   f"len_episode={cfg.len_episode}")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _r(v) -> str:
    return "" if v is None else repr(float(v))


# --------------------------------------------------------------- commands

def cmd_solve_quant(args, cfg, seed, out: Path, timings: dict):
    mdp, policy = solve(cfg, args.dx)
    policy.to_csv(out / "policy.csv")
    rep = evaluate_policy(TabularAdapter(policy), cfg, args.episodes, seed,
                          method=f"quantized dx={args.dx:g}", threads=args.threads)
    timings[rep.method] = rep.seconds
    write_reports([rep], out / "eval.csv", include_time=False)
    rows = []
    for t in range(cfg.len_episode):
        fit = extract_sS(policy, t, cfg.max_action)
        rows.append([t, _r(fit.s), _r(fit.S), _r(fit.residual), fit.n_fit])
    _write_csv(out / "sS.csv", ["t", "s", "S", "residual", "n_fit"], rows)
    print(f"{rep.method}: {rep.mean:.4f} +- {rep.stderr:.4f}")
    return ["policy.csv", "eval.csv", "sS.csv"]


def cmd_train_ddpg(args, cfg, seed, out: Path, timings: dict):
    res = run_training(cfg, args.mode, args.episodes, seed=seed, eval_every=args.eval_every,
                       eval_episodes=args.eval_episodes)
    timings["training"] = res.seconds
    nn.save(res.agent.actor, out / "actor.json")
    nn.save(res.agent.critic, out / "critic.json")
    res.write_log(out / "train_log.csv")
    if res.log:
        last = res.log[-1]
        print(f"episode {last.episode}: eval {last.eval_mean:.4f}")
    return ["actor.json", "critic.json", "train_log.csv"]


def cmd_eval(args, cfg, seed, out: Path, timings: dict):
    adapter = _load_policy(args.policy, cfg)
    rep = evaluate_policy(adapter, cfg, args.episodes, seed, method=Path(args.policy).name,
                          threads=args.threads)
    timings[rep.method] = rep.seconds
    write_reports([rep], out / "eval.csv", include_time=False)
    se = "n/a" if rep.stderr is None else f"{rep.stderr:.4f}"
    print(f"{rep.method}: {rep.mean:.6f} +- {se}")
    return ["eval.csv"]


def cmd_slice(args, cfg, seed, out: Path, timings: dict):
    adapter = _load_policy(args.policy, cfg)
    curve = policy_slice(adapter, cfg, args.t, args.y_lo, args.y_hi, args.step)
    write_slice(curve, out / "slice.csv")
    return ["slice.csv"]


def cmd_filter_demo(args, cfg, seed, out: Path, timings: dict):
    """Random order/observation paths run through both filters."""
    if not cfg.is_gaussian:
        raise CliError("filter-demo needs the Gaussian model")
    gcfg = cfg.replace(delta=args.delta)
    grid = build_grid(gcfg.grid_lower, gcfg.grid_upper, gcfg.delta)
    b0 = initial_belief(gcfg, grid)
    table = VarianceTable(cfg)
    rng = substream(seed, "episode")
    rows = []
    for k in range(args.sequences):
        x = cfg.initial_mean + np.sqrt(cfg.initial_var) * rng.standard_normal()
        y = x + np.sqrt(cfg.noise_var) * rng.standard_normal()
        zg = condition_on(b0, y, gcfg)
        gb = posterior_init(cfg.initial_mean, cfg.initial_var, cfg.noise_var, y)
        rows.append([k, 0, "", _r(y), _r(zg.mean()), _r(gb.mean), _r(zg.var()), _r(gb.var)])
        for t in range(cfg.len_episode):
            a = rng.uniform(0.0, 4.0)
            x = x + a - (cfg.demand_mean + np.sqrt(cfg.demand_var) * rng.standard_normal())
            y = x + np.sqrt(cfg.noise_var) * rng.standard_normal()
            zg = next_belief(zg, a, y, gcfg)
            gb = mean_update(gb, a, y, cfg)
            rows.append([k, t + 1, _r(a), _r(y), _r(zg.mean()), _r(gb.mean), _r(zg.var()),
                         _r(table.post_var[t + 1])])
    _write_csv(out / "filter_demo.csv",
               ["sequence", "t", "a", "y", "grid_mean", "gauss_mean", "grid_var", "gauss_var"],
               rows)
    err_m = max(abs(float(r[4]) - float(r[5])) for r in rows)
    err_v = max(abs(float(r[6]) - float(r[7])) for r in rows)
    print(f"max |mean diff| {err_m:.3e}, max |var diff| {err_v:.3e}")
    return ["filter_demo.csv"]


def cmd_compare(args, cfg, seed, out: Path, timings: dict):
    try:
        dxs = [float(v) for v in args.dx.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"--dx: expected comma-separated numbers, got {args.dx!r}") from None
    if not cfg.is_gaussian:
        dxs = []
    methods = []
    for dx in dxs:
        _, policy = solve(cfg, dx)
        methods.append((f"quantized dx={dx:g}", TabularAdapter(policy)))
    modes = ["histories", "beliefs"] if cfg.is_gaussian else ["histories"]
    if args.ddpg_episodes > 0:
        for mode in modes:
            res = run_training(cfg, mode, args.ddpg_episodes, seed=seed)
            timings[f"ddpg {mode} training"] = res.seconds
            nn.save(res.agent.actor, out / f"actor_{mode}.json")
            methods.append((f"ddpg {mode}", res.policy()))
    reports = [evaluate_policy(a, cfg, args.episodes, seed, method=label, threads=args.threads)
               for label, a in methods]
    for r in reports:
        timings[r.method] = r.seconds
        print(f"{r.method:>22}: {r.mean:.4f} +- {r.stderr:.4f}")
    write_reports(reports, out / "compare.csv", include_time=False)
    files = ["compare.csv"]
    if args.ddpg_episodes > 0:
        files += [f"actor_{m}.json" for m in modes]
    return files


COMMANDS = {
    "solve-quant": cmd_solve_quant,
    "train-ddpg": cmd_train_ddpg,
    "eval": cmd_eval,
    "slice": cmd_slice,
    "filter-demo": cmd_filter_demo,
    "compare": cmd_compare,
}

_NOT_REPLAYED = {"command", "config", "out_dir", "force", "verbose", "seed", "threads"}


def run(args, cfg: ProblemConfig) -> int:
    seed = cfg.rng_seed if args.seed is None else args.seed
    out = Path(args.out_dir)
    _prepare_out_dir(out, args.force)
    print(f"seed: {seed}")
    started = dt.datetime.now(dt.timezone.utc).isoformat()
    timings: dict = {}
    files = COMMANDS[args.command](args, cfg, seed, out, timings)
    manifest = {
        "tool": "invpomdp",
        "version": __version__,
        "backend": kernels.BACKEND,
        "command": args.command,
        "args": {k: v for k, v in vars(args).items() if k not in _NOT_REPLAYED},
        "seed": seed,
        "threads": args.threads,
        "config": cfg.to_dict(),
        "artifacts": files,
        "timings": timings,
        "started": started,
        "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return 0


def replay(args) -> int:
    path = Path(args.manifest)
    try:
        m = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read manifest {path}: {exc}") from None
    if m.get("tool") != "invpomdp" or m.get("command") not in COMMANDS:
        raise CliError(f"{path} is not an invpomdp run manifest")
    cfg = ProblemConfig(**m["config"])
    ns = argparse.Namespace(**m["args"])
    ns.command = m["command"]
    ns.seed = m["seed"]
    ns.threads = args.threads if args.threads is not None else m.get("threads", 1)
    ns.out_dir = args.out_dir or str(path.parent) + "-replay"
    ns.force = args.force
    return run(ns, cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            return replay(args)
        if args.threads < 1:
            raise CliError("--threads must be >= 1")
        return run(args, load_config(args.config))
    except (CliError, ConfigError, BeliefError, TrainingDiverged, ValueError, OSError) as exc:
        print(f"invpomdp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
