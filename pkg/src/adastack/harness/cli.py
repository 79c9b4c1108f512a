"""Command line: ``adastack {train,sweep,eval,oracle,cost,plot}``.

Failures exit with status 2 and print one JSON line prefixed ``error:`` on
stderr, e.g. ``error: {"type": "ContractViolation", "message": "..."}``.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace

import yaml

from .config import (DESK_STEPS, FULL_STEPS, EvalConfig, RunConfig, SweepConfig,
                     load_yaml)


def _kv(items) -> dict:
    """``["L=3", "mode=continual"]`` -> dict, values parsed as YAML scalars."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        key, val = item.split("=", 1)
        out[key] = yaml.safe_load(val)
    return out


def _emit(rows: list, as_csv: bool) -> None:
    if not rows:
        return
    cols = list(rows[0])
    if as_csv:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] for c in cols])
        return
    cells = [[str(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    print("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
    for row in cells:
        print("  ".join(v.ljust(w) for v, w in zip(row, widths)))


# ---------------------------------------------------------------- subcommands

def cmd_train(args) -> None:
    from .run import run

    d = load_yaml(args.config) if args.config else {}
    cfg = RunConfig.from_dict(d)
    over = {}
    for name in ("env", "agent", "memory_mode", "k", "total_steps", "log_every", "out_dir", "run_id"):
        val = getattr(args, name)
        if val is not None:
            over[name] = val
    if args.seeds is not None:
        over["seeds"] = args.seeds
    if args.env_param:
        over["env_params"] = {**cfg.env_params, **_kv(args.env_param)}
    if args.set:
        over["agent_params"] = {**cfg.agent_params, **_kv(args.set)}
    cfg = replace(cfg, **over)
    if isinstance(cfg.k, str) and cfg.k.isdigit():
        cfg.k = int(cfg.k)
    if args.paper_scale:
        cfg.total_steps = FULL_STEPS
    out = run(cfg)
    print(out)


def cmd_sweep(args) -> None:
    from .run import sweep

    cfg = SweepConfig.from_dict(load_yaml(args.config))
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if args.paper_scale:
        cfg.base.total_steps = FULL_STEPS
    print(sweep(cfg, args.jobs))


def cmd_eval(args) -> None:
    from .run import evaluate

    d = load_yaml(args.config) if args.config else {}
    if args.checkpoint:
        d["checkpoint"] = args.checkpoint
    if args.env:
        d["env"] = args.env
    if "checkpoint" not in d:
        raise ValueError("eval needs --checkpoint or a config with 'checkpoint'")
    base = _kv(args.env_param)
    if args.lengths:
        d["env_params"] = [{**base, "L": L} for L in args.lengths]
    elif base:
        d["env_params"] = [base]
    for name in ("episodes", "seed", "out"):
        val = getattr(args, name)
        if val is not None:
            d[name] = val
    if args.sampled:
        d["greedy"] = False
    print(evaluate(EvalConfig.from_dict(d)))


def cmd_oracle(args) -> None:
    from .. import oracle
    from ..envs import make_env

    env = make_env(args.env, **_kv(args.env_param))
    ks = args.k or [2]
    rows = []
    v_star = oracle.optimal_value(env, args.gamma)
    kappa = oracle.find_kappa(env, args.k_max, args.gamma)
    for k in ks:
        sol = oracle.best_stack_policy(env, k, args.gamma)
        v_k = oracle.policy_value(env, sol.policy, k, args.gamma)
        try:
            gap = oracle.value_gap(env, k, args.gamma)
        except Exception:   # tasks without a canonical history, or histories off-policy
            gap = float("nan")
        ok, wit = oracle.check_value_consistency(env, sol.policy, 1.0, k)
        rows.append({
            "env": env.spec.name, "k": k, "gamma": args.gamma, "V_star": f"{v_star:.9f}",
            "V_k": f"{v_k:.9f}", "gap": f"{gap:.9f}",
            "kappa": kappa if kappa is not None else f">{args.k_max}",
            "value_consistent": ok,
            "witness": "" if ok else f"{wit.history_1}|{wit.history_2}",
        })
    _emit(rows, args.csv)


def cmd_cost(args) -> None:
    from ..cost import ArchSpec, cost, efficiency_ratio, table_rows

    arch = ArchSpec(family=args.family, layers=args.layers, hidden=args.hidden, actions=args.actions,
                    k=args.k, precision=args.precision, batch=args.batch, opt_copies=args.opt_copies,
                    stacking=args.stacking)
    if args.table:
        _emit(table_rows(arch), args.csv)
        return
    rep = cost(arch)
    row = {"family": arch.family, "stacking": arch.stacking, "k": arch.k, **rep.as_row()}
    if args.k_star is not None:
        row["ratio_vs_fs_kstar"] = f"{efficiency_ratio(arch.family, args.k_star, arch.k, arch):.6f}"
    _emit([row], args.csv)
    if not args.csv:
        for key, f in rep.formulas.items():
            print(f"  {key} >= {f}")


def cmd_plot(args) -> None:
    from . import plot

    if args.kind == "bars":
        print(plot.bars(args.input, args.out, ci95=args.ci95))
    else:
        print(plot.curves(args.input, args.out))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adastack", description="Adaptive stacking experiments")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one config over its seeds")
    t.add_argument("--config")
    t.add_argument("--env")
    t.add_argument("--env-param", action="append", metavar="KEY=VALUE")
    t.add_argument("--agent", choices=("q", "reinforce", "ppo"))
    t.add_argument("--memory-mode", dest="memory_mode")
    t.add_argument("-k", dest="k", help="stack size, or 'kstar'")
    t.add_argument("--seeds", type=int, nargs="+")
    t.add_argument("--total-steps", dest="total_steps", type=int,
                   help=f"default {DESK_STEPS}")
    t.add_argument("--log-every", dest="log_every", type=int)
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="agent hyperparameter")
    t.add_argument("--out-dir", dest="out_dir")
    t.add_argument("--run-id", dest="run_id")
    t.add_argument("--paper-scale", action="store_true", help=f"train for {FULL_STEPS} steps")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="grid of runs with aggregation")
    s.add_argument("--config", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out-dir", dest="out_dir")
    s.add_argument("--paper-scale", action="store_true")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("eval", help="evaluate a checkpoint on other env settings")
    e.add_argument("--config")
    e.add_argument("--checkpoint")
    e.add_argument("--env")
    e.add_argument("--env-param", action="append", metavar="KEY=VALUE")
    e.add_argument("--lengths", type=int, nargs="+", help="maze lengths L to evaluate on")
    e.add_argument("--episodes", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.add_argument("--sampled", action="store_true", help="sample actions instead of greedy")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("oracle", help="exact values, gap, kappa and consistency")
    o.add_argument("--env", default="passive_tmaze")
    o.add_argument("--env-param", action="append", metavar="KEY=VALUE")
    o.add_argument("-k", type=int, nargs="+")
    o.add_argument("--gamma", type=float, default=0.99)
    o.add_argument("--k-max", dest="k_max", type=int, default=4)
    o.add_argument("--csv", action="store_true")
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("cost", help="compute and memory lower bounds")
    c.add_argument("--family", default="mlp", choices=("mlp", "lstm", "transformer"))
    c.add_argument("--layers", type=int, default=2)
    c.add_argument("--hidden", type=int, default=128)
    c.add_argument("--actions", type=int, default=4)
    c.add_argument("-k", type=int, default=2)
    c.add_argument("--precision", type=int, default=4)
    c.add_argument("--batch", type=int, default=1)
    c.add_argument("--opt-copies", dest="opt_copies", type=int, default=1)
    c.add_argument("--stacking", default="fs", choices=("fs", "as"))
    c.add_argument("--k-star", dest="k_star", type=int)
    c.add_argument("--table", action="store_true", help="all families and stackings with k-degrees")
    c.add_argument("--csv", action="store_true")
    c.set_defaults(func=cmd_cost)

    pl = sub.add_parser("plot", help="SVG charts from a sweep or run CSV")
    pl.add_argument("--input", required=True)
    pl.add_argument("--kind", choices=("bars", "curves"), default="bars")
    pl.add_argument("--out", default="plots")
    pl.add_argument("--ci95", action="store_true", help="95%% CI whiskers instead of std")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:
        msg = {"type": type(exc).__name__, "message": str(exc), "command": args.command}
        print("error: " + json.dumps(msg, sort_keys=True), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
