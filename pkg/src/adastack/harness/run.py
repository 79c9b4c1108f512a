"""Training runs, sweeps and checkpoint evaluation, written as long-format CSV."""
from __future__ import annotations

import csv
import io
import json
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from ..agents.neural import MAGIC, PPOAgent, ReinforceAgent
from ..agents.tabular import QLearningAgent
from ..envs import make_env
from ..metrics import aggregate
from .config import EvalConfig, RunConfig, SweepConfig, resolve_k

CSV_HEADER = ("run_id", "seed", "step", "metric", "value")
ROW_METRICS = ("return", "reward_regret", "success", "episodes", "successes", "memory_regret",
               "memory_regret_count", "active_regret", "passive_regret")
# metrics summarised per seed over the final windows
FINAL_METRICS = ("success", "return", "reward_regret", "memory_regret", "active_regret",
                 "passive_regret")


def fmt(v) -> str:
    """Shortest round-trip text for a number, so CSV bytes are stable."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def make_agent(cfg: RunConfig, seed: int):
    common = dict(k=cfg.k, memory_mode=cfg.memory_mode, total_steps=cfg.total_steps,
                  seed=seed, log_every=cfg.log_every, **cfg.agent_params)
    if cfg.agent == "q":
        return QLearningAgent(**common)
    if cfg.agent == "ppo":
        return PPOAgent(**common)
    return ReinforceAgent(**common)


def rows_to_csv(run_id: str, rows: list) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        for m in ROW_METRICS:
            w.writerow((run_id, r["seed"], r["step"], m, fmt(r[m])))
    return buf.getvalue()


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def train_one(cfg: RunConfig, seed: int, out: Path | None = None):
    """Fit one seed; returns ``(agent, rows)`` and writes CSV and checkpoint when ``out`` is set."""
    env = make_env(cfg.env, **cfg.env_params)
    agent = make_agent(cfg, seed).fit(env)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"seed_{seed}.csv").write_bytes(rows_to_csv(cfg.name, agent.metrics_).encode("utf-8"))
        ext = "json" if cfg.agent == "q" else "ckpt"
        agent.save(out / f"seed_{seed}.{ext}")
    return agent, agent.metrics_


def run(cfg: RunConfig) -> Path:
    """Train every seed of ``cfg`` into ``out_dir/<run name>``; returns that directory."""
    cfg = resolve_k(cfg).validate()
    out = Path(cfg.out_dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    for seed in cfg.seeds:
        train_one(cfg, seed, out)
    manifest = {"config": cfg.to_dict(), "config_sha256": cfg.digest(), "version": _version(),
                "wall_clock_s": round(time.time() - t0, 3),
                "files": [f"seed_{s}.csv" for s in cfg.seeds]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return out


def final_metrics(rows: list, fraction: float = 0.1) -> dict:
    """Per-seed summary over the last ``fraction`` of windows; success is pooled."""
    if not rows:
        return {m: float("nan") for m in FINAL_METRICS}
    n = max(1, int(round(len(rows) * fraction)))
    tail = rows[-n:]
    eps = sum(r["episodes"] for r in tail)
    out = {"success": sum(r["successes"] for r in tail) / eps if eps else float("nan")}
    for m in FINAL_METRICS[1:]:
        out[m] = aggregate([float(r[m]) for r in tail])[0]
    return out


def _job(args):
    cell, label, cfg, seed, out = args
    try:
        _, rows = train_one(cfg, seed, Path(out) / f"cell_{cell:03d}")
        return cell, seed, rows, None
    except Exception as exc:  # recorded per cell, the sweep carries on
        return cell, seed, None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"


def sweep(cfg: SweepConfig, jobs: int = 1) -> Path:
    """Run every (cell, seed), then write ``aggregate.csv``, ``curves.csv`` and ``failures.csv``."""
    cells = cfg.expand()
    out = Path(cfg.out_dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    plan = []
    for ci, (label, rc) in enumerate(cells):
        rc = resolve_k(rc).validate()
        for seed in rc.seeds:
            plan.append((ci, label, rc, seed, str(out)))
    print(f"sweep {cfg.name}: {len(cells)} cells, {len(plan)} runs")
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_job, plan))
    else:
        results = [_job(p) for p in plan]
    results.sort(key=lambda r: (r[0], r[1]))

    by_cell: dict = {}
    failures = []
    for ci, seed, rows, err in results:
        if err is None:
            by_cell.setdefault(ci, {})[seed] = rows
        else:
            failures.append((ci, cells[ci][0], seed, err.splitlines()[0]))

    agg = io.StringIO(newline="")
    w = csv.writer(agg, lineterminator="\n")
    w.writerow(("cell", "label", "metric", "mean", "std", "n"))
    cur = io.StringIO(newline="")
    wc = csv.writer(cur, lineterminator="\n")
    wc.writerow(("cell", "label", "step", "metric", "mean", "std", "n"))
    for ci, (label, _) in enumerate(cells):
        seeds = by_cell.get(ci, {})
        if not seeds:
            continue
        finals = [final_metrics(rows) for rows in seeds.values()]
        for m in FINAL_METRICS:
            vals = [f[m] for f in finals]
            mu, sd = aggregate(vals)
            w.writerow((ci, label, m, fmt(mu), fmt(sd), sum(not math.isnan(v) for v in vals)))
        steps = sorted({r["step"] for rows in seeds.values() for r in rows})
        index = [{r["step"]: r for r in rows} for rows in seeds.values()]
        for st in steps:
            for m in FINAL_METRICS:
                vals = [float(ix[st][m]) for ix in index if st in ix]
                mu, sd = aggregate(vals)
                wc.writerow((ci, label, st, m, fmt(mu), fmt(sd), sum(not math.isnan(v) for v in vals)))
    (out / "aggregate.csv").write_bytes(agg.getvalue().encode("utf-8"))
    (out / "curves.csv").write_bytes(cur.getvalue().encode("utf-8"))
    fb = io.StringIO(newline="")
    wf = csv.writer(fb, lineterminator="\n")
    wf.writerow(("cell", "label", "seed", "error"))
    wf.writerows(failures)
    (out / "failures.csv").write_bytes(fb.getvalue().encode("utf-8"))
    return out


def load_agent(path):
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        # the update rule does not matter for evaluation
        return PPOAgent.load(path)
    return QLearningAgent.load(path)


EVAL_METRICS = ("success", "return", "memory_regret", "memory_regret_after_cue",
                "active_regret", "passive_regret", "episodes")


def evaluate(cfg: EvalConfig) -> Path:
    """Freeze a checkpoint and roll it out on each eval env; one long CSV."""
    cfg.validate()
    agent = load_agent(cfg.checkpoint)
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("cell", "env_params", "metric", "value"))
    for ci, params in enumerate(cfg.env_params):
        env = make_env(cfg.env, **params)
        if isinstance(agent, QLearningAgent):
            summary = agent.evaluate(env, cfg.episodes, cfg.seed)
        else:
            summary = agent.evaluate(env, cfg.episodes, cfg.seed, greedy=cfg.greedy)
        label = ";".join(f"{k}={params[k]}" for k in sorted(params))
        for m in EVAL_METRICS:
            w.writerow((ci, label, m, fmt(summary[m])))
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(buf.getvalue().encode("utf-8"))
    return out
