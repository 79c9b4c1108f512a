import csv
import json
import subprocess
import sys

import pytest
import yaml

from adastack.errors import ContractViolation
from adastack.harness import plot
from adastack.harness.cli import main
from adastack.harness.config import EvalConfig, RunConfig, SweepConfig
from adastack.harness.run import CSV_HEADER, ROW_METRICS, evaluate, run, sweep

CONT = {"L": 2, "mode": "continual"}


def _cfg(tmp_path, **kw):
    base = dict(env="passive_tmaze", env_params=dict(CONT), agent="q", memory_mode="as", k=2,
                seeds=[0, 1, 2, 3, 4], total_steps=2000, out_dir=str(tmp_path), run_id="r")
    base.update(kw)
    return RunConfig(**base)


def _read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_run_cadence_and_manifest(tmp_path):
    out = run(_cfg(tmp_path))
    csvs = sorted(out.glob("seed_*.csv"))
    assert len(csvs) == 5
    for p in csvs:
        rows = _read(p)
        assert tuple(rows[0]) == CSV_HEADER
        steps = sorted({int(r[2]) for r in rows[1:]})
        assert steps == list(range(100, 2001, 100))
        assert len(rows) - 1 == 20 * len(ROW_METRICS)
        assert b"\r" not in p.read_bytes()
    man = json.loads((out / "manifest.json").read_text())
    assert len(man["config_sha256"]) == 64 and "wall_clock_s" in man


def test_csv_header_golden(tmp_path):
    out = run(_cfg(tmp_path, seeds=[0], total_steps=100))
    text = (out / "seed_0.csv").read_text()
    assert text.splitlines()[0] == "run_id,seed,step,metric,value"
    assert text.splitlines()[1].startswith("r,0,100,return,")


def test_rerun_is_byte_identical(tmp_path):
    a = run(_cfg(tmp_path / "a", seeds=[3]))
    b = run(_cfg(tmp_path / "b", seeds=[3]))
    assert (a / "seed_3.csv").read_bytes() == (b / "seed_3.csv").read_bytes()


@pytest.mark.parametrize("bad", [dict(k=0), dict(seeds=[]), dict(agent="sarsa"),
                                 dict(agent="ppo", memory_mode="demir"),
                                 dict(agent_params={"lr": 1.0}),
                                 dict(env="velocity_cartpole", env_params={})])
def test_invalid_configs_rejected_before_training(tmp_path, bad):
    with pytest.raises(ContractViolation):
        run(_cfg(tmp_path, **bad))
    assert not list(tmp_path.rglob("*.csv"))


def test_sweep_empty_grid():
    with pytest.raises(ContractViolation):
        SweepConfig(base=RunConfig(), grid={}).expand()
    with pytest.raises(ContractViolation):
        SweepConfig.from_dict({"grid": {"k": []}})


def _sweep_cfg(tmp_path):
    return SweepConfig.from_dict({
        "base": {"env": "passive_tmaze", "env_params": {"L": 1, "mode": "continual"},
                 "seeds": 2, "total_steps": 1000},
        "grid": {"memory_mode": ["fs", "as"], "k": [2]},
        "cells": [{"k": 0}],
        "out_dir": str(tmp_path), "name": "s"})


def test_sweep_aggregates_and_records_failures(tmp_path, capsys):
    cfg = _sweep_cfg(tmp_path)
    # a broken cell fails validation up front
    with pytest.raises(ContractViolation):
        sweep(cfg)
    cfg.cells = []
    out = sweep(cfg)
    assert "2 cells, 4 runs" in capsys.readouterr().out
    agg = list(csv.DictReader(open(out / "aggregate.csv", newline="")))
    assert {r["label"] for r in agg} == {"memory_mode=fs;k=2", "memory_mode=as;k=2"}
    assert all(r["n"] == "2" for r in agg)
    cur = list(csv.DictReader(open(out / "curves.csv", newline="")))
    assert len(cur) == 2 * 10 * 6
    assert len(_read(out / "failures.csv")) == 1


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = _sweep_cfg(tmp_path / "a")
    cfg.cells = []
    a = sweep(cfg, jobs=1)
    cfg2 = _sweep_cfg(tmp_path / "b")
    cfg2.cells = []
    b = sweep(cfg2, jobs=2)
    for name in ("aggregate.csv", "curves.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sweep_runtime_failure_is_recorded(tmp_path, monkeypatch):
    import adastack.harness.run as hr

    real = hr.train_one

    def flaky(cfg, seed, out=None):
        if seed == 1:
            raise FloatingPointError("boom")
        return real(cfg, seed, out)

    monkeypatch.setattr(hr, "train_one", flaky)
    cfg = _sweep_cfg(tmp_path)
    cfg.cells = []
    out = sweep(cfg)
    fails = _read(out / "failures.csv")[1:]
    assert len(fails) == 2 and all("boom" in f[3] for f in fails)
    agg = list(csv.DictReader(open(out / "aggregate.csv", newline="")))
    assert all(r["n"] == "1" for r in agg)


def test_eval_generalises_and_checks_dimensions(tmp_path):
    out = run(_cfg(tmp_path, env_params={"L": 2}, seeds=[0], total_steps=5000))
    ckpt = out / "seed_0.json"
    res = evaluate(EvalConfig(str(ckpt), env_params=[{"L": 2}, {"L": 6}], episodes=20,
                              out=str(tmp_path / "e.csv")))
    rows = list(csv.DictReader(open(res, newline="")))
    got = {(r["env_params"], r["metric"]): float(r["value"]) for r in rows}
    assert got[("L=2", "success")] == 1.0 and got[("L=6", "success")] == 1.0
    assert got[("L=6", "memory_regret_after_cue")] == 0.0
    with pytest.raises(ContractViolation):
        evaluate(EvalConfig(str(ckpt), env="pocket_cube", env_params=[{}], out=str(tmp_path / "x.csv")))
    with pytest.raises(ContractViolation):
        evaluate(EvalConfig(str(tmp_path / "missing.json"), out=str(tmp_path / "x.csv")))


def test_eval_neural_dimension_mismatch(tmp_path):
    out = run(_cfg(tmp_path, agent="ppo", env_params={"L": 1}, seeds=[0], total_steps=256,
                   agent_params={"hidden": 8, "n_steps": 128, "minibatch": 64}))
    with pytest.raises(ContractViolation):
        evaluate(EvalConfig(str(out / "seed_0.ckpt"), env="magnitude_tmaze", env_params=[{}],
                            out=str(tmp_path / "x.csv")))


def _fake_aggregate(path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("cell", "label", "metric", "mean", "std", "n"))
        for i, lab in enumerate(("FS(2)", "AS(2)")):
            for m in plot.PANELS:
                w.writerow((i, lab, m, 0.5 + 0.1 * i, 0.05, 5))


def test_plot_deterministic_svg(tmp_path):
    agg = tmp_path / "agg.csv"
    _fake_aggregate(agg)
    a = plot.bars(agg, tmp_path / "a").read_bytes()
    b = plot.bars(agg, tmp_path / "b").read_bytes()
    assert a == b and a.lstrip().startswith(b"<?xml")
    c = plot.bars(agg, tmp_path / "c", ci95=True).read_bytes()
    assert c != a


def test_plot_single_seed_curve(tmp_path):
    out = run(_cfg(tmp_path, seeds=[0], total_steps=500))
    svg = plot.curves(out / "seed_0.csv", tmp_path / "p")
    assert svg.exists() and svg.stat().st_size > 1000


def test_plot_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("cell,label,metric,mean,std,n\n")
    with pytest.raises(ContractViolation):
        plot.bars(empty, tmp_path)
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ContractViolation):
        plot.bars(bad, tmp_path)
    with pytest.raises(ContractViolation):
        plot.curves(bad, tmp_path)


def test_cli_subcommands_exist():
    from adastack.harness.cli import build_parser

    sub = next(a for a in build_parser()._actions if a.dest == "command")
    assert set(sub.choices) == {"train", "sweep", "eval", "oracle", "cost", "plot"}


def test_cli_train_and_error_line(tmp_path, capsys):
    conf = tmp_path / "run.yaml"
    conf.write_text(yaml.safe_dump({"env": "passive_tmaze", "env_params": CONT, "seeds": [0],
                                    "total_steps": 300, "out_dir": str(tmp_path), "run_id": "c"}))
    assert main(["train", "--config", str(conf)]) == 0
    assert (tmp_path / "c" / "seed_0.csv").exists()
    assert main(["train", "--config", str(conf), "-k", "0"]) == 2
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: ")
    assert json.loads(err[len("error: "):])["type"] == "ContractViolation"


def test_cli_oracle_and_cost(capsys):
    assert main(["oracle", "--env-param", "L=3", "-k", "2", "--csv"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert abs(float(rows[0]["gap"]) - 0.009834) < 1e-6
    assert main(["cost", "--family", "transformer", "--hidden", "128", "-k", "8", "--csv"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert int(rows[0]["flops_action"]) == 6_358_016


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "adastack", "cost", "-k", "0"],
                         capture_output=True, text=True)
    assert res.returncode == 2 and res.stderr.startswith("error: ")
