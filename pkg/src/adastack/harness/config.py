"""Run, sweep and eval configurations (YAML key-value files)."""
from __future__ import annotations

import copy
import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from ..errors import ContractViolation
from ..memory import ADAPTIVE_STACK, DEMIR, DEMIR_IM, canonical_mode

AGENTS = ("q", "reinforce", "ppo")
DESK_STEPS = 200_000
FULL_STEPS = 1_000_000

_AGENT_KEYS = {
    "q": {"gamma", "alpha", "epsilon", "r_max", "im_beta", "q_init"},
    "ppo": {"gamma", "gae_lambda", "n_steps", "minibatch", "epochs", "lr", "clip",
            "entropy_coef", "value_coef", "max_grad_norm", "hidden", "n_layers"},
    "reinforce": {"gamma", "lr", "entropy_coef", "entropy_decay", "episodes_per_update",
                  "hidden", "n_layers", "max_grad_norm"},
}


@dataclass
class RunConfig:
    env: str = "passive_tmaze"
    env_params: dict = field(default_factory=dict)
    agent: str = "q"
    memory_mode: str = ADAPTIVE_STACK
    k: int = 2
    seeds: list = field(default_factory=lambda: [0])
    total_steps: int = DESK_STEPS
    log_every: int = 100
    agent_params: dict = field(default_factory=dict)
    out_dir: str = "runs"
    run_id: Optional[str] = None

    def validate(self) -> "RunConfig":
        from ..envs import make_env

        if self.agent not in AGENTS:
            raise ContractViolation(f"agent must be one of {AGENTS}, got {self.agent!r}")
        if not self.seeds:
            raise ContractViolation("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ContractViolation("seeds must be distinct")
        if not isinstance(self.k, int) or isinstance(self.k, bool) or self.k < 1:
            raise ContractViolation(f"k must be a positive integer, got {self.k!r}")
        if not isinstance(self.total_steps, int) or self.total_steps < 1:
            raise ContractViolation("total_steps must be a positive integer")
        if not isinstance(self.log_every, int) or self.log_every < 1:
            raise ContractViolation("log_every must be a positive integer")
        mode = canonical_mode(self.memory_mode)
        if self.agent != "q" and mode in (DEMIR, DEMIR_IM):
            raise ContractViolation("push/skip memory is only wired into the tabular agent")
        unknown = set(self.agent_params) - _AGENT_KEYS[self.agent]
        if unknown:
            raise ContractViolation(f"unknown {self.agent} parameters: {sorted(unknown)}")
        env = make_env(self.env, **self.env_params)
        if self.agent == "q" and not env.spec.discrete:
            raise ContractViolation("tabular agent needs a discrete-observation env")
        if self.agent == "reinforce" and env.spec.mode != "episodic":
            raise ContractViolation("REINFORCE needs an episodic env")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["memory_mode"] = canonical_mode(self.memory_mode)
        return d

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("run_id")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def name(self) -> str:
        return self.run_id or f"{self.env}-{self.agent}-{canonical_mode(self.memory_mode)}-k{self.k}-{self.digest()[:8]}"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ContractViolation(f"unknown run config keys: {sorted(extra)}")
        d = copy.deepcopy(d)
        if "seeds" in d and isinstance(d["seeds"], int):
            d["seeds"] = list(range(d["seeds"]))
        return cls(**d)


@dataclass
class SweepConfig:
    base: RunConfig
    grid: dict
    out_dir: str = "sweeps"
    name: str = "sweep"
    # cells listed explicitly (each a dict of overrides) are appended to the grid product
    cells: list = field(default_factory=list)

    def expand(self) -> list:
        """One (label, RunConfig) per cell of the grid."""
        if not self.grid and not self.cells:
            raise ContractViolation("sweep grid is empty")
        overrides = []
        if self.grid:
            keys = list(self.grid)
            for vals in itertools.product(*(self.grid[k] for k in keys)):
                overrides.append(dict(zip(keys, vals)))
        overrides += [dict(c) for c in self.cells]
        out = []
        for ov in overrides:
            d = self.base.to_dict()
            for key, val in ov.items():
                _assign(d, key, val)
            cfg = RunConfig.from_dict(d)
            cfg.run_id = None
            label = ";".join(f"{k}={_fmt(v)}" for k, v in ov.items())
            out.append((label, cfg))
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        d = dict(d)
        base = RunConfig.from_dict(d.pop("base", {}))
        grid = d.pop("grid", {}) or {}
        for key, vals in grid.items():
            if not isinstance(vals, list) or not vals:
                raise ContractViolation(f"grid entry {key!r} must be a non-empty list")
        return cls(base=base, grid=grid, **d)


def _fmt(v):
    if isinstance(v, dict):
        return ",".join(f"{k}:{v[k]}" for k in sorted(v))
    return str(v)


def _assign(d: dict, dotted: str, val) -> None:
    """Set a dotted key such as ``env_params.L``."""
    parts = dotted.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
    d[parts[-1]] = val


@dataclass
class EvalConfig:
    checkpoint: str
    env: str = "passive_tmaze"
    env_params: list = field(default_factory=lambda: [{}])
    episodes: int = 100
    greedy: bool = True
    seed: int = 0
    out: str = "eval.csv"

    def validate(self) -> "EvalConfig":
        if not Path(self.checkpoint).exists():
            raise ContractViolation(f"checkpoint {self.checkpoint} does not exist")
        if self.episodes < 1:
            raise ContractViolation("episodes must be >= 1")
        if not self.env_params:
            raise ContractViolation("need at least one eval env")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "EvalConfig":
        d = dict(d)
        ep = d.get("env_params")
        if isinstance(ep, dict):
            d["env_params"] = [ep]
        return cls(**d)


def load_yaml(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ContractViolation(f"{path}: top level must be a mapping")
    return doc


def resolve_k(cfg: RunConfig) -> RunConfig:
    """``k: kstar`` means the env's k* (for mazes: L + 2)."""
    if cfg.k == "kstar":
        from ..envs import make_env

        env = make_env(cfg.env, **cfg.env_params)
        if env.k_star is None or env.k_star == float("inf"):
            raise ContractViolation(f"{cfg.env} has no finite k*")
        cfg.k = int(env.k_star)
    return cfg
