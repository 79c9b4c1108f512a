"""Tabular epsilon-greedy Q-learning over (env action, memory action) pairs.

Joint actions are flattened:

* adaptive stack: ``j = a * k + (i - 1)``
* frame stack:    ``j = a`` (the pop index is always 1)
* push/skip:      ``j = a * 2 + choice`` with choice 0 = push, 1 = skip

Unvisited stacks read as ``r_max`` for every joint action (optimistic init) and
argmax ties go to the lowest joint index.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..envs.base import CONTINUAL, Env
from ..errors import ContractViolation, Unsupported
from ..memory import (ADAPTIVE_STACK, DEMIR, DEMIR_IM, FRAME_STACK, PUSH, SKIP,
                      canonical_mode, demir_mem_action, encode_stack, init_stack,
                      update_stack)
from ..metrics import WindowStats, retained, step_regret
from ..rng import RngStream, as_stream


def n_joint(num_env_actions: int, k: int, mode: str) -> int:
    mode = canonical_mode(mode)
    if mode == FRAME_STACK:
        return num_env_actions
    if mode == ADAPTIVE_STACK:
        return num_env_actions * k
    return num_env_actions * 2


def split_joint(j: int, k: int, mode: str) -> tuple:
    """(env action, memory component); the memory part is a pop index or a
    push/skip choice depending on the mode."""
    if mode == FRAME_STACK:
        return j, 1
    if mode == ADAPTIVE_STACK:
        a, i = divmod(j, k)
        return a, i + 1
    return divmod(j, 2)


def select_joint_action(q, epsilon: float, rng: RngStream) -> int:
    """Epsilon-greedy over a row of joint-action values."""
    if epsilon > 0 and rng.uniform() < epsilon:
        return rng.integers(len(q))
    return q.index(max(q)) if isinstance(q, list) else int(np.argmax(q))


def q_update(q: list, j: int, r: float, q_next, gamma: float, alpha: float,
             terminal: bool = False) -> float:
    """In-place Q-learning update of ``q[j]``; returns the new value."""
    target = r if terminal or q_next is None else r + gamma * max(q_next)
    q[j] += alpha * (target - q[j])
    return q[j]


@dataclass
class QLearnConfig:
    k: int = 2
    memory_mode: str = ADAPTIVE_STACK
    gamma: float = 0.99
    alpha: float = 0.1
    epsilon: float = 0.01
    total_steps: int = 10**6
    seed: int = 0
    log_every: int = 100
    r_max: float = 1.0
    im_beta: float = 1.0
    # optimistic table init; None means r_max (episodic) or 20 * r_max (continual)
    q_init: Optional[float] = None

    def __post_init__(self):
        validate_q_params(self.k, self.memory_mode, self.gamma, self.alpha,
                          self.epsilon, self.total_steps, self.log_every)


def initial_q(cfg: QLearnConfig, continual: bool) -> float:
    if cfg.q_init is not None:
        return float(cfg.q_init)
    # returns pile up across periods in continual tasks, so r_max alone is pessimistic
    return 20.0 * cfg.r_max if continual else cfg.r_max


def validate_q_params(k, memory_mode, gamma, alpha, epsilon, total_steps, log_every=100):
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ContractViolation(f"k must be a positive integer, got {k!r}")
    canonical_mode(memory_mode)
    if not 0 < alpha <= 1:
        raise ContractViolation("alpha must lie in (0, 1]")
    if not 0 <= epsilon <= 1:
        raise ContractViolation("epsilon must lie in [0, 1]")
    if not 0 < gamma < 1:
        raise ContractViolation("gamma must lie in (0, 1)")
    if total_steps < 0 or log_every < 1:
        raise ContractViolation("total_steps must be >= 0 and log_every >= 1")


@dataclass
class _Period:
    """Running discounted return of the current goal period."""

    gamma: float
    ret: float = 0.0
    disc: float = 1.0
    optimal: Optional[float] = None
    seen: dict = field(default_factory=dict)


def run_q(env: Env, cfg: QLearnConfig, table: Optional[dict] = None, learn: bool = True,
          episodes: Optional[int] = None, rng=None, trace: Optional[list] = None):
    """Core interaction loop shared by training and greedy evaluation.

    Runs ``cfg.total_steps`` steps, or ``episodes`` episodes when given.
    Returns ``(table, rows, summary)`` where rows are per-window MetricsRow
    dicts.
    """
    spec = env.spec
    if not spec.discrete:
        raise Unsupported("tabular Q-learning needs a discrete observation alphabet")
    mode = canonical_mode(cfg.memory_mode)
    k = cfg.k
    nA = spec.num_env_actions
    nj = n_joint(nA, k, mode)
    sigma = spec.alphabet_size
    Q = {} if table is None else table
    continual = spec.mode == CONTINUAL
    q0 = initial_q(cfg, continual)
    gamma, alpha = cfg.gamma, cfg.alpha
    eps = cfg.epsilon if learn else 0.0
    demir = mode in (DEMIR, DEMIR_IM)
    im = mode == DEMIR_IM
    counts: dict = {}
    cue_based = env.cue_based

    root = as_stream(cfg.seed if rng is None else rng)
    env_rng, agent_rng = root.spawn(0), root.spawn(1)

    x = env.reset(env_rng)
    s = init_stack(x, k)
    key = encode_stack(s, sigma)
    fill = 1
    period = _Period(gamma, optimal=env.period_optimal_value(gamma))
    cue = env.goal_cue() if cue_based else None
    if cue_based:
        period.seen = {x: 1} if x in cue else {}

    rows = []
    win = WindowStats()
    tot = WindowStats()
    after_cue_steps = after_cue_absent = 0
    n_done = 0
    step = 0
    limit = cfg.total_steps if episodes is None else None
    while True:
        if limit is not None and step >= limit:
            break
        if episodes is not None and n_done >= episodes:
            break
        q = Q.get(key)
        if q is None:
            q = [q0] * nj
            if learn:
                Q[key] = q
        if eps > 0 and agent_rng.uniform() < eps:
            j = agent_rng.integers(nj)
        else:
            j = q.index(max(q))
        a, m = split_joint(j, k, mode)

        res = env.step(a)
        x2, r = res.next_obs, res.reward
        if demir:
            pop = demir_mem_action(s, x2, m, fill)
            if pop is SKIP:
                s2 = s
            else:
                s2 = update_stack(s, pop, x2)
                fill = min(fill + 1, k)
        else:
            pop = m
            s2 = update_stack(s, pop, x2)
        key2 = encode_stack(s2, sigma)

        goal = res.success is not None
        if cue_based:
            need = len(cue)
            have = retained(s, cue)
            absent = have < need
            win.absent += absent
            arrived = sum(min(period.seen.get(c, 0), n) for c, n in _mult(cue)) >= need
            if arrived:
                after_cue_steps += 1
                after_cue_absent += absent
            if not goal:
                _, act, pas = step_regret(s, s2, pop, x2, cue)
                win.active += act
                win.passive += pas
        win.steps += 1
        period.ret += period.disc * r
        period.disc *= gamma

        terminal = res.done and not env.truncated
        if learn:
            if terminal:
                target = r
            else:
                q2 = Q.get(key2)
                target = r + gamma * (max(q2) if q2 is not None else q0)
            if im and m == PUSH:
                c = counts.get(key2, 0) + 1
                counts[key2] = c
                target += cfg.im_beta / math.sqrt(c)
            q[j] += alpha * (target - q[j])
        if trace is not None:
            trace.append((s, j, pop, x2, r, cue))

        step += 1
        if goal or res.done:
            win.returns.append(period.ret)
            win.optimal.append(period.optimal)
            if goal:
                win.goals += 1
                win.successes += bool(res.success)
        if res.done:
            n_done += 1
            x = env.reset(env_rng)
            s = init_stack(x, k)
            key = encode_stack(s, sigma)
            fill = 1
        else:
            s, key = s2, key2
            x = x2
        if goal or res.done:
            period = _Period(gamma, optimal=env.period_optimal_value(gamma))
            if cue_based:
                cue = env.goal_cue()
                period.seen = {}
                if x in cue:
                    period.seen[x] = 1
        elif cue_based and x2 in cue:
            period.seen[x2] = period.seen.get(x2, 0) + 1

        if step % cfg.log_every == 0:
            rows.append(win.row(step, cfg.seed))
            _merge(tot, win)
            win = WindowStats()
    if win.steps:
        rows.append(win.row(step, cfg.seed))
        _merge(tot, win)
    summary = tot.row(step, cfg.seed)
    summary["memory_regret_after_cue"] = (
        after_cue_absent / after_cue_steps if after_cue_steps else 0.0)
    summary["steps"] = step
    return Q, rows, summary


def _mult(cue):
    out = {}
    for c in cue:
        out[c] = out.get(c, 0) + 1
    return out.items()


def _merge(tot: WindowStats, win: WindowStats) -> None:
    tot.steps += win.steps
    tot.absent += win.absent
    tot.active += win.active
    tot.passive += win.passive
    tot.returns += win.returns
    tot.optimal += win.optimal
    tot.successes += win.successes
    tot.goals += win.goals


def final_success(rows: list, fraction: float = 0.1) -> float:
    """Success rate pooled over the last ``fraction`` of logged windows."""
    if not rows:
        return float("nan")
    n = max(1, int(round(len(rows) * fraction)))
    tail = rows[-n:]
    goals = sum(r["episodes"] for r in tail)
    wins = sum(r["successes"] for r in tail)
    return wins / goals if goals else float("nan")


def train_q(env: Env, cfg: QLearnConfig):
    """Train from scratch; returns ``(q_table, metrics_rows)``."""
    Q, rows, _ = run_q(env, cfg)
    return Q, rows


class QLearningAgent(BaseEstimator):
    """Estimator wrapper: ``fit(env)`` trains, ``predict(stacks)`` acts greedily."""

    def __init__(self, k=2, memory_mode="adaptive_stack", gamma=0.99, alpha=0.1,
                 epsilon=0.01, total_steps=200_000, seed=0, log_every=100,
                 r_max=1.0, im_beta=1.0, q_init=None):
        self.k = k
        self.memory_mode = memory_mode
        self.gamma = gamma
        self.alpha = alpha
        self.epsilon = epsilon
        self.total_steps = total_steps
        self.seed = seed
        self.log_every = log_every
        self.r_max = r_max
        self.im_beta = im_beta
        self.q_init = q_init

    def _config(self) -> QLearnConfig:
        return QLearnConfig(**self.get_params())

    def fit(self, env: Env, y=None):
        cfg = self._config()
        self.q_table_, self.metrics_, self.summary_ = run_q(env, cfg)
        self.alphabet_size_ = env.spec.alphabet_size
        self.num_env_actions_ = env.spec.num_env_actions
        self.q_default_ = initial_q(cfg, env.spec.mode == CONTINUAL)
        return self

    def _row(self, key):
        q = self.q_table_.get(key)
        if q is None:
            return [self.q_default_] * n_joint(self.num_env_actions_, self.k, self.memory_mode)
        return q

    def predict(self, stacks):
        """Greedy joint-action index for each stack."""
        check_is_fitted(self, "q_table_")
        stacks = _check_stacks(stacks, self.k, self.alphabet_size_)
        out = []
        for s in stacks:
            q = self._row(encode_stack(s, self.alphabet_size_))
            out.append(q.index(max(q)))
        return np.asarray(out, dtype=np.int64)

    def evaluate(self, env: Env, episodes: int = 100, seed: int = 0, trace=None) -> dict:
        """Greedy roll-outs with learning switched off; returns summary metrics."""
        check_is_fitted(self, "q_table_")
        if env.spec.alphabet_size != self.alphabet_size_ or env.spec.num_env_actions != self.num_env_actions_:
            raise ContractViolation("evaluation env does not match the trained table")
        cfg = QLearnConfig(**{**self.get_params(), "epsilon": 0.0, "seed": seed,
                              "total_steps": 0, "log_every": 10**9})
        _, _, summary = run_q(env, cfg, table=self.q_table_, learn=False,
                              episodes=episodes, trace=trace)
        return summary

    def save(self, path) -> None:
        check_is_fitted(self, "q_table_")
        doc = {"format": "adastack-qtable-1", "params": self.get_params(),
               "alphabet_size": self.alphabet_size_,
               "num_env_actions": self.num_env_actions_,
               "q_default": self.q_default_,
               "table": {str(key): row for key, row in sorted(self.q_table_.items())}}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "QLearningAgent":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("format") != "adastack-qtable-1":
            raise ContractViolation(f"{path} is not a Q-table checkpoint")
        agent = cls(**doc["params"])
        agent.alphabet_size_ = doc["alphabet_size"]
        agent.num_env_actions_ = doc["num_env_actions"]
        agent.q_default_ = doc.get("q_default", agent.r_max)
        agent.q_table_ = {int(key): row for key, row in doc["table"].items()}
        return agent


def _check_stacks(stacks, k, alphabet_size):
    if isinstance(stacks, tuple) and stacks and not isinstance(stacks[0], (tuple, list, np.ndarray)):
        stacks = [stacks]
    arr = np.asarray(stacks)
    if arr.ndim != 2 or arr.shape[1] != k:
        raise ContractViolation(f"expected stacks of shape (n, {k}), got {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= alphabet_size):
        raise ContractViolation("stack symbol outside the alphabet")
    return [tuple(int(v) for v in row) for row in arr]
