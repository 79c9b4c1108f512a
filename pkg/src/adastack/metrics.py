"""Returns and memory-regret bookkeeping.

Cue retention is measured as a multiset: a stack "holds the cue" when it
contains every cue symbol with at least its multiplicity (both corner cues for
XorMaze).  Regrets:

* memory regret  -- step starts with the cue not (fully) held;
* active regret  -- a freshly observed cue is thrown away (popping the newest
  slot while it carried cue content, or a push/skip agent skipping a cue);
* passive regret -- a stored cue is evicted from an older slot.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractViolation, Unsupported


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    g = 0.0
    for r in reversed(rewards):
        g = r + gamma * g
    return g


def retained(stack: Sequence, cue: Sequence) -> int:
    """Number of cue items (with multiplicity) present in the stack."""
    if len(cue) == 1:
        return 1 if cue[0] in stack else 0
    need = Counter(cue)
    have = Counter(stack)
    return sum(min(have[c], n) for c, n in need.items())


def step_regret(stack_before, stack_after, popped: Optional[int], obs_next, cue) -> tuple:
    """(absent, active, passive) indicators for one transition.

    ``popped`` is the 1-based slot removed, or ``None`` when the update was a
    skip (stack unchanged).
    """
    before = retained(stack_before, cue)
    absent = before < len(cue)
    active = passive = False
    if popped is None:
        if obs_next in cue and Counter(stack_before)[obs_next] < Counter(cue)[obs_next]:
            active = True
    elif retained(stack_after, cue) < before:
        # with x_next pushed, a drop in retained cue content means the popped
        # slot held a cue item
        if popped == len(stack_before):
            active = True
        else:
            passive = True
    return absent, active, passive


@dataclass
class TraceStep:
    stack_before: tuple
    stack_after: tuple
    popped: Optional[int]
    obs_next: object
    reward: float
    cue: tuple
    cue_visible: bool = False


def regrets(trace: Sequence[TraceStep]) -> tuple:
    """(memory fraction, active count, passive count) over a trace."""
    if not trace:
        return 0.0, 0, 0
    absent = active = passive = 0
    for st in trace:
        if st.cue is None:
            raise Unsupported("regrets need a cue-based trace")
        a, act, pas = step_regret(st.stack_before, st.stack_after, st.popped, st.obs_next, st.cue)
        absent += a
        active += act
        passive += pas
    return absent / len(trace), active, passive


def reward_regret(returns: Sequence[float], oracle_value: float) -> float:
    """Oracle value minus mean return; negative gaps within 3 SE read as 0."""
    if len(returns) == 0:
        raise ContractViolation("reward_regret needs at least one return")
    arr = np.asarray(returns, dtype=float)
    gap = oracle_value - arr.mean()
    if gap < 0:
        se = arr.std(ddof=1) / math.sqrt(len(arr)) if len(arr) > 1 else 0.0
        if -gap <= 3 * se + 1e-12:
            return 0.0
    return float(gap)


METRIC_NAMES = (
    "return", "reward_regret", "success", "episodes", "successes",
    "memory_regret", "memory_regret_count", "active_regret", "passive_regret",
)


@dataclass
class WindowStats:
    """Accumulates one logging window of MetricsRow values."""

    steps: int = 0
    absent: int = 0
    active: int = 0
    passive: int = 0
    returns: list = field(default_factory=list)
    optimal: list = field(default_factory=list)
    successes: int = 0
    goals: int = 0

    def row(self, step: int, seed: int) -> dict:
        nan = float("nan")
        ret = float(np.mean(self.returns)) if self.returns else nan
        if self.returns and self.optimal and all(v is not None for v in self.optimal):
            regret = float(np.mean(self.optimal) - ret)
        else:
            regret = nan
        return {
            "step": step, "seed": seed, "return": ret, "reward_regret": regret,
            "success": self.successes / self.goals if self.goals else nan,
            "episodes": len(self.returns), "successes": self.successes,
            "memory_regret": self.absent / self.steps if self.steps else nan,
            "memory_regret_count": self.absent, "active_regret": self.active,
            "passive_regret": self.passive,
        }


def aggregate(values: Sequence[float]) -> tuple:
    """Mean and population standard deviation, ignoring NaNs."""
    arr = np.asarray([v for v in values if not math.isnan(v)], dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    return float(arr.mean()), float(arr.std(ddof=0))
