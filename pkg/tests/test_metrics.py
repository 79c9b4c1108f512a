import math

import pytest

from adastack.errors import ContractViolation, Unsupported
from adastack.memory import init_stack, update_stack
from adastack.metrics import (WindowStats, TraceStep, aggregate, discounted_return, regrets,
                              retained, reward_regret, step_regret)

G, R, J, C = 0, 1, 2, 3


def test_discounted_return():
    assert discounted_return([0, 0, 1], 0.99) == pytest.approx(0.9801)
    assert discounted_return([], 0.9) == 0
    assert discounted_return([1, 1, 1], 0.5) == 1.75


def fs_trace(L, k, cue=G):
    obs = [cue] + [C] * L + [J]
    s = init_stack(obs[0], k)
    trace = []
    for x in obs[1:]:
        s2 = update_stack(s, 1, x)
        trace.append(TraceStep(s, s2, 1, x, 0.0, (cue,)))
        s = s2
    # goal transition: episode ends, no stack update
    trace.append(TraceStep(s, s, None, None, 1.0, (cue,)))
    return trace


def test_fs_window_memory_regret():
    mem, act, pas = regrets(fs_trace(4, 2))
    assert mem == pytest.approx(4 / 6)
    assert pas == 1 and act == 0


def test_fs_closed_form_grid():
    for L in range(11):
        for k in range(1, 6):
            mem, act, pas = regrets(fs_trace(L, k))
            n = L + 2
            assert mem == pytest.approx(max(0, n - k) / n)
            evicted = int(k <= L + 1)
            # with one slot the cue sits in the newest slot, so losing it is active
            assert (act, pas) == ((evicted, 0) if k == 1 else (0, evicted))


def test_as_retaining_trace_is_clean():
    s = (G, G)
    trace = []
    for x in (C, C, C, J):
        s2 = update_stack(s, 2, x)
        trace.append(TraceStep(s, s2, 2, x, 0.0, (G,)))
        s = s2
    assert regrets(trace) == (0.0, 0, 0)


def test_single_passive_eviction():
    assert step_regret((G, C), (C, C), 1, C, (G,)) == (False, False, True)


def test_active_regret_cases():
    # popping the newest slot just after the cue arrived
    assert step_regret((C, G), (C, C), 2, C, (G,)) == (False, True, False)
    # push/skip agent skipping an arriving cue
    assert step_regret((C, C), (C, C), None, G, (G,)) == (True, True, False)


def test_xor_pair_retention():
    assert retained((G, R, J), (G, R)) == 2
    assert retained((G, G, J), (G, R)) == 1
    assert retained((G, G, J), (G, G)) == 2


def test_regrets_need_cue():
    with pytest.raises(Unsupported):
        regrets([TraceStep((C,), (C,), 1, C, 0.0, None)])


def test_reward_regret():
    assert reward_regret([1.0, 1.0, 1.0], 1.0) == 0.0
    assert reward_regret([1.0, 0.0] * 500, 1.0) == pytest.approx(0.5)
    with pytest.raises(ContractViolation):
        reward_regret([], 1.0)
    # noise above the oracle reads as zero
    assert reward_regret([1.01, 0.99, 1.02, 0.98], 1.0) == 0.0


def test_window_row_and_aggregate():
    w = WindowStats(steps=10, absent=4, active=1, passive=2, returns=[1.0, 0.0],
                    optimal=[1.0, 1.0], successes=1, goals=2)
    row = w.row(100, 3)
    assert row["memory_regret"] == 0.4 and row["success"] == 0.5 and row["reward_regret"] == 0.5
    mu, sd = aggregate([1.0, 3.0, float("nan")])
    assert (mu, sd) == (2.0, 1.0)
    assert all(math.isnan(v) for v in aggregate([]))
