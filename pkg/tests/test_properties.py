"""Randomised invariants (hypothesis)."""
import itertools

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from adastack.agents.neural import encode, entropy, init_params, log_softmax, softmax
from adastack.agents.tabular import q_update
from adastack.envs import make_env
from adastack.memory import (decode_stack, encode_stack, fs_mem_action, init_stack,
                             update_stack)

symbols = st.integers(0, 7)


@st.composite
def stack_and_ops(draw):
    k = draw(st.integers(1, 5))
    s = tuple(draw(st.lists(symbols, min_size=k, max_size=k)))
    ops = draw(st.lists(st.tuples(st.integers(1, k), symbols), max_size=30))
    return s, ops


@given(stack_and_ops())
def test_update_keeps_capacity_and_puts_newest_on_top(case):
    s, ops = case
    k = len(s)
    for i, x in ops:
        before = s
        s = update_stack(s, i, x)
        assert len(s) == k
        assert s[-1] == x
        assert s[:-1] == before[:i - 1] + before[i:]


@given(st.integers(1, 5), symbols, st.lists(symbols, max_size=50))
def test_frame_stack_is_sliding_window(k, x0, xs):
    s = init_stack(x0, k)
    for x in xs:
        s = update_stack(s, fs_mem_action(s), x)
    assert s == tuple(([x0] * k + xs)[-k:])


def _subsequences_ending_last(seq, k):
    if len(seq) == 0:
        return set()
    head, last = seq[:-1], seq[-1]
    return {tuple(head[j] for j in idx) + (last,) for idx in itertools.combinations(range(len(head)), k - 1)}


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2), st.lists(st.integers(0, 2), max_size=6))
def test_adaptive_stack_reaches_exactly_the_ordered_subsets(k, x0, xs):
    # brute force over all memory actions
    frontier = {init_stack(x0, k)}
    for x in xs:
        frontier = {update_stack(s, i, x) for s in frontier for i in range(1, k + 1)}
    if xs:
        expect = _subsequences_ending_last([x0] * k + xs, k)
    else:
        expect = {init_stack(x0, k)}
    assert frontier == expect


@given(st.integers(2, 9).flatmap(
    lambda a: st.tuples(st.just(a), st.lists(st.integers(0, a - 1), min_size=1, max_size=6))))
def test_encode_roundtrip_and_injective(case):
    a, s = case
    key = encode_stack(s, a)
    assert 0 <= key < a ** len(s)
    assert decode_stack(key, a, len(s)) == tuple(s)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=12))
def test_softmax_is_a_distribution(z):
    z = np.asarray([z])
    p = softmax(z)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) < 1e-12
    assert np.allclose(np.exp(log_softmax(z)), p)
    assert -1e-12 <= entropy(z)[0] <= np.log(z.shape[1]) + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.lists(st.lists(st.integers(0, 3), min_size=1, max_size=4), min_size=1, max_size=5))
def test_one_hot_encoding_is_injective(k, raw):
    p = init_params(4, k, 4, hidden=4, rng=0)
    stacks = list({tuple((r * k)[:k]) for r in raw})
    X = encode(stacks, p)
    assert X.shape == (len(stacks), 4 * k)
    assert np.all(X.sum(axis=1) == k)
    assert len({row.tobytes() for row in X}) == len(stacks)


ENVS = [("passive_tmaze", {"L": 2}), ("active_tmaze", {"L": 1}), ("xormaze", {}),
        ("magnitude_tmaze", {}), ("passive_tmaze", {"L": 2, "random_corridor": True}),
        ("velocity_cartpole", {})]


def _rollout(env, seed, actions):
    obs = [env.reset(seed)]
    for a in actions:
        res = env.step(a % env.spec.num_env_actions)
        obs.append((res.next_obs if not isinstance(res.next_obs, np.ndarray) else tuple(res.next_obs), res.reward,
                    res.done))
        if res.done:
            break
    return obs


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(ENVS), st.integers(0, 2**31), st.lists(st.integers(0, 15), max_size=40))
def test_env_is_deterministic_given_seed(spec, seed, actions):
    name, params = spec
    a = _rollout(make_env(name, **params), seed, actions)
    b = _rollout(make_env(name, **params), seed, actions)
    assert repr(a) == repr(b)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 4), st.sampled_from(["passive_tmaze", "active_tmaze"]), st.integers(0, 1000),
       st.lists(st.integers(0, 3), min_size=1, max_size=200))
def test_continual_never_terminates(L, name, seed, actions):
    env = make_env(name, L=L, mode="continual")
    env.reset(seed)
    for a in actions:
        assert not env.step(a).done


@given(st.floats(-1, 1), st.floats(0.5, 0.99), st.floats(0.01, 1),
       st.lists(st.tuples(st.integers(0, 2), st.floats(-1, 1), st.booleans()), max_size=60))
def test_q_values_stay_in_the_discounted_reward_box(q0, gamma, alpha, updates):
    hi = max(q0, 1 / (1 - gamma))
    lo = min(q0, -1 / (1 - gamma))
    table = [[q0] * 3 for _ in range(3)]
    for j, (s, r, term) in enumerate(updates):
        nxt = table[(s + 1) % 3]
        v = q_update(table[s], j % 3, r, nxt, gamma, alpha, terminal=term)
        assert lo - 1e-9 <= v <= hi + 1e-9
