"""Exact ground truth for tiny discrete tasks.

Full histories are represented by their latent posterior: two histories that
induce the same distribution over latent states have the same future, so the
history process collapses to a finite belief MDP.  Stack policies are evaluated
on the product of that belief MDP with the stack, which is exactly the process
an agent with a k-slot memory experiences.

Episodic tasks are solved without the time limit: the bundled tasks either end
by themselves within the limit (passive T-Maze) or have optimal episodes far
shorter than it.
"""
from __future__ import annotations

import itertools
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .envs.base import CONTINUAL, Env, ModelEnv
from .errors import ContractViolation, OracleCapExceeded, Unsupported
from .memory import init_stack, update_stack
from .rng import as_stream

TOL = 1e-9
DEFAULT_CAP = 10**6
_ROUND = 12

# policy: dict stack -> (env_action, pop_index), or callable stack -> [(prob, a, i)]
Policy = Union[dict, Callable]


def _belief_key(b: dict) -> tuple:
    return tuple(sorted((z, round(p, _ROUND)) for z, p in b.items() if p > 0))


class HistoryMDP:
    """Belief MDP over full observation histories of a latent-model task.

    ``out[b][a]`` lists ``(prob, mean_reward, terminal, next_belief, obs)``
    with ``next_belief = -1`` for terminal outcomes.
    """

    def __init__(self, env: Env, cap: int = DEFAULT_CAP):
        if not isinstance(env, ModelEnv):
            raise Unsupported(f"{env.spec.name} has no enumerable latent model")
        self.env = env
        self.nA = env.spec.num_env_actions
        self.cap = cap
        self.beliefs: list[dict] = []
        self.obs: list = []
        self.out: list[list] = []
        self._index: dict = {}
        groups = defaultdict(dict)
        for p, z in env.initial_distribution():
            x = env.observe(z)
            groups[x][z] = groups[x].get(z, 0.0) + p
        self.init = []
        queue = deque()
        for x in sorted(groups):
            mass = sum(groups[x].values())
            b = self._intern({z: p / mass for z, p in groups[x].items()}, x, queue)
            self.init.append((mass, b))
        while queue:
            self._expand(queue.popleft(), queue)

    def _intern(self, b: dict, x, queue) -> int:
        key = (x, _belief_key(b))
        idx = self._index.get(key)
        if idx is None:
            idx = len(self.beliefs)
            if idx >= self.cap:
                raise OracleCapExceeded(f"history model exceeds {self.cap} states")
            self._index[key] = idx
            self.beliefs.append(b)
            self.obs.append(x)
            self.out.append(None)
            queue.append(idx)
        return idx

    def _expand(self, bi: int, queue) -> None:
        env = self.env
        b = self.beliefs[bi]
        rows = []
        for a in range(self.nA):
            acc = {}
            for z, pz in b.items():
                for p, z2, r, term, _ in env.transitions(z, a):
                    x2 = env.observe(z2)
                    g = acc.setdefault((x2, bool(term)), [0.0, 0.0, {}])
                    g[0] += pz * p
                    g[1] += pz * p * r
                    if not term:
                        g[2][z2] = g[2].get(z2, 0.0) + pz * p
            outs = []
            for (x2, term), (mass, rmass, zs) in sorted(acc.items(), key=lambda kv: (kv[0][1], kv[0][0])):
                if mass <= 0:
                    continue
                nxt = -1 if term else self._intern({z: q / mass for z, q in zs.items()}, x2, queue)
                outs.append((mass, rmass / mass, term, nxt, x2))
            rows.append(outs)
        self.out[bi] = rows

    @property
    def n(self) -> int:
        return len(self.beliefs)

    def _flat(self):
        src, prob, rew, nxt = [], [], [], []
        for bi, rows in enumerate(self.out):
            for a, outs in enumerate(rows):
                for p, r, term, b2, _ in outs:
                    src.append(bi * self.nA + a)
                    prob.append(p)
                    rew.append(r)
                    nxt.append(b2 if b2 >= 0 else self.n)
        return (np.asarray(src), np.asarray(prob), np.asarray(rew), np.asarray(nxt))

    def q_values(self, V: np.ndarray, gamma: float) -> np.ndarray:
        src, prob, rew, nxt = self._flat()
        Vx = np.append(V, 0.0)
        q = np.bincount(src, weights=prob * (rew + gamma * Vx[nxt]), minlength=self.n * self.nA)
        return q.reshape(self.n, self.nA)

    def history_belief(self, history, actions=None) -> int:
        """Belief reached by an observation history.

        ``actions`` gives the env action before each later observation; when
        omitted the first action consistent with the history is used.
        """
        cands = [b for _, b in self.init if self.obs[b] == history[0]]
        if not cands:
            raise ContractViolation(f"history cannot start with {history[0]!r}")
        b = cands[0]
        for t, x in enumerate(history[1:]):
            acts = [actions[t]] if actions is not None else range(self.nA)
            for a in acts:
                hit = [o for o in self.out[b][a] if o[4] == x and not o[2]]
                if hit:
                    b = hit[0][3]
                    break
            else:
                raise ContractViolation(f"history not reachable at step {t + 1}")
        return b


def value_iteration(mdp: HistoryMDP, gamma: float, tol: float = 1e-12,
                    max_iter: int = 10**6) -> np.ndarray:
    """Optimal values of every history state (sup-norm change below ``tol``)."""
    if not 0 <= gamma <= 1:
        raise ContractViolation("gamma must lie in [0, 1]")
    src, prob, rew, nxt = mdp._flat()
    size = mdp.n * mdp.nA
    V = np.zeros(mdp.n + 1)
    for _ in range(max_iter):
        q = np.bincount(src, weights=prob * (rew + gamma * V[nxt]), minlength=size)
        V_new = q.reshape(mdp.n, mdp.nA).max(axis=1)
        delta = np.max(np.abs(V_new - V[:-1])) if mdp.n else 0.0
        V[:-1] = V_new
        if delta < tol:
            break
    return V[:-1].copy()


def _policy_dist(policy: Policy, s: tuple):
    if callable(policy):
        return policy(s)
    try:
        a, i = policy[s]
    except KeyError:
        raise ContractViolation(f"policy undefined on reachable stack {s}") from None
    return [(1.0, a, i)]


def uniform_policy(num_env_actions: int, k: int) -> Callable:
    p = 1.0 / (num_env_actions * k)
    dist = [(p, a, i) for a in range(num_env_actions) for i in range(1, k + 1)]
    return lambda s: dist


def frame_stack_policy(env_policy: Callable) -> Callable:
    """Wrap ``env_policy(stack) -> a`` as a stack policy that always pops slot 1."""
    return lambda s: [(1.0, env_policy(s), 1)]


class StackProcess:
    """Product chain of history states and stacks under a fixed stack policy."""

    def __init__(self, mdp: HistoryMDP, policy: Policy, k: int, cap: int = DEFAULT_CAP):
        if k < 1:
            raise ContractViolation("k must be >= 1")
        self.mdp, self.policy, self.k = mdp, policy, k
        self.nodes: list[tuple] = []
        self.parent: list = []
        self._index: dict = {}
        rows, cols, vals = [], [], []
        R = []
        self.mu0 = defaultdict(float)
        queue = deque()

        def intern(b, s, par):
            key = (b, s)
            idx = self._index.get(key)
            if idx is None:
                idx = len(self.nodes)
                if idx >= cap:
                    raise OracleCapExceeded(f"stack process exceeds {cap} states")
                self._index[key] = idx
                self.nodes.append(key)
                self.parent.append(par)
                R.append(0.0)
                queue.append(idx)
            return idx

        for p0, b0 in mdp.init:
            self.mu0[intern(b0, init_stack(mdp.obs[b0], k), None)] += p0
        while queue:
            n = queue.popleft()
            b, s = self.nodes[n]
            for pj, a, i in _policy_dist(policy, s):
                if pj <= 0:
                    continue
                for p, r, term, b2, x2 in mdp.out[b][a]:
                    R[n] += pj * p * r
                    if not term:
                        m = intern(b2, update_stack(s, i, x2), n)
                        rows.append(n)
                        cols.append(m)
                        vals.append(pj * p)
        size = len(self.nodes)
        self.P = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
        self.R = np.asarray(R)
        self.start = np.zeros(size)
        for n, p in self.mu0.items():
            self.start[n] = p

    def values(self, gamma: float, tol: float = 1e-13, max_iter: int = 10**6) -> np.ndarray:
        size = len(self.nodes)
        if gamma < 1:
            A = sp.identity(size, format="csc") - gamma * self.P.tocsc()
            return np.atleast_1d(spsolve(A, self.R))
        V = np.zeros(size)
        for _ in range(max_iter):
            V_new = self.R + self.P @ V
            if np.max(np.abs(V_new - V), initial=0.0) < tol:
                return V_new
            V = V_new
        return V

    def occupancy(self, gamma: float, horizon: Optional[int] = None) -> np.ndarray:
        """State weights: expected visits per episode (episodic, cut at the
        time limit) or discounted occupancy (continual)."""
        if self.mdp.env.spec.mode == CONTINUAL:
            A = sp.identity(len(self.nodes), format="csc") - gamma * self.P.T.tocsc()
            return np.atleast_1d(spsolve(A, self.start))
        horizon = horizon or self.mdp.env.spec.horizon
        d = self.start.copy()
        total = d.copy()
        PT = self.P.T.tocsr()
        for _ in range(horizon - 1):
            d = PT @ d
            if not d.any():
                break
            total += d
        return total

    def stack_values(self, gamma: float) -> dict:
        """V_k(s): occupancy-weighted mean of history values sharing stack s."""
        V = self.values(gamma)
        w = self.occupancy(gamma)
        num, den = defaultdict(float), defaultdict(float)
        for n, (_, s) in enumerate(self.nodes):
            num[s] += w[n] * V[n]
            den[s] += w[n]
        return {s: num[s] / den[s] for s in num if den[s] > 0}

    def history(self, n: int) -> tuple:
        obs = []
        while n is not None:
            obs.append(self.mdp.obs[self.nodes[n][0]])
            n = self.parent[n]
        return tuple(reversed(obs))

    def initial_value(self, gamma: float) -> float:
        return float(self.start @ self.values(gamma))


class StackSolution(NamedTuple):
    policy: dict
    values: dict


@dataclass
class _Model:
    mdp: HistoryMDP
    V: np.ndarray
    Q: np.ndarray
    gamma: float


def _model(env: Env, gamma: float, cap: int) -> _Model:
    mdp = HistoryMDP(env, cap)
    V = value_iteration(mdp, gamma)
    return _Model(mdp, V, mdp.q_values(V, gamma), gamma)


def _cooccurrence(mdp: HistoryMDP, k: int, cap: int) -> dict:
    """Stack -> set of history states it can co-occur with under some policy."""
    seen = set()
    by_stack = defaultdict(set)
    queue = deque()
    for _, b0 in mdp.init:
        queue.append((b0, init_stack(mdp.obs[b0], k)))
    while queue:
        node = queue.popleft()
        if node in seen:
            continue
        seen.add(node)
        if len(seen) > cap:
            raise OracleCapExceeded(f"stack process exceeds {cap} states")
        b, s = node
        by_stack[s].add(b)
        for a in range(mdp.nA):
            for p, r, term, b2, x2 in mdp.out[b][a]:
                if not term:
                    for i in range(1, k + 1):
                        queue.append((b2, update_stack(s, i, x2)))
    return by_stack


def _joint_classes(mdp: HistoryMDP, k: int, by_stack: dict) -> dict:
    """Per stack, one representative joint action for every group of joint
    actions with identical consequences from every co-occurring history."""
    classes = {}
    for s, bs in by_stack.items():
        bs = sorted(bs)
        reps = {}
        for a in range(mdp.nA):
            for i in range(1, k + 1):
                sig = tuple(
                    tuple((round(p, _ROUND), round(r, _ROUND), term, b2,
                           None if term else update_stack(s, i, x2))
                          for p, r, term, b2, x2 in mdp.out[b][a])
                    for b in bs)
                reps.setdefault(sig, (a, i))
        # newest-slot evictions first: among equally good policies the search
        # then prefers ones that hold on to older observations
        classes[s] = sorted(reps.values(), key=lambda ai: (ai[0], -ai[1]))
    return classes


def _search_optimal(model: _Model, k: int, cap: int, budget: int = 200_000) -> Optional[dict]:
    """Depth-first search for a deterministic stack policy that picks an
    optimal env action at every reachable history; ``None`` if none exists."""
    mdp = model.mdp
    opt = [frozenset(np.flatnonzero(model.Q[b] >= model.V[b] - TOL).tolist()) for b in range(mdp.n)]
    classes = _joint_classes(mdp, k, _cooccurrence(mdp, k, cap))
    assign: dict = {}
    calls = [0]
    roots = [(b0, init_stack(mdp.obs[b0], k)) for _, b0 in mdp.init]

    def reach():
        seen = set()
        by_stack = defaultdict(set)
        order = []
        queue = deque(roots)
        while queue:
            node = queue.popleft()
            if node in seen:
                continue
            seen.add(node)
            b, s = node
            if s not in by_stack:
                order.append(s)
            by_stack[s].add(b)
            if s in assign:
                a, i = assign[s]
                for p, r, term, b2, x2 in mdp.out[b][a]:
                    if not term:
                        queue.append((b2, update_stack(s, i, x2)))
        return by_stack, order

    def allowed(bs):
        out = None
        for b in bs:
            out = opt[b] if out is None else out & opt[b]
        return out

    def dfs():
        calls[0] += 1
        if calls[0] > budget:
            raise OracleCapExceeded("policy search budget exhausted")
        by_stack, order = reach()
        pending = None
        for s in order:
            if s in assign:
                if assign[s][0] not in allowed(by_stack[s]):
                    return None
            elif pending is None:
                pending = s
        if pending is None:
            return {s: assign[s] for s in order}
        ok = allowed(by_stack[pending])
        for a, i in classes[pending]:
            if a not in ok:
                continue
            assign[pending] = (a, i)
            found = dfs()
            if found is not None:
                return found
            del assign[pending]
        return None

    return dfs()


def enumerate_policies(env: Env, k: int, cap: int = 10**5, mdp: HistoryMDP = None):
    """All deterministic stack policies, up to joint actions with identical
    consequences.  Yields dicts over every stack reachable under some policy."""
    mdp = mdp or HistoryMDP(env)
    classes = _joint_classes(mdp, k, _cooccurrence(mdp, k, DEFAULT_CAP))
    stacks = sorted(classes)
    count = 1
    for s in stacks:
        count *= len(classes[s])
    if count > cap:
        raise OracleCapExceeded(f"{count} deterministic stack policies exceed the cap {cap}")
    for combo in itertools.product(*(classes[s] for s in stacks)):
        yield dict(zip(stacks, combo))


def count_policies(env: Env, k: int, mdp: HistoryMDP = None) -> int:
    mdp = mdp or HistoryMDP(env)
    classes = _joint_classes(mdp, k, _cooccurrence(mdp, k, DEFAULT_CAP))
    return int(np.prod([len(c) for c in classes.values()], dtype=object))


def sample_policy(env: Env, k: int, rng, mdp: HistoryMDP = None) -> dict:
    mdp = mdp or HistoryMDP(env)
    classes = _joint_classes(mdp, k, _cooccurrence(mdp, k, DEFAULT_CAP))
    rng = as_stream(rng)
    return {s: c[rng.integers(len(c))] for s, c in sorted(classes.items())}


def best_stack_policy(env: Env, k: int, gamma: float = 0.99, cap: int = DEFAULT_CAP) -> StackSolution:
    """Optimal deterministic k-slot stack policy and its stack values V_k.

    When some policy acts optimally at every reachable history it is returned;
    otherwise all policies are enumerated and the one with the best expected
    value from the start is kept.
    """
    model = _model(env, gamma, cap)
    policy = _search_optimal(model, k, cap)
    if policy is None:
        best, best_v = None, -np.inf
        for pol in enumerate_policies(env, k, mdp=model.mdp):
            v = StackProcess(model.mdp, pol, k, cap).initial_value(gamma)
            if v > best_v + TOL:
                best, best_v = pol, v
        policy = best
    proc = StackProcess(model.mdp, policy, k, cap)
    reached = {s for _, s in proc.nodes}
    policy = {s: policy[s] for s in sorted(reached)}
    return StackSolution(policy, proc.stack_values(gamma))


def optimal_value(env: Env, gamma: float = 0.99, history=None, cap: int = DEFAULT_CAP) -> float:
    """V* of a history, or the expected V* at the start when none is given."""
    mdp = HistoryMDP(env, cap)
    V = value_iteration(mdp, gamma)
    if history is None:
        return float(sum(p * V[b] for p, b in mdp.init))
    return float(V[mdp.history_belief(history)])


def policy_value(env: Env, policy: Policy, k: int, gamma: float = 0.99,
                 cap: int = DEFAULT_CAP) -> float:
    """Expected discounted return from the start under a stack policy."""
    return StackProcess(HistoryMDP(env, cap), policy, k, cap).initial_value(gamma)


def attains_optimum(env: Env, policy: Policy, k: int, gamma: float = 0.99,
                    cap: int = DEFAULT_CAP) -> float:
    """Largest |V*(h) - V^pi(h)| over reachable histories h."""
    model = _model(env, gamma, cap)
    proc = StackProcess(model.mdp, policy, k, cap)
    V = proc.values(gamma)
    return float(max(abs(model.V[b] - V[n]) for n, (b, _) in enumerate(proc.nodes)))


def _replay(mdp: HistoryMDP, policy: dict, k: int, history) -> tuple:
    b = mdp.history_belief(history[:1])
    s = init_stack(history[0], k)
    for x in history[1:]:
        a, i = policy[s]
        hit = [o for o in mdp.out[b][a] if o[4] == x and not o[2]]
        if not hit:
            raise ContractViolation("canonical history is off the policy's path")
        b = hit[0][3]
        s = update_stack(s, i, x)
    return b, s


def value_gap(env: Env, k: int, gamma: float = 0.99, history=None,
              cap: int = DEFAULT_CAP) -> float:
    """|V*(h) - V_k(s)| for the task's canonical history h and the stack s the
    optimal k-slot policy holds after it."""
    if history is None:
        if not hasattr(env, "canonical_history"):
            raise Unsupported(f"{env.spec.name} defines no canonical history")
        history = env.canonical_history()
    model = _model(env, gamma, cap)
    sol = best_stack_policy(env, k, gamma, cap)
    b, s = _replay(model.mdp, sol.policy, k, history)
    return abs(float(model.V[b]) - sol.values[s])


def find_kappa(env: Env, k_max: int, gamma: float = 0.99, cap: int = DEFAULT_CAP) -> Optional[int]:
    """Smallest k <= k_max admitting a stack policy that is optimal at every
    reachable history; ``None`` means "> k_max"."""
    model = _model(env, gamma, cap)
    for k in range(1, k_max + 1):
        pol = _search_optimal(model, k, cap)
        if pol is not None:
            proc = StackProcess(model.mdp, pol, k, cap)
            V = proc.values(gamma)
            gap = max(abs(model.V[b] - V[n]) for n, (b, _) in enumerate(proc.nodes))
            if gap > TOL:
                raise AssertionError(f"search returned a suboptimal policy (gap {gap})")
            return k
    return None


class ConsistencyWitness(NamedTuple):
    stack: tuple
    history_1: tuple
    history_2: tuple
    value_1: float
    value_2: float


def check_value_consistency(env: Env, policy: Policy, gamma: float = 1.0, k: int = None,
                            cap: int = DEFAULT_CAP, _mdp: HistoryMDP = None):
    """Do all histories that share a stack under ``policy`` share its value?

    Returns ``(True, None)`` or ``(False, ConsistencyWitness)``.
    """
    if k is None:
        if callable(policy):
            raise ContractViolation("pass k for callable policies")
        k = len(next(iter(policy)))
    mdp = _mdp or HistoryMDP(env, cap)
    proc = StackProcess(mdp, policy, k, cap)
    V = proc.values(gamma)
    first = {}
    for n, (_, s) in enumerate(proc.nodes):
        if s not in first:
            first[s] = n
        elif abs(V[n] - V[first[s]]) > TOL:
            m = first[s]
            return False, ConsistencyWitness(s, proc.history(m), proc.history(n), float(V[m]), float(V[n]))
    return True, None


class PartialOrderResult(NamedTuple):
    status: str          # "pass", "fail" or "assumption_violated"
    pairs_checked: int   # pairs whose premise held and were compared
    pairs_total: int
    violation: Optional[tuple] = None


def _paired_histories(mdp, p1, p2, k):
    """History states reachable while both policies pick the same env actions,
    with the stacks each policy holds there."""
    seen = set()
    out = []
    queue = deque((b0, init_stack(mdp.obs[b0], k), init_stack(mdp.obs[b0], k)) for _, b0 in mdp.init)
    while queue:
        node = queue.popleft()
        if node in seen:
            continue
        seen.add(node)
        out.append(node)
        b, s1, s2 = node
        a1, i1 = p1[s1]
        a2, i2 = p2[s2]
        if a1 != a2:
            continue
        for p, r, term, b2, x2 in mdp.out[b][a1]:
            if not term:
                queue.append((b2, update_stack(s1, i1, x2), update_stack(s2, i2, x2)))
    return out


def check_partial_order(env: Env, k: int, gamma: float = 1.0, num_policy_pairs: int = 200,
                        rng=0, exhaustive_cap: int = 10**4, cap: int = DEFAULT_CAP) -> PartialOrderResult:
    """Brute-force check that stack-value ordering implies history-value ordering.

    Policies are all deterministic stack policies when there are at most
    ``exhaustive_cap`` of them (then every ordered pair is examined), otherwise
    ``num_policy_pairs`` seeded random pairs.  Only value-consistent policies
    take part.  The task itself must admit a value-consistent optimal k-slot
    policy; otherwise, or if no policy qualifies, the result is
    ``assumption_violated``.
    """
    mdp = HistoryMDP(env, cap)
    best = best_stack_policy(env, k, 0.99 if gamma >= 1 else gamma, cap)
    if not check_value_consistency(env, best.policy, gamma, k, cap, _mdp=mdp)[0]:
        return PartialOrderResult("assumption_violated", 0, 0)
    n_pol = count_policies(env, k, mdp)
    if n_pol <= exhaustive_cap:
        policies = list(enumerate_policies(env, k, cap=exhaustive_cap, mdp=mdp))
    else:
        stream = as_stream(rng)
        policies = [sample_policy(env, k, stream, mdp) for _ in range(2 * num_policy_pairs)]

    def analyse(pol):
        ok, _ = check_value_consistency(env, pol, gamma, k, cap, _mdp=mdp)
        if not ok:
            return None
        proc = StackProcess(mdp, pol, k, cap)
        V = proc.values(gamma)
        return proc.stack_values(gamma), {node: V[n] for n, node in enumerate(proc.nodes)}

    info = [analyse(p) for p in policies]
    if n_pol <= exhaustive_cap:
        usable = [i for i, v in enumerate(info) if v is not None]
        pairs = [(i, j) for i in usable for j in usable]
        total = len(policies) ** 2
    else:
        pairs = [(2 * t, 2 * t + 1) for t in range(num_policy_pairs)
                 if info[2 * t] is not None and info[2 * t + 1] is not None]
        total = num_policy_pairs

    checked = 0
    eligible = bool(pairs)
    for i, j in pairs:
        sv1, h1 = info[i]
        sv2, h2 = info[j]
        common = sv1.keys() & sv2.keys()
        if not all(sv1[s] <= sv2[s] + TOL for s in common):
            continue
        checked += 1
        for b, s1, s2 in _paired_histories(mdp, policies[i], policies[j], k):
            v1, v2 = h1[(b, s1)], h2[(b, s2)]
            if v1 > v2 + TOL:
                return PartialOrderResult("fail", checked, total,
                                          (policies[i], policies[j], b, v1, v2))
    if not eligible:
        return PartialOrderResult("assumption_violated", 0, total)
    return PartialOrderResult("pass", checked, total)
