"""Dual-head MLP policy with hand-written backprop, REINFORCE and PPO-clip.

The network reads the stack as k concatenated one-hot vectors (raw vectors
for continuous observations), passes it through a ReLU trunk and emits
env-action logits, memory-action logits and a scalar value.  Heads are sampled
independently and the joint log-probability is the sum of the two head
log-probabilities.  Under frame stacking the memory head is ignored.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..envs.base import CONTINUAL, EPISODIC, Env
from ..errors import ContractViolation, NonFiniteLoss, Unsupported
from ..memory import ADAPTIVE_STACK, FRAME_STACK, canonical_mode, init_stack, update_stack
from ..metrics import WindowStats, retained, step_regret
from ..rng import RngStream, as_stream

MAGIC = b"ADSTK001"


# ---------------------------------------------------------------- network

@dataclass
class MlpParams:
    """Trunk layers ``(W, b)`` plus env, memory and value heads."""

    trunk: list
    env_head: tuple
    mem_head: tuple
    value_head: tuple
    input_kind: str = "discrete"   # or "vector"
    obs_size: int = 4              # alphabet size or vector length
    k: int = 2

    def tensors(self) -> list:
        out = []
        for W, b in self.trunk:
            out += [W, b]
        for W, b in (self.env_head, self.mem_head, self.value_head):
            out += [W, b]
        return out

    @classmethod
    def from_tensors(cls, tensors, n_layers, **meta) -> "MlpParams":
        t = list(tensors)
        trunk = [(t[2 * i], t[2 * i + 1]) for i in range(n_layers)]
        rest = t[2 * n_layers:]
        return cls(trunk, (rest[0], rest[1]), (rest[2], rest[3]), (rest[4], rest[5]), **meta)

    def copy(self) -> "MlpParams":
        return MlpParams.from_tensors([x.copy() for x in self.tensors()], len(self.trunk),
                                      input_kind=self.input_kind, obs_size=self.obs_size, k=self.k)

    @property
    def input_dim(self) -> int:
        return self.k * self.obs_size

    @property
    def hidden(self) -> int:
        return self.trunk[0][0].shape[1] if self.trunk else self.input_dim

    @property
    def num_env_actions(self) -> int:
        return self.env_head[0].shape[1]


def init_params(obs_size: int, k: int, num_env_actions: int, hidden: int = 128,
                n_layers: int = 3, rng=0, input_kind: str = "discrete") -> MlpParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, policy heads scaled by 0.01."""
    gen = as_stream(rng).numpy()
    dims = [k * obs_size] + [hidden] * n_layers

    def layer(n_in, n_out, scale=1.0):
        lim = 1.0 / np.sqrt(n_in)
        return gen.uniform(-lim, lim, size=(n_in, n_out)) * scale, np.zeros(n_out)

    trunk = [layer(dims[i], dims[i + 1]) for i in range(n_layers)]
    top = dims[-1]
    return MlpParams(trunk, layer(top, num_env_actions, 0.01), layer(top, k, 0.01),
                     layer(top, 1), input_kind, obs_size, k)


def zero_params(obs_size: int, k: int, num_env_actions: int, hidden: int = 128,
                n_layers: int = 3, input_kind: str = "discrete") -> MlpParams:
    p = init_params(obs_size, k, num_env_actions, hidden, n_layers, 0, input_kind)
    for x in p.tensors():
        x[...] = 0.0
    return p


def encode(stacks, params: MlpParams) -> np.ndarray:
    """Network input for a batch of stacks, shape (n, k * obs_size)."""
    n = len(stacks)
    if params.input_kind == "discrete":
        X = np.zeros((n, params.input_dim))
        for r, s in enumerate(stacks):
            if len(s) != params.k:
                raise ContractViolation(f"stack of length {len(s)} for a k={params.k} network")
            for j, x in enumerate(s):
                if not 0 <= x < params.obs_size:
                    raise ContractViolation(f"symbol {x} outside alphabet {params.obs_size}")
                X[r, j * params.obs_size + x] = 1.0
        return X
    X = np.asarray([np.concatenate([np.asarray(x, float) for x in s]) for s in stacks], float)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ContractViolation("vector stack does not match the network input size")
    return X


def forward(params: MlpParams, X: np.ndarray):
    """(env_logits, mem_logits, value, cache) for an encoded batch."""
    X = np.atleast_2d(X)
    if X.shape[1] != params.input_dim:
        raise ContractViolation(f"input width {X.shape[1]} != {params.input_dim}")
    acts = [X]
    pre = []
    h = X
    for W, b in params.trunk:
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    env_logits = h @ params.env_head[0] + params.env_head[1]
    mem_logits = h @ params.mem_head[0] + params.mem_head[1]
    value = (h @ params.value_head[0] + params.value_head[1])[:, 0]
    return env_logits, mem_logits, value, (acts, pre)


def backward(params: MlpParams, cache, d_env, d_mem, d_value) -> list:
    """Gradients for every tensor (same order as ``params.tensors()``)."""
    acts, pre = cache
    h = acts[-1]
    heads = []
    dh = np.zeros_like(h)
    for (W, _), d in ((params.env_head, d_env), (params.mem_head, d_mem),
                      (params.value_head, d_value[:, None])):
        heads += [h.T @ d, d.sum(axis=0)]
        dh += d @ W.T
    trunk = []
    for li in range(len(params.trunk) - 1, -1, -1):
        W, _ = params.trunk[li]
        dz = dh * (pre[li] > 0)
        trunk = [acts[li].T @ dz, dz.sum(axis=0)] + trunk
        dh = dz @ W.T
    return trunk + heads


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(z))


def entropy(logits: np.ndarray) -> np.ndarray:
    lp = log_softmax(logits)
    return -(np.exp(lp) * lp).sum(axis=-1)


def _dlogp(logits, idx):
    """d log softmax(logits)[idx] / d logits, row-wise."""
    g = -softmax(logits)
    g[np.arange(len(idx)), idx] += 1.0
    return g


def _dentropy(logits):
    lp = log_softmax(logits)
    p = np.exp(lp)
    H = -(p * lp).sum(axis=-1, keepdims=True)
    return -p * (lp + H)


def sample_action(env_logits, mem_logits, rng: RngStream) -> tuple:
    """Independent draws from the two heads; memory index is 1-based."""
    a = rng.choice(softmax(np.asarray(env_logits, float)).ravel())
    if mem_logits is None:
        return a, 1
    i = rng.choice(softmax(np.asarray(mem_logits, float)).ravel())
    return a, i + 1


# ---------------------------------------------------------------- optimiser

class Adam:
    def __init__(self, params: MlpParams, lr=3e-4, betas=(0.9, 0.999), eps=1e-8, max_grad_norm=0.5):
        self.lr, self.betas, self.eps, self.max_grad_norm = lr, betas, eps, max_grad_norm
        self.m = [np.zeros_like(x) for x in params.tensors()]
        self.v = [np.zeros_like(x) for x in params.tensors()]
        self.t = 0

    def step(self, params: MlpParams, grads: list, ascent: bool = False) -> None:
        """Descend ``grads`` (ascend when ``ascent``), after global-norm clipping."""
        norm = np.sqrt(sum(float((g * g).sum()) for g in grads))
        if not np.isfinite(norm):
            raise NonFiniteLoss("non-finite gradient norm")
        scale = 1.0
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            scale = self.max_grad_norm / (norm + 1e-12)
        self.t += 1
        b1, b2 = self.betas
        sign = 1.0 if ascent else -1.0
        for x, g, m, v in zip(params.tensors(), grads, self.m, self.v):
            g = g * scale
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            x += sign * self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------- estimators

def gae(rewards, values, dones, last_value: float, gamma: float, lam: float) -> np.ndarray:
    """Generalised advantage estimates; ``dones[t]`` cuts the bootstrap after step t."""
    rewards = np.asarray(rewards, float)
    values = np.asarray(values, float)
    dones = np.asarray(dones, bool)
    n = len(rewards)
    if len(values) != n or len(dones) != n:
        raise ContractViolation("rewards, values and dones must be aligned")
    adv = np.zeros(n)
    run = 0.0
    for t in range(n - 1, -1, -1):
        nxt = last_value if t == n - 1 else values[t + 1]
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * nxt * live - values[t]
        run = delta + gamma * lam * live * run
        adv[t] = run
    return adv


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    g = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        g = rewards[t] + gamma * g
        out[t] = g
    return out


@dataclass
class Rollout:
    stacks: list = field(default_factory=list)
    env_actions: list = field(default_factory=list)
    mem_actions: list = field(default_factory=list)   # 1-based pop indices
    logp_env: list = field(default_factory=list)
    logp_mem: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    last_value: float = 0.0

    def __len__(self):
        return len(self.rewards)


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    n_steps: int = 128
    minibatch: int = 128
    epochs: int = 10
    lr: float = 3e-4
    clip: float = 0.2
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    total_steps: int = 10**6

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise ContractViolation("clip must lie in (0, 1)")
        for name in ("n_steps", "minibatch", "epochs", "total_steps"):
            if getattr(self, name) < 1:
                raise ContractViolation(f"{name} must be >= 1")
        if self.lr <= 0 or not 0 < self.gamma <= 1 or not 0 <= self.gae_lambda <= 1:
            raise ContractViolation("invalid lr, gamma or gae_lambda")


@dataclass
class ReinforceConfig:
    lr: float = 1e-3
    entropy_coef: float = 0.0
    entropy_decay: float = 1.0      # multiplied into entropy_coef after every update
    episodes_per_update: int = 16
    gamma: float = 0.99
    max_grad_norm: Optional[float] = None


def _use_mem(params: MlpParams, mode: str) -> bool:
    return mode == ADAPTIVE_STACK


def policy_loss_grads(params: MlpParams, X, env_a, mem_i, weights, entropy_coef: float,
                      use_mem: bool, value_targets=None, value_coef: float = 0.0):
    """Gradient of  -mean(w * logp) - c_H * mean(H) + c_V * mean((V - G)^2)."""
    n = len(X)
    el, ml, v, cache = forward(params, X)
    w = np.asarray(weights, float)[:, None] / n
    d_env = -w * _dlogp(el, env_a) - entropy_coef / n * _dentropy(el)
    if use_mem:
        d_mem = -w * _dlogp(ml, mem_i - 1) - entropy_coef / n * _dentropy(ml)
    else:
        d_mem = np.zeros_like(ml)
    d_v = np.zeros(n) if value_targets is None else 2 * value_coef * (v - value_targets) / n
    return backward(params, cache, d_env, d_mem, d_v)


def reinforce_update(params: MlpParams, episodes: list, cfg: ReinforceConfig,
                     mode: str = ADAPTIVE_STACK, optimizer: Optional[Adam] = None) -> MlpParams:
    """One Monte Carlo policy-gradient step over a batch of episodes.

    Each episode is a ``Rollout`` holding one complete episode.  The baseline
    is the mean discounted return over all steps in the batch.
    """
    mode = canonical_mode(mode)
    stacks, ea, mi, G = [], [], [], []
    for ep in episodes:
        stacks += ep.stacks
        ea += ep.env_actions
        mi += ep.mem_actions
        G.append(discounted_returns(ep.rewards, cfg.gamma))
    if not stacks:
        return params
    G = np.concatenate(G)
    baseline = G.mean()
    X = encode(stacks, params)
    grads = policy_loss_grads(params, X, np.asarray(ea), np.asarray(mi), G - baseline,
                              cfg.entropy_coef, _use_mem(params, mode))
    if not all(np.isfinite(g).all() for g in grads):
        raise NonFiniteLoss("REINFORCE gradient is not finite")
    if optimizer is None:
        for x, g in zip(params.tensors(), grads):
            x -= cfg.lr * g
    else:
        optimizer.step(params, grads)
    return params


def ppo_loss_grads(params: MlpParams, X, env_a, mem_i, old_logp, adv, returns, cfg: PpoConfig,
                   use_mem: bool):
    """Loss  -mean(min(rho A, clip(rho) A)) + c_V mean((V-G)^2) - c_H H  and its gradient.

    ``rho`` is the joint ratio over both heads (env head only under frame stacking).
    """
    m = len(X)
    rows = np.arange(m)
    el, ml, v, cache = forward(params, X)
    lp = log_softmax(el)[rows, env_a]
    if use_mem:
        lp = lp + log_softmax(ml)[rows, mem_i - 1]
    ratio = np.exp(lp - old_logp)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - cfg.clip, 1 + cfg.clip) * adv
    surrogate = np.minimum(unclipped, clipped)
    vloss = np.mean((v - returns) ** 2)
    ent = entropy(el).mean() + (entropy(ml).mean() if use_mem else 0.0)
    loss = -surrogate.mean() + cfg.value_coef * vloss - cfg.entropy_coef * ent
    active = unclipped <= clipped
    info = {"loss": float(loss), "policy_loss": float(-surrogate.mean()), "value_loss": float(vloss),
            "clip_frac": float(np.mean(~active)), "ratio_min": float(np.min(ratio)),
            "ratio_max": float(np.max(ratio))}
    if not np.isfinite(loss):
        return info, None
    # d(-surrogate)/d logp is -rho A where the unclipped branch is the minimum, else 0
    w = np.where(active, ratio * adv, 0.0)
    grads = policy_loss_grads(params, X, env_a, mem_i, w, cfg.entropy_coef, use_mem,
                              returns, cfg.value_coef)
    return info, grads


def ppo_update(params: MlpParams, rollout: Rollout, cfg: PpoConfig, mode: str = ADAPTIVE_STACK,
               optimizer: Optional[Adam] = None, rng=0) -> dict:
    """Clipped-surrogate PPO epochs over one rollout; updates ``params`` in place."""
    mode = canonical_mode(mode)
    use_mem = _use_mem(params, mode)
    opt = optimizer or Adam(params, cfg.lr, max_grad_norm=cfg.max_grad_norm)
    if not np.all(np.isfinite(rollout.rewards)) or not np.all(np.isfinite(rollout.values)):
        raise NonFiniteLoss("rollout holds non-finite rewards or values")
    adv = gae(rollout.rewards, rollout.values, rollout.dones, rollout.last_value,
              cfg.gamma, cfg.gae_lambda)
    returns = adv + np.asarray(rollout.values)
    if len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    X_all = encode(rollout.stacks, params)
    ea = np.asarray(rollout.env_actions)
    mi = np.asarray(rollout.mem_actions)
    old = np.asarray(rollout.logp_env) + (np.asarray(rollout.logp_mem) if use_mem else 0.0)
    gen = as_stream(rng).numpy()
    n = len(adv)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "clip_frac": 0.0, "updates": 0}
    snapshot = [x.copy() for x in params.tensors()]
    for _ in range(cfg.epochs):
        order = gen.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            info, grads = ppo_loss_grads(params, X_all[idx], ea[idx], mi[idx], old[idx], adv[idx],
                                         returns[idx], cfg, use_mem)
            if not np.isfinite(info["loss"]):
                for x, s in zip(params.tensors(), snapshot):
                    x[...] = s
                raise NonFiniteLoss(f"PPO loss became {info['loss']} (ratio range "
                                    f"{info['ratio_min']}..{info['ratio_max']})")
            opt.step(params, grads)
            stats["policy_loss"] += info["policy_loss"]
            stats["value_loss"] += info["value_loss"]
            stats["clip_frac"] += info["clip_frac"]
            stats["updates"] += 1
    for key in ("policy_loss", "value_loss", "clip_frac"):
        stats[key] /= max(stats["updates"], 1)
    return stats


def grad_check(params: MlpParams, s, head: str, action: int = 0, target: float = 1.0,
               h: float = 1e-5, floor: float = 1e-7) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``head`` is "env" or "mem" (log-probability of ``action``) or "value"
    (squared error to ``target``).  Entries where both gradients are below
    ``floor`` in magnitude are compared on an absolute scale.
    """
    X = encode([tuple(s)], params)
    idx = np.array([action])

    def loss(p):
        el, ml, v, _ = forward(p, X)
        if head == "env":
            return float(log_softmax(el)[0, action])
        if head == "mem":
            return float(log_softmax(ml)[0, action])
        return float((v[0] - target) ** 2)

    el, ml, v, cache = forward(params, X)
    z_env, z_mem, z_v = np.zeros_like(el), np.zeros_like(ml), np.zeros(1)
    if head == "env":
        z_env = _dlogp(el, idx)
    elif head == "mem":
        z_mem = _dlogp(ml, idx)
    elif head == "value":
        z_v = 2 * (v - target)
    else:
        raise ContractViolation(f"unknown head {head!r}")
    analytic = backward(params, cache, z_env, z_mem, z_v)
    worst = 0.0
    for x, g in zip(params.tensors(), analytic):
        flat, gflat = x.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            up = loss(params)
            flat[j] = old - h
            down = loss(params)
            flat[j] = old
            num = (up - down) / (2 * h)
            err = abs(num - gflat[j]) / max(abs(num), abs(gflat[j]), floor)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------- checkpoints

def save_params(params: MlpParams, path, mode: str = ADAPTIVE_STACK) -> None:
    """Flat little-endian layout: magic, uint32 header, then tensors as
    (uint32 ndim, uint32 dims..., float64 row-major data)."""
    header = (
        0 if params.input_kind == "discrete" else 1, params.obs_size, params.k,
        params.num_env_actions, params.hidden, len(params.trunk),
        0 if canonical_mode(mode) == FRAME_STACK else 1,
    )
    tensors = params.tensors()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(struct.pack(f"<{len(header)}I", *header))
        fh.write(struct.pack("<I", len(tensors)))
        for t in tensors:
            fh.write(struct.pack("<I", t.ndim))
            fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_params(path) -> tuple:
    """Returns ``(params, mode)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ContractViolation(f"{path} is not a network checkpoint")
    pos = 8

    def u32(n=1):
        nonlocal pos
        vals = struct.unpack_from(f"<{n}I", data, pos)
        pos += 4 * n
        return vals

    (nh,) = u32()
    kind, obs_size, k, _, _, n_layers, mode_flag = u32(nh)[:7]
    (nt,) = u32()
    tensors = []
    for _ in range(nt):
        (nd,) = u32()
        shape = u32(nd)
        size = int(np.prod(shape)) if nd else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).astype(float)
        pos += 8 * size
        tensors.append(arr)
    params = MlpParams.from_tensors(tensors, n_layers, input_kind="discrete" if kind == 0 else "vector",
                                    obs_size=obs_size, k=k)
    return params, FRAME_STACK if mode_flag == 0 else ADAPTIVE_STACK


# ---------------------------------------------------------------- interaction

class _Runner:
    """Steps an env with a stack and the network policy, tracking metrics."""

    def __init__(self, env: Env, params: MlpParams, mode: str, gamma: float, rng: RngStream,
                 seed: int = 0, log_every: int = 100):
        self.env, self.params, self.mode, self.gamma = env, params, mode, gamma
        self.use_mem = _use_mem(params, mode)
        self.env_rng, self.act_rng = rng.spawn(0), rng.spawn(1)
        self.seed, self.log_every = seed, log_every
        self.cue_based = env.cue_based
        self.rows, self.win, self.total = [], WindowStats(), WindowStats()
        self.steps = 0
        self.after_steps = self.after_absent = 0
        self._reset()

    def _reset(self):
        x = self.env.reset(self.env_rng)
        self.s = init_stack(x, self.params.k)
        self._new_period(x)

    def _new_period(self, x):
        self.ret, self.disc = 0.0, 1.0
        self.opt = self.env.period_optimal_value(self.gamma)
        self.cue = self.env.goal_cue() if self.cue_based else None
        self.seen = {}
        if self.cue is not None and x in self.cue:
            self.seen[x] = 1

    def act(self, greedy: bool):
        el, ml, v, _ = forward(self.params, encode([self.s], self.params))
        if greedy:
            a, i = int(np.argmax(el[0])), int(np.argmax(ml[0])) + 1
        else:
            a, i = sample_action(el[0], ml[0] if self.use_mem else None, self.act_rng)
        if not self.use_mem:
            i = 1
        lpe = float(log_softmax(el)[0, a])
        lpm = float(log_softmax(ml)[0, i - 1])
        return a, i, lpe, lpm, float(v[0])

    def step(self, a: int, i: int):
        """Returns (reward, done, truncated)."""
        s = self.s
        res = self.env.step(a)
        x2 = res.next_obs
        s2 = update_stack(s, i, x2)
        goal = res.success is not None
        w = self.win
        if self.cue is not None:
            need = len(self.cue)
            absent = retained(s, self.cue) < need
            w.absent += absent
            have = {}
            for c in self.cue:
                have[c] = have.get(c, 0) + 1
            if all(self.seen.get(c, 0) >= n for c, n in have.items()):
                self.after_steps += 1
                self.after_absent += absent
            if not goal:
                _, act, pas = step_regret(s, s2, i, x2, self.cue)
                w.active += act
                w.passive += pas
        w.steps += 1
        self.ret += self.disc * res.reward
        self.disc *= self.gamma
        if goal or res.done:
            w.returns.append(self.ret)
            w.optimal.append(self.opt)
            if goal:
                w.goals += 1
                w.successes += bool(res.success)
        truncated = res.done and self.env.truncated
        self.last_next = s2
        if res.done:
            self._reset()
        else:
            self.s = s2
            if goal:
                self._new_period(x2)
            elif self.cue is not None and x2 in self.cue:
                self.seen[x2] = self.seen.get(x2, 0) + 1
        self.steps += 1
        if self.steps % self.log_every == 0:
            self.flush()
        return res.reward, res.done, truncated

    def flush(self):
        if self.win.steps:
            self.rows.append(self.win.row(self.steps, self.seed))
            t, w = self.total, self.win
            t.steps += w.steps
            t.absent += w.absent
            t.active += w.active
            t.passive += w.passive
            t.returns += w.returns
            t.optimal += w.optimal
            t.successes += w.successes
            t.goals += w.goals
            self.win = WindowStats()

    def summary(self) -> dict:
        self.flush()
        out = self.total.row(self.steps, self.seed)
        out["memory_regret_after_cue"] = self.after_absent / self.after_steps if self.after_steps else 0.0
        out["steps"] = self.steps
        return out


def collect_episodes(env: Env, params: MlpParams, n_episodes: int, mode: str = ADAPTIVE_STACK,
                     gamma: float = 0.99, rng=0) -> list:
    """Complete episodes sampled from the network policy (episodic tasks only)."""
    if env.spec.mode != EPISODIC:
        raise ContractViolation("Monte Carlo episodes need an episodic task")
    runner = _Runner(env, params, canonical_mode(mode), gamma, as_stream(rng))
    episodes = []
    ep = Rollout()
    while len(episodes) < n_episodes:
        a, i, lpe, lpm, v = runner.act(greedy=False)
        ep.stacks.append(runner.s)
        r, done, _ = runner.step(a, i)
        ep.env_actions.append(a)
        ep.mem_actions.append(i)
        ep.logp_env.append(lpe)
        ep.logp_mem.append(lpm)
        ep.rewards.append(r)
        ep.values.append(v)
        ep.dones.append(done)
        if done:
            episodes.append(ep)
            ep = Rollout()
    return episodes


def _env_meta(env: Env):
    spec = env.spec
    if spec.discrete:
        return "discrete", spec.alphabet_size
    return "vector", spec.obs_dim


class _NeuralAgent(BaseEstimator):
    """Shared prediction and evaluation for the network agents."""

    def _check_mode(self):
        mode = canonical_mode(self.memory_mode)
        if mode not in (FRAME_STACK, ADAPTIVE_STACK):
            raise Unsupported("network agents support frame_stack and adaptive_stack only")
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise ContractViolation("k must be a positive integer")
        return mode

    def _init(self, env: Env):
        kind, size = _env_meta(env)
        self.params_ = init_params(size, self.k, env.spec.num_env_actions, self.hidden,
                                   self.n_layers, as_stream(self.seed).spawn(7), kind)
        self.mode_ = self._check_mode()

    def predict_proba(self, stacks):
        """Joint probabilities, column ``a * k + (i - 1)``."""
        check_is_fitted(self, "params_")
        el, ml, _, _ = forward(self.params_, encode(list(stacks), self.params_))
        pe = softmax(el)
        if self.mode_ == FRAME_STACK:
            pm = np.zeros((len(pe), self.k))
            pm[:, 0] = 1.0
        else:
            pm = softmax(ml)
        return (pe[:, :, None] * pm[:, None, :]).reshape(len(pe), -1)

    def predict(self, stacks):
        """Mode joint action (argmax of each head)."""
        check_is_fitted(self, "params_")
        el, ml, _, _ = forward(self.params_, encode(list(stacks), self.params_))
        a = el.argmax(axis=1)
        i = ml.argmax(axis=1) if self.mode_ == ADAPTIVE_STACK else np.zeros(len(a), int)
        return a * self.k + i

    def evaluate(self, env: Env, episodes: int = 100, seed: int = 0, greedy: bool = True) -> dict:
        check_is_fitted(self, "params_")
        kind, size = _env_meta(env)
        if kind != self.params_.input_kind or size != self.params_.obs_size \
                or env.spec.num_env_actions != self.params_.num_env_actions:
            raise ContractViolation("evaluation env does not match the trained network")
        runner = _Runner(env, self.params_, self.mode_, self.gamma, as_stream(seed), seed, 10**9)
        done_eps = 0
        while done_eps < episodes:
            a, i, *_ = runner.act(greedy)
            _, done, _ = runner.step(a, i)
            if env.spec.mode == CONTINUAL:
                done = runner.win.goals + runner.total.goals > done_eps
            done_eps += bool(done)
        return runner.summary()

    def save(self, path):
        check_is_fitted(self, "params_")
        save_params(self.params_, path, self.mode_)

    @classmethod
    def load(cls, path, **kw):
        params, mode = load_params(path)
        agent = cls(k=params.k, memory_mode=mode, hidden=params.hidden,
                    n_layers=len(params.trunk), **kw)
        agent.params_ = params
        agent.mode_ = mode
        return agent


class PPOAgent(_NeuralAgent):
    def __init__(self, k=2, memory_mode="adaptive_stack", gamma=0.99, gae_lambda=0.95,
                 n_steps=128, minibatch=128, epochs=10, lr=3e-4, clip=0.2, entropy_coef=0.0,
                 value_coef=0.5, max_grad_norm=0.5, total_steps=200_000, hidden=128,
                 n_layers=3, seed=0, log_every=100):
        self.k = k
        self.memory_mode = memory_mode
        self.gamma = gamma
        self.gae_lambda = gae_lambda
        self.n_steps = n_steps
        self.minibatch = minibatch
        self.epochs = epochs
        self.lr = lr
        self.clip = clip
        self.entropy_coef = entropy_coef
        self.value_coef = value_coef
        self.max_grad_norm = max_grad_norm
        self.total_steps = total_steps
        self.hidden = hidden
        self.n_layers = n_layers
        self.seed = seed
        self.log_every = log_every

    def config(self) -> PpoConfig:
        return PpoConfig(self.gamma, self.gae_lambda, self.n_steps, self.minibatch, self.epochs,
                         self.lr, self.clip, self.entropy_coef, self.value_coef,
                         self.max_grad_norm, self.total_steps)

    def fit(self, env: Env, y=None):
        cfg = self.config()
        self._init(env)
        root = as_stream(self.seed)
        runner = _Runner(env, self.params_, self.mode_, self.gamma, root.spawn(0), self.seed, self.log_every)
        opt = Adam(self.params_, cfg.lr, max_grad_norm=cfg.max_grad_norm)
        n_update = 0
        while runner.steps < cfg.total_steps:
            ro = Rollout()
            for _ in range(min(cfg.n_steps, cfg.total_steps - runner.steps)):
                a, i, lpe, lpm, v = runner.act(greedy=False)
                ro.stacks.append(runner.s)
                r, done, trunc = runner.step(a, i)
                if trunc:
                    # a time-limit cut is not a terminal: fold the bootstrap into the reward
                    r += cfg.gamma * float(forward(self.params_, encode([runner.last_next], self.params_))[2][0])
                ro.env_actions.append(a)
                ro.mem_actions.append(i)
                ro.logp_env.append(lpe)
                ro.logp_mem.append(lpm)
                ro.rewards.append(r)
                ro.values.append(v)
                ro.dones.append(done)
            ro.last_value = float(forward(self.params_, encode([runner.s], self.params_))[2][0])
            ppo_update(self.params_, ro, cfg, self.mode_, opt, root.spawn(1000 + n_update))
            n_update += 1
        self.summary_ = runner.summary()
        self.metrics_ = runner.rows
        return self


class ReinforceAgent(_NeuralAgent):
    def __init__(self, k=2, memory_mode="adaptive_stack", gamma=0.99, lr=1e-3, entropy_coef=0.0,
                 entropy_decay=1.0, episodes_per_update=16, total_steps=200_000, hidden=128,
                 n_layers=3, seed=0, log_every=100, max_grad_norm=None):
        self.k = k
        self.memory_mode = memory_mode
        self.gamma = gamma
        self.lr = lr
        self.entropy_coef = entropy_coef
        self.entropy_decay = entropy_decay
        self.episodes_per_update = episodes_per_update
        self.total_steps = total_steps
        self.hidden = hidden
        self.n_layers = n_layers
        self.seed = seed
        self.log_every = log_every
        self.max_grad_norm = max_grad_norm

    def fit(self, env: Env, y=None):
        if env.spec.mode != EPISODIC:
            raise ContractViolation("REINFORCE needs an episodic task")
        self._init(env)
        cfg = ReinforceConfig(self.lr, self.entropy_coef, self.entropy_decay,
                              self.episodes_per_update, self.gamma, self.max_grad_norm)
        root = as_stream(self.seed)
        runner = _Runner(env, self.params_, self.mode_, self.gamma, root.spawn(0), self.seed, self.log_every)
        opt = Adam(self.params_, cfg.lr, max_grad_norm=cfg.max_grad_norm)
        while runner.steps < self.total_steps:
            batch = []
            ep = Rollout()
            while len(batch) < cfg.episodes_per_update and runner.steps < self.total_steps:
                a, i, lpe, lpm, v = runner.act(greedy=False)
                ep.stacks.append(runner.s)
                r, done, _ = runner.step(a, i)
                ep.env_actions.append(a)
                ep.mem_actions.append(i)
                ep.rewards.append(r)
                if done:
                    batch.append(ep)
                    ep = Rollout()
            reinforce_update(self.params_, batch, cfg, self.mode_, opt)
            cfg.entropy_coef *= cfg.entropy_decay
        self.summary_ = runner.summary()
        self.metrics_ = runner.rows
        return self
