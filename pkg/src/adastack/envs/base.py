"""Environment contract shared by every task.

Environments follow a reset/step protocol.  Discrete tasks additionally expose
their exact latent model (``initial_distribution``, ``transitions``,
``observe``) so the oracle can enumerate them; stepping samples from that same
model, which keeps simulation and oracle in lockstep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, NamedTuple, Optional, Sequence

from ..errors import ContractViolation, Unsupported
from ..rng import RngStream, as_stream

EPISODIC = "episodic"
CONTINUAL = "continual"


class StepResult(NamedTuple):
    next_obs: object
    reward: float
    done: bool
    # True/False on a goal transition (correct/wrong goal), None otherwise.
    success: Optional[bool] = None


@dataclass(frozen=True)
class EnvSpec:
    name: str
    num_env_actions: int
    mode: str = EPISODIC
    horizon: int = 100
    alphabet_size: Optional[int] = None
    obs_dim: Optional[int] = None

    def __post_init__(self):
        if self.num_env_actions < 2:
            raise ContractViolation("num_env_actions must be >= 2")
        if self.horizon < 1:
            raise ContractViolation("horizon must be >= 1")
        if self.mode not in (EPISODIC, CONTINUAL):
            raise ContractViolation(f"unknown mode {self.mode!r}")
        if (self.alphabet_size is None) == (self.obs_dim is None):
            raise ContractViolation("exactly one of alphabet_size / obs_dim must be set")

    @property
    def discrete(self) -> bool:
        return self.alphabet_size is not None


class Env:
    """Base class.  Subclasses set ``spec`` and implement ``_reset``/``_step``."""

    spec: EnvSpec
    symbol_names: Sequence[str] = ()
    k_star: Optional[float] = None
    kappa: Optional[int] = None

    def __init__(self):
        self.rng: RngStream | None = None
        self.t = 0
        self._done = True
        # set when the last done came from the horizon rather than a terminal state
        self.truncated = False

    def reset(self, rng=None):
        self.rng = as_stream(rng)
        self.t = 0
        self._done = False
        self.truncated = False
        return self._reset()

    def step(self, action: int) -> StepResult:
        if self._done:
            if self.rng is None:
                raise ContractViolation("step() called before reset()")
            raise ContractViolation("step() called on a finished episode")
        if not 0 <= action < self.spec.num_env_actions:
            raise ContractViolation(
                f"action {action} outside [0, {self.spec.num_env_actions})")
        res = self._step(action)
        self.t += 1
        if self.spec.mode == EPISODIC:
            if not res.done and self.t >= self.spec.horizon:
                res = res._replace(done=True)
                self.truncated = True
            self._done = res.done
        elif res.done:
            res = res._replace(done=False)
        return res

    def _reset(self):
        raise NotImplementedError

    def _step(self, action: int) -> StepResult:
        raise NotImplementedError

    # Cue-based tasks override these.
    def goal_cue(self) -> tuple:
        raise Unsupported(f"{self.spec.name} has no goal cue")

    def period_optimal_value(self, gamma: float) -> Optional[float]:
        """Optimal discounted return from the start of the current goal period."""
        return None

    @property
    def cue_based(self) -> bool:
        try:
            self.goal_cue()
        except Unsupported:
            return False
        except Exception:
            return True
        return True


class ModelEnv(Env):
    """Discrete task whose dynamics are given by an explicit latent model.

    Subclasses implement:

    * ``initial_distribution() -> [(prob, latent)]``
    * ``transitions(latent, action) -> [(prob, latent', reward, terminal, success)]``
    * ``observe(latent) -> symbol``
    * ``cue_of(latent) -> tuple`` (cue-based tasks)

    ``terminal`` marks the end of an episode; continual tasks fold the respawn
    into the transition list instead and never set it.
    """

    def __init__(self):
        super().__init__()
        self.z: Hashable = None

    def initial_distribution(self) -> list:
        raise NotImplementedError

    def transitions(self, z, action: int) -> list:
        raise NotImplementedError

    def observe(self, z) -> int:
        raise NotImplementedError

    def cue_of(self, z) -> tuple:
        raise Unsupported(f"{self.spec.name} has no goal cue")

    def _sample(self, outcomes):
        if len(outcomes) == 1:
            return outcomes[0]
        return outcomes[self.rng.choice([o[0] for o in outcomes])]

    def _reset(self):
        self.z = self._sample(self.initial_distribution())[1]
        return self.observe(self.z)

    def _step(self, action):
        _, z2, r, terminal, success = self._sample(self.transitions(self.z, action))
        self.z = z2
        return StepResult(self.observe(z2), r, terminal, success)

    def goal_cue(self) -> tuple:
        if self.z is None:
            return self.cue_of(self.initial_distribution()[0][1])
        return self.cue_of(self.z)


def goal_cue_of(env: Env) -> tuple:
    """Cue symbol(s) governing the current goal period."""
    return env.goal_cue()


def check_observation(env: Env, obs) -> None:
    spec = env.spec
    if spec.discrete:
        if not (isinstance(obs, int) and 0 <= obs < spec.alphabet_size):
            raise ContractViolation(f"symbol {obs!r} outside alphabet of size {spec.alphabet_size}")
    else:
        if len(obs) != spec.obs_dim or not all(math.isfinite(v) for v in obs):
            raise ContractViolation("vector observation has wrong length or non-finite entries")
