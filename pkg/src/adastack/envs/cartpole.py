"""Cart-pole with positions hidden: only the two velocities are observed."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .base import EPISODIC, Env, EnvSpec, StepResult


@dataclass(frozen=True)
class CartPoleConfig:
    horizon: int = 600
    gravity: float = 9.8
    masscart: float = 1.0
    masspole: float = 0.1
    length: float = 0.5  # half the pole length
    force_mag: float = 10.0
    tau: float = 0.02
    theta_threshold: float = 12 * 2 * math.pi / 360
    x_threshold: float = 2.4
    init_noise: float = 0.05


class VelocityCartPole(Env):
    """Classic Euler-integrated cart-pole dynamics.

    Observation is ``(cart velocity, pole angular velocity)``.  Action 0 pushes
    left, 1 pushes right.  Reward is 1 for every step the pole survives.
    """

    def __init__(self, cfg: CartPoleConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or CartPoleConfig()
        self.spec = EnvSpec("velocity_cartpole", 2, EPISODIC, cfg.horizon, obs_dim=2)
        self.k_star = 2
        self.kappa = 2
        self.state = (0.0, 0.0, 0.0, 0.0)

    def _obs(self):
        return (self.state[1], self.state[3])

    def _reset(self):
        e = self.cfg.init_noise
        self.state = tuple((2 * self.rng.uniform() - 1) * e for _ in range(4))
        return self._obs()

    def set_state(self, x, x_dot, theta, theta_dot):
        self.state = (float(x), float(x_dot), float(theta), float(theta_dot))

    def _step(self, action):
        c = self.cfg
        x, x_dot, theta, theta_dot = self.state
        force = c.force_mag if action == 1 else -c.force_mag
        total_mass = c.masspole + c.masscart
        polemass_length = c.masspole * c.length
        cos, sin = math.cos(theta), math.sin(theta)
        temp = (force + polemass_length * theta_dot ** 2 * sin) / total_mass
        theta_acc = (c.gravity * sin - cos * temp) / (
            c.length * (4.0 / 3.0 - c.masspole * cos ** 2 / total_mass))
        x_acc = temp - polemass_length * theta_acc * cos / total_mass
        x += c.tau * x_dot
        x_dot += c.tau * x_acc
        theta += c.tau * theta_dot
        theta_dot += c.tau * theta_acc
        self.state = (x, x_dot, theta, theta_dot)
        fallen = abs(x) > c.x_threshold or abs(theta) > c.theta_threshold
        return StepResult(self._obs(), 1.0, fallen, None)


def make_velocity_cartpole(cfg: CartPoleConfig | None = None, **kw) -> VelocityCartPole:
    return VelocityCartPole(cfg or CartPoleConfig(**kw))
