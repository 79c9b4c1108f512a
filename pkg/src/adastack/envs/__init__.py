from .base import (CONTINUAL, EPISODIC, Env, EnvSpec, ModelEnv, StepResult,
                   check_observation, goal_cue_of)
from .cartpole import CartPoleConfig, VelocityCartPole, make_velocity_cartpole
from .cube import CubeConfig, PocketCube, make_pocket_cube
from .mazes import (CORRIDOR, GREEN, JUNCTION, RED, MagnitudeTMaze, TMaze, TMazeConfig,
                    XorMaze, XorMazeConfig, make_active_tmaze, make_magnitude_tmaze,
                    make_passive_tmaze, make_xormaze)

__all__ = [
    "CONTINUAL", "EPISODIC", "Env", "EnvSpec", "ModelEnv", "StepResult",
    "check_observation", "goal_cue_of", "CartPoleConfig", "VelocityCartPole",
    "make_velocity_cartpole", "CubeConfig", "PocketCube", "make_pocket_cube",
    "CORRIDOR", "GREEN", "JUNCTION", "RED", "MagnitudeTMaze", "TMaze", "TMazeConfig",
    "XorMaze", "XorMazeConfig", "make_active_tmaze", "make_magnitude_tmaze",
    "make_passive_tmaze", "make_xormaze", "make_env",
]


def make_env(name: str, **params) -> Env:
    """Build an environment from its registry name and keyword parameters."""
    name = name.replace("-", "_")
    if name in ("passive_tmaze", "active_tmaze"):
        variant = name.split("_")[0]
        return TMaze(TMazeConfig(variant=variant, **params))
    if name == "xormaze":
        return make_xormaze(**params)
    if name == "magnitude_tmaze":
        return make_magnitude_tmaze(**params)
    if name == "pocket_cube":
        return make_pocket_cube(**params)
    if name == "velocity_cartpole":
        return make_velocity_cartpole(**params)
    raise ValueError(f"unknown environment {name!r}")
