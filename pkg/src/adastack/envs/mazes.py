"""T-Maze and XorMaze memory tasks.

Symbols are shared by all maze variants: ``GREEN`` cues goal_1 (the upper
goal), ``RED`` cues goal_2 (the lower goal).
"""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import ContractViolation
from .base import CONTINUAL, EPISODIC, EnvSpec, ModelEnv

GREEN, RED, JUNCTION, CORRIDOR = 0, 1, 2, 3
SYMBOLS = ("green", "red", "junction", "corridor")
CUES = (GREEN, RED)

UP, RIGHT, DOWN, LEFT = 0, 1, 2, 3
ACTIONS = ("up", "right", "down", "left")


@dataclass(frozen=True)
class TMazeConfig:
    L: int = 0
    variant: str = "passive"
    mode: str = EPISODIC
    random_corridor: bool = False
    horizon: int | None = None

    def __post_init__(self):
        if self.L < 0:
            raise ContractViolation("corridor length L must be >= 0")
        if self.variant not in ("passive", "active"):
            raise ContractViolation(f"unknown T-Maze variant {self.variant!r}")
        if self.random_corridor and self.mode != EPISODIC:
            raise ContractViolation("random_corridor is an episodic option")


class TMaze(ModelEnv):
    """Passive or active T-Maze.

    Latent state is ``(pos, cue, length)`` with the tail at ``pos=0``, the
    corridor at ``1..length`` and the junction at ``length+1``.
    """

    symbol_names = SYMBOLS

    def __init__(self, cfg: TMazeConfig):
        super().__init__()
        self.cfg = cfg
        if cfg.horizon is not None:
            horizon = cfg.horizon
        elif cfg.mode == CONTINUAL:
            horizon = 10**6
        elif cfg.variant == "passive":
            horizon = cfg.L + 2
        else:
            horizon = 100
        self.spec = EnvSpec(
            name=f"{cfg.variant}_tmaze", num_env_actions=4, mode=cfg.mode,
            horizon=horizon, alphabet_size=4)
        self.passive = cfg.variant == "passive"
        self.kappa = 2
        if self.passive:
            self.k_star = cfg.L + 2
        else:
            # unbounded in general; L+2 is the practical frame-stack oracle
            self.k_star = float("inf") if cfg.mode == CONTINUAL else cfg.L + 2
        self._start = 0 if self.passive else 1
        lengths = range(cfg.L + 1) if cfg.random_corridor else (cfg.L,)
        n = len(lengths) * 2
        self._init = [(1.0 / n, (self._start, cue, ln)) for ln in lengths for cue in CUES]
        self._respawn = [(0.5, (self._start, cue, cfg.L)) for cue in CUES]

    def initial_distribution(self):
        return list(self._init)

    def observe(self, z):
        pos, cue, ln = z
        if pos == 0:
            return cue
        if pos == ln + 1:
            return JUNCTION
        return CORRIDOR

    def cue_of(self, z):
        return (z[1],)

    def _goal(self, z, goal_one: bool):
        correct = goal_one == (z[1] == GREEN)
        r = 1.0 if correct else 0.0
        if self.cfg.mode == EPISODIC:
            return [(1.0, z, r, True, correct)]
        return [(p, z2, r, False, correct) for p, z2 in self._respawn]

    def transitions(self, z, action):
        pos, cue, ln = z
        junction = ln + 1
        if self.passive:
            if pos < junction:
                return [(1.0, (pos + 1, cue, ln), 0.0, False, None)]
            return self._goal(z, action in (UP, RIGHT))
        if pos == junction and action in (UP, DOWN):
            return self._goal(z, action == UP)
        if action == LEFT and pos > 0:
            pos -= 1
        elif action == RIGHT and pos < junction:
            pos += 1
        return [(1.0, (pos, cue, ln), 0.0, False, None)]

    def period_optimal_value(self, gamma):
        ln = self.z[2] if self.z is not None else self.cfg.L
        return gamma ** (ln + 1) if self.passive else gamma ** (ln + 2)

    def canonical_history(self) -> tuple:
        """'Cue seen, then one corridor step' (just the cue when L=0)."""
        if not self.passive:
            return (JUNCTION if self.cfg.L == 0 else CORRIDOR,)
        return (GREEN,) if self.cfg.L == 0 else (GREEN, CORRIDOR)


def make_passive_tmaze(cfg: TMazeConfig | None = None, **kw) -> TMaze:
    cfg = cfg or TMazeConfig(**kw)
    if cfg.variant != "passive":
        cfg = TMazeConfig(cfg.L, "passive", cfg.mode, cfg.random_corridor, cfg.horizon)
    return TMaze(cfg)


def make_active_tmaze(cfg: TMazeConfig | None = None, **kw) -> TMaze:
    cfg = cfg or TMazeConfig(variant="active", **kw)
    if cfg.variant != "active":
        cfg = TMazeConfig(cfg.L, "active", cfg.mode, cfg.random_corridor, cfg.horizon)
    return TMaze(cfg)


HIGH, LOW = 4, 5


class MagnitudeTMaze(TMaze):
    """Passive T-Maze whose payout size is signalled by a second, random cue.

    The first corridor cell shows ``HIGH`` or ``LOW``; a correct goal pays 1.0
    or 0.5 accordingly.  No stack of size 2 can hold both cues at the junction,
    so every stack policy merges histories with different values.  Used as a
    value-inconsistent fixture.
    """

    symbol_names = SYMBOLS + ("high", "low")

    def __init__(self, L: int = 1):
        if L < 1:
            raise ContractViolation("magnitude cue needs L >= 1")
        super().__init__(TMazeConfig(L=L))
        self.spec = EnvSpec("magnitude_tmaze", 4, EPISODIC, L + 2, alphabet_size=6)
        self._init = [(0.25, (0, cue, L, mag)) for cue in CUES for mag in (HIGH, LOW)]

    def observe(self, z):
        pos, cue, ln, mag = z
        if pos == 1:
            return mag
        return super().observe(z[:3])

    def transitions(self, z, action):
        pos, cue, ln, mag = z
        if pos < ln + 1:
            return [(1.0, (pos + 1, cue, ln, mag), 0.0, False, None)]
        correct = (action in (UP, RIGHT)) == (cue == GREEN)
        r = (1.0 if mag == HIGH else 0.5) if correct else 0.0
        return [(1.0, z, r, True, correct)]

    def period_optimal_value(self, gamma):
        return 0.75 * gamma ** (self.cfg.L + 1)


def make_magnitude_tmaze(L: int = 1) -> MagnitudeTMaze:
    return MagnitudeTMaze(L)


CENTER, LEFT_ARM, RIGHT_ARM = 0, 1, 2


@dataclass(frozen=True)
class XorMazeConfig:
    mode: str = EPISODIC
    horizon: int = 100


class XorMaze(ModelEnv):
    """Plus-shaped maze: two horizontal cue cells, two vertical goals.

    goal_1 (top) pays iff the cues differ, goal_2 (bottom) iff they match.
    Latent state is ``(cell, left_cue, right_cue)``.
    """

    symbol_names = SYMBOLS

    def __init__(self, cfg: XorMazeConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or XorMazeConfig()
        self.spec = EnvSpec("xormaze", 4, cfg.mode, cfg.horizon, alphabet_size=4)
        self.kappa = 3
        self.k_star = 5
        self._init = [(0.25, (CENTER, a, b)) for a in CUES for b in CUES]

    def initial_distribution(self):
        return list(self._init)

    def observe(self, z):
        cell, a, b = z
        return JUNCTION if cell == CENTER else (a if cell == LEFT_ARM else b)

    def cue_of(self, z):
        return (z[1], z[2])

    def transitions(self, z, action):
        cell, a, b = z
        if cell == CENTER:
            if action in (UP, DOWN):
                correct = (action == UP) == (a != b)
                r = 1.0 if correct else 0.0
                if self.cfg.mode == EPISODIC:
                    return [(1.0, z, r, True, correct)]
                return [(p, z2, r, False, correct) for p, z2 in self._init]
            cell = LEFT_ARM if action == LEFT else RIGHT_ARM
        elif (cell == LEFT_ARM and action == RIGHT) or (cell == RIGHT_ARM and action == LEFT):
            cell = CENTER
        return [(1.0, (cell, a, b), 0.0, False, None)]

    def period_optimal_value(self, gamma):
        return gamma ** 4

    def canonical_history(self) -> tuple:
        return (JUNCTION,)


def make_xormaze(cfg: XorMazeConfig | None = None, **kw) -> XorMaze:
    return XorMaze(cfg or XorMazeConfig(**kw))
