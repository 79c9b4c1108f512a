"""2x2x2 pocket cube seen through a one-face camera.

Sticker permutations are generated from cube geometry: a sticker is a pair
(cubie position in {-1,+1}^3, outward normal).  A face turn rotates every
sticker in that layer by 90 degrees about the face normal.  The camera is a
separate orientation; rotating it changes which face is observed but never
touches the stickers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation
from .base import EPISODIC, Env, EnvSpec, StepResult

FACES = ("U", "D", "R", "L", "F", "B")
NORMALS = ((0, 1, 0), (0, -1, 0), (1, 0, 0), (-1, 0, 0), (0, 0, 1), (0, 0, -1))
N_COLORS = 6


def _rot(axis: int, quarter: int) -> np.ndarray:
    """Integer rotation matrix by quarter*90 degrees about a coordinate axis."""
    c, s = [(1, 0), (0, 1), (-1, 0), (0, -1)][quarter % 4]
    m = np.eye(3, dtype=int)
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    m[i, i], m[i, j], m[j, i], m[j, j] = c, -s, s, c
    return m


def _face_frame(n):
    """(right, up) in-plane vectors for a face viewed from outside."""
    n = np.array(n)
    up = np.array((0, 0, -1)) if n[1] == 1 else np.array((0, 0, 1)) if n[1] == -1 else np.array((0, 1, 0))
    right = np.cross(up, n)
    return right, up


def _build_stickers():
    stickers = []
    for n in NORMALS:
        right, up = _face_frame(n)
        for b in (1, -1):
            for a in (-1, 1):
                p = np.array(n) + a * right + b * up
                stickers.append((tuple(int(v) for v in p), n))
    return stickers


STICKERS = _build_stickers()
_INDEX = {s: i for i, s in enumerate(STICKERS)}
SOLVED = tuple(i // 4 for i in range(24))


def _axis_of(n):
    axis = int(np.flatnonzero(n)[0])
    return axis, int(n[axis])


def _layer_perm(n, quarter: int) -> tuple:
    """Permutation ``perm`` with new_state[perm[i]] = state[i]."""
    axis, sign = _axis_of(n)
    rot = _rot(axis, -sign * quarter)  # clockwise seen from outside the face
    perm = list(range(24))
    for i, (p, nn) in enumerate(STICKERS):
        if p[axis] == sign:
            p2 = tuple(int(v) for v in rot @ np.array(p))
            n2 = tuple(int(v) for v in rot @ np.array(nn))
            perm[i] = _INDEX[(p2, n2)]
    return tuple(perm)


# 12 face turns: X then X' for each face.
TURN_NAMES = tuple(f + suffix for f in FACES for suffix in ("", "'"))
TURNS = tuple(_layer_perm(n, q) for n in NORMALS for q in (1, -1))

# camera: quarter turns about the camera's own x and y axes
CAMERA_NAMES = ("x", "x'", "y", "y'")
_CAMERA_ROTS = (_rot(0, 1), _rot(0, -1), _rot(1, 1), _rot(1, -1))


def apply_turn(state: tuple, perm: tuple) -> tuple:
    out = [0] * 24
    for i, j in enumerate(perm):
        out[j] = state[i]
    return tuple(out)


def _orientations():
    start = np.eye(3, dtype=int)
    key = lambda m: tuple(m.flatten().tolist())
    seen = {key(start): start}
    order = [key(start)]
    frontier = [start]
    while frontier:
        nxt = []
        for m in frontier:
            for r in _CAMERA_ROTS:
                m2 = m @ r
                if key(m2) not in seen:
                    seen[key(m2)] = m2
                    order.append(key(m2))
                    nxt.append(m2)
        frontier = nxt
    index = {k: i for i, k in enumerate(order)}
    step = [[index[key(seen[k] @ r)] for r in _CAMERA_ROTS] for k in order]
    view = []
    for k in order:
        m = seen[k]
        n = tuple(int(v) for v in m @ np.array((0, 0, 1)))
        right = m @ np.array((1, 0, 0))
        up = m @ np.array((0, 1, 0))
        idx = []
        for b in (1, -1):
            for a in (-1, 1):
                p = tuple(int(v) for v in np.array(n) + a * right + b * up)
                idx.append(_INDEX[(p, n)])
        view.append(tuple(idx))
    return step, view


CAMERA_STEP, CAMERA_VIEW = _orientations()


def is_solved(state: tuple) -> bool:
    return all(len(set(state[4 * f:4 * f + 4])) == 1 for f in range(6))


def encode_face(colors) -> int:
    c0, c1, c2, c3 = colors
    return c0 + 6 * c1 + 36 * c2 + 216 * c3


def decode_face(symbol: int) -> tuple:
    return tuple((symbol // 6 ** j) % 6 for j in range(4))


@dataclass(frozen=True)
class CubeConfig:
    scramble_depth: int = 10
    horizon: int = 100

    def __post_init__(self):
        if self.scramble_depth < 0:
            raise ContractViolation("scramble_depth must be >= 0")


class PocketCube(Env):
    """Actions 0-11 are face turns, 12-15 rotate the camera.

    Reward 1 and termination when every face is a single colour.
    """

    symbol_names = ()

    def __init__(self, cfg: CubeConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or CubeConfig()
        self.spec = EnvSpec("pocket_cube", 16, EPISODIC, cfg.horizon, alphabet_size=6 ** 4)
        self.k_star = cfg.horizon
        self.state = SOLVED
        self.orient = 0

    def observation(self) -> int:
        return encode_face([self.state[i] for i in CAMERA_VIEW[self.orient]])

    def _reset(self):
        self.state = SOLVED
        self.orient = 0
        for _ in range(self.cfg.scramble_depth):
            self.state = apply_turn(self.state, TURNS[self.rng.integers(12)])
        return self.observation()

    def _step(self, action):
        if action < 12:
            self.state = apply_turn(self.state, TURNS[action])
        else:
            self.orient = CAMERA_STEP[self.orient][action - 12]
        if is_solved(self.state):
            return StepResult(self.observation(), 1.0, True, True)
        return StepResult(self.observation(), 0.0, False, None)


def make_pocket_cube(cfg: CubeConfig | None = None, **kw) -> PocketCube:
    return PocketCube(cfg or CubeConfig(**kw))
