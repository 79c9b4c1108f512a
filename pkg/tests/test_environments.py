import itertools

import pytest

from adastack.envs import make_env
from adastack.envs.cartpole import CartPoleConfig, VelocityCartPole
from adastack.envs.cube import CAMERA_STEP, SOLVED, TURNS, apply_turn, decode_face, encode_face, is_solved
from adastack.envs.mazes import (CENTER, CORRIDOR, DOWN, GREEN, JUNCTION, LEFT, LEFT_ARM, RED,
                                 RIGHT, RIGHT_ARM, UP, XorMaze)
from adastack.oracle import optimal_value


def _obs_sequence(env, seed):
    seq = [env.reset(seed)]
    done = False
    while not done:
        res = env.step(1)
        seq.append(res.next_obs)
        done = res.done
    return seq


def test_passive_L0_sequence(passive):
    env = passive(L=0)
    seq = _obs_sequence(env, 0)
    assert seq[1] == JUNCTION and len(seq) == 3
    assert env.k_star == 2 and env.kappa == 2


@pytest.mark.parametrize("L", [0, 1, 3, 6])
def test_passive_episode_length(passive, L):
    env = passive(L=L)
    seq = _obs_sequence(env, 3)
    assert len(seq) - 1 == L + 2
    assert seq[1:L + 1] == [CORRIDOR] * L


def test_passive_optimal_return(passive):
    # one corridor step after the cue, three steps remain to the goal transition
    assert optimal_value(passive(L=3), 0.99, history=(GREEN, CORRIDOR)) == pytest.approx(0.99 ** 3, abs=1e-12)
    assert optimal_value(passive(L=3), 0.99) == pytest.approx(0.99 ** 4, abs=1e-12)


def test_random_corridor_lengths(passive):
    env = passive(L=16, random_corridor=True)
    seen = set()
    for seed in range(300):
        seen.add(len(_obs_sequence(env, seed)) - 3)
    assert seen <= set(range(17)) and len(seen) > 10


def test_active_wall_and_cue_revisit():
    env = make_env("active_tmaze", L=2)
    cue = env.reset(0)
    assert cue == CORRIDOR
    assert env.step(LEFT).next_obs in (GREEN, RED)
    tail = env.step(LEFT)  # wall
    assert tail.next_obs in (GREEN, RED) and tail.reward == 0.0
    assert env.step(RIGHT).next_obs == CORRIDOR


def test_active_continual_wrong_goal_respawns():
    env = make_env("active_tmaze", L=0, mode="continual")
    env.reset(1)
    res = env.step(UP)   # at the junction already when L=0
    assert not res.done and res.reward in (0.0, 1.0)
    assert res.next_obs == JUNCTION   # respawned at the start cell
    assert env.k_star == float("inf")


@pytest.mark.parametrize("a,b,goal", [(RED, GREEN, UP), (GREEN, RED, UP), (RED, RED, DOWN), (GREEN, GREEN, DOWN)])
def test_xormaze_goal_table(a, b, goal):
    env = XorMaze()
    [(p, z, r, term, ok)] = env.transitions((CENTER, a, b), goal)
    assert r == 1.0 and ok and term
    [(p, z, r, term, ok)] = env.transitions((CENTER, a, b), UP if goal == DOWN else DOWN)
    assert r == 0.0 and not ok


def test_xormaze_arms_show_cues():
    env = XorMaze()
    assert env.observe((LEFT_ARM, GREEN, RED)) == GREEN
    assert env.observe((RIGHT_ARM, GREEN, RED)) == RED
    assert env.observe((CENTER, GREEN, RED)) == JUNCTION
    assert env.kappa == 3 and env.spec.horizon == 100
    env.reset(0)
    assert len(env.goal_cue()) == 2


def test_cube_unscrambled_is_solved_face():
    env = make_env("pocket_cube", scramble_depth=0)
    x = env.reset(9)
    assert len(set(decode_face(x))) == 1


def test_cube_turn_inverse_and_order_four():
    rng_state = SOLVED
    for t in TURNS:
        s = apply_turn(rng_state, t)
        assert s != rng_state
        for _ in range(3):
            s = apply_turn(s, t)
        assert s == rng_state
    for j in range(4):
        o = 0
        for _ in range(4):
            o = CAMERA_STEP[o][j]
        assert o == 0


def test_cube_one_move_scramble_is_one_move_from_solved():
    for seed in range(10):
        env = make_env("pocket_cube", scramble_depth=1)
        env.reset(seed)
        start = env.state
        solvers = [a for a in range(12) if is_solved(apply_turn(start, TURNS[a]))]
        assert solvers
        res = env.step(solvers[0])
        assert res.reward == 1.0 and res.done


def test_face_encoding_roundtrip():
    for colors in itertools.product(range(6), repeat=4):
        assert decode_face(encode_face(colors)) == colors


def test_cartpole_velocity_only_and_symmetry():
    a = VelocityCartPole(CartPoleConfig(init_noise=0.0))
    b = VelocityCartPole(CartPoleConfig(init_noise=0.0))
    a.reset(0)
    b.reset(0)
    for t in range(8):
        act = int(t % 3 == 0)
        ra = a.step(act)
        rb = b.step(1 - act)
        assert len(ra.next_obs) == 2
        assert ra.next_obs[0] == pytest.approx(-rb.next_obs[0])
        assert ra.next_obs[1] == pytest.approx(-rb.next_obs[1])
    assert a.k_star == 2 and a.kappa == 2


def test_cartpole_full_horizon_return():
    env = make_env("velocity_cartpole", horizon=600, theta_threshold=1e9, x_threshold=1e9)
    env.reset(0)
    total, done = 0.0, False
    while not done:
        res = env.step(0)
        total += res.reward
        done = res.done
    assert total == 600.0
