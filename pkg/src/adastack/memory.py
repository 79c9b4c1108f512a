"""Bounded observation stack and its update disciplines.

A stack is a tuple of exactly ``k`` observations, oldest first.  Memory
actions are 1-based pop indices: 1 evicts the oldest slot, ``k`` the newest.
Frame Stacking is the constant pop index 1.
"""
from __future__ import annotations

import operator
from typing import Sequence

from .errors import ContractViolation, Unsupported

FRAME_STACK = "frame_stack"
ADAPTIVE_STACK = "adaptive_stack"
DEMIR = "demir"
DEMIR_IM = "demir_im"
MEMORY_MODES = (FRAME_STACK, ADAPTIVE_STACK, DEMIR, DEMIR_IM)
_ALIASES = {"fs": FRAME_STACK, "as": ADAPTIVE_STACK, "demir-im": DEMIR_IM}

PUSH, SKIP_CHOICE = 0, 1
SKIP = None  # sentinel returned by demir_mem_action: leave the stack unchanged


def canonical_mode(mode: str) -> str:
    mode = _ALIASES.get(mode.lower(), mode.lower())
    if mode not in MEMORY_MODES:
        raise ContractViolation(f"unknown memory mode {mode!r}")
    return mode


def init_stack(x0, k: int) -> tuple:
    """``k`` copies of the first observation."""
    if k < 1:
        raise ContractViolation("stack capacity k must be >= 1")
    return (x0,) * k


def update_stack(s: Sequence, i: int, x_next) -> tuple:
    """Pop slot ``i`` (1-based) and push ``x_next`` as the newest slot."""
    if not 1 <= i <= len(s):
        raise ContractViolation(f"pop index {i} outside [1, {len(s)}]")
    return tuple(s[:i - 1]) + tuple(s[i:]) + (x_next,)


def fs_mem_action(s: Sequence) -> int:
    return 1


def demir_mem_action(s: Sequence, x_next, choice: int, fill_count: int):
    """Pop index for the push/skip baseline, or ``SKIP``.

    ``fill_count`` counts distinct pushes since initialisation (the replicated
    first observation counts once).  While the stack is not full, both choices
    push, overwriting the oldest replicated initial slot.
    """
    if choice not in (PUSH, SKIP_CHOICE):
        raise ContractViolation(f"demir choice must be push(0) or skip(1), got {choice!r}")
    full = fill_count >= len(s)
    if choice == SKIP_CHOICE and full:
        return SKIP
    return 1


def encode_stack(s: Sequence, alphabet_size: int) -> int:
    """Mixed-radix key, slot 1 as the lowest digit."""
    key = 0
    mult = 1
    for x in s:
        try:
            key += operator.index(x) * mult
        except TypeError:
            raise Unsupported("tabular keys need discrete symbols") from None
        mult *= alphabet_size
    return key


def decode_stack(key: int, alphabet_size: int, k: int) -> tuple:
    out = []
    for _ in range(k):
        key, x = divmod(key, alphabet_size)
        out.append(x)
    return tuple(out)
