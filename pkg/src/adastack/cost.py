"""Lower-bound compute (FLOPs) and working-memory (bytes) model.

Covers MLP, LSTM and Transformer encoders over a k-slot context, with a frame
stack (env-action head only) or an adaptive stack (extra k-way memory head).
Every number is a lower bound; each report carries the formula strings it was
evaluated from.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

from .errors import ContractViolation

FAMILIES = ("mlp", "lstm", "transformer")
STACKINGS = ("fs", "as")


@dataclass(frozen=True)
class ArchSpec:
    family: str = "mlp"
    layers: int = 2          # L
    hidden: int = 128        # h
    actions: int = 4         # |A|
    k: int = 2               # context length
    precision: int = 4       # P, bytes per unit
    batch: int = 1           # B, learning batch
    opt_copies: int = 1      # G: 1 for SGD, 4 for AdamW
    stacking: str = "fs"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractViolation(f"unknown family {self.family!r}")
        if self.stacking not in STACKINGS:
            raise ContractViolation(f"stacking must be 'fs' or 'as', got {self.stacking!r}")
        for name in ("layers", "hidden", "actions", "k", "precision", "batch", "opt_copies"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ContractViolation(f"{name} must be a positive integer, got {v!r}")


@dataclass(frozen=True)
class CostReport:
    flops_action: int
    flops_td: int
    bytes_action: int
    bytes_td: int
    formulas: dict

    def as_row(self) -> dict:
        return {"flops_action": self.flops_action, "flops_td": self.flops_td,
                "bytes_action": self.bytes_action, "bytes_td": self.bytes_td}


# heads: FS has |A| outputs, AS has |A| + k
_FORMULAS = {
    "mlp": {
        "flops_action": "2kh^2 + 2h + (L-1)(2h^2 + 2h) + 2h*heads",
        "flops_td": "3B * flops_action",
        "bytes_action": "Pk(h^2 + h) + P(L-1)h^2 + PLh + P(h+1)*heads",
        "bytes_td": "(2+G)(Pkh^2 + P(L-1)h^2 + PLh + P(h+1)*heads) + PBkh + PBhL",
    },
    "lstm": {
        "flops_action": "kL(8h^2 + 20h) + 2h*heads",
        "flops_td": "3BkL(8h^2 + 20h) + 6Bh*heads",
        "bytes_action": "PL(8h^2 + 4h) + P(h+1)*heads + PhL + Pkh",
        "bytes_td": "(2+G)(PL(8h^2 + 4h) + P(h+1)*heads) + PBkhL + PBkh",
    },
    "transformer": {
        "flops_action": "24Lh^2k + 4Lhk^2 + 2h*heads",
        "flops_td": "3B(24Lh^2k + 4Lhk^2 + 2h*heads)",
        "bytes_action": "PL(12h^2 + 4h) + P(h+1)*heads + P(L+1)hk",
        "bytes_td": "(2+G)(PL(12h^2 + 4h) + P(h+1)*heads) + PB(L+1)hk",
    },
}


def formulas(family: str, stacking: str) -> dict:
    heads = "|A|" if stacking == "fs" else "(|A|+k)"
    return {key: f.replace("heads", heads) for key, f in _FORMULAS[family].items()}


def cost(arch: ArchSpec) -> CostReport:
    L, h, A, k = arch.layers, arch.hidden, arch.actions, arch.k
    P, B, G = arch.precision, arch.batch, arch.opt_copies
    heads = A if arch.stacking == "fs" else A + k
    if arch.family == "mlp":
        c_act = 2 * k * h * h + 2 * h + (L - 1) * (2 * h * h + 2 * h) + 2 * h * heads
        c_td = 3 * B * c_act
        w_act = P * k * (h * h + h) + P * (L - 1) * h * h + P * L * h + P * (h + 1) * heads
        params = P * k * h * h + P * (L - 1) * h * h + P * L * h + P * (h + 1) * heads
        w_td = (2 + G) * params + P * B * k * h + P * B * h * L
    elif arch.family == "lstm":
        c_act = k * L * (8 * h * h + 20 * h) + 2 * h * heads
        c_td = 3 * B * k * L * (8 * h * h + 20 * h) + 6 * B * h * heads
        params = P * L * (8 * h * h + 4 * h) + P * (h + 1) * heads
        w_act = params + P * h * L + P * k * h
        w_td = (2 + G) * params + P * B * k * h * L + P * B * k * h
    else:
        c_act = 24 * L * h * h * k + 4 * L * h * k * k + 2 * h * heads
        c_td = 3 * B * c_act
        params = P * L * (12 * h * h + 4 * h) + P * (h + 1) * heads
        # inference batch is 1, so the activation term carries no B
        w_act = params + P * (L + 1) * h * k
        w_td = (2 + G) * params + P * B * (L + 1) * h * k
    return CostReport(c_act, c_td, w_act, w_td, formulas(arch.family, arch.stacking))


def efficiency_ratio(family: str, k_star: int, kappa: int, fixed: ArchSpec | None = None,
                     field: str = "flops_action") -> float:
    """Frame stack at k* over adaptive stack at kappa, for one cost field."""
    if not k_star >= kappa >= 1:
        raise ContractViolation("need k_star >= kappa >= 1")
    fixed = fixed or ArchSpec()
    fs = cost(replace(fixed, family=family, k=k_star, stacking="fs"))
    as_ = cost(replace(fixed, family=family, k=kappa, stacking="as"))
    return getattr(fs, field) / getattr(as_, field)


def degree_in_k(arch: ArchSpec, field: str, points: int = 8) -> int:
    """Polynomial degree of a cost field as a function of k (exact finite
    differences over k = 1..points)."""
    vals = [Fraction(getattr(cost(replace(arch, k=k)), field)) for k in range(1, points + 1)]
    for deg in range(points - 1):
        if all(v == vals[0] for v in vals):
            return deg
        vals = [b - a for a, b in zip(vals, vals[1:])]
    raise ContractViolation("degree exceeds the number of sample points")


# Table of stated asymptotic lower bounds (exponent of k), per family and field.
TABLE_EXPONENTS = {
    "mlp": {"flops_action": 1, "flops_td": 1, "bytes_action": 1, "bytes_td": 1},
    "lstm": {"flops_action": 1, "flops_td": 1, "bytes_action": 1, "bytes_td": 1},
    "transformer": {"flops_action": 2, "flops_td": 1, "bytes_action": 2, "bytes_td": 1},
}


def table_rows(arch: ArchSpec | None = None) -> list:
    """One row per (family, stacking): the four costs and their k-degrees."""
    arch = arch or ArchSpec()
    rows = []
    for fam in FAMILIES:
        for st in STACKINGS:
            a = replace(arch, family=fam, stacking=st)
            rep = cost(a)
            row = {"family": fam, "stacking": st, "k": a.k, **rep.as_row()}
            for f in ("flops_action", "flops_td", "bytes_action", "bytes_td"):
                row[f"degree_{f}"] = degree_in_k(a, f)
            rows.append(row)
    return rows
