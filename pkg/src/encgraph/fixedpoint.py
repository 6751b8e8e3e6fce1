"""Signed fixed-point values in a modular plaintext space.

A real x is stored as round(x * 2^scale_exp) reduced mod M, with residues at
or above M/2 read back as negatives.  Rounding is half-away-from-zero.
Overflow is always an error: nothing here wraps silently.
"""
import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import BudgetError, EncodingError, OverflowDetectedError, ParameterError

DEFAULT_SCALE_EXP = 20


def round_half_away(v):
    """Round a float to the nearest integer, ties away from zero (exact)."""
    fl = math.floor(v)
    frac = v - fl
    if frac > 0.5 or (frac == 0.5 and v > 0):
        return int(fl) + 1
    return int(fl)


def signed(raw, modulus):
    raw %= modulus
    return raw - modulus if 2 * raw >= modulus else raw


def to_residue(value, modulus):
    """Signed integer -> residue, refusing anything outside the half-range."""
    if 2 * abs(value) >= modulus:
        raise EncodingError(f"|{value}| does not fit below M/2 for M={modulus}")
    return value % modulus


def from_residue(raw, modulus):
    s = signed(raw, modulus)
    if 2 * abs(s) >= modulus:
        raise OverflowDetectedError(f"residue {raw} sits on the M/2 boundary")
    return s


def quantize(x, scale_exp):
    return round_half_away(x * 2.0**scale_exp)


def quantize_vector(xs, scale_exp):
    factor = 2.0**scale_exp
    return [round_half_away(float(x) * factor) for x in xs]


def dequantize_vector(raws, scale_exp):
    # exact for |raw| < 2^53
    factor = 2.0**-scale_exp
    return [int(r) * factor for r in raws]


@dataclass(frozen=True)
class FixedPointValue:
    raw: int
    scale_exp: int
    modulus: int

    def __post_init__(self):
        object.__setattr__(self, "raw", self.raw % self.modulus)

    @property
    def signed_raw(self):
        return signed(self.raw, self.modulus)

    def __mul__(self, other):
        if self.modulus != other.modulus:
            raise ParameterError("fixed-point operands live in different moduli")
        return FixedPointValue(self.raw * other.raw, self.scale_exp + other.scale_exp, self.modulus)


def encode_fixed(x, scale_exp, modulus):
    r = quantize(x, scale_exp)
    if 2 * abs(r) >= modulus:
        raise EncodingError(f"{x} at scale 2^{scale_exp} overflows M/2 for M={modulus}")
    return FixedPointValue(r, scale_exp, modulus)


def decode_fixed(v):
    s = from_residue(v.raw, v.modulus)
    return float(Fraction(s, 1 << v.scale_exp)) if v.scale_exp >= 0 else float(s * 2**-v.scale_exp)


@dataclass(frozen=True)
class MagnitudeBudget:
    """Upper bound on |value| for a quantity carried at ``scale_exp``."""

    max_abs: float
    scale_exp: int

    def raw_bound(self):
        return Fraction(self.max_abs) * Fraction(2) ** self.scale_exp


def budget_check(budget, op, modulus, other=None, terms=1):
    """Bound after ``op`` in {"add", "scalar_mul", "dot"}; raises BudgetError on overflow.

    Called before the homomorphic operation it describes.  ``dot`` sums
    ``terms`` products of ``budget`` and ``other``.
    """
    if op == "add":
        other = other or budget
        if other.scale_exp != budget.scale_exp:
            raise ParameterError("cannot add fixed-point values at different scales")
        out = MagnitudeBudget(budget.max_abs + other.max_abs, budget.scale_exp)
    elif op in ("scalar_mul", "dot"):
        if other is None:
            raise ParameterError(f"{op} needs a second operand budget")
        n = terms if op == "dot" else 1
        out = MagnitudeBudget(n * budget.max_abs * other.max_abs, budget.scale_exp + other.scale_exp)
    else:
        raise ParameterError(f"unknown budget operation {op!r}")
    if 2 * out.raw_bound() >= modulus:
        raise BudgetError(
            f"{op} bound {out.max_abs} at scale 2^{out.scale_exp} reaches M/2 for M={modulus}"
        )
    return out
