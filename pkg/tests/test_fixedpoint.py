import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from encgraph.errors import BudgetError, EncodingError, OverflowDetectedError, PlanError
from encgraph.fixedpoint import (
    FixedPointValue,
    MagnitudeBudget,
    budget_check,
    decode_fixed,
    dequantize_vector,
    encode_fixed,
    from_residue,
    quantize,
    round_half_away,
    signed,
    to_residue,
)

M32 = 1 << 32


def test_encode_examples():
    assert encode_fixed(1.5, 16, M32).raw == 98304
    assert encode_fixed(-1.0, 16, M32).raw == M32 - 65536
    assert decode_fixed(encode_fixed(0.0, 16, M32)) == 0.0


def test_round_trip_thousand():
    rng = random.Random(0)
    for _ in range(1000):
        x = rng.uniform(-100, 100)
        assert abs(decode_fixed(encode_fixed(x, 20, M32 << 32)) - x) <= 2.0**-21


def test_rounding_half_away_from_zero():
    assert [round_half_away(v) for v in (0.5, 1.5, 2.5, -0.5, -1.5, 0.49, -0.51)] == [1, 2, 3, -1, -2, 0, -1]
    assert quantize(2.0**-17, 16) == 1
    assert quantize(-(2.0**-17), 16) == -1


def test_signed_convention():
    assert signed(0, 17) == 0 and signed(8, 17) == 8 and signed(9, 17) == -8
    assert signed(M32 // 2, M32) == -(M32 // 2)


def test_overflow_is_an_error_not_a_wrap():
    with pytest.raises(EncodingError):
        encode_fixed(2.0**15, 16, M32)
    with pytest.raises(EncodingError):
        to_residue(M32 // 2, M32)
    with pytest.raises(OverflowDetectedError):
        from_residue(M32 // 2, M32)
    with pytest.raises(OverflowDetectedError):
        decode_fixed(FixedPointValue(M32 // 2, 0, M32))


@given(st.integers(min_value=-(1 << 20), max_value=1 << 20))
def test_near_half_modulus_never_flips_sign(delta):
    m = 1 << 40
    v = m // 2 + delta
    if 2 * abs(v) >= m:
        with pytest.raises(EncodingError):
            to_residue(v, m)
    else:
        assert from_residue(to_residue(v, m), m) == v


def test_budget_examples():
    one = MagnitudeBudget(1.0, 16)
    assert budget_check(one, "add", M32).max_abs == 2.0
    assert budget_check(one, "scalar_mul", M32, other=MagnitudeBudget(0.0, 0)).max_abs == 0
    with pytest.raises(BudgetError) as info:
        budget_check(one, "dot", M32, other=one, terms=64)
    assert isinstance(info.value, PlanError)
    out = budget_check(one, "dot", 1 << 64, other=one, terms=64)
    assert out.max_abs == 64 and out.scale_exp == 32


def test_product_scales_add():
    a = encode_fixed(1.5, 10, M32 << 16)
    b = encode_fixed(-2.0, 12, M32 << 16)
    c = a * b
    assert c.scale_exp == 22 and decode_fixed(c) == -3.0


def test_budgeted_mvm_soundness():
    """Integer MVM on encoded operands decodes within the rounding bound of real MVM."""
    rng = random.Random(2)
    m = 1 << 64
    ws = vs = 16
    for _ in range(500):
        n = rng.randrange(1, 12)
        a = [[rng.uniform(-1, 1) for _ in range(n)] for _ in range(n)]
        x = [rng.uniform(-1, 1) for _ in range(n)]
        budget_check(MagnitudeBudget(1, ws), "dot", m, other=MagnitudeBudget(1, vs), terms=n)
        ar = [[quantize(v, ws) for v in row] for row in a]
        xr = [quantize(v, vs) for v in x]
        for row, arow in zip(ar, a):
            raw = to_residue(sum(p * q for p, q in zip(row, xr)), m)
            got = Fraction(from_residue(raw, m), 1 << (ws + vs))
            exact = sum(Fraction(p) * Fraction(q) for p, q in zip(arow, x))
            # each product carries two roundings of at most half an ulp
            bound = Fraction(n) * (Fraction(1, 1 << (ws + 1)) + Fraction(1, 1 << (vs + 1))) * 1.01
            assert abs(got - exact) <= bound


def test_dequantize_exact():
    assert dequantize_vector([3, -4], 2) == [0.75, -1.0]
