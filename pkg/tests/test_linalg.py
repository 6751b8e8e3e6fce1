import random

import numpy as np
import pytest

from encgraph import linalg, paillier, rlwe
from encgraph.errors import BudgetError, DimensionError, EncodingError
from encgraph.fixedpoint import MagnitudeBudget, from_residue, to_residue


def enc_matrix(pk, a, rng, storage=linalg.DENSE, symmetric=False):
    n = len(a)
    if storage == linalg.DENSE:
        data = [[paillier.encrypt(pk, to_residue(v, pk.n), rng) for v in row] for row in a]
    else:
        data = {
            (i, j): paillier.encrypt(pk, to_residue(a[i][j], pk.n), rng)
            for i in range(n)
            for j in range(n)
            if a[i][j] and (not symmetric or j >= i)
        }
    return linalg.EncMatrix(linalg.AHE, n, n, storage, data, symmetric=symmetric)


def dec(pk, sk, cts):
    return [from_residue(paillier.decrypt(sk, pk, c), pk.n) for c in cts]


def test_dot_selector_and_zero(keys512):
    pk, sk = keys512
    rng = random.Random(0)
    row = [paillier.encrypt(pk, int(j == 3), rng) for j in range(6)]
    x = [5, -7, 11, -13, 17, 19]
    assert dec(pk, sk, [linalg.ahe_dot(pk, row, x)]) == [-13]
    assert dec(pk, sk, [linalg.ahe_dot(pk, row, [0] * 6)]) == [0]
    with pytest.raises(DimensionError):
        linalg.ahe_dot(pk, row, [1, 2])


def test_dot_random_oracle(keys512):
    pk, sk = keys512
    rng = random.Random(1)
    for _ in range(200):
        a = [rng.randrange(-1000, 1001) for _ in range(32)]
        x = [rng.randrange(-(1 << 20), 1 << 20) for _ in range(32)]
        row = [paillier.encrypt(pk, to_residue(v, pk.n), rng, sk=sk) for v in a]
        assert dec(pk, sk, [linalg.ahe_dot(pk, row, x)]) == [sum(p * q for p, q in zip(a, x))]


def test_mvm_identity_zero_sparse(keys512):
    pk, sk = keys512
    rng = random.Random(2)
    eye = [[int(i == j) for j in range(8)] for i in range(8)]
    x = [rng.randrange(-99, 100) for _ in range(8)]
    assert dec(pk, sk, linalg.ahe_mvm(pk, enc_matrix(pk, eye, rng), x).entries) == x
    zero = [[0] * 8 for _ in range(8)]
    assert dec(pk, sk, linalg.ahe_mvm(pk, enc_matrix(pk, zero, rng), x).entries) == [0] * 8

    n = 32
    a = [[rng.randrange(1, 9) if rng.random() < 0.2 else 0 for _ in range(n)] for _ in range(n)]
    x = [rng.randrange(-500, 501) for _ in range(n)]
    want = [sum(p * q for p, q in zip(row, x)) for row in a]
    assert dec(pk, sk, linalg.ahe_mvm(pk, enc_matrix(pk, a, rng, linalg.SPARSE), x).entries) == want

    sym = [[a[min(i, j)][max(i, j)] for j in range(n)] for i in range(n)]
    want = [sum(p * q for p, q in zip(row, x)) for row in sym]
    got = linalg.ahe_mvm(pk, enc_matrix(pk, sym, rng, linalg.SPARSE, symmetric=True), x)
    assert dec(pk, sk, got.entries) == want


def test_mvm_budget_refused_before_work(toy_keys):
    pk, _ = toy_keys
    a = linalg.EncMatrix(linalg.AHE, 2, 2, linalg.SPARSE, {})
    with pytest.raises(BudgetError):
        linalg.ahe_mvm(pk, a, [1, 1], budget=(MagnitudeBudget(4, 0), MagnitudeBudget(4, 0)))


def test_symmetric_storage_rejects_lower_entries(toy_keys):
    pk, _ = toy_keys
    with pytest.raises(DimensionError):
        linalg.EncMatrix(linalg.AHE, 2, 2, linalg.SPARSE, {(1, 0): None}, symmetric=True)


def test_mmm(keys512):
    pk, sk = keys512
    rng = random.Random(3)
    a = [[rng.randrange(-9, 10) for _ in range(8)] for _ in range(8)]
    ea = enc_matrix(pk, a, rng)
    eye = [[int(i == j) for j in range(8)] for i in range(8)]
    out = linalg.ahe_mmm(pk, ea, eye)
    assert [dec(pk, sk, row) for row in out.data] == a
    out = linalg.ahe_mmm(pk, ea, [[0] * 8 for _ in range(8)])
    assert all(v == 0 for row in out.data for v in dec(pk, sk, row))
    b = [[rng.randrange(-9, 10) for _ in range(8)] for _ in range(8)]
    want = (np.array(a) @ np.array(b)).tolist()
    assert [dec(pk, sk, row) for row in linalg.ahe_mmm(pk, ea, b).data] == want


@pytest.fixture(scope="module")
def she64():
    params = rlwe.mvm_params(64)
    return params, rlwe.she_keygen(params, 5)


def test_pack_layout(she64):
    params, _ = she64
    assert linalg.pack_plaintext([1], "forward", params)[0] == 1
    coeffs = linalg.pack_plaintext([3, -1], "reversed", params)
    assert coeffs[params.N - 1] == 3 and coeffs[params.N - 2] == params.t - 1
    with pytest.raises(EncodingError):
        linalg.pack_plaintext([params.t // 2], "forward", params)
    with pytest.raises(DimensionError):
        linalg.pack_plaintext([0] * (params.N + 1), "forward", params)


def test_pack_zero_and_unit(she64, nprng):
    params, sk = she64
    assert not rlwe.she_decrypt(sk, linalg.she_pack(sk, [0] * 10, "forward", nprng)).any()
    e0 = rlwe.she_decrypt(sk, linalg.she_pack(sk, [1], "forward", nprng))
    assert e0[0] == 1 and not e0[1:].any()


def test_packed_dot_examples(she64, nprng):
    params, sk = she64
    e3 = [int(i == 3) for i in range(32)]
    d = lambda u, v: linalg.extract_dot(rlwe.she_decrypt(sk, linalg.she_dot_packed(
        params, linalg.she_pack(sk, u, "forward", nprng, 1000), linalg.she_pack(sk, v, "reversed", nprng, 1000))), params)
    assert d(e3, e3) == 1
    assert d([1, 2, 0, 0], [0, 0, 5, 6]) == 0
    for _ in range(200):
        u = [int(v) for v in nprng.integers(-1000, 1001, 32)]
        v = [int(v) for v in nprng.integers(-1000, 1001, 32)]
        want = sum(p * q for p, q in zip(u, v))
        assert d(u, v) % params.t == want % params.t


def test_she_mvm(nprng):
    params = rlwe.mvm_params(16)
    sk = rlwe.she_keygen(params, 6)

    def run(a, x):
        rows = [linalg.she_pack(sk, r, "reversed", nprng, 100) for r in a]
        cx = linalg.she_pack(sk, x, "forward", nprng, 1000)
        return [linalg.extract_dot(rlwe.she_decrypt(sk, c), params) for c in linalg.she_mvm(params, rows, cx)]

    x = [int(v) for v in nprng.integers(-1000, 1001, 16)]
    assert run([[int(i == j) for j in range(16)] for i in range(16)], x) == x
    assert run([[0] * 16 for _ in range(16)], x) == [0] * 16
    a = [[int(v) for v in nprng.integers(-100, 101, 16)] for _ in range(16)]
    assert run(a, x) == (np.array(a) @ np.array(x)).tolist()
