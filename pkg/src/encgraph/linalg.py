"""Encrypted linear algebra on both backends.

AHE: the matrix is encrypted and the vector is a plaintext of signed
fixed-point raws (dot products via ciphertext exponentiation).  SHE: matrix
rows are packed in reversed order and the vector in forward order, so a
single ring product carries the row's dot product at coefficient N - 1.
"""
from dataclasses import dataclass, field

from . import paillier, rlwe
from .errors import DimensionError, EncodingError
from .fixedpoint import budget_check

AHE = "ahe"
SHE_PACKED = "she-packed"
SHE_ENTRYWISE = "she-entrywise"

DENSE = "dense"
SPARSE = "sparse"
PACKED = "packed"


@dataclass
class EncVector:
    backend: str
    entries: list
    dim: int
    scale_exp: int = 0


@dataclass
class EncMatrix:
    """Encrypted matrix.

    ``data`` is a row-major grid for dense storage, a ``{(row, col): ct}``
    dict for sparse storage, or one packed ciphertext per row.  Symmetric
    sparse storage keeps only col >= row.
    """

    backend: str
    rows: int
    cols: int
    storage: str
    data: object
    symmetric: bool = False
    scale_exp: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.storage == SPARSE and self.symmetric:
            for r, c in self.data:
                if c < r:
                    raise DimensionError(f"symmetric storage holds ({r}, {c}) below the diagonal")

    def stored_entries(self):
        if self.storage == DENSE:
            return self.rows * self.cols
        return len(self.data)


def _check_dims(expected, got):
    if expected != got:
        raise DimensionError(f"dimension mismatch: expected {expected}, got {got}")


def ahe_dot(pk, enc_row, x, budget=None):
    """Ciphertext of sum_j a_j x_j mod n for plaintext signed integers ``x``.

    ``budget`` is an optional (row_budget, vector_budget) pair checked for
    the whole dot product before any exponentiation happens.
    """
    entries = enc_row.entries if isinstance(enc_row, EncVector) else enc_row
    _check_dims(len(entries), len(x))
    if budget is not None:
        budget_check(budget[0], "dot", pk.n, other=budget[1], terms=len(x))
    acc = 1
    for c, xj in zip(entries, x):
        if xj:
            acc = acc * paillier.hom_scale_signed(pk, c, int(xj)).value % pk.n_squared
    return paillier.PaillierCiphertext(acc, pk.key_id)


def ahe_mvm(pk, A, x, budget=None):
    """Encrypted A x for plaintext ``x``; absent sparse entries contribute nothing."""
    _check_dims(A.cols, len(x))
    if budget is not None:
        budget_check(budget[0], "dot", pk.n, other=budget[1], terms=A.cols)
    if A.storage == DENSE:
        out = [ahe_dot(pk, row, x) for row in A.data]
    elif A.storage == SPARSE:
        acc = [1] * A.rows
        n2 = pk.n_squared
        for (r, c), ct in A.data.items():
            if x[c]:
                acc[r] = acc[r] * paillier.hom_scale_signed(pk, ct, int(x[c])).value % n2
            if A.symmetric and c != r and x[r]:
                acc[c] = acc[c] * paillier.hom_scale_signed(pk, ct, int(x[r])).value % n2
        out = [paillier.PaillierCiphertext(v, pk.key_id) for v in acc]
    else:
        raise DimensionError(f"AHE MVM does not support {A.storage!r} storage")
    return EncVector(AHE, out, A.rows, A.scale_exp)


def ahe_mmm(pk, A, B):
    """Encrypted A B for a plaintext integer matrix B (list of rows); output is dense."""
    _check_dims(A.cols, len(B))
    ncols = len(B[0]) if B else 0
    columns = [ahe_mvm(pk, A, [B[i][j] for i in range(len(B))]).entries for j in range(ncols)]
    grid = [[columns[j][i] for j in range(ncols)] for i in range(A.rows)]
    return EncMatrix(AHE, A.rows, ncols, DENSE, grid, scale_exp=A.scale_exp)


def pack_plaintext(v, order, params):
    """Signed integers -> coefficient list mod t, forward (x^i) or reversed (x^(N-1-i))."""
    if len(v) > params.N:
        raise DimensionError(f"vector of length {len(v)} exceeds ring degree {params.N}")
    t = params.t
    coeffs = [0] * params.N
    for i, vi in enumerate(v):
        vi = int(vi)
        if 2 * abs(vi) >= t:
            raise EncodingError(f"packed entry {vi} does not fit below t/2")
        pos = i if order == "forward" else params.N - 1 - i
        coeffs[pos] = vi % t
    return coeffs


def she_pack(sk, v, order, rng, max_abs=None):
    """Pack and encrypt; ``max_abs`` is the public entry bound recorded in the noise tag."""
    coeffs = pack_plaintext(v, order, sk.params)
    return rlwe.she_encrypt(sk, coeffs, rng, max_abs=max_abs, support=len(v))


def extract_dot(plain_coeffs, params):
    """Signed dot product read from coefficient N - 1 of a decrypted packed product."""
    c = int(plain_coeffs[params.N - 1])
    return c - params.t if 2 * c >= params.t else c


def she_dot_packed(params, cu, cv):
    return rlwe.she_mul(params, cu, cv)


def she_mvm(params, rows, cx):
    return [she_dot_packed(params, row, cx) for row in rows]
