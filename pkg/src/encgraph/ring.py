"""Arithmetic in Z_q[x]/(x^N + 1) on numpy ``uint64`` coefficient arrays.

The multiplication kernel is compiled (``_ringcore``) when the extension is
built and pure Python otherwise.  Set ``ENCGRAPH_PURE_PYTHON=1`` to force the
fallback.  Moduli must stay below 2^63 so that a sum of two residues fits in a
``uint64``.
"""
import functools
import os
import random

import numpy as np

from .errors import ParameterError
from .primes import is_probable_prime

if os.environ.get("ENCGRAPH_PURE_PYTHON"):
    from . import _ringcore_py as _core

    HAVE_EXTENSION = False
else:
    try:
        from . import _ringcore as _core

        HAVE_EXTENSION = True
    except ImportError:
        from . import _ringcore_py as _core

        HAVE_EXTENSION = False

from . import _ringcore_py as _pycore

MAX_MODULUS = 1 << 63


def kernel_name():
    return "cython" if HAVE_EXTENSION else "python"


def _bitrev(x, bits):
    r = 0
    for _ in range(bits):
        r = (r << 1) | (x & 1)
        x >>= 1
    return r


def is_power_of_two(n):
    return n > 0 and n & (n - 1) == 0


def _primitive_2n_root(n, q):
    # any x with x^n = -1 has multiplicative order exactly 2n
    cofactor = (q - 1) // (2 * n)
    for g in range(2, q):
        psi = pow(g, cofactor, q)
        if pow(psi, n, q) == q - 1:
            return psi
    raise ParameterError(f"no primitive {2 * n}-th root of unity mod {q}")


class NttTables:
    """Bit-reversed powers of a primitive 2N-th root, shared read-only per (N, q)."""

    def __init__(self, n, q):
        if not is_power_of_two(n):
            raise ParameterError(f"ring degree {n} is not a power of two")
        if (q - 1) % (2 * n):
            raise ParameterError(f"q={q} is not 1 mod 2N for N={n}")
        self.n, self.q = n, q
        psi = _primitive_2n_root(n, q)
        psi_inv = pow(psi, -1, q)
        bits = n.bit_length() - 1
        self.psi_rev = np.array([pow(psi, _bitrev(i, bits), q) for i in range(n)], dtype=np.uint64)
        self.psi_inv_rev = np.array(
            [pow(psi_inv, _bitrev(i, bits), q) for i in range(n)], dtype=np.uint64
        )
        self.n_inv = pow(n, -1, q)

    def forward(self, a):
        return _core.ntt_forward(a, self.psi_rev, self.q)

    def inverse(self, a):
        return _core.ntt_inverse(a, self.psi_inv_rev, self.n_inv, self.q)


@functools.lru_cache(maxsize=None)
def ntt_tables(n, q):
    """Tables for (n, q), or None when q does not admit a length-n negacyclic NTT."""
    if q < 3 or (q - 1) % (2 * n) or not is_probable_prime(q, random.Random(q)):
        return None
    return NttTables(n, q)


def find_ntt_prime(bits, n):
    """Largest prime below 2^bits congruent to 1 mod 2n."""
    step = 2 * n
    cand = ((1 << bits) - 1) // step * step + 1
    rng = random.Random(bits * 1_000_003 + n)
    while cand > step:
        if cand < (1 << bits) and is_probable_prime(cand, rng):
            return cand
        cand -= step
    raise ParameterError(f"no NTT-friendly prime below 2^{bits} for N={n}")


def reduce(coeffs, q):
    """Map arbitrary Python/numpy integers into a canonical ``uint64`` residue array."""
    return np.array([int(c) % q for c in coeffs], dtype=np.uint64)


def add(a, b, q):
    s = a + b
    s[s >= q] -= np.uint64(q)
    return s


def sub(a, b, q):
    return add(a, neg(b, q), q)


def neg(a, q):
    out = np.uint64(q) - a
    out[a == 0] = 0
    return out


def mul_schoolbook(a, b, q, pure=False):
    core = _pycore if pure else _core
    return core.negacyclic_schoolbook(np.ascontiguousarray(a), np.ascontiguousarray(b), q)


def mul(a, b, q):
    """Negacyclic product; NTT path when the modulus admits it, schoolbook otherwise."""
    tables = ntt_tables(len(a), q)
    if tables is None:
        return mul_schoolbook(a, b, q)
    return tables.inverse(_core.pointwise_mul(tables.forward(a), tables.forward(b), q))


def centered(a, q):
    """Lift residues to Python ints in (-q/2, q/2]."""
    half = q // 2
    return [int(x) - q if int(x) > half else int(x) for x in a]


def from_signed(v, q):
    """int64 array of values with |v| < q -> canonical residues (uint64 wraparound is intended)."""
    v = np.asarray(v, dtype=np.int64)
    u = v.astype(np.uint64)
    u[v < 0] += np.uint64(q)
    return u


def pointwise(a, b, q):
    return _core.pointwise_mul(a, b, q)
