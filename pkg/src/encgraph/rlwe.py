"""Degree-2 somewhat-homomorphic encryption over Z_q[x]/(x^N + 1).

Secret-key scheme with the plaintext carried in the low bits:

    c0 + c1*s = m + t*e  (mod q)

so decryption is a centered reduction mod q followed by reduction mod t.  One
ciphertext-ciphertext multiplication is supported (tensor product, no
relinearization); degree-2 ciphertexts decrypt directly with s^2.

Every ciphertext carries a ``NoiseBound``: public upper bounds on the plaintext
polynomial m and the error E in ``V = m + t*E`` (the value before reduction
mod q).  Decryption refuses whenever ``|V|_inf`` could reach q/2.
"""
import hashlib
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ring
from .errors import (
    EncodingError,
    LevelError,
    MalformedCiphertextError,
    NoiseOverflowError,
    ParameterError,
)

SCHEME_TAG = 0x02


@dataclass(frozen=True)
class ShParams:
    N: int
    q: int
    t: int
    error_stddev: float = 3.2
    security_lambda: int = 64  # nominal label only
    error_bound: int = 0  # tail cut of the error sampler; 0 means ceil(6 sigma)
    params_hash: bytes = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not ring.is_power_of_two(self.N):
            raise ParameterError(f"ring degree N={self.N} is not a power of two")
        if self.q % 2 == 0 or self.q >= ring.MAX_MODULUS:
            raise ParameterError("q must be odd and below 2^63")
        if not 2 <= self.t < self.q:
            raise ParameterError("plaintext modulus must satisfy 2 <= t < q")
        if self.error_stddev <= 0:
            raise ParameterError("error_stddev must be positive")
        if not self.error_bound:
            object.__setattr__(self, "error_bound", max(1, math.ceil(6 * self.error_stddev)))
        digest = hashlib.sha256(self.to_json().encode()).digest()[:8]
        object.__setattr__(self, "params_hash", digest)

    @property
    def budget_limit(self):
        """Tracked noise (|V|_inf / t) must stay strictly below this for decryption."""
        return self.q / (2 * self.t)

    def to_json(self):
        return json.dumps(
            {
                "scheme": "rlwe",
                "N": self.N,
                "q": format(self.q, "x"),
                "t": format(self.t, "x"),
                "sigma": self.error_stddev,
                "bound": self.error_bound,
                "lambda": self.security_lambda,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("scheme") != "rlwe":
            raise ParameterError(f"not an rlwe params file: scheme={doc.get('scheme')!r}")
        return cls(
            N=int(doc["N"]),
            q=int(doc["q"], 16),
            t=int(doc["t"], 16),
            error_stddev=float(doc["sigma"]),
            security_lambda=int(doc.get("lambda", 64)),
            error_bound=int(doc.get("bound", 0)),
        )


def small_params():
    """Toy set for exhaustive tests: ternary errors keep one product decryptable at q=12289."""
    return ShParams(N=8, q=12289, t=17, error_stddev=1.0, error_bound=1)


def desk_params():
    """N=2048, 60-bit NTT-friendly q, t=2^32: adds and fresh ciphertexts only."""
    return ShParams(N=2048, q=ring.find_ntt_prime(60, 2048), t=1 << 32, error_stddev=3.2)


def mvm_params(dim, t_bits=23):
    """Smallest ring holding ``dim`` slots, 63-bit q; sized for one packed MVM product."""
    n = 16
    while n < dim:
        n *= 2
    return ShParams(N=n, q=ring.find_ntt_prime(63, n), t=1 << t_bits, error_stddev=3.2)


@dataclass(frozen=True)
class NoiseBound:
    """Public bounds on V = m + t*E: infinity and l1 norms of m and of E."""

    m_inf: int
    m_l1: int
    e_inf: int
    e_l1: int

    def __add__(self, other):
        return NoiseBound(
            self.m_inf + other.m_inf,
            self.m_l1 + other.m_l1,
            self.e_inf + other.e_inf,
            self.e_l1 + other.e_l1,
        )

    def times(self, other, t):
        # |ab|_inf <= min(|a|_1 |b|_inf, |a|_inf |b|_1), |ab|_1 <= |a|_1 |b|_1
        def inf(a_inf, a_l1, b_inf, b_l1):
            return min(a_l1 * b_inf, a_inf * b_l1)

        m_inf = inf(self.m_inf, self.m_l1, other.m_inf, other.m_l1)
        m_l1 = self.m_l1 * other.m_l1
        e_inf = (
            inf(self.m_inf, self.m_l1, other.e_inf, other.e_l1)
            + inf(other.m_inf, other.m_l1, self.e_inf, self.e_l1)
            + t * inf(self.e_inf, self.e_l1, other.e_inf, other.e_l1)
        )
        e_l1 = self.m_l1 * other.e_l1 + other.m_l1 * self.e_l1 + t * self.e_l1 * other.e_l1
        return NoiseBound(m_inf, m_l1, e_inf, e_l1)

    def value_bound(self, t):
        return self.m_inf + t * self.e_inf


@dataclass(frozen=True)
class ShSecretKey:
    params: ShParams
    s: np.ndarray
    s_squared: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "s_squared", ring.mul(self.s, self.s, self.params.q))

    def to_json(self):
        return json.dumps({"params": json.loads(self.params.to_json()), "s": ring.centered(self.s, self.params.q)})

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        params = ShParams.from_json(json.dumps(doc["params"]))
        s = doc["s"]
        if len(s) != params.N or any(v not in (-1, 0, 1) for v in s):
            raise ParameterError("secret must hold N ternary coefficients")
        return cls(params, ring.from_signed(np.array(s, dtype=np.int64), params.q))


@dataclass(frozen=True)
class ShCiphertext:
    polys: tuple
    noise: NoiseBound
    params_hash: bytes

    @property
    def level(self):
        return len(self.polys) - 1

    def noise_bound(self, t):
        return self.noise.value_bound(t) / t

    def to_bytes(self):
        out = [struct.pack("<B8sB", SCHEME_TAG, self.params_hash, self.level)]
        out.extend(p.astype("<u8").tobytes() for p in self.polys)
        for v in (self.noise.m_inf, self.noise.m_l1, self.noise.e_inf, self.noise.e_l1):
            mag = v.to_bytes((v.bit_length() + 7) // 8, "big")
            out.append(struct.pack("<H", len(mag)) + mag)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, blob, params):
        if len(blob) < 10:
            raise MalformedCiphertextError("rlwe blob too short")
        tag, phash, level = struct.unpack_from("<B8sB", blob)
        if tag != SCHEME_TAG:
            raise MalformedCiphertextError(f"scheme tag {tag:#x} is not rlwe")
        if phash != params.params_hash:
            raise MalformedCiphertextError("ciphertext params hash does not match")
        if level not in (1, 2):
            raise MalformedCiphertextError(f"invalid level {level}")
        width = 8 * params.N
        pos = 10
        polys = []
        for _ in range(level + 1):
            chunk = blob[pos : pos + width]
            if len(chunk) != width:
                raise MalformedCiphertextError("truncated polynomial")
            poly = np.frombuffer(chunk, dtype="<u8").astype(np.uint64)
            if (poly >= np.uint64(params.q)).any():
                raise MalformedCiphertextError("coefficient not reduced mod q")
            polys.append(poly)
            pos += width
        bounds = []
        for _ in range(4):
            if pos + 2 > len(blob):
                raise MalformedCiphertextError("truncated noise record")
            (length,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            if pos + length > len(blob):
                raise MalformedCiphertextError("truncated noise record")
            bounds.append(int.from_bytes(blob[pos : pos + length], "big"))
            pos += length
        if pos != len(blob):
            raise MalformedCiphertextError("trailing bytes after rlwe ciphertext")
        return cls(tuple(polys), NoiseBound(*bounds), phash)


def she_keygen(params, seed=None):
    rng = np.random.default_rng(seed)
    s = rng.integers(-1, 2, size=params.N)
    return ShSecretKey(params, ring.from_signed(s, params.q))


def _sample_error(params, rng):
    e = np.rint(rng.normal(0.0, params.error_stddev, size=params.N)).astype(np.int64)
    bad = np.abs(e) > params.error_bound
    while bad.any():
        e[bad] = np.rint(rng.normal(0.0, params.error_stddev, size=int(bad.sum()))).astype(np.int64)
        bad = np.abs(e) > params.error_bound
    return e


def plaintext_poly(m, params):
    """Validate and zero-pad plaintext coefficients in [0, t)."""
    coeffs = [int(c) for c in m]
    if len(coeffs) > params.N:
        raise EncodingError(f"{len(coeffs)} coefficients exceed ring degree {params.N}")
    for c in coeffs:
        if not 0 <= c < params.t:
            raise EncodingError(f"plaintext coefficient {c} outside [0, t)")
    return coeffs + [0] * (params.N - len(coeffs))


def she_encrypt(sk, m, rng, *, max_abs=None, support=None):
    """Encrypt plaintext coefficients ``m`` (each in [0, t)) at level 1.

    ``max_abs`` and ``support`` are public bounds on the centered plaintext
    (largest |coefficient| and count of nonzeros).  They default to the
    worst case; tighter declared bounds buy noise budget and are checked here.
    """
    params = sk.params
    q, t = params.q, params.t
    coeffs = plaintext_poly(m, params)
    half = t // 2
    centered = [c - t if c > half else c for c in coeffs]
    max_abs = half if max_abs is None else max_abs
    support = params.N if support is None else support
    actual_abs = max(abs(c) for c in centered)
    actual_support = sum(1 for c in centered if c)
    if actual_abs > max_abs or actual_support > support:
        raise EncodingError("plaintext exceeds its declared magnitude/support bounds")
    if rng is None or isinstance(rng, int):
        rng = np.random.default_rng(rng)
    a = rng.integers(0, q, size=params.N, dtype=np.uint64)
    e = _sample_error(params, rng)
    body = np.array(centered, dtype=np.int64) + t * e
    c0 = ring.add(ring.neg(ring.mul(a, sk.s, q), q), ring.from_signed(body, q), q)
    noise = NoiseBound(
        m_inf=max_abs,
        m_l1=max_abs * support,
        e_inf=params.error_bound,
        e_l1=params.error_bound * params.N,
    )
    return ShCiphertext((c0, a), noise, params.params_hash)


def _check_params(params, *cts):
    for c in cts:
        if c.params_hash != params.params_hash:
            raise ParameterError("ciphertext belongs to different RLWE parameters")


def she_add(params, a, b):
    _check_params(params, a, b)
    q = params.q
    n = max(len(a.polys), len(b.polys))
    zero = np.zeros(params.N, dtype=np.uint64)
    pa = list(a.polys) + [zero] * (n - len(a.polys))
    pb = list(b.polys) + [zero] * (n - len(b.polys))
    polys = tuple(ring.add(x, y, q) for x, y in zip(pa, pb))
    return ShCiphertext(polys, a.noise + b.noise, params.params_hash)


def she_mul(params, a, b):
    """Tensor product of two level-1 ciphertexts -> level 2 (c0d0, c0d1 + c1d0, c1d1)."""
    _check_params(params, a, b)
    if a.level != 1 or b.level != 1:
        raise LevelError("only level-1 ciphertexts can be multiplied (single multiplicative level)")
    q = params.q
    tables = ring.ntt_tables(params.N, q)
    if tables is None:
        c0, c1 = a.polys
        d0, d1 = b.polys
        polys = (
            ring.mul(c0, d0, q),
            ring.add(ring.mul(c0, d1, q), ring.mul(c1, d0, q), q),
            ring.mul(c1, d1, q),
        )
    else:
        c0, c1 = (tables.forward(p) for p in a.polys)
        d0, d1 = (tables.forward(p) for p in b.polys)
        mid = ring.add(ring.pointwise(c0, d1, q), ring.pointwise(c1, d0, q), q)
        polys = (
            tables.inverse(ring.pointwise(c0, d0, q)),
            tables.inverse(mid),
            tables.inverse(ring.pointwise(c1, d1, q)),
        )
    return ShCiphertext(polys, a.noise.times(b.noise, params.t), params.params_hash)


def check_budget(params, c):
    if 2 * c.noise.value_bound(params.t) >= params.q:
        raise NoiseOverflowError(
            f"tracked noise {c.noise_bound(params.t):.3g} is not below q/(2t) = {params.budget_limit:.3g}"
        )


def she_decrypt(sk, c):
    """Plaintext coefficients in [0, t); raises NoiseOverflowError past the budget."""
    params = sk.params
    _check_params(params, c)
    check_budget(params, c)
    q = params.q
    acc = ring.add(c.polys[0], ring.mul(c.polys[1], sk.s, q), q)
    if c.level == 2:
        acc = ring.add(acc, ring.mul(c.polys[2], sk.s_squared, q), q)
    return np.array([v % params.t for v in ring.centered(acc, q)], dtype=np.int64)
