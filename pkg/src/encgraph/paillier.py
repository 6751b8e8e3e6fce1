"""Paillier additive-homomorphic encryption with the simplified generator g = n + 1.

Ciphertexts combine by multiplication modulo n^2 (plaintexts add) and by
exponentiation with a plaintext scalar (plaintexts multiply).  Signed values
are not handled here; see :mod:`encgraph.fixedpoint` for the half-range
convention used on top of Z_n.
"""
import hashlib
import json
import math
import random
import secrets
import struct
from dataclasses import dataclass, field

from .errors import (
    MalformedCiphertextError,
    ParameterError,
    PlaintextRangeError,
    WrongKeyError,
)
from .primes import invert, is_probable_prime, powmod

SCHEME_TAG = 0x01
MIN_PRODUCTION_BITS = 2048
TOY_LIMIT_BITS = 64


def _default_rng(rng):
    return rng if rng is not None else secrets.SystemRandom()


def _key_id(n):
    raw = n.to_bytes((n.bit_length() + 7) // 8, "big")
    return hashlib.sha256(b"paillier:" + raw).digest()[:8]


@dataclass(frozen=True)
class PaillierPublicKey:
    n: int
    bit_length: int = 0
    n_squared: int = field(init=False, repr=False, compare=False)
    key_id: bytes = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n <= 8 or self.n % 2 == 0:
            raise ParameterError("Paillier modulus must be odd and greater than 8")
        object.__setattr__(self, "n_squared", self.n * self.n)
        object.__setattr__(self, "key_id", _key_id(self.n))
        if not self.bit_length:
            object.__setattr__(self, "bit_length", self.n.bit_length())

    @property
    def g(self):
        return self.n + 1

    @property
    def max_int(self):
        return self.n - 1

    def to_json(self):
        return json.dumps({"scheme": "paillier", "n": format(self.n, "x"), "bits": self.bit_length})

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("scheme") != "paillier":
            raise ParameterError(f"not a paillier public key: scheme={doc.get('scheme')!r}")
        return cls(int(doc["n"], 16), int(doc["bits"]))


@dataclass(frozen=True)
class PaillierSecretKey:
    lam: int
    mu: int
    p: int
    q: int
    # CRT data for key-holder encryption; decryption stays on the plain path
    _p2: int = field(init=False, repr=False, compare=False)
    _q2: int = field(init=False, repr=False, compare=False)
    _p2_inv_q2: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p2, q2 = self.p * self.p, self.q * self.q
        object.__setattr__(self, "_p2", p2)
        object.__setattr__(self, "_q2", q2)
        object.__setattr__(self, "_p2_inv_q2", invert(p2, q2))

    def to_json(self):
        return json.dumps({"scheme": "paillier", "p": format(self.p, "x"), "q": format(self.q, "x")})

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return keypair_from_primes(int(doc["p"], 16), int(doc["q"], 16))[1]


@dataclass(frozen=True)
class PaillierCiphertext:
    value: int
    key_id: bytes

    def to_bytes(self):
        mag = self.value.to_bytes((self.value.bit_length() + 7) // 8, "big")
        return struct.pack(">B8sI", SCHEME_TAG, self.key_id, len(mag)) + mag

    @classmethod
    def from_bytes(cls, blob):
        if len(blob) < 13:
            raise MalformedCiphertextError(f"paillier blob too short ({len(blob)} bytes)")
        tag, key_id, length = struct.unpack_from(">B8sI", blob)
        if tag != SCHEME_TAG:
            raise MalformedCiphertextError(f"scheme tag {tag:#x} is not paillier")
        if len(blob) != 13 + length:
            raise MalformedCiphertextError(f"declared {length} magnitude bytes, got {len(blob) - 13}")
        return cls(int.from_bytes(blob[13:], "big"), key_id)


def _L(u, n):
    return (u - 1) // n


def keypair_from_primes(p, q):
    """Build a keypair from explicit primes (used for fixtures and key files)."""
    if p == q:
        raise ParameterError("p and q must be distinct")
    n = p * q
    if math.gcd(n, (p - 1) * (q - 1)) != 1:
        raise ParameterError("gcd(pq, (p-1)(q-1)) != 1")
    pk = PaillierPublicKey(n)
    lam = math.lcm(p - 1, q - 1)
    # with g = n + 1, L(g^lam mod n^2) = lam mod n
    mu = invert(_L(powmod(pk.g, lam, pk.n_squared), n), n)
    return pk, PaillierSecretKey(lam, mu, p, q)


def keygen(bit_length, seed=None, *, allow_toy=False):
    """Generate a keypair whose modulus has ``bit_length`` or ``bit_length - 1`` bits.

    Keys under 64 bits are refused unless ``allow_toy`` is set; they exist for
    small deterministic fixtures only.  A ``seed`` makes generation reproducible.
    """
    if bit_length < 6 or bit_length % 2:
        raise ParameterError(f"bit_length must be even and >= 6, got {bit_length}")
    if bit_length < TOY_LIMIT_BITS and not allow_toy:
        raise ParameterError(f"{bit_length}-bit keys are toy keys; pass allow_toy=True")
    rng = random.Random(seed) if seed is not None else secrets.SystemRandom()
    half = bit_length // 2
    lo, hi = 1 << (half - 1), 1 << half
    for _ in range(10_000):
        p = _prime_in(lo, hi, rng)
        q = _prime_in(lo, hi, rng)
        if p == q:
            continue
        n = p * q
        if n.bit_length() not in (bit_length - 1, bit_length):
            continue
        if math.gcd(n, (p - 1) * (q - 1)) != 1:
            continue
        pk, sk = keypair_from_primes(p, q)
        object.__setattr__(pk, "bit_length", bit_length)
        return pk, sk
    raise ParameterError(f"could not find two distinct {half}-bit primes")


def _prime_in(lo, hi, rng):
    for _ in range(100_000):
        cand = rng.randrange(lo, hi) | 1
        if cand < hi and is_probable_prime(cand, rng):
            return cand
    raise ParameterError(f"no prime found in [{lo}, {hi})")


def _check_key(pk, c):
    if c.key_id != pk.key_id:
        raise WrongKeyError("ciphertext was produced under a different public key")


def _random_unit(pk, rng):
    while True:
        r = rng.randrange(1, pk.n)
        if math.gcd(r, pk.n) == 1:
            return r


def _r_to_n(pk, r, sk=None):
    if sk is None:
        return powmod(r, pk.n, pk.n_squared)
    # phi(p^2) = p(p-1): reduce the exponent per prime power, then recombine
    ap = powmod(r, pk.n % (sk.p * (sk.p - 1)), sk._p2)
    aq = powmod(r, pk.n % (sk.q * (sk.q - 1)), sk._q2)
    return ap + sk._p2 * ((aq - ap) * sk._p2_inv_q2 % sk._q2)


def encrypt(pk, m, rng=None, *, r=None, sk=None):
    """Encrypt ``m`` in [0, n) as (1 + m n) r^n mod n^2.

    ``r`` forces the randomness (fixtures); ``sk`` lets a key holder compute
    r^n through the CRT, which yields the identical ciphertext faster.
    """
    if not 0 <= m < pk.n:
        raise PlaintextRangeError(f"plaintext {m} outside [0, n)")
    if r is None:
        r = _random_unit(pk, _default_rng(rng))
    elif math.gcd(r, pk.n) != 1:
        raise ParameterError("randomness r must be a unit mod n")
    gm = (1 + m * pk.n) % pk.n_squared
    return PaillierCiphertext(gm * _r_to_n(pk, r, sk) % pk.n_squared, pk.key_id)


def decrypt(sk, pk, c):
    _check_key(pk, c)
    if not 0 < c.value < pk.n_squared or math.gcd(c.value, pk.n_squared) != 1:
        raise MalformedCiphertextError("ciphertext is not a unit mod n^2")
    return _L(powmod(c.value, sk.lam, pk.n_squared), pk.n) * sk.mu % pk.n


def hom_add(pk, c1, c2):
    _check_key(pk, c1)
    _check_key(pk, c2)
    return PaillierCiphertext(c1.value * c2.value % pk.n_squared, pk.key_id)


def hom_scale(pk, c, k, rng=None):
    """Ciphertext of m*k mod n as c^k mod n^2; k = 0 returns a fresh encryption of 0."""
    _check_key(pk, c)
    if not 0 <= k < pk.n:
        raise PlaintextRangeError(f"scalar {k} outside [0, n)")
    if k == 0:
        return encrypt(pk, 0, rng)
    return PaillierCiphertext(powmod(c.value, k, pk.n_squared), pk.key_id)


def hom_scale_signed(pk, c, k):
    """Decryption-equivalent to ``hom_scale`` for a signed scalar of small magnitude.

    Negative k uses (c^-1)^|k|, so the exponent stays as short as |k| instead of
    the full width of n - |k|.  k = 0 yields the neutral ciphertext 1.
    """
    _check_key(pk, c)
    if k == 0:
        return PaillierCiphertext(1, pk.key_id)
    if k > 0:
        return PaillierCiphertext(powmod(c.value, k, pk.n_squared), pk.key_id)
    return PaillierCiphertext(powmod(invert(c.value, pk.n_squared), -k, pk.n_squared), pk.key_id)


def rerandomize(pk, c, rng=None):
    return hom_add(pk, c, encrypt(pk, 0, rng))
