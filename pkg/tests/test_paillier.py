import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from encgraph import paillier
from encgraph.errors import (
    MalformedCiphertextError,
    ParameterError,
    PlaintextRangeError,
    WrongKeyError,
)

# 36^3 * 2^35 mod 35^2, computed once with plain integer arithmetic
TOY_CIPHERTEXT = 683


def test_toy_key_constants(toy_keys):
    pk, sk = toy_keys
    assert pk.n == 35 and pk.g == 36
    assert sk.lam == math.lcm(4, 6) == 12
    assert sk.mu == pow(12, -1, 35) == 3


def test_toy_encryption_fixture(toy_keys):
    pk, sk = toy_keys
    assert pow(36, 3, 1225) * pow(2, 35, 1225) % 1225 == TOY_CIPHERTEXT
    c = paillier.encrypt(pk, 3, r=2)
    assert c.value == TOY_CIPHERTEXT
    assert paillier.decrypt(sk, pk, c) == 3


def test_zero_with_unit_randomness_is_one(toy_keys):
    pk, _ = toy_keys
    assert paillier.encrypt(pk, 0, r=1).value == 1


def test_toy_exhaustive_round_trip(toy_keys):
    pk, sk = toy_keys
    for m in range(35):
        for r in (1, 2, 3, 4, 34):
            assert paillier.decrypt(sk, pk, paillier.encrypt(pk, m, r=r)) == m


def test_crt_encryption_matches_public_path(keys512):
    pk, sk = keys512
    rng = random.Random(5)
    for _ in range(20):
        m, r = rng.randrange(pk.n), rng.randrange(1, pk.n)
        assert paillier.encrypt(pk, m, r=r).value == paillier.encrypt(pk, m, r=r, sk=sk).value


def test_keygen_bits_and_round_trip():
    pk, sk = paillier.keygen(2048, seed=11)
    assert pk.n.bit_length() in (2047, 2048)
    rng = random.Random(0)
    for _ in range(100):
        m = rng.randrange(pk.n)
        assert paillier.decrypt(sk, pk, paillier.encrypt(pk, m, rng, sk=sk)) == m


def test_keygen_deterministic_under_seed():
    assert paillier.keygen(256, seed=9) == paillier.keygen(256, seed=9)
    assert paillier.keygen(256, seed=9)[0] != paillier.keygen(256, seed=10)[0]


def test_keygen_rejects_tiny_and_toy_without_flag():
    with pytest.raises(ParameterError):
        paillier.keygen(4, allow_toy=True)
    with pytest.raises(ParameterError):
        paillier.keygen(32)
    pk, _ = paillier.keygen(32, seed=1, allow_toy=True)
    assert pk.n.bit_length() in (31, 32)


def test_encryption_is_probabilistic(keys512):
    pk, sk = keys512
    rng = random.Random(3)
    a, b = paillier.encrypt(pk, 42, rng), paillier.encrypt(pk, 42, rng)
    assert a != b
    assert paillier.decrypt(sk, pk, a) == paillier.decrypt(sk, pk, b) == 42


def test_boundary_plaintexts(keys512):
    pk, sk = keys512
    assert paillier.decrypt(sk, pk, paillier.encrypt(pk, pk.n - 1)) == pk.n - 1
    with pytest.raises(PlaintextRangeError):
        paillier.encrypt(pk, pk.n)
    with pytest.raises(PlaintextRangeError):
        paillier.encrypt(pk, -1)


def test_thousand_round_trips(keys512):
    pk, sk = keys512
    rng = random.Random(8)
    for _ in range(1000):
        m = rng.randrange(pk.n)
        assert paillier.decrypt(sk, pk, paillier.encrypt(pk, m, rng, sk=sk)) == m


def test_hom_add_examples(keys512):
    pk, sk = keys512
    e = lambda m: paillier.encrypt(pk, m)
    assert paillier.decrypt(sk, pk, paillier.hom_add(pk, e(0), e(0))) == 0
    assert paillier.decrypt(sk, pk, paillier.hom_add(pk, e(3), e(pk.n - 1))) == 2


def test_hom_scale_examples(keys512):
    pk, sk = keys512
    c = paillier.encrypt(pk, 77)
    assert paillier.decrypt(sk, pk, paillier.hom_scale(pk, c, 1)) == 77
    zero = paillier.hom_scale(pk, c, 0)
    assert paillier.decrypt(sk, pk, zero) == 0
    assert zero.value != 1  # re-randomized, not the trivial ciphertext
    with pytest.raises(PlaintextRangeError):
        paillier.hom_scale(pk, c, pk.n)


@given(st.integers(min_value=-(1 << 40), max_value=1 << 40), st.integers(min_value=0, max_value=1 << 60))
def test_signed_scale_matches_modular_scale(keys512, k, m):
    pk, sk = keys512
    c = paillier.encrypt(pk, m % pk.n)
    got = paillier.decrypt(sk, pk, paillier.hom_scale_signed(pk, c, k))
    assert got == m * k % pk.n


@given(st.data())
def test_add_commutative_associative(keys512, data):
    pk, sk = keys512
    ms = [data.draw(st.integers(min_value=0, max_value=pk.n - 1)) for _ in range(3)]
    a, b, c = (paillier.encrypt(pk, m) for m in ms)
    add = lambda x, y: paillier.hom_add(pk, x, y)
    want = sum(ms) % pk.n
    assert paillier.decrypt(sk, pk, add(add(a, b), c)) == want
    assert paillier.decrypt(sk, pk, add(a, add(b, c))) == want
    assert paillier.decrypt(sk, pk, add(c, add(b, a))) == want


@given(st.integers(min_value=1, max_value=50), st.integers(min_value=0, max_value=1 << 64))
def test_repeated_add_equals_scale(keys512, y, x):
    pk, sk = keys512
    c = paillier.encrypt(pk, x % pk.n)
    acc = c
    for _ in range(y - 1):
        acc = paillier.hom_add(pk, acc, c)
    assert paillier.decrypt(sk, pk, acc) == paillier.decrypt(sk, pk, paillier.hom_scale(pk, c, y))


@given(st.integers(min_value=1))
def test_ciphertext_bytes_round_trip(keys512, v):
    pk, _ = keys512
    c = paillier.PaillierCiphertext(v % pk.n_squared or 1, pk.key_id)
    assert paillier.PaillierCiphertext.from_bytes(c.to_bytes()) == c


def test_wire_form_layout(toy_keys):
    pk, _ = toy_keys
    blob = paillier.encrypt(pk, 3, r=2).to_bytes()
    assert blob[0] == 0x01
    assert blob[1:9] == pk.key_id
    assert int.from_bytes(blob[9:13], "big") == 2
    assert int.from_bytes(blob[13:], "big") == TOY_CIPHERTEXT


def test_malformed_blobs_rejected(toy_keys):
    pk, _ = toy_keys
    blob = paillier.encrypt(pk, 3, r=2).to_bytes()
    for bad in (blob[:5], b"\x02" + blob[1:], blob + b"\x00", blob[:-1]):
        with pytest.raises(MalformedCiphertextError):
            paillier.PaillierCiphertext.from_bytes(bad)


def test_wrong_key_and_non_unit(keys512, toy_keys):
    pk, sk = keys512
    other, _ = paillier.keygen(512, seed=99)
    c = paillier.encrypt(other, 5)
    with pytest.raises(WrongKeyError):
        paillier.decrypt(sk, pk, c)
    with pytest.raises(WrongKeyError):
        paillier.hom_add(pk, c, paillier.encrypt(pk, 1))
    tpk, tsk = toy_keys
    with pytest.raises(MalformedCiphertextError):
        paillier.decrypt(tsk, tpk, paillier.PaillierCiphertext(5, tpk.key_id))


def test_key_json_round_trip(keys512):
    pk, sk = keys512
    doc = pk.to_json()
    assert '"scheme": "paillier"' in doc
    assert paillier.PaillierPublicKey.from_json(doc) == pk
    assert paillier.PaillierSecretKey.from_json(sk.to_json()) == sk
    with pytest.raises(ParameterError):
        paillier.PaillierPublicKey.from_json('{"scheme": "rlwe", "n": "23", "bits": 6}')


def test_rerandomize_keeps_plaintext(keys512):
    pk, sk = keys512
    c = paillier.encrypt(pk, 1234)
    d = paillier.rerandomize(pk, c)
    assert d != c and paillier.decrypt(sk, pk, d) == 1234
