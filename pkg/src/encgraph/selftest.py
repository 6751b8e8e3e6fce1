"""Fast invariant checks behind ``encgraph selftest``."""
import random
import traceback

import numpy as np

from . import dp, graphs, linalg, paillier, ring, rlwe, runtime, spectral, wire
from .fixedpoint import decode_fixed, encode_fixed


def _paillier(seed):
    pk, sk = paillier.keygen(256, seed=seed)
    rng = random.Random(seed)
    for _ in range(20):
        x, y = rng.randrange(pk.n), rng.randrange(pk.n)
        c = paillier.hom_add(pk, paillier.encrypt(pk, x, rng), paillier.encrypt(pk, y, rng))
        if paillier.decrypt(sk, pk, c) != (x + y) % pk.n:
            return False, "additive homomorphism"
        k = rng.randrange(pk.n)
        if paillier.decrypt(sk, pk, paillier.hom_scale(pk, paillier.encrypt(pk, x, rng), k, rng)) != x * k % pk.n:
            return False, "scalar homomorphism"
    return True, ""


def _ring(seed):
    rng = np.random.default_rng(seed)
    for n in (8, 64):
        q = ring.find_ntt_prime(30, n)
        a = rng.integers(0, q, n, dtype=np.uint64)
        b = rng.integers(0, q, n, dtype=np.uint64)
        if not np.array_equal(ring.mul(a, b, q), ring.mul_schoolbook(a, b, q)):
            return False, f"NTT product differs from schoolbook at N={n}"
    return True, ring.kernel_name()


def _rlwe(seed):
    params = rlwe.small_params()
    sk = rlwe.she_keygen(params, seed)
    rng = np.random.default_rng(seed)
    t = params.t
    for _ in range(20):
        n = [int(v) for v in rng.integers(0, t, 8)]
        enc = [rlwe.she_encrypt(sk, [(n[i] + n[i + 1]) % t], rng, support=1) for i in range(0, 8, 2)]
        c = rlwe.she_add(params, rlwe.she_mul(params, enc[0], enc[1]), rlwe.she_mul(params, enc[2], enc[3]))
        want = ((n[0] + n[1]) * (n[2] + n[3]) + (n[4] + n[5]) * (n[6] + n[7])) % t
        if int(rlwe.she_decrypt(sk, c)[0]) != want:
            return False, "degree-2 expression"
    return True, ""


def _fixedpoint(seed):
    for x in (0.0, 1.5, -2.25, 1e-3):
        v = encode_fixed(x, 20, 1 << 64)
        if abs(decode_fixed(v) - x) > 2**-21:
            return False, f"round trip of {x}"
    return True, ""


def _wire(seed):
    rng = random.Random(seed)
    for kind in wire.Kind:
        msg = wire.ProtocolMessage(kind, "g", bytes(16), bytes(rng.randrange(256) for _ in range(64)))
        if wire.parse_frame(wire.frame_message(msg)) != msg:
            return False, f"{kind.name} round trip"
    cloud = runtime.CloudAgent()
    reply = wire.parse_frame(cloud.handle_frame(b"PGS1\x01"))
    if reply.kind != wire.Kind.ERROR:
        return False, "truncated frame not rejected"
    return True, ""


def _dp(seed):
    rng = random.Random(seed)
    hist = dp.uniform_histogram(64, 2)
    ks = [dp.plan_dummies(hist, dp.DpParams(1.0), 0, 3, 64, rng).raw_count for _ in range(4000)]
    mean = sum(ks) / len(ks)
    return abs(mean - 3.9) < 0.3, f"mean raw K {mean:.3f}"


def _spectral(seed):
    a = graphs.adjacency(3, graphs.complete_graph(3))
    s = spectral.SessionState("k3", "power", 2)
    spectral.power_topk(s, spectral.PlainFixedPointOperator(a), np.random.default_rng(seed))
    vals = s.eigenvalues
    ok = abs(vals[0] - 2) < 1e-6 and abs(vals[1] + 1) < 1e-6
    return ok, f"K3 top-2 {vals}"


def _scenario(seed):
    sc = runtime.Scenario("self", 4, [(i, i, 1.0) for i in range(4)], k=1, key_bits=256, pool_size=2, seed=seed)
    rep = runtime.run_agents("in_process", sc).report
    return abs(rep["eigenvalues"][0] - 1) < 1e-6, f"identity graph lambda1 {rep['eigenvalues'][0]:.6f}"


def _linalg(seed):
    params = rlwe.mvm_params(16)
    sk = rlwe.she_keygen(params, seed)
    rng = np.random.default_rng(seed)
    u = [int(v) for v in rng.integers(-50, 51, 16)]
    v = [int(v) for v in rng.integers(-50, 51, 16)]
    cu = linalg.she_pack(sk, u, "forward", rng, max_abs=50)
    cv = linalg.she_pack(sk, v, "reversed", rng, max_abs=50)
    got = linalg.extract_dot(rlwe.she_decrypt(sk, linalg.she_dot_packed(params, cu, cv)), params)
    return got == sum(a * b for a, b in zip(u, v)), ""


CHECKS = [
    ("paillier", _paillier),
    ("ring_ntt", _ring),
    ("rlwe_degree2", _rlwe),
    ("fixedpoint", _fixedpoint),
    ("packed_dot", _linalg),
    ("wire", _wire),
    ("dp_dummies", _dp),
    ("spectral_k3", _spectral),
    ("scenario_identity", _scenario),
]


def run_all(seed=0):
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn(seed)
        except Exception as exc:  # report, keep going
            ok, detail = False, "".join(traceback.format_exception_only(type(exc), exc)).strip()
        out.append((name, bool(ok), detail))
    return out
