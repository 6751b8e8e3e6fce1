"""Contributor, owner and cloud agents talking over the framed protocol.

The cloud is built from a ``CloudConfig`` and a store only; it never holds
key material.  Contributors know the owner's Paillier public key and the
published degree histogram.  For SHE graphs they submit AHE-encrypted rows
to the owner, who decrypts once, re-encrypts the rows as packed RLWE
ciphertexts and uploads those.
"""
import functools
import hashlib
import random
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import dp, linalg, paillier, rlwe, spectral
from .errors import (
    BudgetError,
    DimensionError,
    FrameError,
    ParameterError,
    PlanError,
    ProtocolError,
    ScenarioError,
)
from .fixedpoint import MagnitudeBudget, budget_check, from_residue, quantize, to_residue
from .graphs import neighbor_rows
from .store import (
    SCHEME_AHE,
    SCHEME_SHE,
    STORAGE_DENSE,
    STORAGE_DP_SPARSE,
    STORAGE_PACKED,
    EncryptedGraphStore,
    GraphMeta,
)
from .wire import (
    NO_SESSION,
    RESPONSE_KIND,
    Kind,
    ProtocolMessage,
    error_message,
    frame_message,
    pack_payload,
    parse_frame,
    read_frame,
    unpack_payload,
)

AHE_WEIGHT_SCALE = 20
AHE_VECTOR_SCALE = 20
SHE_WEIGHT_SCALE = 0
SHE_MAX_VECTOR_SCALE = 16
SUBMIT_SCALE = 20


# -- cloud ----------------------------------------------------------------------


@dataclass(frozen=True)
class CloudConfig:
    """Everything the cloud is configured with.  Deliberately key-free."""

    name: str = "cloud"
    store_root: str = None


class CloudAgent:
    def __init__(self, config=None, store=None):
        self.config = config or CloudConfig()
        self.store = store or EncryptedGraphStore()
        self._lock = threading.Lock()
        self._sessions = {}
        self._cache = {}
        self.requests_handled = 0

    def handle_frame(self, data):
        """Bytes in, bytes out.  Never raises: malformed input gets an ERROR frame."""
        try:
            msg = parse_frame(data)
        except FrameError as exc:
            return frame_message(error_message(None, exc, exc.offset))
        except Exception as exc:  # pragma: no cover - defensive
            return frame_message(error_message(None, exc))
        return frame_message(self.handle(msg))

    def handle(self, msg):
        self.requests_handled += 1
        try:
            if msg.kind not in RESPONSE_KIND:
                raise ProtocolError(f"{msg.kind.name} is not a request kind")
            manifest, blobs = unpack_payload(msg.payload)
            if msg.kind == Kind.ANALYZE_META:
                return self._meta(msg, manifest)
            if msg.kind == Kind.SUBMIT_ROW:
                return self._submit(msg, manifest, blobs)
            return self._mvm(msg, manifest, blobs)
        except Exception as exc:
            return error_message(msg, exc, getattr(exc, "offset", None))

    def _reply(self, msg, kind, manifest, blobs=()):
        return ProtocolMessage(kind, msg.graph_id, msg.session_id, pack_payload(manifest, blobs))

    def _meta(self, msg, manifest):
        op = manifest.get("op")
        gid = msg.graph_id
        if op == "register":
            self.store.register(gid, GraphMeta.from_dict(manifest["meta"]))
            return self._reply(msg, Kind.ANALYZE_META, {"op": "registered"})
        if op == "get":
            meta = self.store.meta(gid)
            return self._reply(
                msg,
                Kind.ANALYZE_META,
                {
                    "op": "meta",
                    "meta": meta.to_dict(),
                    "entries": self.store.size(gid),
                    "bytes_stored": self.store.bytes_stored(gid),
                },
            )
        if op == "open_session":
            self.store.meta(gid)
            with self._lock:
                self._sessions[msg.session_id] = {"graph_id": gid, "lock": threading.Lock()}
            return self._reply(msg, Kind.ANALYZE_META, {"op": "session_opened"})
        if op == "close_session":
            with self._lock:
                self._sessions.pop(msg.session_id, None)
            return self._reply(msg, Kind.ANALYZE_META, {"op": "session_closed"})
        if op == "persist":
            if not self.config.store_root:
                raise ParameterError("cloud has no store directory configured")
            self.store.save(self.config.store_root)
            return self._reply(msg, Kind.ANALYZE_META, {"op": "persisted"})
        raise ProtocolError(f"unknown meta operation {op!r}")

    def _submit(self, msg, manifest, blobs):
        keys = manifest.get("keys")
        if not isinstance(keys, list) or len(keys) != len(blobs):
            raise ProtocolError("SUBMIT_ROW needs one key per blob")
        meta = self.store.meta(msg.graph_id)
        if meta.storage == STORAGE_PACKED:
            norm = [int(k) for k in keys]
        else:
            norm = [(int(k[0]), int(k[1])) for k in keys]
        n = self.store.put_many(msg.graph_id, list(zip(norm, blobs)), manifest.get("scheme"))
        return self._reply(msg, Kind.SUBMIT_ACK, {"stored": n})

    def _session(self, msg):
        with self._lock:
            sess = self._sessions.get(msg.session_id)
        if sess is None or sess["graph_id"] != msg.graph_id:
            raise ProtocolError("unknown session")
        return sess

    def _matrix(self, gid):
        """Deserialized ciphertexts for a graph, rebuilt whenever the store changes."""
        version = self.store.version(gid)
        with self._lock:
            hit = self._cache.get(gid)
            if hit and hit[0] == version:
                return hit[1]
        meta = self.store.meta(gid)
        entries = self.store.entries(gid)
        if meta.scheme == SCHEME_AHE:
            pk = meta.public_key()
            data = {}
            for key, blob in entries.items():
                ct = paillier.PaillierCiphertext.from_bytes(blob)
                if ct.key_id != pk.key_id:
                    raise ProtocolError(f"entry {key} was encrypted under another key")
                data[key] = ct
            built = (pk, linalg.EncMatrix(linalg.AHE, meta.n, meta.n, linalg.SPARSE, data,
                                          symmetric=meta.symmetric, scale_exp=meta.scale_exp))
        else:
            params = meta.she_params()
            if len(entries) != meta.n:
                raise ProtocolError(f"graph has {len(entries)} of {meta.n} packed rows")
            built = (params, [rlwe.ShCiphertext.from_bytes(entries[r], params) for r in range(meta.n)])
        with self._lock:
            self._cache[gid] = (version, built)
        return built

    def _mvm(self, msg, manifest, blobs):
        sess = self._session(msg)
        meta = self.store.meta(msg.graph_id)
        with sess["lock"]:
            if meta.scheme == SCHEME_AHE:
                vectors = manifest.get("vectors")
                if not isinstance(vectors, list) or blobs:
                    raise ProtocolError("AHE MVM expects plaintext vectors in the manifest")
                pk, mat = self._matrix(msg.graph_id)
                out = []
                for x in vectors:
                    if not isinstance(x, list) or len(x) != meta.n:
                        raise DimensionError(f"query length {len(x) if isinstance(x, list) else '?'} != N={meta.n}")
                    if not all(isinstance(v, int) and 2 * abs(v) < pk.n for v in x):
                        raise ProtocolError("query entries must be integers below n/2")
                    out.extend(c.to_bytes() for c in linalg.ahe_mvm(pk, mat, x).entries)
                return self._reply(msg, Kind.MVM_RESPONSE, {"count": len(vectors), "dim": meta.n}, out)
            params, rows = self._matrix(msg.graph_id)
            out = []
            for blob in blobs:
                cx = rlwe.ShCiphertext.from_bytes(blob, params)
                out.extend(c.to_bytes() for c in linalg.she_mvm(params, rows, cx))
            return self._reply(msg, Kind.MVM_RESPONSE, {"count": len(blobs), "dim": meta.n}, out)


# -- transports -------------------------------------------------------------------


class InProcessTransport:
    """Hands frames straight to a cloud agent, still going through bytes."""

    def __init__(self, cloud):
        self.cloud = cloud

    def exchange(self, frame):
        return self.cloud.handle_frame(frame)

    def close(self):
        pass


class TcpTransport:
    def __init__(self, host, port, timeout=300.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.rfile = self.sock.makefile("rb")

    def exchange(self, frame):
        self.sock.sendall(frame)
        try:
            return frame_message(read_frame(self.rfile))
        except EOFError:
            raise ProtocolError("cloud closed the connection") from None

    def close(self):
        try:
            self.rfile.close()
            self.sock.close()
        except OSError:
            pass


class _FrameHandler(socketserver.StreamRequestHandler):
    def handle(self):
        cloud = self.server.cloud
        while True:
            try:
                msg = read_frame(self.rfile)
            except EOFError:
                return
            except FrameError as exc:
                # the stream cannot be resynchronized after a bad frame
                self.wfile.write(frame_message(error_message(None, exc, exc.offset)))
                return
            except OSError:
                return
            self.wfile.write(frame_message(cloud.handle(msg)))
            self.wfile.flush()


class CloudServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, cloud, host="127.0.0.1", port=0):
        self.cloud = cloud
        super().__init__((host, port), _FrameHandler)

    @property
    def address(self):
        return self.server_address[:2]

    def start(self):
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread

    def stop(self):
        self.shutdown()
        self.server_close()


# -- transcript -------------------------------------------------------------------


@dataclass
class TranscriptEntry:
    seq: int
    ts: float
    sender: str
    receiver: str
    frame: bytes = field(repr=False)
    reply_to: int = None

    @property
    def message(self):
        return parse_frame(self.frame)

    @property
    def kind(self):
        return self.message.kind


class Transcript:
    def __init__(self):
        self.entries = []
        self._lock = threading.Lock()

    def record(self, sender, receiver, frame, reply_to=None):
        with self._lock:
            e = TranscriptEntry(len(self.entries), time.time(), sender, receiver, bytes(frame), reply_to)
            self.entries.append(e)
            return e.seq

    def comparable(self):
        """Everything except timestamps."""
        return [(e.seq, e.sender, e.receiver, e.frame, e.reply_to) for e in self.entries]

    def requests(self):
        return [e for e in self.entries if e.reply_to is None]

    def responses_to(self, seq):
        return [e for e in self.entries if e.reply_to == seq]

    def is_complete(self):
        return all(len(self.responses_to(e.seq)) == 1 for e in self.requests())

    def to_records(self):
        return [
            {
                "seq": e.seq,
                "ts": e.ts,
                "sender": e.sender,
                "receiver": e.receiver,
                "reply_to": e.reply_to,
                "kind": e.kind.name,
                "frame": e.frame.hex(),
            }
            for e in self.entries
        ]


class Endpoint:
    """One agent's view of a peer: frames requests, records both directions."""

    def __init__(self, transport, transcript, sender, receiver="cloud"):
        self.transport = transport
        self.transcript = transcript
        self.sender = sender
        self.receiver = receiver

    def call(self, kind, graph_id, manifest, blobs=(), session_id=NO_SESSION):
        msg = ProtocolMessage(kind, graph_id, session_id, pack_payload(manifest, blobs))
        frame = frame_message(msg)
        seq = self.transcript.record(self.sender, self.receiver, frame)
        reply = self.transport.exchange(frame)
        self.transcript.record(self.receiver, self.sender, reply, reply_to=seq)
        resp = parse_frame(reply)
        rman, rblobs = unpack_payload(resp.payload)
        if resp.kind == Kind.ERROR:
            raise ProtocolError(f"{self.receiver} answered {rman.get('error')}: {rman.get('message')}")
        if resp.kind != RESPONSE_KIND[kind]:
            raise ProtocolError(f"expected {RESPONSE_KIND[kind].name}, got {resp.kind.name}")
        return rman, rblobs


# -- owner side -------------------------------------------------------------------


@dataclass
class OwnerKeys:
    ahe_pk: paillier.PaillierPublicKey
    ahe_sk: paillier.PaillierSecretKey
    she_sk: rlwe.ShSecretKey = None


@functools.lru_cache(maxsize=16)
def _cached_paillier(bits, seed):
    return paillier.keygen(bits, seed=seed, allow_toy=bits < 64)


def owner_keys(key_bits, seed, she_params=None):
    pk, sk = _cached_paillier(key_bits, seed)
    she_sk = rlwe.she_keygen(she_params, seed) if she_params is not None else None
    return OwnerKeys(pk, sk, she_sk)


def she_vector_scale(params, n_nodes, weight_raw_bound, max_scale=SHE_MAX_VECTOR_SCALE):
    """Largest vector scale whose packed dot products fit below t/2 and the noise budget."""
    for vs in range(max_scale, -1, -1):
        bound = 1 << vs
        if 2 * n_nodes * weight_raw_bound * bound >= params.t:
            continue
        row = rlwe.NoiseBound(weight_raw_bound, weight_raw_bound * n_nodes, params.error_bound,
                              params.error_bound * params.N)
        vec = rlwe.NoiseBound(bound, bound * n_nodes, params.error_bound, params.error_bound * params.N)
        if 2 * row.times(vec, params.t).value_bound(params.t) < params.q:
            return vs
    raise BudgetError("no vector scale keeps a packed product inside the SHE budget")


class RemoteAheRound:
    """Unmasked AHE round: plaintext raws out, decrypted exact integers back."""

    def __init__(self, endpoint, keys, graph_id, session_id, dim, weight_scale, vector_scale):
        self.endpoint = endpoint
        self.keys = keys
        self.graph_id = graph_id
        self.session_id = session_id
        self.dim = dim
        self.weight_scale = weight_scale
        self.vector_scale = vector_scale
        self.kind = Kind.MVM_REQUEST

    def mvm_batch(self, xs, kind=None):
        pk, sk = self.keys.ahe_pk, self.keys.ahe_sk
        manifest = {"vectors": [[int(v) for v in x] for x in xs]}
        rman, blobs = self.endpoint.call(kind or self.kind, self.graph_id, manifest, session_id=self.session_id)
        if rman.get("count") != len(xs) or len(blobs) != len(xs) * self.dim:
            raise ProtocolError("MVM response has the wrong shape")
        vals = [from_residue(paillier.decrypt(sk, pk, paillier.PaillierCiphertext.from_bytes(b)), pk.n) for b in blobs]
        return [vals[i * self.dim : (i + 1) * self.dim] for i in range(len(xs))]


class RemoteSheOperator:
    def __init__(self, endpoint, keys, graph_id, session_id, dim, weight_scale, vector_scale, rng):
        self.endpoint = endpoint
        self.sk = keys.she_sk
        self.graph_id = graph_id
        self.session_id = session_id
        self.dim = dim
        self.weight_scale = weight_scale
        self.vector_scale = vector_scale
        self.rng = rng

    def mvm_batch(self, xs):
        params = self.sk.params
        cts = [linalg.she_pack(self.sk, x, "forward", self.rng, max_abs=1 << self.vector_scale).to_bytes() for x in xs]
        rman, blobs = self.endpoint.call(Kind.MVM_REQUEST, self.graph_id, {"encrypted": True}, cts,
                                         session_id=self.session_id)
        if rman.get("count") != len(xs) or len(blobs) != len(xs) * self.dim:
            raise ProtocolError("MVM response has the wrong shape")
        vals = [
            linalg.extract_dot(rlwe.she_decrypt(self.sk, rlwe.ShCiphertext.from_bytes(b, params)), params)
            for b in blobs
        ]
        return [vals[i * self.dim : (i + 1) * self.dim] for i in range(len(xs))]


class OwnerAgent:
    def __init__(self, scenario, keys, endpoint):
        self.sc = scenario
        self.keys = keys
        self.cloud = endpoint
        self.n = scenario.n_nodes
        self.histogram = dp.uniform_histogram(self.n, scenario.hist_width)
        self.inbox = {}
        self.pool = None
        self.mask_log = []
        self.session = None
        self._sessions_opened = 0
        # solver draws stay on their own stream so a plaintext run with the same
        # seed replays them exactly; masking and encryption randomness live apart
        self.np_rng = np.random.default_rng(scenario.seed)
        self.mask_rng = np.random.default_rng([scenario.seed, 1])
        self.weight_bound = max([abs(w) for _, _, w in scenario.edges] + [1.0])

    # graph setup

    def meta(self):
        sc = self.sc
        if sc.backend == "ahe":
            return GraphMeta(
                n=self.n,
                scheme=SCHEME_AHE,
                storage=sc.storage,
                scale_exp=sc.weight_scale,
                symmetric=sc.storage == STORAGE_DP_SPARSE,
                histogram=self.histogram.to_dict() if sc.storage == STORAGE_DP_SPARSE else None,
                public=self.keys.ahe_pk.to_json(),
                weight_bound=self.weight_bound,
            )
        return GraphMeta(
            n=self.n,
            scheme=SCHEME_SHE,
            storage=STORAGE_PACKED,
            scale_exp=sc.weight_scale,
            symmetric=True,
            histogram=None,
            public=self.keys.she_sk.params.to_json(),
            weight_bound=self.weight_bound,
            extra={"submission": sc.storage},
        )

    def register(self):
        self.cloud.call(Kind.ANALYZE_META, self.sc.graph_id, {"op": "register", "meta": self.meta().to_dict()})

    def receive(self, frame):
        """Owner endpoint for SHE-path contributors: keep AHE rows for transcoding."""
        msg = parse_frame(frame)
        try:
            manifest, blobs = unpack_payload(msg.payload)
            if msg.kind != Kind.SUBMIT_ROW:
                raise ProtocolError(f"owner accepts SUBMIT_ROW only, got {msg.kind.name}")
            pk, sk = self.keys.ahe_pk, self.keys.ahe_sk
            for key, blob in zip(manifest["keys"], blobs):
                key = (int(key[0]), int(key[1]))
                if key in self.inbox and self.sc.storage == STORAGE_DP_SPARSE:
                    raise PlanError(f"duplicate submission for entry {key}")
                ct = paillier.PaillierCiphertext.from_bytes(blob)
                self.inbox[key] = from_residue(paillier.decrypt(sk, pk, ct), pk.n)
            return frame_message(ProtocolMessage(Kind.SUBMIT_ACK, msg.graph_id, msg.session_id,
                                                 pack_payload({"stored": len(blobs)})))
        except Exception as exc:
            return frame_message(error_message(msg, exc))

    def transcode_and_upload(self):
        """Turn received AHE rows into packed SHE rows and store them at the cloud."""
        sc = self.sc
        w = np.zeros((self.n, self.n))
        for (a, b), raw in self.inbox.items():
            v = raw * 2.0**-SUBMIT_SCALE
            w[a, b] = v
            if sc.storage == STORAGE_DP_SPARSE:
                w[b, a] = v
        rng = np.random.default_rng([sc.seed, 7])
        bound = quantize(self.weight_bound, sc.weight_scale)
        for a in range(self.n):
            row = [quantize(v, sc.weight_scale) for v in w[a]]
            ct = linalg.she_pack(self.keys.she_sk, row, "reversed", rng, max_abs=bound)
            self.cloud.call(Kind.SUBMIT_ROW, sc.graph_id, {"scheme": SCHEME_SHE, "keys": [a]}, [ct.to_bytes()])

    def stored_bytes(self):
        rman, _ = self.cloud.call(Kind.ANALYZE_META, self.sc.graph_id, {"op": "get"})
        return rman["bytes_stored"], rman["entries"]

    # analysis

    def _session_id(self):
        self._sessions_opened += 1
        tag = f"{self.sc.seed}:{self.sc.graph_id}:{self._sessions_opened}".encode()
        return hashlib.sha256(tag).digest()[:16]

    def open_session(self):
        sid = self._session_id()
        self.cloud.call(Kind.ANALYZE_META, self.sc.graph_id, {"op": "open_session"}, session_id=sid)
        return sid

    def close_session(self, sid):
        self.cloud.call(Kind.ANALYZE_META, self.sc.graph_id, {"op": "close_session"}, session_id=sid)

    def operator(self, sid):
        sc = self.sc
        if sc.backend == "ahe":
            gs = spectral.DEFAULT_MASK_SCALE
            pk = self.keys.ahe_pk
            wb = MagnitudeBudget(self.weight_bound, sc.weight_scale)
            xb = MagnitudeBudget(1 + sc.pool_size * spectral.DEFAULT_MASK_BOUND, sc.vector_scale + gs)
            budget_check(wb, "dot", pk.n, other=xb, terms=self.n)
            rnd = RemoteAheRound(self.cloud, self.keys, sc.graph_id, sid, self.n, sc.weight_scale,
                                 sc.vector_scale + gs)
            self.pool = spectral.preprocess_pool(
                lambda vs: rnd.mvm_batch(vs, kind=Kind.POOL_REQUEST), self.n, sc.pool_size,
                sc.vector_scale, self.mask_rng,
            )
            op = spectral.MaskedOperator(rnd, self.pool, self.mask_rng)
            self.mask_log = op.log
            return op
        return RemoteSheOperator(self.cloud, self.keys, sc.graph_id, sid, self.n, sc.weight_scale,
                                 sc.vector_scale, self.mask_rng)

    def analyze(self):
        sc = self.sc
        sid = self.open_session()
        self.session = spectral.SessionState(sc.graph_id, sc.method, sc.k, sc.tol, sc.max_iter)
        t0 = time.perf_counter()
        op = self.operator(sid)
        report = spectral.analyze(self.session, op, self.np_rng, sc.backend, steps=sc.steps)
        report["wall_time_ms"] = (time.perf_counter() - t0) * 1000.0
        if self.pool is not None:
            # the preprocessing round is a cloud round too
            report["mvm_rounds"] += 1
        self.close_session(sid)
        return report


# -- contributors -----------------------------------------------------------------


class ContributorAgent:
    def __init__(self, name, rows, scenario, pk, histogram, endpoint):
        self.name = name
        self.rows = rows
        self.sc = scenario
        self.pk = pk
        self.histogram = histogram
        self.endpoint = endpoint
        self.rng = random.Random(f"{scenario.seed}:{name}")
        self.plans = {}

    def submit(self, neighbors):
        sc = self.sc
        scale = SUBMIT_SCALE if sc.backend == "she" else sc.weight_scale
        for a in self.rows:
            nb = neighbors[a]
            if sc.storage == STORAGE_DENSE:
                items = [
                    ((a, b), paillier.encrypt(self.pk, to_residue(quantize(nb.get(b, 0.0), scale), self.pk.n), self.rng))
                    for b in range(sc.n_nodes)
                ]
            else:
                plan = dp.plan_dummies(self.histogram, dp.DpParams(sc.dp_epsilon), a, len(nb), sc.n_nodes,
                                       self.rng, neighbors=nb.keys(), undirected=True,
                                       allow_self_loops=False)
                if sc.inject_collision and any(b >= a for b in nb):
                    clash = min(b for b in nb if b >= a)
                    plan.dummy_positions = plan.dummy_positions | {clash}
                self.plans[a] = plan
                items = dp.submit_row(a, sorted(nb.items()), plan, self.pk, self.rng, undirected=True,
                                      scale_exp=scale)
            if not items:
                continue
            keys = [list(k) for k, _ in items]
            self.endpoint.call(Kind.SUBMIT_ROW, sc.graph_id, {"scheme": SCHEME_AHE, "keys": keys, "row": a},
                               [c.to_bytes() for _, c in items])


class _OwnerTransport:
    def __init__(self, owner):
        self.owner = owner

    def exchange(self, frame):
        return self.owner.receive(frame)

    def close(self):
        pass


# -- scenarios --------------------------------------------------------------------


@dataclass
class Scenario:
    graph_id: str
    n_nodes: int
    edges: list
    backend: str = "ahe"
    storage: str = STORAGE_DP_SPARSE
    method: str = "power"
    k: int = 1
    tol: float = 1e-6
    max_iter: int = 500
    pool_size: int = 8
    dp_epsilon: float = 1.0
    hist_width: int = 2
    key_bits: int = 1024
    seed: int = 0
    contributors: int = 1
    weight_scale: int = None
    vector_scale: int = None
    steps: int = None
    analyze: bool = True
    inject_collision: bool = False

    def __post_init__(self):
        if self.backend not in ("ahe", "she"):
            raise ParameterError(f"unknown backend {self.backend!r}")
        if self.storage not in (STORAGE_DENSE, STORAGE_DP_SPARSE):
            raise ParameterError(f"unknown storage mode {self.storage!r}")
        if self.contributors < 1:
            raise ParameterError("need at least one contributor")
        if self.weight_scale is None:
            self.weight_scale = AHE_WEIGHT_SCALE if self.backend == "ahe" else SHE_WEIGHT_SCALE
        for a, b, _ in self.edges:
            if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes):
                raise DimensionError(f"edge ({a}, {b}) outside a {self.n_nodes}-node graph")

    def she_params(self):
        return rlwe.mvm_params(self.n_nodes)


@dataclass
class ScenarioResult:
    transcript: Transcript
    report: dict
    owner: OwnerAgent
    contributors: list
    bytes_stored: int
    entries: int
    submit_ms: float
    analyze_ms: float


def _prepare_scales(sc):
    if sc.vector_scale is not None:
        return
    if sc.backend == "ahe":
        sc.vector_scale = AHE_VECTOR_SCALE
    else:
        wb = max([abs(w) for _, _, w in sc.edges] + [1.0])
        sc.vector_scale = she_vector_scale(sc.she_params(), sc.n_nodes, quantize(wb, sc.weight_scale))


def run_agents(topology, scenario, keys=None):
    """Submit, preprocess and analyze one scenario end to end.

    ``topology`` is "in_process", "tcp" (a local server on an ephemeral
    port) or ("tcp", (host, port)) for an already running cloud.
    """
    sc = scenario
    _prepare_scales(sc)
    transcript = Transcript()
    server = None
    transports = []
    cloud = None

    def connect():
        if topology == "in_process":
            t = InProcessTransport(cloud)
        else:
            t = TcpTransport(*addr)
        transports.append(t)
        return t

    if topology == "in_process":
        cloud = CloudAgent()
    elif topology == "tcp":
        cloud = CloudAgent()
        server = CloudServer(cloud)
        server.start()
        addr = server.address
    elif isinstance(topology, tuple) and topology[0] == "tcp":
        addr = tuple(topology[1])
    else:
        raise ParameterError(f"unknown topology {topology!r}")

    stage = "owner"
    try:
        if keys is None:
            keys = owner_keys(sc.key_bits, sc.seed, sc.she_params() if sc.backend == "she" else None)
        owner = OwnerAgent(sc, keys, Endpoint(connect(), transcript, "owner"))
        owner.register()
        rows = neighbor_rows(sc.n_nodes, sc.edges)
        contributors = []
        for i in range(sc.contributors):
            name = f"contributor-{i}"
            if sc.backend == "ahe":
                ep = Endpoint(connect(), transcript, name)
            else:
                ep = Endpoint(_OwnerTransport(owner), transcript, name, receiver="owner")
            contributors.append(
                ContributorAgent(name, list(range(i, sc.n_nodes, sc.contributors)), sc, keys.ahe_pk,
                                 owner.histogram, ep)
            )
        t0 = time.perf_counter()
        for c in contributors:
            stage = c.name
            c.submit(rows)
        stage = "owner"
        if sc.backend == "she":
            owner.transcode_and_upload()
        submit_ms = (time.perf_counter() - t0) * 1000.0
        bytes_stored, n_entries = owner.stored_bytes()
        report = None
        analyze_ms = 0.0
        if sc.analyze:
            t0 = time.perf_counter()
            report = owner.analyze()
            analyze_ms = (time.perf_counter() - t0) * 1000.0
        return ScenarioResult(transcript, report, owner, contributors, bytes_stored, n_entries,
                              submit_ms, analyze_ms)
    except Exception as exc:
        raise ScenarioError(f"{stage} failed: {type(exc).__name__}: {exc}", transcript) from exc
    finally:
        for t in transports:
            t.close()
        if server is not None:
            server.stop()


def owner_matrix_raw(scenario):
    """The fixed-point matrix the cloud effectively holds, for plaintext references."""
    _prepare_scales(scenario)
    a = np.zeros((scenario.n_nodes, scenario.n_nodes))
    for u, v, w in scenario.edges:
        a[u, v] = w
        a[v, u] = w
    return [[quantize(x, scenario.weight_scale) for x in row] for row in a]


def masking_violations(transcript, owner, matrix_raw=None):
    """Check every cloud-visible AHE query against the owner's masking secrets.

    Returns a list of human-readable violations (empty when the property
    holds): each MVM_REQUEST vector must equal x * 2^g + sum_j gamma_j r_j
    for the logged iterate x, differ from x, and the unmasked result must be
    exact.  Rank-based membership in span(pool) is checked too, and with
    ``matrix_raw`` every unmasked result is compared to A x in integers.
    """
    problems = []
    pool = owner.pool
    if pool is None:
        return problems
    gs = spectral.DEFAULT_MASK_SCALE
    seen = []
    for e in transcript.entries:
        if e.sender != "owner" or e.reply_to is not None:
            continue
        msg = e.message
        if msg.kind != Kind.MVM_REQUEST:
            continue
        manifest, _ = unpack_payload(msg.payload)
        seen.extend(manifest["vectors"])
    if len(seen) != len(owner.mask_log):
        problems.append(f"{len(seen)} queries on the wire but {len(owner.mask_log)} logged")
    basis = np.array(pool.vectors, dtype=float).T
    for i, (x_hat, entry) in enumerate(zip(seen, owner.mask_log)):
        x, gamma = entry["x"], entry["gamma"]
        diff = [h - (v << gs) for h, v in zip(x_hat, x)]
        expect = [sum(g * r[j] for g, r in zip(gamma, pool.vectors)) for j in range(len(x))]
        if diff != expect or x_hat != entry["x_hat"]:
            problems.append(f"query {i}: difference is not the logged pool combination")
        if any(gamma) and (x_hat == [v << gs for v in x] or x_hat == list(x)):
            problems.append(f"query {i}: iterate sent in the clear")
        if matrix_raw is not None:
            ax = [sum(a * v for a, v in zip(row, x)) for row in matrix_raw]
            if ax != entry["y"]:
                problems.append(f"query {i}: unmasked result differs from A x")
        d = np.array(diff, dtype=float)
        coef, *_ = np.linalg.lstsq(basis, d, rcond=None)
        if np.linalg.norm(basis @ coef - d) > 1e-6 * max(1.0, np.linalg.norm(d)):
            problems.append(f"query {i}: difference leaves span(pool)")
    return problems


def submit_remote(addr, scenario, pk, she_sk=None, ahe_sk=None):
    """Register and submit a graph to a running TCP cloud without analyzing it."""
    scenario.analyze = False
    keys = OwnerKeys(pk, ahe_sk, she_sk)
    return run_agents(("tcp", addr), scenario, keys=keys)


def analyze_remote(addr, graph_id, keys, method="power", k=1, tol=1e-6, max_iter=500, pool_size=8,
                   seed=0, steps=None):
    """Analyze a graph already stored at a TCP cloud; returns (report, transcript)."""
    transcript = Transcript()
    transport = TcpTransport(*addr)
    try:
        ep = Endpoint(transport, transcript, "owner")
        rman, _ = ep.call(Kind.ANALYZE_META, graph_id, {"op": "get"})
        meta = GraphMeta.from_dict(rman["meta"])
        backend = "ahe" if meta.scheme == SCHEME_AHE else "she"
        if backend == "she" and keys.she_sk is None:
            raise ParameterError("graph is SHE-encrypted but no SHE secret key was given")
        sc = Scenario(graph_id, meta.n, [], backend=backend,
                      storage=meta.extra.get("submission", meta.storage), method=method, k=k, tol=tol,
                      max_iter=max_iter, pool_size=pool_size, seed=seed, weight_scale=meta.scale_exp,
                      steps=steps)
        if backend == "ahe":
            sc.vector_scale = AHE_VECTOR_SCALE
        else:
            sc.vector_scale = she_vector_scale(keys.she_sk.params, meta.n, quantize(meta.weight_bound, meta.scale_exp))
        owner = OwnerAgent(sc, keys, ep)
        owner.weight_bound = meta.weight_bound
        return owner.analyze(), transcript
    finally:
        transport.close()
