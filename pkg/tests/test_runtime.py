import dataclasses
import threading

import numpy as np
import pytest

from encgraph import graphs, paillier, rlwe, runtime, spectral
from encgraph.errors import PlanError, ProtocolError, ScenarioError
from encgraph.store import EncryptedGraphStore
from encgraph.wire import NO_SESSION, Kind, ProtocolMessage, frame_message, parse_frame, unpack_payload


def scenario(**kw):
    base = dict(graph_id="g", n_nodes=8, edges=graphs.erdos_renyi(8, 0.4, seed=1), key_bits=512, pool_size=3,
                k=2, seed=5)
    base.update(kw)
    return runtime.Scenario(**base)


def identity_edges(n):
    return [(i, i, 1.0) for i in range(n)]


@pytest.mark.parametrize("backend", ["ahe", "she"])
@pytest.mark.parametrize("topology", ["in_process", "tcp"])
def test_identity_graph(backend, topology):
    sc = runtime.Scenario("eye", 4, identity_edges(4), backend=backend, k=1, key_bits=512, pool_size=2)
    rep = runtime.run_agents(topology, sc).report
    assert rep["eigenvalues"][0] == pytest.approx(1.0, abs=1e-9)
    assert rep["backend"] == backend and rep["converged"]


@pytest.mark.parametrize("backend,storage,method", [
    ("ahe", "dp_sparse", "power"), ("ahe", "dense", "lanczos"), ("she", "dp_sparse", "lanczos"),
])
def test_tcp_and_in_process_transcripts_match(backend, storage, method):
    a = runtime.run_agents("in_process", scenario(backend=backend, storage=storage, method=method))
    b = runtime.run_agents("tcp", scenario(backend=backend, storage=storage, method=method))
    assert a.transcript.comparable() == b.transcript.comparable()
    assert a.report["eigenvalues"] == b.report["eigenvalues"]


def test_results_match_dense_eigensolver():
    sc = scenario(n_nodes=12, edges=graphs.erdos_renyi(12, 0.4, seed=2), k=3)
    rep = runtime.run_agents("in_process", sc).report
    ref = np.linalg.eigvalsh(graphs.adjacency(12, sc.edges))
    ref = sorted(ref, key=lambda v: -abs(v))[:3]
    assert np.allclose(sorted(rep["eigenvalues"]), sorted(ref), rtol=1e-4)


def test_transcript_complete_and_timestamped():
    res = runtime.run_agents("in_process", scenario())
    t = res.transcript
    assert t.is_complete()
    kinds = {e.kind for e in t.requests()}
    assert {Kind.ANALYZE_META, Kind.SUBMIT_ROW, Kind.POOL_REQUEST, Kind.MVM_REQUEST} <= kinds
    ts = [e.ts for e in t.entries]
    assert ts == sorted(ts)
    recs = t.to_records()
    assert recs[0]["kind"] == "ANALYZE_META" and bytes.fromhex(recs[0]["frame"]) == t.entries[0].frame


def test_colliding_dummy_surfaces_plan_error():
    sc = scenario(inject_collision=True)
    with pytest.raises(ScenarioError) as info:
        runtime.run_agents("in_process", sc)
    assert isinstance(info.value.__cause__, PlanError)
    assert "contributor-0" in str(info.value)
    assert info.value.transcript is not None and info.value.transcript.entries


def test_masking_property_and_tamper_detection():
    sc = scenario(method="power")
    res = runtime.run_agents("in_process", sc)
    raw = runtime.owner_matrix_raw(sc)
    assert runtime.masking_violations(res.transcript, res.owner, raw) == []
    log = res.owner.mask_log
    log[0] = dict(log[0], gamma=[g + 1 for g in log[0]["gamma"]])
    assert runtime.masking_violations(res.transcript, res.owner, raw)


def test_encrypted_pipeline_replays_plaintext_trace():
    for backend in ("ahe", "she"):
        sc = scenario(backend=backend, n_nodes=10, edges=graphs.erdos_renyi(10, 0.4, seed=7))
        res = runtime.run_agents("in_process", sc)
        ref = spectral.SessionState(sc.graph_id, sc.method, sc.k, sc.tol, sc.max_iter)
        op = spectral.PlainFixedPointOperator(runtime.owner_matrix_raw(sc), sc.weight_scale, sc.vector_scale,
                                              raw=True)
        spectral.power_topk(ref, op, np.random.default_rng(sc.seed))
        assert res.owner.session.trace == ref.trace


def test_multiple_contributors_and_dense_storage():
    for storage in ("dense", "dp_sparse"):
        res = runtime.run_agents("in_process", scenario(storage=storage, contributors=3))
        assert res.report["converged"]
    dense = runtime.run_agents("in_process", scenario(storage="dense", analyze=False))
    assert dense.entries == 64


def test_she_storage_independent_of_submission_mode():
    a = runtime.run_agents("in_process", scenario(backend="she", storage="dense", analyze=False))
    b = runtime.run_agents("in_process", scenario(backend="she", storage="dp_sparse", analyze=False))
    assert a.entries == b.entries == 8
    assert a.bytes_stored == b.bytes_stored


# -- cloud agent in isolation --------------------------------------------------


@pytest.fixture
def loaded_cloud():
    """A cloud holding one AHE and one SHE graph (N=16, same edges), plus owners."""
    edges = graphs.erdos_renyi(16, 0.3, seed=3)
    out = {}
    cloud = runtime.CloudAgent()
    for backend in ("ahe", "she"):
        sc = scenario(graph_id=f"g-{backend}", n_nodes=16, edges=edges, backend=backend, analyze=False)
        runtime._prepare_scales(sc)
        keys = runtime.owner_keys(sc.key_bits, sc.seed, sc.she_params() if backend == "she" else None)
        t = runtime.Transcript()
        owner = runtime.OwnerAgent(sc, keys, runtime.Endpoint(runtime.InProcessTransport(cloud), t, "owner"))
        owner.register()
        rows = graphs.neighbor_rows(16, edges)
        ep = (runtime.Endpoint(runtime.InProcessTransport(cloud), t, "c") if backend == "ahe"
              else runtime.Endpoint(runtime._OwnerTransport(owner), t, "c", receiver="owner"))
        runtime.ContributorAgent("c", list(range(16)), sc, keys.ahe_pk, owner.histogram, ep).submit(rows)
        if backend == "she":
            owner.transcode_and_upload()
        out[backend] = (sc, keys, owner)
    return cloud, out, edges


def test_backends_return_equal_products(loaded_cloud):
    cloud, owners, edges = loaded_cloud
    a = graphs.adjacency(16, edges).astype(int)
    x = np.random.default_rng(0).integers(-500, 500, 16).tolist()
    got = {}
    for backend, (sc, keys, owner) in owners.items():
        sid = owner.open_session()
        if backend == "ahe":
            op = runtime.RemoteAheRound(owner.cloud, keys, sc.graph_id, sid, 16, sc.weight_scale, sc.vector_scale)
        else:
            op = runtime.RemoteSheOperator(owner.cloud, keys, sc.graph_id, sid, 16, sc.weight_scale,
                                           sc.vector_scale, np.random.default_rng(1))
        got[backend] = [v >> sc.weight_scale for v in op.mvm_batch([x])[0]]
    assert got["ahe"] == got["she"] == (a @ np.array(x)).tolist()


def call(cloud, kind, gid, manifest, blobs=(), sid=NO_SESSION):
    from encgraph.wire import pack_payload

    reply = parse_frame(cloud.handle_frame(frame_message(ProtocolMessage(kind, gid, sid, pack_payload(manifest, blobs)))))
    return reply.kind, unpack_payload(reply.payload)[0]


def test_dimension_mismatch_keeps_session(loaded_cloud):
    cloud, owners, _ = loaded_cloud
    sc, keys, owner = owners["ahe"]
    sid = owner.open_session()
    kind, body = call(cloud, Kind.MVM_REQUEST, sc.graph_id, {"vectors": [[1] * 15]}, sid=sid)
    assert kind == Kind.ERROR and body["error"] == "DimensionError"
    kind, body = call(cloud, Kind.MVM_REQUEST, sc.graph_id, {"vectors": [[1] * 16]}, sid=sid)
    assert kind == Kind.MVM_RESPONSE and body == {"count": 1, "dim": 16}


def test_unknown_session_and_bad_requests(loaded_cloud):
    cloud, owners, _ = loaded_cloud
    gid = owners["ahe"][0].graph_id
    assert call(cloud, Kind.MVM_REQUEST, gid, {"vectors": [[0] * 16]}, sid=b"x" * 16)[0] == Kind.ERROR
    assert call(cloud, Kind.ANALYZE_META, "missing", {"op": "get"})[1]["error"] == "UnregisteredGraphError"
    assert call(cloud, Kind.ANALYZE_META, gid, {"op": "frobnicate"})[0] == Kind.ERROR
    assert call(cloud, Kind.MVM_RESPONSE, gid, {})[0] == Kind.ERROR
    assert call(cloud, Kind.SUBMIT_ROW, gid, {"keys": [[0, 0]]})[0] == Kind.ERROR
    reply = parse_frame(cloud.handle_frame(b"not a frame at all"))
    assert reply.kind == Kind.ERROR and unpack_payload(reply.payload)[0]["offset"] == 0


def test_sessions_on_distinct_graphs_run_concurrently(loaded_cloud):
    cloud, owners, _ = loaded_cloud
    results, errors = [], []

    def work(backend):
        sc, keys, owner = owners[backend]
        try:
            owner.sc = dataclasses.replace(sc, analyze=True)
            results.append(owner.analyze()["eigenvalues"])
        except Exception as exc:  # surfaced below
            errors.append(exc)

    threads = [threading.Thread(target=work, args=(b,)) for b in owners]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert np.allclose(results[0], results[1], rtol=1e-4)


def test_cloud_holds_no_key_material(loaded_cloud):
    cloud, _, _ = loaded_cloud
    assert [f.name for f in dataclasses.fields(runtime.CloudConfig)] == ["name", "store_root"]
    assert isinstance(cloud.config, runtime.CloudConfig)
    secret_types = (paillier.PaillierSecretKey, rlwe.ShSecretKey, runtime.OwnerKeys)

    def walk(obj, depth=0):
        if isinstance(obj, secret_types):
            return True
        if depth > 4:
            return False
        if isinstance(obj, dict):
            return any(walk(k, depth + 1) or walk(v, depth + 1) for k, v in obj.items())
        if isinstance(obj, (list, tuple, set)):
            return any(walk(v, depth + 1) for v in obj)
        if hasattr(obj, "__dict__") and not isinstance(obj, type):
            return any(walk(v, depth + 1) for v in vars(obj).values())
        return False

    assert not walk(cloud)


def test_persist_operation(tmp_path, loaded_cloud):
    cloud, owners, _ = loaded_cloud
    assert call(cloud, Kind.ANALYZE_META, "g-ahe", {"op": "persist"})[0] == Kind.ERROR
    disk = runtime.CloudAgent(runtime.CloudConfig(store_root=str(tmp_path)), cloud.store)
    assert call(disk, Kind.ANALYZE_META, "g-ahe", {"op": "persist"})[0] == Kind.ANALYZE_META
    back = EncryptedGraphStore.load(str(tmp_path))
    assert back.entries("g-she") == cloud.store.entries("g-she")


def test_remote_helpers_against_running_server():
    cloud = runtime.CloudAgent()
    server = runtime.CloudServer(cloud)
    server.start()
    try:
        sc = scenario(graph_id="remote", backend="ahe")
        keys = runtime.owner_keys(sc.key_bits, sc.seed)
        runtime.submit_remote(server.address, sc, keys.ahe_pk, ahe_sk=keys.ahe_sk)
        rep, transcript = runtime.analyze_remote(server.address, "remote", keys, k=2, pool_size=3, seed=5)
        local = runtime.run_agents("in_process", scenario(graph_id="remote"))
        assert rep["eigenvalues"] == local.report["eigenvalues"]
        assert transcript.is_complete()
    finally:
        server.stop()


def test_owner_rejects_non_submit_frames(loaded_cloud):
    _, owners, _ = loaded_cloud
    owner = owners["she"][2]
    reply = parse_frame(owner.receive(frame_message(ProtocolMessage(Kind.MVM_REQUEST, "g-she"))))
    assert reply.kind == Kind.ERROR


def test_endpoint_raises_on_error_reply():
    cloud = runtime.CloudAgent()
    ep = runtime.Endpoint(runtime.InProcessTransport(cloud), runtime.Transcript(), "owner")
    with pytest.raises(ProtocolError):
        ep.call(Kind.ANALYZE_META, "nothing", {"op": "get"})
