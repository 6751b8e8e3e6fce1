"""Command-line front end: keygen, submit, serve, analyze, bench, selftest."""
import argparse
import json
import os
import signal
import sys

from . import bench, graphs, paillier, rlwe, runtime, selftest
from .errors import EncGraphError


def _addr(text):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("sizes must be positive")
    return vals


def _choice_list(choices):
    def parse(text):
        vals = [v.strip().lower() for v in text.split(",") if v.strip()]
        bad = [v for v in vals if v not in choices]
        if not vals or bad:
            raise argparse.ArgumentTypeError(f"choose from {','.join(choices)}; got {text!r}")
        return vals

    return parse


def _write_secret(path, text):
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "w") as fh:
        fh.write(text)


def _add_analysis_flags(p):
    p.add_argument("--method", choices=["power", "lanczos"], default="power")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--steps", type=int, default=None, help="initial Lanczos steps")
    p.add_argument("--pool-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="encgraph", description="Encrypted graph storage and spectral analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate owner keys")
    p.add_argument("--bits", type=int, default=2048, help="Paillier modulus size")
    p.add_argument("--out", required=True, help="directory for key files")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--she-nodes", type=int, default=None, help="also create an SHE key sized for N nodes")

    p = sub.add_parser("submit", help="submit an edge list to a running cloud as contributors")
    p.add_argument("--graph", required=True)
    p.add_argument("--graph-id", required=True)
    p.add_argument("--keys", required=True, help="key directory from keygen")
    p.add_argument("--cloud", type=_addr, required=True, help="HOST:PORT")
    p.add_argument("--backend", choices=["ahe", "she"], default="ahe")
    p.add_argument("--storage", choices=["dense", "dp_sparse"], default="dp_sparse")
    p.add_argument("--dp-epsilon", type=float, default=1.0)
    p.add_argument("--hist-width", type=int, default=2)
    p.add_argument("--contributors", type=int, default=1)
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--persist", action="store_true", help="ask the cloud to save its store afterwards")

    p = sub.add_parser("serve", help="run a TCP cloud")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7878)
    p.add_argument("--store", default=None, help="directory to load from and save to")

    p = sub.add_parser("analyze", help="run a spectral analysis session and print the JSON report")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", help="edge list: run submit and analysis end to end")
    src.add_argument("--graph-id", help="analyze a graph already held by --cloud")
    p.add_argument("--backend", choices=["ahe", "she"], default="ahe")
    p.add_argument("--storage", choices=["dense", "dp_sparse"], default="dp_sparse")
    p.add_argument("--transport", choices=["in_process", "tcp"], default="in_process")
    p.add_argument("--cloud", type=_addr, default=None, help="HOST:PORT of a running cloud")
    p.add_argument("--keys", default=None, help="key directory (needed with --graph-id)")
    p.add_argument("--key-bits", type=int, default=1024)
    p.add_argument("--dp-epsilon", type=float, default=1.0)
    p.add_argument("--hist-width", type=int, default=2)
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--out", default=None, help="also write the report here")
    _add_analysis_flags(p)

    p = sub.add_parser("bench", help="sweep sizes and emit CSV")
    p.add_argument("--schemes", "--backend", dest="schemes", type=_choice_list(["ahe", "she"]), default=["ahe", "she"])
    p.add_argument("--sizes", type=_int_list, default=[16, 32, 64])
    p.add_argument("--modes", type=_choice_list(["dense", "dp_sparse"]), default=["dense", "dp_sparse"])
    p.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    p.add_argument("--key-bits", type=int, default=1024)
    p.add_argument("--method", choices=["power", "lanczos"], default="lanczos")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--pool-size", type=int, default=8)
    p.add_argument("--dp-epsilon", type=float, default=1.0)
    p.add_argument("--density", type=float, default=0.1)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--transport", choices=["in_process"], default="in_process")
    p.add_argument("--no-analyze", action="store_true")
    p.add_argument("--check", action="store_true", help="print backend trend checks; exit 1 if incomplete or failing")

    p = sub.add_parser("selftest", help="run quick invariant checks")
    p.add_argument("--seed", type=int, default=0)
    return parser


def cmd_keygen(args):
    os.makedirs(args.out, exist_ok=True)
    pk, sk = paillier.keygen(args.bits, seed=args.seed, allow_toy=args.bits < 64)
    with open(os.path.join(args.out, "paillier.pub.json"), "w") as fh:
        fh.write(pk.to_json())
    _write_secret(os.path.join(args.out, "paillier.key.json"), sk.to_json())
    written = ["paillier.pub.json", "paillier.key.json"]
    if args.she_nodes:
        she = rlwe.she_keygen(rlwe.mvm_params(args.she_nodes), args.seed)
        _write_secret(os.path.join(args.out, "she.key.json"), she.to_json())
        written.append("she.key.json")
    print(json.dumps({"dir": args.out, "files": written, "key_id": pk.key_id.hex()}))
    return 0


def load_keys(directory, need_secret=True):
    with open(os.path.join(directory, "paillier.pub.json")) as fh:
        pk = paillier.PaillierPublicKey.from_json(fh.read())
    sk = she = None
    spath = os.path.join(directory, "paillier.key.json")
    if os.path.exists(spath):
        with open(spath) as fh:
            sk = paillier.PaillierSecretKey.from_json(fh.read())
        if paillier.keypair_from_primes(sk.p, sk.q)[0].n != pk.n:
            raise EncGraphError("secret key does not match the public key")
    elif need_secret:
        raise EncGraphError(f"{spath} is missing")
    hpath = os.path.join(directory, "she.key.json")
    if os.path.exists(hpath):
        with open(hpath) as fh:
            she = rlwe.ShSecretKey.from_json(fh.read())
    return runtime.OwnerKeys(pk, sk, she)


def cmd_submit(args):
    n, edges = graphs.read_edge_list(args.graph, args.nodes)
    keys = load_keys(args.keys, need_secret=args.backend == "she")
    sc = runtime.Scenario(args.graph_id, n, edges, backend=args.backend, storage=args.storage,
                          dp_epsilon=args.dp_epsilon, hist_width=args.hist_width, seed=args.seed,
                          contributors=args.contributors, analyze=False)
    if args.backend == "she":
        if keys.she_sk is None or keys.she_sk.params != sc.she_params():
            raise EncGraphError("SHE submission needs she.key.json created with --she-nodes matching the graph")
    res = runtime.submit_remote(args.cloud, sc, keys.ahe_pk, keys.she_sk, keys.ahe_sk)
    if args.persist:
        t = runtime.TcpTransport(*args.cloud)
        try:
            runtime.Endpoint(t, res.transcript, "owner").call(runtime.Kind.ANALYZE_META, args.graph_id, {"op": "persist"})
        finally:
            t.close()
    print(json.dumps({"graph_id": args.graph_id, "entries": res.entries, "bytes_stored": res.bytes_stored,
                      "submit_ms": res.submit_ms}))
    return 0


def cmd_serve(args):
    store = runtime.EncryptedGraphStore.load(args.store) if args.store else None
    cloud = runtime.CloudAgent(runtime.CloudConfig(store_root=args.store), store)
    server = runtime.CloudServer(cloud, args.host, args.port)
    host, port = server.address

    def stop(signum, frame):
        raise KeyboardInterrupt

    # background jobs inherit an ignored SIGINT; make both signals shut down cleanly
    signal.signal(signal.SIGINT, stop)
    signal.signal(signal.SIGTERM, stop)
    print(f"cloud listening on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        if args.store:
            cloud.store.save(args.store)
    return 0


def cmd_analyze(args):
    if args.graph_id:
        if not args.cloud or not args.keys:
            raise EncGraphError("--graph-id needs --cloud and --keys")
        report, _ = runtime.analyze_remote(args.cloud, args.graph_id, load_keys(args.keys), method=args.method,
                                           k=args.k, tol=args.tol, max_iter=args.max_iter,
                                           pool_size=args.pool_size, seed=args.seed, steps=args.steps)
    else:
        n, edges = graphs.read_edge_list(args.graph, args.nodes)
        gid = os.path.splitext(os.path.basename(args.graph))[0] or "graph"
        gid = "".join(ch if ch.isalnum() or ch in "_.-" else "_" for ch in gid)
        sc = runtime.Scenario(gid, n, edges, backend=args.backend, storage=args.storage, method=args.method,
                              k=args.k, tol=args.tol, max_iter=args.max_iter, pool_size=args.pool_size,
                              dp_epsilon=args.dp_epsilon, hist_width=args.hist_width, key_bits=args.key_bits,
                              seed=args.seed, steps=args.steps)
        topology = args.transport
        if args.cloud:
            topology = ("tcp", args.cloud)
        report = runtime.run_agents(topology, sc).report
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0 if report.get("converged", True) else 1


def cmd_bench(args):
    def progress(rec):
        print(f"# {rec.scheme} N={rec.N} {rec.storage_mode} bytes={rec.bytes_stored} mvm_ms={rec.mvm_ms:.2f}",
              file=sys.stderr, flush=True)

    records = bench.run_bench(
        schemes=args.schemes, sizes=args.sizes, modes=args.modes, progress=progress, seed=args.seed,
        density=args.density, key_bits=args.key_bits, method=args.method, k=args.k, tol=args.tol,
        max_iter=args.max_iter, dp_epsilon=args.dp_epsilon, pool_size=args.pool_size,
        repeats=args.repeats, analyze=not args.no_analyze,
    )
    if args.out:
        with open(args.out, "w", newline="") as fh:
            bench.write_csv(records, fh)
    else:
        bench.write_csv(records, sys.stdout)
    if args.check:
        rep = bench.compare_backends(records)
        for line in rep.lines():
            print(line, file=sys.stderr)
        return 0 if rep.passed else 1
    return 0


def cmd_selftest(args):
    ok = True
    for name, passed, detail in selftest.run_all(args.seed):
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}{': ' + detail if detail else ''}")
    return 0 if ok else 1


COMMANDS = {
    "keygen": cmd_keygen,
    "submit": cmd_submit,
    "serve": cmd_serve,
    "analyze": cmd_analyze,
    "bench": cmd_bench,
    "selftest": cmd_selftest,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (EncGraphError, OSError) as exc:
        print(f"encgraph {args.command}: {exc}", file=sys.stderr)
        cause = exc.__cause__
        if cause is not None:
            print(f"  caused by {type(cause).__name__}: {cause}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
