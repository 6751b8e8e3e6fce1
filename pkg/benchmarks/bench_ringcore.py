"""Compiled vs pure-Python ring kernels.

    python benchmarks/bench_ringcore.py [--sizes 64,256,1024,2048] [--csv out.csv]

Every kernel is run on identical inputs through both implementations; the
outputs are compared before any timing is reported.
"""
import argparse
import csv
import statistics
import sys
import time

import numpy as np

from encgraph import _ringcore_py, ring

try:
    from encgraph import _ringcore
except ImportError:
    _ringcore = None


def timed(fn, repeats):
    fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples) * 1e3


def kernels(core, tables, a, b, q):
    fa = core.ntt_forward(a, tables.psi_rev, q)
    fb = core.ntt_forward(b, tables.psi_rev, q)
    return {
        "ntt_forward": lambda: core.ntt_forward(a, tables.psi_rev, q),
        "ntt_inverse": lambda: core.ntt_inverse(fa, tables.psi_inv_rev, tables.n_inv, q),
        "pointwise_mul": lambda: core.pointwise_mul(fa, fb, q),
        "schoolbook": lambda: core.negacyclic_schoolbook(a, b, q),
    }


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="64,256,1024,2048")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--max-schoolbook", type=int, default=256, help="skip pure-Python schoolbook above this N")
    ap.add_argument("--csv", default=None)
    args = ap.parse_args(argv)
    if _ringcore is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    rows = []
    rng = np.random.default_rng(0)
    for n in (int(s) for s in args.sizes.split(",")):
        q = ring.find_ntt_prime(60, n)
        tables = ring.ntt_tables(n, q)
        a = rng.integers(0, q, n, dtype=np.uint64)
        b = rng.integers(0, q, n, dtype=np.uint64)
        fast, slow = kernels(_ringcore, tables, a, b, q), kernels(_ringcore_py, tables, a, b, q)
        for name in fast:
            if name == "schoolbook" and n > args.max_schoolbook:
                continue
            if not np.array_equal(fast[name](), slow[name]()):
                raise SystemExit(f"{name} disagrees at N={n}")
            tf, ts = timed(fast[name], args.repeats), timed(slow[name], args.repeats)
            rows.append({"kernel": name, "N": n, "cython_ms": tf, "python_ms": ts, "speedup": ts / tf})
    print(f"{'kernel':<14}{'N':>6}{'cython ms':>12}{'python ms':>12}{'speedup':>10}")
    for r in rows:
        print(f"{r['kernel']:<14}{r['N']:>6}{r['cython_ms']:>12.4f}{r['python_ms']:>12.3f}{r['speedup']:>10.0f}x")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
