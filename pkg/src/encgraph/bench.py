"""Storage and timing sweeps over both backends, with CSV output and trend checks."""
import csv
import io
import statistics
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import graphs, linalg, runtime
from .errors import FitError, ParameterError
from .wire import Kind

CSV_FIELDS = ["scheme", "N", "storage_mode", "bytes_stored", "submit_ms", "mvm_ms", "analyze_ms",
              "mvm_rounds", "eigen_k"]
SCHEMES = {"ahe": "AHE", "she": "SHE"}
MODES = ("dense", "dp_sparse")


@dataclass
class BenchRecord:
    scheme: str
    N: int
    storage_mode: str
    bytes_stored: int
    submit_ms: float
    mvm_ms: float
    analyze_ms: float
    mvm_rounds: int
    eigen_k: int
    entries: int = None  # stored ciphertexts; kept in memory, not in the CSV

    def row(self):
        d = asdict(self)
        return {k: d[k] for k in CSV_FIELDS}


def median_time(fn, repeats=5, warmup=1):
    """Median wall time in ms over ``repeats`` runs after discarded warm-ups."""
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1000.0)
    return statistics.median(samples)


def _mvm_round_ms(result, repeats):
    """Time one cloud MVM exchange (request out, encrypted response back)."""
    owner = result.owner
    sc = owner.sc
    sid = owner.open_session()
    rng = np.random.default_rng([sc.seed, 11])
    if sc.backend == "ahe":
        x = [int(v) for v in rng.integers(-(1 << sc.vector_scale), 1 << sc.vector_scale, size=sc.n_nodes)]
        call = lambda: owner.cloud.call(Kind.MVM_REQUEST, sc.graph_id, {"vectors": [x]}, session_id=sid)
    else:
        x = [int(v) for v in rng.integers(-(1 << sc.vector_scale), 1 << sc.vector_scale, size=sc.n_nodes)]
        blob = linalg.she_pack(owner.keys.she_sk, x, "forward", rng, max_abs=1 << sc.vector_scale).to_bytes()
        call = lambda: owner.cloud.call(Kind.MVM_REQUEST, sc.graph_id, {"encrypted": True}, [blob], session_id=sid)
    ms = median_time(call, repeats)
    owner.close_session(sid)
    return ms


def bench_one(scheme, n, mode, *, seed=0, density=0.1, key_bits=1024, method="lanczos", k=2,
              dp_epsilon=1.0, pool_size=8, repeats=5, analyze=True, tol=1e-6, max_iter=500):
    edges = graphs.erdos_renyi(n, density, seed=seed + n)
    sc = runtime.Scenario(
        graph_id=f"bench-{scheme}-{n}-{mode}",
        n_nodes=n,
        edges=edges,
        backend=scheme,
        storage=mode,
        method=method,
        k=min(k, n),
        tol=tol,
        max_iter=max_iter,
        pool_size=pool_size,
        dp_epsilon=dp_epsilon,
        key_bits=key_bits,
        seed=seed,
        analyze=False,
    )
    # in-process so the owner object stays available for the timing rounds
    res = runtime.run_agents("in_process", sc)
    mvm_ms = _mvm_round_ms(res, repeats)
    analyze_ms, rounds = 0.0, 0
    if analyze:
        t0 = time.perf_counter()
        report = res.owner.analyze()
        analyze_ms = (time.perf_counter() - t0) * 1000.0
        rounds = report["mvm_rounds"]
    return BenchRecord(SCHEMES[scheme], n, mode, res.bytes_stored, res.submit_ms, mvm_ms, analyze_ms,
                       rounds, sc.k if analyze else 0, res.entries)


def run_bench(schemes=("ahe", "she"), sizes=(16, 32, 64), modes=MODES, progress=None, **kw):
    """Sequential sweep; row order is schemes x sizes x modes as given."""
    out = []
    for scheme in schemes:
        if scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {scheme!r}")
        for n in sizes:
            for mode in modes:
                rec = bench_one(scheme, n, mode, **kw)
                if progress:
                    progress(rec)
                out.append(rec)
    return out


def write_csv(records, fh):
    w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.row())


def records_to_csv(records):
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()


def read_csv(fh):
    out = []
    for row in csv.DictReader(fh):
        out.append(
            BenchRecord(
                row["scheme"], int(row["N"]), row["storage_mode"], int(row["bytes_stored"]),
                float(row["submit_ms"]), float(row["mvm_ms"]), float(row["analyze_ms"]),
                int(row["mvm_rounds"]), int(row["eigen_k"]),
            )
        )
    return out


def _get(rec, name):
    return rec[name] if isinstance(rec, dict) else getattr(rec, name)


def fit_scaling(records, field, x_field="N"):
    """Slope of the least-squares line through (log x, log field)."""
    xs = [float(_get(r, x_field)) for r in records]
    ys = [float(_get(r, field)) for r in records]
    if len(set(xs)) < 3:
        raise FitError("scaling fit needs at least three distinct sizes")
    if any(v <= 0 for v in xs + ys):
        raise FitError("log-log fit needs positive values")
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)


def _entries(rec):
    e = _get(rec, "entries") if not isinstance(rec, dict) else rec.get("entries")
    if e:
        return e
    if _get(rec, "scheme") == "SHE":
        return _get(rec, "N")
    if _get(rec, "storage_mode") == "dense":
        return _get(rec, "N") ** 2
    return None


@dataclass
class TrendCheck:
    name: str
    N: int
    passed: bool
    ratio: float
    detail: str
    hard: bool = True


@dataclass
class TrendReport:
    checks: list
    complete: bool
    missing: list

    @property
    def passed(self):
        return self.complete and all(c.passed for c in self.checks if c.hard)

    def lines(self):
        out = []
        for c in self.checks:
            tag = "PASS" if c.passed else ("FAIL" if c.hard else "WARN")
            out.append(f"{tag} {c.name} N={c.N} ratio={c.ratio:.4g} {c.detail}")
        for m in self.missing:
            out.append(f"MISSING {m}")
        return out


def compare_backends(records, time_from_n=64, time_is_hard=False):
    """Storage-vs-time direction checks between AHE and SHE at equal N.

    (a) AHE bytes per stored ciphertext < SHE bytes per packed-row
    ciphertext, at every N measured under both.  (b) SHE MVM time < AHE MVM
    time at N >= ``time_from_n``; soft unless ``time_is_hard``.
    """
    by = {}
    for r in records:
        by.setdefault((_get(r, "scheme"), _get(r, "N")), []).append(r)
    sizes = sorted({n for _, n in by})
    checks, missing = [], []
    for n in sizes:
        ahe, she = by.get(("AHE", n)), by.get(("SHE", n))
        if not ahe or not she:
            missing.append(f"N={n}: need both AHE and SHE records")
            continue
        ahe_per = [_get(r, "bytes_stored") / _entries(r) for r in ahe if _entries(r)]
        she_per = [_get(r, "bytes_stored") / _entries(r) for r in she if _entries(r)]
        if not ahe_per or not she_per:
            missing.append(f"N={n}: entry counts unavailable")
            continue
        a, s = max(ahe_per), min(she_per)
        checks.append(TrendCheck("bytes_per_ciphertext", n, a < s, a / s,
                                 f"AHE {a:.1f} B/entry vs SHE {s:.1f} B/ciphertext"))
        if n >= time_from_n:
            for mode in sorted({_get(r, "storage_mode") for r in ahe}):
                am = [_get(r, "mvm_ms") for r in ahe if _get(r, "storage_mode") == mode]
                sm = [_get(r, "mvm_ms") for r in she if _get(r, "storage_mode") == mode]
                if not am or not sm:
                    missing.append(f"N={n} {mode}: no MVM timing pair")
                    continue
                checks.append(TrendCheck(f"mvm_time[{mode}]", n, sm[0] < am[0], sm[0] / am[0],
                                         f"SHE {sm[0]:.2f} ms vs AHE {am[0]:.2f} ms", hard=time_is_hard))
    return TrendReport(checks, not missing, missing)


def record_fields():
    return [f.name for f in fields(BenchRecord)]
