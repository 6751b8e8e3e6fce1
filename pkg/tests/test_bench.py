import io

import pytest

from encgraph import bench
from encgraph.errors import FitError


def synthetic(fn):
    return [bench.BenchRecord("AHE", n, "dense", int(fn(n)), 1.0, 1.0, 1.0, 1, 1) for n in (16, 32, 64)]


def test_fit_exact_power_laws():
    assert bench.fit_scaling(synthetic(lambda n: 7 * n * n), "bytes_stored") == pytest.approx(2.0, abs=0.01)
    assert bench.fit_scaling(synthetic(lambda n: 300 * n), "bytes_stored") == pytest.approx(1.0, abs=0.01)


def test_fit_needs_three_sizes():
    with pytest.raises(FitError):
        bench.fit_scaling(synthetic(lambda n: n)[:2], "bytes_stored")
    with pytest.raises(FitError):
        bench.fit_scaling(synthetic(lambda n: 0), "bytes_stored")


def test_csv_schema_round_trip():
    recs = synthetic(lambda n: n * n)
    text = bench.records_to_csv(recs)
    assert text.splitlines()[0] == "scheme,N,storage_mode,bytes_stored,submit_ms,mvm_ms,analyze_ms,mvm_rounds,eigen_k"
    back = bench.read_csv(io.StringIO(text))
    assert [r.row() for r in back] == [r.row() for r in recs]


def test_median_time_discards_warmup():
    calls = []
    assert bench.median_time(lambda: calls.append(1), repeats=5, warmup=1) >= 0
    assert len(calls) == 6


def rec(scheme, n, mode, nbytes, entries, mvm):
    return bench.BenchRecord(scheme, n, mode, nbytes, 0.0, mvm, 0.0, 0, 0, entries)


def test_compare_backends_directions():
    recs = [rec("AHE", 64, "dense", 64 * 64 * 270, 64 * 64, 200.0), rec("SHE", 64, "dense", 64 * 1050, 64, 3.0)]
    rep = bench.compare_backends(recs)
    assert rep.passed and all(c.passed for c in rep.checks)
    slow = [rec("AHE", 64, "dense", 64 * 64 * 270, 64 * 64, 1.0), rec("SHE", 64, "dense", 64 * 1050, 64, 3.0)]
    rep = bench.compare_backends(slow)
    assert rep.passed  # the time direction only warns by default
    assert any(line.startswith("WARN mvm_time") for line in rep.lines())
    assert not bench.compare_backends(slow, time_is_hard=True).passed


def test_compare_backends_incomplete():
    rep = bench.compare_backends([rec("AHE", 16, "dense", 100, 10, 1.0)])
    assert not rep.passed and rep.missing


def test_small_sweep_row_order():
    recs = bench.run_bench(("ahe", "she"), (4, 6), key_bits=256, repeats=1, analyze=False, pool_size=2)
    assert [(r.scheme, r.N, r.storage_mode) for r in recs] == [
        (s, n, m) for s in ("AHE", "SHE") for n in (4, 6) for m in ("dense", "dp_sparse")
    ]
    assert all(r.bytes_stored > 0 and r.mvm_ms > 0 for r in recs)
