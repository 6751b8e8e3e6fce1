import json
import os
import stat
import subprocess
import sys

import pytest

from encgraph import cli, graphs


def run_cli(*argv):
    return subprocess.run([sys.executable, "-m", "encgraph.cli", *argv], capture_output=True, text=True)


def test_keygen_writes_files(tmp_path, capsys):
    out = tmp_path / "keys"
    assert cli.main(["keygen", "--bits", "256", "--seed", "1", "--out", str(out), "--she-nodes", "8"]) == 0
    names = sorted(os.listdir(out))
    assert names == ["paillier.key.json", "paillier.pub.json", "she.key.json"]
    pub = json.loads((out / "paillier.pub.json").read_text())
    assert pub["scheme"] == "paillier" and pub["bits"] == 256
    assert stat.S_IMODE(os.stat(out / "paillier.key.json").st_mode) == 0o600
    keys = cli.load_keys(str(out))
    assert keys.ahe_sk is not None and keys.she_sk.params.N == 16


def test_selftest_exit_zero():
    res = run_cli("selftest")
    assert res.returncode == 0, res.stdout + res.stderr
    assert "FAIL" not in res.stdout


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["analyze"], ["bench", "--sizes", "x"],
                                  ["bench", "--schemes", "rsa"], ["analyze", "--graph", "g", "--method", "qr"]])
def test_bad_flags_exit_two(argv):
    res = run_cli(*argv)
    assert res.returncode == 2
    assert "usage" in res.stderr


def test_analyze_complete_graph(tmp_path):
    path = tmp_path / "k3.txt"
    graphs.write_edge_list(path, graphs.complete_graph(3))
    res = run_cli("analyze", "--method", "power", "--k", "2", "--backend", "ahe", "--graph", str(path),
                  "--key-bits", "512")
    assert res.returncode == 0, res.stderr
    rep = json.loads(res.stdout)
    assert rep["eigenvalues"] == pytest.approx([2.0, -1.0], abs=1e-3)
    assert {"graph_id", "method", "k", "eigenvalues", "iterations", "mvm_rounds", "wall_time_ms", "backend"} <= set(rep)


def test_missing_input_is_exit_one(tmp_path, capsys):
    assert cli.main(["analyze", "--graph", str(tmp_path / "missing.txt")]) == 1
    assert "missing.txt" in capsys.readouterr().err
    assert cli.main(["analyze", "--graph-id", "g"]) == 1


def test_bench_csv(tmp_path):
    out = tmp_path / "bench.csv"
    rc = cli.main(["bench", "--schemes", "ahe,she", "--sizes", "4,6,8", "--out", str(out), "--key-bits", "256",
                   "--no-analyze", "--repeats", "1"])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "scheme,N,storage_mode,bytes_stored,submit_ms,mvm_ms,analyze_ms,mvm_rounds,eigen_k"
    assert len(lines) == 13


def test_serve_submit_analyze_over_tcp(tmp_path):
    keys = tmp_path / "keys"
    assert cli.main(["keygen", "--bits", "512", "--seed", "3", "--out", str(keys), "--she-nodes", "3"]) == 0
    gpath = tmp_path / "k3.txt"
    graphs.write_edge_list(gpath, graphs.complete_graph(3))
    store = tmp_path / "store"
    srv = subprocess.Popen([sys.executable, "-m", "encgraph.cli", "serve", "--port", "0", "--store", str(store)],
                           stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    try:
        line = srv.stdout.readline()
        addr = line.strip().rsplit(" ", 1)[-1]
        for backend in ("ahe", "she"):
            gid = f"k3-{backend}"
            res = run_cli("submit", "--graph", str(gpath), "--graph-id", gid, "--keys", str(keys), "--cloud", addr,
                          "--backend", backend)
            assert res.returncode == 0, res.stderr
            res = run_cli("analyze", "--graph-id", gid, "--cloud", addr, "--keys", str(keys), "--k", "2")
            assert res.returncode == 0, res.stderr
            assert json.loads(res.stdout)["eigenvalues"] == pytest.approx([2.0, -1.0], abs=1e-3)
    finally:
        srv.terminate()
        srv.wait(timeout=30)
    assert sorted(os.listdir(store)) == ["k3-ahe", "k3-she"]
