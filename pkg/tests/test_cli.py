import json
import os
import subprocess
import sys

import pytest

from cel.cli import main

ENV = {**os.environ, "CEL_NO_PARALLEL": "1"}

GOOD = """\
name = tiny
dim = 4
coords = a, b, c, d
region = a: 0.5 .. 2.6, b: 0 .. 6, c: 0.5 .. 2.6, d: 0 .. 6
g[1][1] = 1
g[2][2] = sin(a)^2
g[3][3] = 1
g[4][4] = sin(c)^2
"""


def run(*args):
    return subprocess.run([sys.executable, "-m", "cel", *args], capture_output=True, text=True,
                          env=ENV, timeout=300)


def records(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def test_validate_ok(tmp_path):
    f = tmp_path / "m.metric"
    f.write_text(GOOD)
    r = run("validate", str(f))
    assert r.returncode == 0
    assert r.stdout.startswith("OK tiny: dim=4")


@pytest.mark.parametrize("mutate, kind", [
    (lambda d: d.replace("dim = 4\n", ""), "MissingDimension"),
    (lambda d: d.replace("g[4][4]", "g[5][4]"), "IndexOutOfRange"),
    (lambda d: d.replace("sin(a)", "sin(q)"), "UnknownIdentifier"),
])
def test_validate_errors_exit_1(tmp_path, mutate, kind):
    f = tmp_path / "m.metric"
    f.write_text(mutate(GOOD))
    r = run("validate", str(f))
    assert r.returncode == 1
    assert kind in r.stderr


def test_config_errors_exit_1(tmp_path, capsys):
    assert main(["classify"]) == 1
    assert main(["classify", "--metric", "catalog:nope"]) == 1
    assert main(["classify", "--metric", str(tmp_path / "missing.metric")]) == 1
    assert main(["classify", "--metric", "catalog:s2xs2", "--points", "0"]) == 1
    assert main(["conformal-check", "--metric", "catalog:s2xs2", "--phi", "x1 +"]) == 1
    assert main(["frobnicate"]) == 1


def test_classify_s2xs2():
    r = run("classify", "--metric", "catalog:s2xs2", "--points", "5", "--seed", "3")
    assert r.returncode == 0, r.stderr
    recs = records(r.stdout)
    assert [x["type"] for x in recs] == ["point"] * 5 + ["aggregate"]
    agg = recs[-1]
    assert agg["verdict"]["kind"] == "NecessaryConditionsPass"
    assert agg["counts"] == {"NecessaryConditionsPass": 5}
    assert all(x["rank_E"] == 0 for x in recs[:-1])
    assert "NecessaryConditionsPass" in r.stderr


def test_classify_perturbed_and_flat(tmp_path):
    out = tmp_path / "o.jsonl"
    r = run("classify", "--metric", "catalog:perturbed_s2xs2_005", "--points", "3",
            "--out", str(out))
    assert r.returncode == 0, r.stderr
    agg = records(out.read_text())[-1]
    assert agg["verdict"]["kind"] == "Obstructed"
    assert "E_T" in agg["verdict"]["failing"]
    assert "Obstructed" in r.stdout
    r = run("classify", "--metric", "catalog:flat4", "--points", "3")
    assert records(r.stdout)[-1]["verdict"]["kind"] == "ConformallyFlat"


def test_classify_is_reproducible():
    a = run("classify", "--metric", "catalog:rescaled_s2xs2_a", "--points", "4", "--seed", "9")
    b = run("classify", "--metric", "catalog:rescaled_s2xs2_a", "--points", "4", "--seed", "9")
    c = run("classify", "--metric", "catalog:rescaled_s2xs2_a", "--points", "4", "--seed", "10")
    assert a.stdout == b.stdout
    assert a.stdout != c.stdout


def test_classify_singular_point_exit_2(tmp_path):
    f = tmp_path / "m.metric"
    f.write_text(GOOD.replace("g[1][1] = 1", "g[1][1] = a - 1"))
    r = run("classify", "--metric", str(f), "--points", "6")
    assert r.returncode == 2
    agg = records(r.stdout)[-1]
    assert agg["numeric_failures"] > 0


@pytest.mark.parametrize("phi", ["0.3", "0.2*sin(x1)"])
def test_conformal_check_passes(phi):
    r = run("conformal-check", "--metric", "catalog:s2xs2", "--phi", phi, "--points", "3")
    assert r.returncode == 0, r.stderr
    recs = records(r.stdout)
    assert [x["law"] for x in recs[:-1]][:10] == ["connection", "weyl", "delta_weyl", "ricci", "T",
                                                  "C_T", "E_T", "B_T", "B_hat_T", "W_symE"]
    assert recs[-1]["passed"] is True


def test_conformal_check_phi_from_file(tmp_path):
    f = tmp_path / "phi.txt"
    f.write_text("# conformal factor\n0.1*x1*x2\n")
    r = run("conformal-check", "--metric", "catalog:flat4", "--phi", str(f), "--points", "2")
    assert r.returncode == 0, r.stderr


def test_corrupt_law_exit_3():
    r = run("conformal-check", "--metric", "catalog:s2xs2", "--phi", "0.2*sin(x1)",
            "--points", "2", "--corrupt", "weyl")
    assert r.returncode == 3
    assert records(r.stdout)[-1]["failing"] == ["weyl"]
    assert "weyl" in r.stderr


def test_list():
    r = run("list")
    assert r.returncode == 0
    assert "schwarzschild4" in r.stdout
