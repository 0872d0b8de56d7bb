import csv
import importlib.util
import json
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fusedridge import datafiles as io
from fusedridge.cli import main
from fusedridge.errors import ConvergenceError

ROOT = os.path.join(os.path.dirname(__file__), "..")
DATA = os.path.join(ROOT, "data", "toy.csv")
GOLDEN = os.path.join(os.path.dirname(__file__), "golden")

spec = importlib.util.spec_from_file_location("make_cli_golden", os.path.join(ROOT, "scripts", "make_cli_golden.py"))
make_cli_golden = importlib.util.module_from_spec(spec)
spec.loader.exec_module(make_cli_golden)


def _same_json(a, b, path="$"):
    if isinstance(a, dict):
        assert isinstance(b, dict) and set(a) == set(b), path
        for k in a:
            _same_json(a[k], b[k], f"{path}.{k}")
    elif isinstance(a, list):
        assert isinstance(b, list) and len(a) == len(b), path
        for i, (x, y) in enumerate(zip(a, b)):
            _same_json(x, y, f"{path}[{i}]")
    elif isinstance(a, float) and not isinstance(b, str):
        assert b == pytest.approx(a, rel=1e-7, abs=1e-9), path
    else:
        assert a == b, path


def _same_csv(fa, fb):
    with open(fa) as ha, open(fb) as hb:
        ra, rb = list(csv.reader(ha)), list(csv.reader(hb))
    assert len(ra) == len(rb)
    for x, y in zip(ra, rb):
        assert len(x) == len(y)
        for u, v in zip(x, y):
            try:
                assert float(v) == pytest.approx(float(u), rel=1e-7, abs=1e-9)
            except ValueError:
                assert u == v


@pytest.fixture(scope="module")
def regenerated(tmp_path_factory):
    out = tmp_path_factory.mktemp("golden")
    make_cli_golden.run_all(str(out))
    return out


def _files(root):
    return sorted(os.path.relpath(os.path.join(d, f), root) for d, _, fs in os.walk(root) for f in fs)


def test_golden_file_set(regenerated):
    assert _files(regenerated) == _files(GOLDEN)


@pytest.mark.parametrize("name", _files(GOLDEN))
def test_golden_contents(regenerated, name):
    new, old = os.path.join(regenerated, name), os.path.join(GOLDEN, name)
    if name.endswith(".json"):
        with open(new) as a, open(old) as b:
            _same_json(json.load(b), json.load(a))
    elif name.endswith(".csv"):
        _same_csv(old, new)
    else:
        with open(new) as a, open(old) as b:
            assert a.read() == b.read()


def test_fit_report_contents(regenerated):
    with open(regenerated / "fit" / "report.json") as fh:
        rep = json.load(fh)
    assert rep["spec_version"] == 1 and rep["converged"]
    assert rep["classes"] == ["A", "B", "C"] and rep["n"] == [15, 12, 18]
    assert max(rep["kkt_residuals"]) < 1e-6
    assert rep["loglik_total"] == pytest.approx(sum(rep["loglik"]))
    names, O = io.read_matrix(regenerated / "fit" / "omega_A.csv")
    assert names == [f"v{j}" for j in range(1, 7)]
    assert np.linalg.eigvalsh(O)[0] > 0


# exit codes

def test_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "f")
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--penalty", "lambda=1,lambda_f=0", "--out", out]) == 4
    assert main(["fit", "--data", DATA, "--penalty", "lambda=-1,lambda_f=0", "--out", out]) == 2
    assert main(["fit", "--data", DATA, "--penalty", "lambda=1", "--out", out]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("class,a,b\nA,1,2\nA,1,x\n")
    assert main(["fit", "--data", str(bad), "--penalty", "lambda=1,lambda_f=0", "--out", out]) == 2
    assert "bad.csv:3" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--data", DATA])
    assert exc.value.code == 2


def test_convergence_failure_exit_code(tmp_path, monkeypatch):
    import fusedridge.cli as cli

    def failing(*a, **k):
        raise ConvergenceError("stalled")
    monkeypatch.setattr(cli, "fit", failing)
    assert main(["fit", "--data", DATA, "--penalty", "lambda=1,lambda_f=1", "--out", str(tmp_path)]) == 3


def test_bad_scenario_lists_ids(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"spec_version": 1, "scenario": "9z"}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "r.csv")]) == 2
    assert "1a, 1b, 2, 3a, 3b, 4" in capsys.readouterr().err
    cfg.write_text(json.dumps({"spec_version": 3, "scenario": "1a"}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "r.csv")]) == 2


# penalty and target formats

def _fit(tmp_path, *extra):
    out = tmp_path / "fit"
    assert main(["fit", "--data", DATA, "--out", str(out)] + list(extra)) == 0
    return [io.read_matrix(out / f"omega_{g}.csv")[1] for g in "ABC"]


def test_penalty_formats_agree(tmp_path):
    inline = _fit(tmp_path, "--penalty", "lambda=2,lambda_f=0.3")
    mat = tmp_path / "pen.csv"
    io.write_matrix(mat, np.full((3, 3), 0.3) + 1.7 * np.eye(3), ["A", "B", "C"])
    from_csv = _fit(tmp_path, "--penalty", str(mat))
    doc = tmp_path / "pen.json"
    doc.write_text(json.dumps({"spec_version": 1, "template": "complete",
                               "values": {"lambda": 2, "lambda_f": 0.3}}))
    from_json = _fit(tmp_path, "--penalty", str(doc))
    for a, b, c in zip(inline, from_csv, from_json):
        np.testing.assert_allclose(a, b, atol=1e-10)
        np.testing.assert_allclose(a, c, atol=1e-10)


def test_separate_ridge_and_targets(tmp_path):
    sep = _fit(tmp_path, "--penalty", "lambda_11=1,lambda_22=2,lambda_33=1,lambda_f=0.2",
               "--target", "scalar:auto")
    assert all(np.linalg.eigvalsh(O)[0] > 0 for O in sep)
    zero = _fit(tmp_path, "--penalty", "lambda=1,lambda_f=0", "--target", "zero")
    T = tmp_path / "T.csv"
    io.write_matrix(T, np.zeros((6, 6)), [f"v{j}" for j in range(1, 7)])
    from_file = _fit(tmp_path, "--penalty", "lambda=1,lambda_f=0", "--target", str(T))
    for a, b in zip(zero, from_file):
        np.testing.assert_allclose(a, b, atol=1e-12)
    assert main(["fit", "--data", DATA, "--penalty", "lambda=1,lambda_f=0", "--target", "scalar:x",
                 "--out", str(tmp_path)]) == 2


def test_dag_target(tmp_path):
    edges = tmp_path / "dag.txt"
    edges.write_text("v1 v2\nv2 v3  # chain\n")
    _fit(tmp_path, "--penalty", "lambda=1,lambda_f=0.1", "--target", f"dag:{edges},{DATA}")


def test_test_command(tmp_path):
    out = tmp_path / "t.json"
    assert main(["--seed", "5", "test", "--data", DATA, "--B", "49", "--calibrate", "3", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert 0 < rep["p_value"] <= 1 and len(rep["null_draws"]) == 49
    assert len(rep["calibration"]["p_values"]) == 3
    assert 0 <= rep["calibration"]["ks_statistic"] <= 1
    assert main(["test", "--data", DATA, "--target", "scalar:auto", "--out", str(out)]) == 2


def test_summarize_and_compare(tmp_path, regenerated):
    sp = regenerated / "sparsify"
    out = str(tmp_path / "total")
    edges = [str(sp / f"edges_{g}.csv") for g in "ABC"]
    assert main(["summarize", "--fit", str(regenerated / "fit"), "--edges", *edges, "--out", out]) == 0
    rows = list(csv.DictReader(open(out + ".csv")))
    assert {(r["j"], r["k"]) for r in rows} == {("v3", "v4"), ("v5", "v6"), ("v2", "v3")}
    assert main(["summarize", "--fit", str(regenerated / "fit"), "--edges", edges[0], edges[2],
                 "--compare", "intersection", "--out", out]) == 0
    assert open(out + ".dot").read().startswith("graph")
    assert main(["summarize", "--fit", str(regenerated / "fit"), "--edges", *edges,
                 "--compare", "difference", "--out", out]) == 2


def test_simulate_command(tmp_path):
    out, summ = tmp_path / "r.csv", tmp_path / "s.csv"
    cfg = os.path.join(ROOT, "configs", "quick.json")
    assert main(["simulate", "--config", cfg, "--replicates", "1", "--out", str(out), "--summary", str(summ)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 4 * 2 and {r["replicate"] for r in rows} == {"0"}
    first = out.read_text()
    assert main(["simulate", "--config", cfg, "--replicates", "1", "--out", str(out)]) == 0
    assert out.read_text() == first


# file formats

finite = st.floats(-1e12, 1e12, allow_nan=False, allow_subnormal=False)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5).flatmap(lambda p: st.lists(st.lists(finite, min_size=p, max_size=p),
                                                      min_size=p, max_size=p)))
def test_matrix_round_trip_exact(tmp_path_factory, rows):
    M = np.array(rows)
    names = [f"x{j}" for j in range(len(M))]
    path = tmp_path_factory.mktemp("m") / "m.csv"
    io.write_matrix(path, M, names)
    got_names, got = io.read_matrix(path)
    assert got_names == names
    np.testing.assert_array_equal(got, M)


def test_dataset_round_trip_and_errors(tmp_path):
    names, labels, X = io.read_dataset(DATA)
    path = tmp_path / "d.csv"
    io.write_dataset(path, names, labels, X)
    names2, labels2, X2 = io.read_dataset(path)
    assert (names2, labels2) == (names, labels)
    for g in labels:
        np.testing.assert_array_equal(X2[g], X[g])
    for text, where in [("id,a\nA,1\n", ":1:"), ("class,a,a\nA,1,2\n", ":1:"),
                        ("class,a\nA,1\nA,1,2\n", ":3:"), ("class,a\nA,nan\n", ":2:"), ("", "empty")]:
        path.write_text(text)
        with pytest.raises(io.DataFormatError, match=where):
            io.read_dataset(path)
