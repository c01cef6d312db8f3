import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from everett_lab import cli, engine
from everett_lab import observer as obs

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def write_scenario(tmp_path, name="sc.json", **overrides):
    data = {
        "n_qubits": 3,
        "n_streams": 4,
        "observer": {"kind": "toy", "dim": 2},
        "theory": "everett",
        "samples": 0,
        "seed": 0,
    }
    data.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def run_cli(args, capsys):
    code = cli.main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


# -- run --------------------------------------------------------------------


def test_run_toy_report(tmp_path, capsys):
    out = tmp_path / "report.json"
    code, _, _ = run_cli(["run", SCENARIOS / "toy.json", "--out", out], capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["rank_rho_S"] == 4
    assert doc["fs_dim"] == 4
    rho = np.asarray(doc["rho_S"]["real"]) + 1j * np.asarray(doc["rho_S"]["imag"])
    assert np.max(np.abs(np.diag(rho).real - 0.125)) < 1e-10
    assert doc["perp_expectations"] < 1e-10
    assert doc["test"]["perp_hits"] == 0
    assert doc["test"]["decision"] == "collapse_rejected"
    assert abs(sum(doc["eigenvalues"]) - 1) < 1e-9
    assert doc["tool_version"] == cli.__version__
    assert doc["wall_time_ms"] >= 0


def test_run_copenhagen_eigenvalues(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = run_cli(["run", SCENARIOS / "toy_copenhagen.json", "--out", out], capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["eigenvalues"] == [0.125] * 8
    assert doc["rank_rho_S"] == 8
    assert doc["perp_expectations"] == pytest.approx(0.125)
    assert doc["bound_holds"] is False
    assert len(doc["collapse_bits"]) == 4


def test_run_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    out = tmp_path / "never.json"
    code, _, err = run_cli(["run", bad, "--out", out], capsys)
    assert code == 1
    assert "malformed JSON" in err
    assert not out.exists()


def test_run_missing_file(tmp_path, capsys):
    code, _, err = run_cli(["run", tmp_path / "nope.json"], capsys)
    assert code == 1
    assert "not found" in err


@pytest.mark.parametrize(
    "overrides,needle",
    [
        ({"n_qubits": 0}, "n_qubits"),
        ({"theory": "bohm"}, "theory"),
        ({"observer": {"kind": "oracle", "dim": 2}}, "observer/kind"),
        ({"extra": 1}, "Additional properties"),
    ],
)
def test_run_schema_violation(tmp_path, capsys, overrides, needle):
    path = write_scenario(tmp_path, **overrides)
    code, _, err = run_cli(["run", path], capsys)
    assert code == 1
    assert "schema violation" in err and needle in err


def test_run_toy_wrong_size(tmp_path, capsys):
    path = write_scenario(tmp_path, n_qubits=4)
    code, _, err = run_cli(["run", path], capsys)
    assert code == 1
    assert "toy" in err


def test_run_size_guard(tmp_path, capsys, monkeypatch):
    path = write_scenario(tmp_path, n_qubits=12, observer={"kind": "random", "dim": 2})
    code, _, err = run_cli(["run", path], capsys)
    assert code == 1
    assert "exceeds the limit 4096" in err
    monkeypatch.setenv("EVERETT_LAB_MAX_DIM", "16")
    path = write_scenario(tmp_path, n_qubits=3, observer={"kind": "random", "dim": 4})
    code, _, err = run_cli(["run", path], capsys)
    assert code == 1 and "limit 16" in err


def test_run_invariant_violation_exit_2(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(engine, "numerical_rank", lambda rho, tol=1e-10: 99)
    code, _, err = run_cli(["run", write_scenario(tmp_path)], capsys)
    assert code == 2
    assert "invariant violation" in err


def test_run_writes_samples_csv(tmp_path, capsys):
    out = tmp_path / "toy.json"
    code, _, _ = run_cli(["run", SCENARIOS / "toy.json", "--out", out, "--format", "csv", "--samples", "50"], capsys)
    assert code == 0
    rows = list(csv.reader((tmp_path / "toy.samples.csv").open()))
    assert rows[0] == ["outcome", "label"]
    assert len(rows) == 51
    assert all(r[1] == "in-F_S" for r in rows[1:])


def test_run_deterministic(tmp_path, capsys):
    docs = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        run_cli(["run", SCENARIOS / "random_d3.json", "--out", out], capsys)
        doc = json.loads(out.read_text())
        doc.pop("wall_time_ms")
        docs.append(doc)
    assert docs[0] == docs[1]


def test_report_round_trip():
    spec = obs.ObserverSpec(kind="random", dim_D=3, seed=4)
    for theory in ("everett", "copenhagen"):
        rep = engine.run(engine.Scenario(N=3, m=3, observer=spec, theory=theory, seed=2))
        back = cli.report_from_dict(json.loads(json.dumps(cli.report_to_dict(rep))))
        assert back.theory == rep.theory
        assert (back.N, back.m, back.dim_D) == (rep.N, rep.m, rep.dim_D)
        assert np.array_equal(back.rho_S.matrix, rep.rho_S.matrix)
        assert np.array_equal(back.eigenvalues, rep.eigenvalues)
        assert back.per_stream_ranks == rep.per_stream_ranks
        assert back.rank_rho_S == rep.rank_rho_S
        assert back.fs_dim == rep.fs_dim
        assert back.trace_distance_to_mixed == rep.trace_distance_to_mixed
        if rep.samples is None:
            assert back.samples is None
        else:
            assert np.array_equal(back.samples, rep.samples)


def test_test_result_round_trip():
    from everett_lab import distinguish as dist

    t = dist.TestResult(100, 0, 2.0**-100, dist.Decision.COLLAPSE_REJECTED, 1e-6, 0.5)
    assert cli.test_result_from_dict(json.loads(json.dumps(cli.test_result_to_dict(t)))) == t


# -- discriminate --------------------------------------------------------------------


def test_discriminate_toy(tmp_path, capsys):
    out = tmp_path / "pair.json"
    code, stdout, _ = run_cli(
        ["discriminate", SCENARIOS / "toy.json", "--samples", 1000, "--alpha", 1e-6, "--out", out], capsys
    )
    assert code == 0
    assert "DISCRIMINATED" in stdout.splitlines()
    doc = json.loads(out.read_text())
    assert doc["discriminating"] is True
    assert doc["everett"]["test"]["perp_hits"] == 0
    assert doc["copenhagen"]["test"]["decision"] == "collapse_not_rejected"


def test_discriminate_vacuous(capsys):
    code, stdout, err = run_cli(["discriminate", SCENARIOS / "vacuous.json"], capsys)
    assert code == 0
    assert "bound vacuous" in err


@pytest.mark.parametrize("flag", [["--samples", "0"], ["--alpha", "1.5"], ["--samples", "x"]])
def test_discriminate_bad_flags(flag, capsys):
    code, _, _ = run_cli(["discriminate", SCENARIOS / "toy.json", *flag], capsys)
    assert code == 1


def test_discriminate_csv_samples(tmp_path, capsys):
    out = tmp_path / "pair.json"
    run_cli(["discriminate", SCENARIOS / "toy.json", "--samples", 20, "--out", out, "--format", "csv"], capsys)
    ev = list(csv.reader((tmp_path / "pair.everett.csv").open()))
    cp = list(csv.reader((tmp_path / "pair.copenhagen.csv").open()))
    assert len(ev) == len(cp) == 21


# -- toy demo ------------------------------------------------------------------------


def test_toy_demo(capsys):
    code, out, _ = run_cli(["toy-demo"], capsys)
    assert code == 0
    for i in range(1, 5):
        assert f"P(B_{i}) = 0.000000" in out
    canonical = [line for line in out.splitlines() if line.strip().startswith("P(") and line.strip()[2] in "01"]
    assert len(canonical) == 8
    assert all(line.split("=")[1].split()[0] == "0.125000" for line in canonical)
    assert "rank(rho_S) = 4, dim F_S = 4" in out
    code2, out2, _ = run_cli(["toy-demo"], capsys)
    assert out == out2


# -- scan ------------------------------------------------------------------------------


def test_scan_recording(capsys):
    code, out, _ = run_cli(
        ["scan", "--observer", "recording", "--memory-qubits", 2, "--n-min", 1, "--n-max", 5], capsys
    )
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [int(r["N"]) for r in rows] == [1, 2, 3, 4, 5]
    for r in rows:
        assert int(r["D"]) == 4
        if int(r["N"]) >= 3:
            assert int(r["rank"]) <= 4
    # perfect record at N <= memory: fully mixed
    assert float(rows[0]["trace_distance_to_mixed"]) < 1e-10


def test_scan_deterministic_and_formatted(capsys):
    args = ["scan", "--observer", "random", "--dim", 2, "--n-min", 2, "--n-max", 4, "--trials", 3, "--seed", 5]
    _, out1, _ = run_cli(args, capsys)
    _, out2, _ = run_cli(args, capsys)
    assert out1 == out2
    rows = list(csv.reader(io.StringIO(out1)))
    assert rows[0] == ["N", "trial", "D", "rank", "trace_distance_to_mixed"]
    assert len(rows) == 1 + 3 * 3
    for r in rows[1:]:
        assert r[3].isdigit()
        assert f"{float(r[4]):.12g}" == r[4]


def test_scan_size_guard(capsys):
    code, _, err = run_cli(["scan", "--observer", "random", "--dim", 4, "--n-max", 11], capsys)
    assert code == 1
    assert "exceeds" in err


def test_scan_json(capsys):
    code, out, _ = run_cli(
        ["scan", "--observer", "recording", "--memory-qubits", 1, "--n-max", 3, "--format", "json"], capsys
    )
    assert code == 0
    assert [row["N"] for row in json.loads(out)] == [1, 2, 3]


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "everett_lab", "run", str(tmp_path / "missing.json")],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 1
