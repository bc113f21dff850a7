import csv
import io
import json
import subprocess
import sys

import pytest

from quditsum.cli import EXIT_ARGS, EXIT_IO, EXIT_OK, main, parse_values
from quditsum.records import RUN_CSV_HEADER


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_add_exact(capsys):
    code, out, _ = _run(capsys, "add", "3", "2", "--dim", "2", "--qudits", "3")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["decoded"] == 5
    assert doc["success_prob"] == pytest.approx(1)
    assert "inputs_reduced" not in doc


def test_add_dephased_post_sum(capsys):
    code, out, _ = _run(capsys, "add", "0", "7", "--dim", "2", "--qudits", "3", "--noise", "pdc", "--p", "0.1")
    assert code == EXIT_OK
    samples = {s["checkpoint"]: s for s in json.loads(out)["samples"]}
    assert samples["post_sum"]["fidelity"] == pytest.approx(0.653114837375, abs=1e-10)


def test_add_reduces_out_of_range_inputs(capsys):
    code, out, _ = _run(capsys, "add", "5", "5", "--dim", "3", "--qudits", "1")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["decoded"] == 1
    assert doc["inputs_reduced"] == {"a": 5, "b": 5, "modulus": 3}


def test_add_non_modular_rejects_out_of_range(capsys):
    code, _, err = _run(capsys, "add", "5", "5", "--dim", "3", "--qudits", "1", "--non-modular")
    assert code == EXIT_ARGS
    assert "error" in err


def test_add_json_and_csv_agree(capsys, tmp_path):
    path = tmp_path / "run.csv"
    code, out, _ = _run(capsys, "add", "1", "6", "--dim", "2", "--qudits", "3", "--noise", "adc", "--p", "0.1",
                        "--csv", str(path), "--run-id", "r7")
    assert code == EXIT_OK
    doc = json.loads(out)
    rows = _rows(path.read_text())
    assert tuple(rows[0]) == RUN_CSV_HEADER
    assert [r["checkpoint"] for r in rows] == [s["checkpoint"] for s in doc["samples"]]
    for r, s in zip(rows, doc["samples"]):
        assert r["run_id"] == "r7"
        assert float(r["fidelity"]) == pytest.approx(s["fidelity"], rel=1e-11)
        assert float(r["c_l1_norm"]) == pytest.approx(s["c_l1_norm"], rel=1e-11, abs=1e-15)


def test_trace_reaches_full_coherence(capsys):
    code, out, _ = _run(capsys, "trace", "--dim", "2", "--qudits", "3")
    assert code == EXIT_OK
    rows = {r["checkpoint"]: r for r in _rows(out)}
    assert float(rows["pre_sum"]["c_l1_norm"]) == pytest.approx(1)
    assert float(rows["input"]["c_l1_norm"]) == 0


def test_bound(capsys):
    code, out, _ = _run(capsys, "bound", "--dim", "3", "--qudits", "9", "--eps", "0.01")
    assert code == EXIT_OK and out == "5\n"
    _, out, _ = _run(capsys, "bound", "--dim", "2", "--qudits", "10", "--eps", "0.01", "--verbose")
    assert out.splitlines()[0] == "7"
    assert out.splitlines()[1].startswith("raw_bound 6.558")


def test_band_curve(capsys):
    code, out, _ = _run(capsys, "band-curve", "--dim", "2", "--qudits", "2")
    assert code == EXIT_OK
    rows = _rows(out)
    assert [(r["q"], float(r["fidelity"])) for r in rows] == [("1", 0.5), ("2", 1.0)]


def test_qbest(capsys):
    code, out, _ = _run(capsys, "qbest", "--dim", "2", "--qudits", "6", "--p", "0")
    assert code == EXIT_OK
    (row,) = _rows(out)
    assert row["q_best"] == "6"


def test_qbest_map_saturates(capsys, tmp_path):
    js = tmp_path / "map.json"
    code, out, _ = _run(capsys, "qbest-map", "--dim", "2,3", "--n", "30:40:5", "--p", "0.1,0.2", "--json", str(js))
    assert code == EXIT_OK
    rows = _rows(out)
    assert len(rows) == 2 * 3 * 2
    for d in ("2", "3"):
        for p in ("0.1", "0.2"):
            qs = {r["q_best"] for r in rows if r["d"] == d and r["p"] == p}
            assert len(qs) == 1
    doc = json.loads(js.read_text())
    assert doc["grid"]["order"] == "d, n, p"
    assert [c["q_best"] for c in doc["cells"]] == [int(r["q_best"]) for r in rows]
    assert len(doc["saturation"]) == 4


def test_qbest_map_deterministic_across_jobs(capsys, tmp_path, monkeypatch):
    args = ["qbest-map", "--dim", "2,3", "--n", "4:10:2", "--p", "0.05,0.1"]
    one, two = tmp_path / "one.csv", tmp_path / "two.csv"
    assert main(args + ["--out", str(one), "--jobs", "1"]) == EXIT_OK
    monkeypatch.setenv("QUDITSUM_JOBS", "2")
    assert main(args + ["--out", str(two)]) == EXIT_OK
    assert one.read_bytes() == two.read_bytes()
    assert b"\r" not in one.read_bytes()


def test_jobs_env_must_be_integer(capsys, monkeypatch):
    monkeypatch.setenv("QUDITSUM_JOBS", "many")
    code, _, err = _run(capsys, "qbest-map", "--n", "4", "--p", "0.1")
    assert code == EXIT_ARGS
    assert "QUDITSUM_JOBS" in err


def test_dim_compare_reports_both_readings(capsys):
    code, out, _ = _run(capsys, "dim-compare", "--value", "500", "--dim", "2:8", "--p", "0.1")
    assert code == EXIT_OK
    rows = _rows(out)
    assert [int(r["d"]) for r in rows] == list(range(2, 9))
    for r in rows:
        assert int(r["n_inclusive"]) == int(r["n"]) + 1
    assert float(rows[0]["fidelity"]) == pytest.approx(0.0485, abs=1e-4)


def test_spin_evolve(capsys, tmp_path):
    meta = tmp_path / "meta.json"
    code, out, _ = _run(capsys, "spin-evolve", "--tau", "0:4:1", "--band", "2,4", "--meta", str(meta))
    assert code == EXIT_OK
    rows = _rows(out)
    assert len(rows) == 10
    at_one = [float(r["f_out"]) for r in rows if r["tau"] == "1" and r["q"] == "4"]
    assert at_one == [pytest.approx(1)]
    doc = json.loads(meta.read_text())
    first = doc["scaling"][0]
    assert (first["tau"], first["q"], first["m_direct"], first["m_formula"]) == (1, 2, 1, 3)


def test_byte_identical_reruns(tmp_path):
    paths = [tmp_path / f"{i}.json" for i in range(2)]
    for p in paths:
        assert main(["add", "2", "3", "--dim", "3", "--qudits", "2", "--noise", "pdc", "--p", "0.2", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\ndim = 3\nqudits = 2\nnoise = pdc\np = 0.1\n")
    code, out, _ = _run(capsys, "add", "1", "2", "--config", str(cfg), "--no-trace")
    assert code == EXIT_OK
    assert json.loads(out)["config"]["d"] == 3
    code, out, _ = _run(capsys, "add", "1", "2", "--config", str(cfg), "--dim", "4", "--no-trace")
    assert json.loads(out)["config"]["d"] == 4


def test_config_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    code, _, err = _run(capsys, "bound", "--config", str(cfg), "--dim", "2", "--qudits", "3", "--eps", "0.1")
    assert code == EXIT_ARGS
    assert "colour" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["frobnicate"],
        ["add", "1", "2", "--dim", "2", "--qudits", "2", "--noise", "pdc", "--p", "1.5"],
        ["bound", "--dim", "2", "--qudits", "3", "--eps", "0"],
        ["add", "1"],
    ],
)
def test_usage_errors(capsys, argv):
    assert _run(capsys, *argv)[0] == EXIT_ARGS


def test_unwritable_output(capsys, tmp_path):
    target = tmp_path / "missing" / "out.txt"
    code, _, err = _run(capsys, "bound", "--dim", "2", "--qudits", "3", "--eps", "0.1", "--out", str(target))
    assert code == EXIT_IO
    assert "cannot write" in err


def test_parse_values():
    assert parse_values("1,2,3", int) == [1, 2, 3]
    assert parse_values("2:8", int) == list(range(2, 9))
    assert parse_values("0:0.2:0.05") == [0.0, 0.05, 0.1, 0.15, 0.2]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "quditsum.cli", "bound", "--dim", "2", "--qudits", "10", "--eps", "0.01"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout == "7\n"


def test_qbest_map_full_grid_columns_settle(capsys):
    code, out, _ = _run(capsys, "qbest-map", "--dim", "2", "--n", "5:50", "--p", "0.0:0.2:0.02")
    assert code == EXIT_OK
    rows = _rows(out)
    assert len(rows) == 46 * 11
    for p in {r["p"] for r in rows}:
        tail = {r["q_best"] for r in rows if r["p"] == p and int(r["n"]) >= 35}
        assert len(tail) == 1, p
