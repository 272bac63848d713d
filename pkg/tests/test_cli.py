import csv
import io
import json
import math
import subprocess
import sys

import pytest

from entspec.cli import ExperimentConfig, main
from entspec.cnf import EXAMPLE_FORMULA, brute_force_count, parse_dimacs
from entspec.errors import ArgumentError

OR12 = "p cnf 2 1\n1 2 0\n"


@pytest.fixture
def cnf(tmp_path):
    def write(text, name="f.cnf"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


def _json_run(capsys, argv):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


def test_count_sat_example_formula(capsys, cnf):
    rec = _json_run(capsys, ["count-sat", "--dimacs", cnf(EXAMPLE_FORMULA.to_dimacs())])
    assert rec["brute_force"] == rec["cgd_exact"] == rec["cgd_pipeline"] == rec["cgd_from_ces"] == 4
    assert rec["agree"] is True
    assert rec["uev"] == pytest.approx(4, abs=1e-9)


def test_count_sat_tautology_exit_code(capsys, cnf):
    assert main(["count-sat", "--dimacs", cnf("p cnf 2 1\n1 -1 0\n")]) == 2
    assert "2^2 = 4" in capsys.readouterr().err


def test_count_sat_width_three_exit_code(capsys, cnf):
    assert main(["count-sat", "--dimacs", cnf("p cnf 3 1\n1 2 3 0\n")]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_missing_file_exit_code(capsys, tmp_path):
    assert main(["count-sat", "--dimacs", str(tmp_path / "absent.cnf")]) == 1


def test_spectrum_csv_and_report(capsys, cnf, tmp_path):
    report = tmp_path / "report.json"
    assert main(["spectrum", "--dimacs", cnf(EXAMPLE_FORMULA.to_dimacs()), "--report", str(report)]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 1 + 8
    rec = json.loads(report.read_text())
    assert rec["count"] == 4


def test_qpe_count_modes(capsys, cnf):
    path = cnf(EXAMPLE_FORMULA.to_dimacs())
    for mode in ("exact_diagonal", "exact_expm"):
        rec = _json_run(capsys, ["qpe-count", "--dimacs", path, "--mode", mode])
        assert rec["match"] is True and rec["rounded"] == 4


def test_qpe_count_rounds(capsys, cnf):
    rec = _json_run(capsys, ["qpe-count", "--dimacs", cnf(OR12), "--r", "3"])
    assert rec["r"] == 3 and rec["rounded"] == 3


def test_invalid_arguments(capsys, cnf):
    path = cnf(OR12)
    assert main(["qpe-count", "--dimacs", path, "--r", "2"]) == 1
    assert main(["qpe-count", "--dimacs", path, "--epsilon", "2"]) == 1
    assert main(["qpe-count"]) == 1


def _bench_rows(capsys, argv):
    assert main(argv) == 0
    return list(csv.DictReader(io.StringIO(capsys.readouterr().out)))


def test_taylor_bench_sweep(capsys):
    rows = _bench_rows(capsys, ["taylor-bench", "--seed", "3", "--n", "1", "--t", "0", "3.141592653589793",
                                "--epsilon", "1e-8"])
    zero = [r for r in rows if float(r["t"]) == 0]
    assert len(zero) == 1 and int(zero[0]["K"]) == 0 and float(zero[0]["error"]) <= 1e-12
    pi_rows = [r for r in rows if float(r["t"]) > 0]
    chosen = [r for r in pi_rows if r["chosen"] == "1"]
    assert len(chosen) == 1 and float(chosen[0]["error"]) <= 1e-8
    # past K = |rho t| the error falls at every step until the chosen order
    errs = [float(r["error"]) for r in pi_rows if int(r["K"]) >= math.pi]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_taylor_bench_needs_seed_and_scale(capsys):
    assert main(["taylor-bench", "--n", "1"]) == 1
    assert main(["taylor-bench", "--seed", "1", "--n", "5"]) == 3


def test_taylor_bench_deterministic(capsys):
    argv = ["taylor-bench", "--seed", "5", "--n", "2", "--t", "1.0"]
    assert _bench_rows(capsys, argv) == _bench_rows(capsys, argv)


def test_gen_formulas(capsys, tmp_path):
    out = tmp_path / "gen"
    assert main(["gen-formulas", "--seed", "7", "--n", "3", "--count", "4", "--out", str(out)]) == 0
    paths = capsys.readouterr().out.split()
    assert len(paths) == 4
    texts = [open(p).read() for p in paths]
    for text in texts:
        f = parse_dimacs(text)
        assert f.num_vars == 3 and 1 <= f.num_clauses <= 9
    assert main(["gen-formulas", "--seed", "7", "--n", "3", "--count", "4", "--out", str(tmp_path / "again")]) == 0
    again = capsys.readouterr().out.split()
    assert [open(p).read() for p in again] == texts
    assert main(["gen-formulas", "--n", "3", "--out", str(out)]) == 1


def test_config_file(capsys, cnf, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"r": 3, "mode": "exact_expm"}))
    rec = _json_run(capsys, ["qpe-count", "--config", str(cfg), "--dimacs", cnf(OR12)])
    assert (rec["r"], rec["mode"]) == (3, "exact_expm")
    cfg.write_text(json.dumps({"rounds": 3}))
    assert main(["qpe-count", "--config", str(cfg), "--dimacs", cnf(OR12)]) == 1
    with pytest.raises(ArgumentError):
        ExperimentConfig.load(str(cfg), {})


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"r": 3}))
    assert ExperimentConfig.load(str(cfg), {"r": 5}).r == 5


def test_scale_cap_from_environment(capsys, cnf, monkeypatch):
    monkeypatch.setenv("ENTSPEC_MAX_QUBITS", "8")
    assert main(["history-verify", "--dimacs", cnf(OR12)]) == 3


def test_history_verify(capsys, cnf, tmp_path):
    per_t, terms = tmp_path / "per_t.csv", tmp_path / "terms.json"
    rec = _json_run(capsys, ["history-verify", "--dimacs", cnf(OR12), "--csv", str(per_t), "--terms", str(terms)])
    assert rec["ground_energy"] < 1e-9
    assert rec["gap"] >= rec["gap_bound"] == pytest.approx(1 / (2 * (rec["T"] + 1) ** 2))
    assert rec["tau_residual"] < 1e-10
    assert rec["locality_violations"] == 0 and rec["psd_violations"] == 0
    assert len(rec["per_t"]) == rec["T"] + 1
    assert per_t.read_text().startswith("t,max_eig,min_nonzero_eig\n")
    assert all(len(t["support"]) <= 5 for t in json.loads(terms.read_text()))


def test_console_entry_point(tmp_path):
    path = tmp_path / "f.cnf"
    path.write_text(OR12)
    proc = subprocess.run([sys.executable, "-m", "entspec.cli", "count-sat", "--dimacs", str(path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["brute_force"] == brute_force_count(parse_dimacs(OR12))
