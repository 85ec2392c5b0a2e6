import json
import subprocess
import sys

import numpy as np
import pytest

from mfgmaster.cli import main
from mfgmaster.harness import (
    CSV_HEADER,
    UsageError,
    emit_csv,
    holder_time_ratio,
    parse_config,
    read_csv,
)
from mfgmaster.model import build_grid
from mfgmaster.rates import fit_rate
from mfgmaster.validation import ValidationError

SMALL_MODEL = {
    "n_x": 21, "n_t": 21, "T": 1.0, "alpha": 0.5,
    "a": {"kind": "constant", "value": 1.0},
    "hamiltonian": {"kind": "sqrt1p", "potential": []},
    "F": {"cos_coeffs": [0.5, 0.3]},
    "G": {"cos_coeffs": [0.5, 0.3]},
}


def write_config(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_fit_rate_exact_powers():
    fit = fit_rate([(h, 3 * h ** 2) for h in (0.1, 0.05, 0.025)])
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_rate_drops_zero_errors():
    fit = fit_rate([(0.1, 0.0), (0.1, 1e-2), (0.05, 2.5e-3), (0.025, 6.25e-4)])
    assert fit.notes and fit.slope == pytest.approx(2.0)
    with pytest.raises(ValidationError):
        fit_rate([(0.1, 0.0), (0.05, 1.0), (0.025, 0.5)])
    with pytest.raises(ValidationError):
        fit_rate([(-0.1, 1.0), (0.05, 1.0), (0.025, 0.5)])


def test_csv_round_trip(tmp_path):
    path = tmp_path / "r.csv"
    emit_csv([("e", "p", "m", 0.1), ("e", "q", "m", 1 / 3)], path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[2] == "e,q,m,0.33333333333333331"
    assert read_csv(path)[1][3] == 1 / 3
    with pytest.raises(ValidationError):
        emit_csv([("e", "p", 0.1)], path)


def test_parse_config_forms():
    single = parse_config({**SMALL_MODEL, "kind": "duality"})
    assert len(single) == 1 and single[0].model_spec["n_x"] == 21
    many = parse_config({"model": SMALL_MODEL, "seed": 3,
                         "experiments": [{"kind": "duality"}, {"kind": "neumann", "name": "nm"}]})
    assert [c.name for c in many] == ["duality", "nm"] and many[0].seed == 3
    assert parse_config({"model": SMALL_MODEL, "kind": "duality"}, seed=9)[0].seed == 9
    with pytest.raises(UsageError):
        parse_config({"model": SMALL_MODEL, "kind": "sorting"})
    with pytest.raises(UsageError):
        parse_config({"model": SMALL_MODEL})


def test_holder_time_ratio_of_static_path():
    grid = build_grid(11, 11)
    assert holder_time_ratio(grid, np.ones((11, 11))) == 0.0


def test_cli_duality_passes(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"model": SMALL_MODEL, "seed": 1, "kind": "duality",
                                             "params": {"n_samples": 5}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    rows = read_csv(tmp_path / "out" / "results.csv")
    defect = [r[3] for r in rows if r[2] == "max_duality_defect"][0]
    assert defect < 1e-12
    diag = json.loads((tmp_path / "out" / "diagnostics.json").read_text())
    assert diag["experiments"]["duality"]["passed"]


def test_cli_decoupled_solve(tmp_path):
    model = {**SMALL_MODEL, "F": {"cos_coeffs": [0.0]}, "G": {"cos_coeffs": [0.4]}}
    cfg = write_config(tmp_path / "c.json", {"model": model, "kind": "mfg-solve"})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    rows = read_csv(tmp_path / "out" / "results.csv")
    assert ("mfg-solve", "init=constant", "iterations", 1.0) in rows


def test_cli_failure_exit_code(tmp_path):
    cfg = write_config(tmp_path / "d.json", {"model": SMALL_MODEL, "kind": "mfg-solve",
                                             "params": {"max_iter": 2}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "out2")]) == 1
    diag = json.loads((tmp_path / "out2" / "diagnostics.json").read_text())
    assert diag["experiments"]["mfg-solve"]["gap_history"]


def test_cli_usage_errors(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"model": SMALL_MODEL, "kind": "nonsense"})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", "x"]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["run", "--config", str(tmp_path / "bad.json"), "--out", "x"]) == 2
    with pytest.raises(SystemExit) as info:
        main(["run", "--out", "x"])
    assert info.value.code == 2


def test_runs_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"model": SMALL_MODEL, "seed": 5,
                                             "experiments": [{"kind": "duality", "params": {"n_samples": 3}},
                                                             {"kind": "mfg-solve"}]})
    main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"])
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_validate_command(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"model": SMALL_MODEL, "kind": "duality"})
    assert main(["validate", "--config", cfg]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report


def test_validate_rejects_non_monotone(tmp_path, capsys):
    model = {**SMALL_MODEL, "F": {"cos_coeffs": [0.5, -0.3]}}
    cfg = write_config(tmp_path / "c.json", {"model": model, "kind": "duality"})
    assert main(["validate", "--config", cfg]) == 1


def test_console_script(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"model": SMALL_MODEL, "kind": "duality",
                                             "params": {"n_samples": 2}})
    proc = subprocess.run([sys.executable, "-m", "mfgmaster.cli", "run", "--config", cfg,
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
