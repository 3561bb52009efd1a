import json

import pytest

from fermatlab import cli
from fermatlab.config import EXPERIMENTS, TOLERANCE_DEFAULTS, ConfigParseError, parse_config
from fermatlab.experiments import default_config


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj, indent=2) if not isinstance(obj, str) else obj)
    return str(p)


QUICK_AA = {"experiment": "aa_length", "path": {"n_steps": 400}}
QUICK_CLASSICAL = {
    "experiment": "classical_stationarity",
    "path": {"grids": [100, 200, 400]},
    "variation": {"n_directions": 2, "epsilons": [0.01, 0.005]},
}


def test_defaults_exist_and_parse_for_every_experiment():
    for name in EXPERIMENTS:
        cfg = parse_config(json.dumps(default_config(name)), default_config)
        assert cfg.experiment == name
        assert set(cfg.tolerances) == set(TOLERANCE_DEFAULTS)


def test_unknown_key_names_key_and_line():
    text = '{\n  "experiment": "aa_length",\n  "variation": {\n    "epsilon_list": [0.1]\n  }\n}\n'
    with pytest.raises(ConfigParseError) as info:
        parse_config(text, default_config)
    assert info.value.line == 4
    assert "epsilon_list" in str(info.value)


@pytest.mark.parametrize("text, fragment", [
    ('{"experiment": "nope"}', "unknown experiment"),
    ('{"experiment": "aa_length",\n "path": {"t_final": -1}}', "t_final"),
    ('{"experiment": "aa_length", "experiment": "aa_length"}', "duplicate"),
    ('{"experiment": "aa_length", "system": {"kind": "pendulum", "parameters": {"lenght": 1}}}', "lenght"),
    ('{"experiment": "aa_length", "tolerances": {"ratio": "small"}}', "ratio"),
    ('{"path": {}}', "experiment"),
    ('{"experiment": "aa_length",\n\n "path": [1, 2,]}', "line 3"),
])
def test_config_errors(text, fragment):
    with pytest.raises(ConfigParseError) as info:
        parse_config(text, default_config)
    assert fragment in str(info.value)


def test_cli_config_error_exits_2(tmp_path, capsys):
    path = write(tmp_path, '{\n "experiment": "aa_length",\n "variation": {"epsilon_list": [1]}\n}')
    assert cli.main(["run", path, "--output-dir", str(tmp_path / "out")]) == 2
    err = capsys.readouterr().err
    assert "epsilon_list" in err and "line 3" in err


def test_list_catalog_is_complete_and_stable(capsys):
    assert cli.main(["list"]) == 0
    first = capsys.readouterr().out
    cli.main(["list"])
    assert capsys.readouterr().out == first
    names = [line for line in first.splitlines() if line and not line.startswith(" ")]
    assert names == list(EXPERIMENTS)
    assert first.count("anchor: ") == 10


def test_run_writes_all_outputs(tmp_path):
    out = tmp_path / "aa"
    assert cli.main(["run", write(tmp_path, QUICK_AA), "--output-dir", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "met"
    assert report["config"]["system"]["parameters"] == {"dim": 8, "scale": 1.0}
    assert report["fermatlab_version"]
    manifest = (out / "MANIFEST").read_text()
    assert manifest.startswith("status: complete")
    assert "report.json" in manifest and "paths.csv" in manifest
    assert (out / "cells.csv").read_text().splitlines()[0] == ",".join(cli.CELL_HEADER)


def test_stationarity_run_is_deterministic_across_threads(tmp_path, monkeypatch):
    cfg = write(tmp_path, QUICK_CLASSICAL)
    assert cli.main(["run", cfg, "--output-dir", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("FERMATLAB_THREADS", "3")
    assert cli.main(["run", cfg, "--output-dir", str(tmp_path / "b")]) == 0
    for name in ("report.json", "cells.csv", "paths.csv", "convergence_classical_time.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "cells.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2 * 3 * 2


def test_seed_override_changes_directions(tmp_path):
    cfg = write(tmp_path, QUICK_CLASSICAL)
    cli.main(["run", cfg, "--output-dir", str(tmp_path / "a")])
    cli.main(["run", cfg, "--output-dir", str(tmp_path / "b"), "--seed", "99"])
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert b["config"]["variation"]["seed"] == 99
    assert a["results"] != b["results"]


def test_diverging_expectation_exits_1(tmp_path):
    cfg = {"experiment": "isoperimetric", "path": {"grids": [200, 400]}, "expect": {"multiplier": "consistent"}}
    assert cli.main(["run", write(tmp_path, cfg), "--output-dir", str(tmp_path / "iso")]) == 1
    report = json.loads((tmp_path / "iso" / "report.json").read_text())
    assert report["expectations"]["multiplier"] == {"expected": "consistent", "observed": "inconsistent",
                                                    "met": False}


def test_system_error_exits_2_and_marks_manifest(tmp_path):
    cfg = {"experiment": "config_space", "system": {"kind": "classical_spin_pair"},
           "path": {"initial_state": [0.3, -0.2, 0.1, 1.0]}}
    out = tmp_path / "bad"
    assert cli.main(["run", write(tmp_path, cfg), "--output-dir", str(out)]) == 2
    assert (out / "MANIFEST").read_text().startswith("status: failed")
    assert not (out / "report.json").exists()


def test_unknown_expectation_is_a_config_error(tmp_path):
    cfg = dict(QUICK_AA, expect={"verdikt": "pass"})
    assert cli.main(["run", write(tmp_path, cfg), "--output-dir", str(tmp_path / "x")]) == 2


def test_bad_thread_settings(tmp_path, monkeypatch):
    monkeypatch.setenv("FERMATLAB_THREADS", "many")
    assert cli.main(["run", write(tmp_path, QUICK_AA), "--output-dir", str(tmp_path / "x")]) == 2
    assert cli.main(["run", write(tmp_path, QUICK_AA), "--threads", "0", "--output-dir", str(tmp_path / "y")]) == 2


def test_grid_sweep_reports_second_order_refinement(tmp_path):
    out = tmp_path / "sweep"
    code = cli.main(["sweep", write(tmp_path, QUICK_CLASSICAL), "--axis", "grid", "--values", "100,200,400,800",
                     "--output-dir", str(out)])
    assert code == 0
    combined = json.loads((out / "sweep.json").read_text())
    assert 1.7 <= combined["outcomes"]["refinement_order"] <= 2.3
    assert len(combined["sub_reports"]) == 4
    assert (out / "sweep.svg").exists() and (out / "grid_100" / "report.json").exists()


def test_sweep_axis_validation(tmp_path):
    assert cli.main(["sweep", write(tmp_path, QUICK_AA), "--axis", "epsilon", "--values", "0.1,0.2",
                     "--output-dir", str(tmp_path / "s")]) == 2
    assert cli.main(["sweep", write(tmp_path, QUICK_CLASSICAL), "--axis", "dimension", "--values", "2,3",
                     "--output-dir", str(tmp_path / "s")]) == 2
    assert cli.main(["sweep", write(tmp_path, QUICK_CLASSICAL), "--axis", "grid", "--values", "100",
                     "--output-dir", str(tmp_path / "s")]) == 2


def test_driven_qubit_residual_run(tmp_path):
    cfg = {"experiment": "quantum_residuals", "system": {"kind": "driven_qubit"},
           "path": {"t_final": 5.0, "n_steps": 1000, "initial_state": [1, 0]},
           "expect": {"extended_residual": "pass"}}
    assert cli.main(["run", write(tmp_path, cfg), "--output-dir", str(tmp_path / "d")]) == 0
