import json
import subprocess
import sys

import pytest

from triplewell.cli import main
from triplewell.scenarios import OUTPUT_ENV

SMALL = {"name": "small", "depth": 4.0, "n_sub": 8, "g": 1.0, "initial_well": "L",
         "tracked": ["|3,0,0>_0"], "horizon_periods": 1, "samples_per_period": 40,
         "calibration_n_sub": 21}


def _config(tmp_path, **patch):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(dict(SMALL, **patch)))
    return str(path)


def test_list_shows_all_builtins(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in ["SELF_TRAP", "SB_FIRST", "SB_SECOND", "CORR_TWO", "TILT_SELECT"]:
        assert name in out


def test_run_uses_environment_output_root(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["run", _config(tmp_path), "--no-figures"]) == 0
    assert (tmp_path / "env" / "small" / "observables.csv").is_file()
    assert "wrote" in capsys.readouterr().out
    assert main(["--output-root", str(tmp_path / "flag"), "run", _config(tmp_path), "--no-figures"]) == 0
    assert (tmp_path / "flag" / "small" / "summary.json").is_file()


@pytest.mark.parametrize("argv,code", [
    (["run", "NO_SUCH_SCENARIO"], 5),
    (["resonances", "--V0", "4", "--n-sub", "8", "--initial", "|3,0>", "--partner", "|2,1,0>_0"], 2),
    (["calibrate", "--target-J", "0.01", "--n-sub", "21"], 4),
])
def test_exit_codes(argv, code, tmp_path, capsys):
    assert main(["--output-root", str(tmp_path), *argv]) == code
    assert capsys.readouterr().err.startswith("error:")


def test_config_errors_exit_2(tmp_path):
    assert main(["--output-root", str(tmp_path), "run", _config(tmp_path, colour="red")]) == 2


def test_capacity_error_exits_3(tmp_path):
    assert main(["--output-root", str(tmp_path), "run", _config(tmp_path, n_sub=300)]) == 3


def test_missing_resonance_exits_5(tmp_path):
    cfg = _config(tmp_path, g="resonance(|3,0,0>_0, |2,1,0>[0,1,0])", g_scan=[0, 0.5, 3])
    assert main(["--output-root", str(tmp_path), "run", cfg]) == 5


def test_calibrate_spectrum_and_resonances(tmp_path, capsys):
    root = ["--output-root", str(tmp_path)]
    assert main([*root, "calibrate", "--n-sub", "21"]) == 0
    assert "V0 = " in (tmp_path / "calibration" / "calibration.txt").read_text()
    assert main([*root, "spectrum", "--V0", "9.85", "--n-sub", "9", "--g-points", "7"]) == 0
    assert (tmp_path / "spectrum" / "spectrum.png").is_file()
    lines = (tmp_path / "spectrum" / "spectrum.csv").read_text().splitlines()
    assert lines[0].startswith("# triplewell") and any(l.startswith("label,") for l in lines)
    capsys.readouterr()
    assert main([*root, "resonances", "--V0", "9.85", "--n-sub", "9", "--g-max", "10", "--g-points", "21",
                 "--initial", "|3,0,0>_0", "--partner", "|2,1,0>[0,1,0]", "--partner", "|1,1,1>_0"]) == 0
    out = capsys.readouterr().out
    assert "no crossing" in out  # the single-occupation row never meets the triple
    rows = json.loads((tmp_path / "resonances" / "resonances.json").read_text())
    assert len(rows) == 1 and 3 < rows[0]["g_number_state"] < 6


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "triplewell", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "triplewell" in proc.stdout
