import json
import subprocess
import sys

import numpy as np
import pytest

from coopscat.cli import main
from coopscat.table import ResultTable, config_hash, read_config_file, read_csv, write_config_file


def run(tmp_path, *args, name="out.csv"):
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out), "--jobs", "1"])
    return code, out


def test_sweep_lattice_table(tmp_path):
    code, out = run(tmp_path, "sweep-lattice", "--a-min", "0.1", "--a-max", "0.5", "--a-step", "0.05")
    assert code == 0
    meta, rows = read_csv(out)
    assert meta["artifact"].startswith("coopscat")
    assert "lambda_a" in meta["units"]
    assert json.loads(meta["config"])["a_step"] == 0.05
    assert len(rows) == 9
    for r in rows:
        assert r["status"] == "ok"
        assert float(r["T"]) + float(r["R"]) == pytest.approx(1.0, abs=1e-10)
    assert meta["column Delta"] == "gamma"


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep settings\na-min = 0.2\na_max: 0.3\na-step = 0.05\ndelta = 1.5\n")
    code, out = run(tmp_path, "sweep-lattice", "--config", str(cfg), "--delta", "0.5")
    assert code == 0
    meta, rows = read_csv(out)
    conf = json.loads(meta["config"])
    assert conf["a_min"] == 0.2 and conf["delta"] == 0.5
    assert [float(r["a"]) for r in rows] == [0.2, 0.25, 0.3]
    assert meta["config_hash"] == config_hash(conf)


def test_config_hash_is_stable_and_sensitive():
    a = {"x": 1, "y": [1, 2]}
    assert config_hash(a) == config_hash({"y": [1, 2], "x": 1})
    assert config_hash(a) != config_hash({"x": 2, "y": [1, 2]})


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 3\n")
    assert run(tmp_path, "sweep-lattice", "--config", str(bad))[0] == 2
    assert run(tmp_path, "sweep-lattice", "--tol", "1e-9")[0] == 2
    # grid landing on the a = lambda threshold
    assert run(tmp_path, "sweep-lattice", "--a-min", "0.9", "--a-max", "1.0", "--a-step", "0.05")[0] == 2
    assert "threshold" in capsys.readouterr().err


def test_failed_rows_exit_3(tmp_path):
    # the last column sits exactly on the a = lambda threshold
    code, out = run(tmp_path, "map-detuning", "--a-min", "0.9", "--a-max", "1.0", "--n-a", "3",
                    "--n-delta", "3")
    assert code == 3
    meta, rows = read_csv(out)
    bad = [r for r in rows if r["status"] != "ok"]
    assert len(bad) == 1 and bad[0]["status"] == "ThresholdDegeneracy"
    assert bad[0]["R"] == "" and meta["failed_rows"] == "1"
    assert sum(r["status"] == "ok" for r in rows) == 8


def test_map_detuning_contains_resonance_rows(tmp_path):
    code, out = run(tmp_path, "map-detuning", "--n-a", "4", "--n-delta", "5", "--a-max", "0.6")
    assert code == 0
    _, rows = read_csv(out)
    res = [r for r in rows if r["kind"] == "resonance"]
    assert len(res) == 4
    assert all(float(r["R"]) == pytest.approx(1.0, abs=1e-10) for r in res)


def test_angle_map_small_grid(tmp_path):
    code, out = run(tmp_path, "angle-map", "--n-k", "9")
    assert code == 0
    _, rows = read_csv(out)
    assert rows and all(np.hypot(float(r["kx"]), float(r["ky"])) < 1 for r in rows)


def test_bands_and_sidecar(tmp_path):
    out = tmp_path / "bands.csv"
    code = main(["bands", "--points", "8", "--out", str(out), "--sidecar", "--jobs", "1"])
    assert code == 0
    side = json.loads((tmp_path / "bands.csv.json").read_text())
    assert side["command"] == "bands" and "band_z" in side["columns"]
    _, rows = read_csv(out)
    assert len(rows) == 22
    assert all(r["z_polarized"] == "1" for r in rows)


def test_beam_summary(tmp_path):
    code, out = run(tmp_path, "beam", "--a", "0.5", "--nx", "6", "--ny", "6", "--extent", "2", "--resolution", "0.5")
    assert code == 0
    meta, rows = read_csv(out)
    summary = json.loads(meta["summary"])
    assert summary["residual"] < 1e-10
    assert len(rows) == 81


def test_disorder_saturation_kk(tmp_path):
    code, out = run(tmp_path, "disorder", "--nx", "6", "--ny", "6", "--samples", "5", name="d.csv")
    assert code == 0
    meta, rows = read_csv(out)
    assert "PCG64" in meta["rng"] and len(rows) == 2
    code, out = run(tmp_path, "saturation", name="s.csv")
    assert code == 0
    row = read_csv(out)[1][0]
    assert 13 <= float(row["N_photons"]) <= 16
    code, out = run(tmp_path, "kk-check", "--x", "0.5", name="k.csv")
    assert code == 0
    assert read_csv(out)[1][0]["within_tolerance"] == "1"


def test_stdout_when_no_out(capsys):
    assert main(["saturation", "--jobs", "1"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("# artifact:")


def test_console_script_runs():
    res = subprocess.run([sys.executable, "-m", "coopscat.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "coopscat" in res.stdout


def test_table_never_writes_nan(tmp_path):
    t = ResultTable(["x", "y"], units={"x": "lambda"})
    t.add(x=np.float64(0.5), y=float("nan"))
    t.add(status="ConvergenceFailure", x=1.0)
    text = t.to_csv()
    assert "nan" not in text.lower()
    assert "# failed_rows: 1" in text
    assert "0.5,,ok" in text


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "c.cfg"
    write_config_file(path, {"a_min": 0.1, "dr": [0.0, 0.02], "waist": None})
    got = read_config_file(path)
    assert got == {"a_min": "0.1", "dr": "0.0,0.02"}
