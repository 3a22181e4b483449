import csv
import json

import numpy as np
import pytest

from pblf import experiment as ex
from pblf.cli import main
from pblf.errors import ConfigError


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def simulate_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = main(["simulate", "--preset", "paper-output-constrained", "--out", str(out)])
    return code, out


def test_simulate_artifacts(simulate_out):
    code, out = simulate_out
    assert code == 0
    rows = read_csv(out / "trajectory.csv")
    assert rows[0] == ["t", "x1", "x2", "z1", "z2", "alpha1", "u", "V", "Vdot_analytic"]
    assert len(rows) - 1 == 30001
    for name in ("report.txt", "report.json", *(f"fig{i}.svg" for i in range(1, 6))):
        assert (out / name).exists()
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] and rep["metrics"]["max_abs_x1"] < 0.56
    assert rep["config"]["schema"] == ex.SCHEMA


def test_csv_digits_and_locale(simulate_out):
    _, out = simulate_out
    row = read_csv(out / "trajectory.csv")[1]
    assert row[0] == "0"
    assert all("," not in c for c in row)
    assert float(row[6]) == pytest.approx(-9.8807, abs=1e-3)
    assert len(row[3].replace("-", "").replace(".", "").lstrip("0")) <= 17


def test_svgs_self_contained(simulate_out):
    _, out = simulate_out
    for i in range(1, 6):
        svg = (out / f"fig{i}.svg").read_text()
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
        assert "href" not in svg and "<image" not in svg
        assert svg.count("http://") == 1  # the xmlns declaration only
    fig1 = (out / "fig1.svg").read_text()
    assert "k_x1" in fig1


def test_identical_reruns_are_byte_identical(tmp_path):
    args = ["simulate", "--preset", "paper-output-constrained", "--set", "t_final=3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_inadmissible_initial_state_exit_2(tmp_path, capsys):
    code = main(["simulate", "--preset", "paper-output-constrained", "--set", "x0=0.7,1.5", "--out", str(tmp_path)])
    assert code == 2
    assert "x1(0)" in capsys.readouterr().err


def test_negative_gain_exit_3(tmp_path):
    assert main(["verify", "--preset", "paper-output-constrained", "--set", "kappa1=-1", "--out", str(tmp_path)]) == 3


def test_bad_overrides_exit_3(tmp_path):
    assert main(["simulate", "--set", "nope=1", "--out", str(tmp_path)]) == 3
    assert main(["simulate", "--set", "h", "--out", str(tmp_path)]) == 3
    assert main(["simulate", "--set", "h=abc", "--out", str(tmp_path)]) == 3
    assert main(["simulate", "--set", "t_final=0", "--out", str(tmp_path)]) == 3
    assert main(["simulate", "--preset", "unknown", "--out", str(tmp_path)]) == 3
    assert main(["simulate", "--set", "mode=sideways", "--out", str(tmp_path)]) == 3


def test_full_state_simulate_reports_bounds(tmp_path, capsys):
    code = main(["simulate", "--preset", "paper-full-state", "--set", "t_final=5", "--out", str(tmp_path)])
    assert code == 0
    text = (tmp_path / "report.txt").read_text()
    assert "proof-consistent" in text and "printed" in text
    rep = json.loads((tmp_path / "report.json").read_text())
    assert len(rep["bounds"]["x-space proof-consistent"]) == 2


def test_verify_coarse_step_names_failing_check(tmp_path, capsys):
    code = main(["verify", "--set", "h=0.1", "--set", "t_final=10", "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "report.json").read_text())
    failed = [c for c in rep["checks"] if not c["passed"]]
    if code == 1:
        assert failed and all(c["t"] is not None or c["detail"] for c in failed)
    else:
        assert code in (0, 2)


def test_verify_short_run_passes(tmp_path):
    assert main(["verify", "--set", "t_final=10", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    names = {c["name"] for c in rep["checks"]}
    assert "cross_simulation" in names and "x-space vdot_identity" in names and "z-space error_bounds" in names


def test_compare(tmp_path):
    code = main(["compare", "--kinds", "LogPBLF,RationalPBLF", "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "compare.csv")
    assert rows[0] == ["kind", "status", "detail", "control_effort", "max_abs_u", "max_abs_x1"]
    assert [r[0] for r in rows[1:]] == ["LogPBLF", "RationalPBLF"]
    for r in rows[1:]:
        assert r[1] == "ok" and float(r[5]) < 0.56
    assert (tmp_path / "compare_u.svg").exists() and (tmp_path / "barrier_shapes.svg").exists()


def test_compare_barrier_shape_scaling(tmp_path):
    code = main(["compare", "--kinds", "StandardLog,LogPBLF", "--set", "t_final=1", "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "barrier_shapes.csv")
    assert rows[0] == ["z", "V_StandardLog", "V_LogPBLF", "dV_StandardLog", "dV_LogPBLF"]
    data = np.array(rows[1:], dtype=float)
    assert np.allclose(data[:, 4], data[:, 3] / 10.0, rtol=1e-12, atol=0)


def test_compare_single_kind_exit_3(tmp_path):
    assert main(["compare", "--kinds", "LogPBLF", "--out", str(tmp_path)]) == 3
    assert main(["compare", "--kinds", "LogPBLF,LogPBLF", "--out", str(tmp_path)]) == 3


def test_sweep_beta(tmp_path):
    code = main(["sweep", "--param", "beta", "--values", "1,5,10,20", "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "sweep.csv")
    header, body = rows[0], rows[1:]
    assert len(body) == 4
    assert [float(r[0]) for r in body] == [1.0, 5.0, 10.0, 20.0]
    col = header.index("max_abs_x1")
    assert all(r[header.index("status")] == "ok" for r in body)
    # with the barrier width taken as k1 = 0.56 on z1, only the larger beta values keep |x1| < 0.56
    vals = [float(r[col]) for r in body]
    assert vals[2] < 0.56 and vals[3] < 0.56
    assert vals == sorted(vals, reverse=True)


def test_sweep_h_tail_error(tmp_path):
    code = main(["sweep", "--param", "h", "--values", "0.02,0.01", "--set", "t_final=3",
                 "--ref-h", "1e-3", "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "sweep.csv")
    col = rows[0].index("tail_error")
    e1, e2 = float(rows[1][col]), float(rows[2][col])
    assert e2 < e1 / 8


def test_sweep_errors(tmp_path):
    assert main(["sweep", "--param", "beta", "--values", "", "--out", str(tmp_path)]) == 3
    assert main(["sweep", "--param", "kappa1", "--values", "1,-1", "--out", str(tmp_path)]) == 3
    assert main(["sweep", "--param", "h", "--values", "0.001,0.0007", "--set", "t_final=1",
                 "--out", str(tmp_path)]) == 3


def test_sweep_records_breach_in_row(tmp_path):
    code = main(["sweep", "--param", "h", "--values", "0.05", "--set", "k1_mode=derived", "--set", "t_final=2",
                 "--ref-h", "0.01", "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert rows[1][rows[0].index("status")] == "ConstraintBreach"


def test_pblf_out_env(tmp_path, monkeypatch):
    monkeypatch.setenv("PBLF_OUT", str(tmp_path / "envout"))
    assert main(["simulate", "--set", "t_final=0.5"]) == 0
    assert (tmp_path / "envout" / "trajectory.csv").exists()


def test_config_file_roundtrip(tmp_path):
    cfg = ex.apply_overrides(ex.preset("paper-output-constrained"), ["t_final=0.5", "mode=both"])
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "trajectory_z.csv").exists()
    path.write_text(json.dumps({**cfg.to_dict(), "schema": "other/9"}))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 3
    path.write_text("[1, 2]")
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 3


def test_overrides_and_build():
    cfg = ex.apply_overrides(ex.preset("paper-output-constrained"), ["kappa2=3", "k_x1=0.6", "x0=0.1,0.2"])
    assert cfg.kappa == [2.0, 3.0] and cfg.constraint_box[0] == 0.6 and cfg.x0 == [0.1, 0.2]
    built = ex.build(ex.apply_overrides(cfg, ["k1_mode=derived"]))
    assert built.controller.channels[0].k == pytest.approx(0.1)
    with pytest.raises(ConfigError):
        ex.build(ex.apply_overrides(cfg, ["k1_mode=other"]))
    with pytest.raises(ConfigError):
        ex.build(ex.apply_overrides(cfg, ["k_x1=0.4", "k1_mode=derived"]))
    with pytest.raises(ConfigError):
        ex.build(ex.apply_overrides(ex.preset("paper-full-state"), ["k=0.56"]))
    with pytest.raises(ConfigError):
        ex.ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ex.stride_for(7e-4, 1e-3)
    assert ex.stride_for(2.5e-4, 1e-3) == 4


def test_csv_header():
    assert ex.csv_header(3) == ["t", "x1", "x2", "x3", "z1", "z2", "z3", "alpha1", "alpha2", "u", "V", "Vdot_analytic"]
