import json
import os

import numpy as np
import pytest

from vpcalib.cli import main
from vpcalib.config import (
    canonical_text,
    cylinder_config_fields,
    cylinder_config_from_fields,
    parse_config_text,
)
from vpcalib.cylinder import CylinderConfig
from vpcalib.masks import MaskProfile, MaskSpec


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_calibrate_reports_tanh_constant(capsys):
    code, out, err = run_cli(capsys, "calibrate", "--profile", "tanh")
    assert code == 0
    payload = json.loads(out)
    assert payload["zero_shift_smoothing"]["tanh"] == pytest.approx(
        2.648226340992114, abs=1e-9)
    assert payload["tanh_analytic"] == pytest.approx(2.648226340992114, abs=1e-9)


def test_calibrate_writes_csv_and_figure(tmp_path, capsys):
    out = tmp_path / "cal.csv"
    code, _, _ = run_cli(capsys, "calibrate", "--profile", "tanh",
                         "--points", "10", "-o", str(out))
    assert code == 0
    text = out.read_text()
    assert text.startswith("# vpcalib ")
    assert "profile,delta,optimal_shift,residual" in text
    assert (tmp_path / "cal.png").exists()
    assert (tmp_path / "cal_constants.json").exists()


def test_classify_strong_regime(capsys):
    code, out, _ = run_cli(capsys, "classify", "--re", "200", "--eta", "1e-3")
    assert code == 0
    payload = json.loads(out)
    assert payload["regime"] == "strong"
    assert payload["eps"] == pytest.approx(2.236e-3, abs=1e-6)


def test_classify_rejects_bad_values(capsys):
    code, out, err = run_cli(capsys, "classify", "--re", "-1", "--eta", "1e-3")
    assert code == 2
    assert json.loads(err)["error"] == "config"


def test_slope_on_quadratic_csv(tmp_path, capsys):
    path = tmp_path / "data.csv"
    x = np.geomspace(0.01, 1.0, 8)
    lines = ["x,y"] + [f"{float(xi)!r},{float(xi)**2!r}" for xi in x]
    path.write_text("\n".join(lines) + "\n")
    code, out, _ = run_cli(capsys, "slope", "--input", str(path))
    assert code == 0
    assert json.loads(out)["slope"] == pytest.approx(2.0, abs=1e-10)


def test_poiseuille_outputs_are_deterministic(tmp_path, capsys):
    args = ("poiseuille", "--eps", "0.03,0.01,0.003,0.001",
            "--mask", "discontinuous,0,0", "-n", "800")
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    assert run_cli(capsys, *args, "-o", str(out1))[0] == 0
    assert run_cli(capsys, *args, "-o", str(out2))[0] == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert (tmp_path / "a.png").exists()


def test_stagnation_cli_row_annotations(tmp_path, capsys):
    out = tmp_path / "stag.csv"
    code, _, _ = run_cli(capsys, "stagnation", "--re", "1", "--eta", "1e-1,1e-2",
                         "--mask", "discontinuous,0,0", "-n", "900",
                         "-o", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[2] == "Re,eta,eps,mask,E1,Einf,error"
    # the eps >= 0.3 row is annotated rather than fatal
    bad = [l for l in lines[3:] if l.endswith("eps < 0.3")]
    assert len(bad) == 1


def test_config_round_trip_canonical():
    cfg = CylinderConfig(re=50.0, eta=1e-3,
                         spec=MaskSpec(MaskProfile("compact_erf", 1.0), 0.0, 0.017))
    fields = cylinder_config_fields(cfg)
    text = canonical_text(fields)
    reparsed = parse_config_text(text)
    assert canonical_text(reparsed) == text
    cfg2 = cylinder_config_from_fields(reparsed)
    assert cfg2.spec == cfg.spec
    assert cfg2.eta == cfg.eta
    assert cylinder_config_fields(cfg2) == fields


def test_cylinder_cli_short_run_and_compare(tmp_path, capsys):
    base = {
        "re": "50.0", "eta": "1e-2", "profile": "discontinuous",
        "shift": "0", "delta": "0", "n_theta": "32",
        "n_solid": "40", "n_mask": "16", "n_fluid": "60",
        "t_end": "0.05", "dt": "5e-4", "snapshot_times": "0.05",
        "n_ref": "100",
    }
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("".join(f"{k} = {v}\n" for k, v in base.items()))
    pen_dir = tmp_path / "pen"
    ref_dir = tmp_path / "ref"
    code, _, _ = run_cli(capsys, "cylinder", "--config", str(cfg_path),
                         "--mode", "reference", "-o", str(ref_dir))
    assert code == 0
    code, out, _ = run_cli(capsys, "cylinder", "--config", str(cfg_path),
                           "-o", str(pen_dir), "--compare", str(ref_dir))
    assert code == 0
    report = json.loads(out)
    assert "u" in report["errors"]["E1"]
    assert (pen_dir / "forces.csv").exists()
    assert (pen_dir / "forces.png").exists()
    assert (pen_dir / "errors.json").exists()
    # resumable: rerunning reuses the finished run
    code, _, _ = run_cli(capsys, "cylinder", "--config", str(cfg_path),
                         "-o", str(pen_dir))
    assert code == 0


def test_extrapolate_cli_affine_exact(tmp_path, capsys):
    # synthetic force files affine in eta extrapolate to the eta-free part
    t = np.arange(5) * 0.1
    header = "# vpcalib test\n# config: x=1\nt,Fx,Fy,T,F0x,F0y,T0\n"
    for name, eta in (("a", 1e-2), ("b", 1e-3)):
        d = tmp_path / name
        d.mkdir()
        rows = [",".join(repr(float(v)) for v in
                         (ti, 1.0 + 2.0 * eta, 0.5 - eta, 0.1, 0.0, 0.0, 0.0))
                for ti in t]
        (d / "forces.csv").write_text(header + "\n".join(rows) + "\n")
    out_dir = tmp_path / "ex"
    code, _, _ = run_cli(capsys, "extrapolate", "--run-a", str(tmp_path / "a"),
                         "--run-b", str(tmp_path / "b"),
                         "--eta-a", "1e-2", "--eta-b", "1e-3",
                         "-o", str(out_dir))
    assert code == 0
    data = np.loadtxt(out_dir / "forces.csv", delimiter=",", skiprows=3)
    np.testing.assert_allclose(data[:, 1], 1.0, atol=1e-12)
    np.testing.assert_allclose(data[:, 2], 0.5, atol=1e-12)


def test_repro_table1_passes(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "repro", "table1", "-o", str(tmp_path))
    assert code == 0
    assert out.count("[PASS]") == 5
    assert (tmp_path / "table1_summary.json").exists()


def test_repro_unknown_id(tmp_path, capsys):
    code, _, err = run_cli(capsys, "repro", "fig99", "-o", str(tmp_path))
    assert code == 2
    assert "unknown figure id" in json.loads(err)["message"]


def test_output_headers_embed_config(tmp_path, capsys):
    out = tmp_path / "cal.csv"
    run_cli(capsys, "calibrate", "--profile", "erf", "--points", "8",
            "-o", str(out))
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# vpcalib")
    assert lines[1].startswith("# config:")
    assert "profiles=erf" in lines[1]
