import csv
import io
import json
import subprocess
import sys

import pytest

from blendcurv import cli
from blendcurv.cli import ExperimentConfig, ResultTable, UsageError, main, render, run


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_render_empty_and_single_row():
    t = ResultTable()
    assert render(t, "csv") == "quantity,value,error,verdict,anchor\n"
    assert json.loads(render(t, "json")) == []
    t.add("a,b", 0.1, 0.0, "info", 'say "hi"')
    lines = render(t, "csv").splitlines()
    assert len(lines) == 2
    assert _rows(render(t, "csv"))[0]["quantity"] == "a,b"


def test_json_round_trip_is_bit_exact():
    t = ResultTable()
    vals = [0.1, 1 / 3, -2.5e-300, 6.02214076e23, 0.0]
    for i, v in enumerate(vals):
        t.add(f"q{i}", v, abs(v) / 7)
    back = json.loads(render(t, "json"))
    assert [r["value"] for r in back] == vals
    assert [r["error"] for r in back] == [abs(v) / 7 for v in vals]
    assert [float(r["value"]) for r in _rows(render(t, "csv"))] == vals


def test_result_table_rejects_non_finite():
    t = ResultTable()
    with pytest.raises(ValueError):
        t.add("x", float("nan"))
    with pytest.raises(ValueError):
        t.add("x", 1.0, -1.0)


def test_identity_target_gives_zero_table(capsys):
    assert main(["--geometry", "flat3torus", "--deformation", "custom-g1", "--rmax", "3"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert rows and all(float(r["value"]) == 0.0 for r in rows)
    assert all(r["verdict"] in ("zero", "pass", "info") for r in rows)


def test_canonical_variation_is_all_zero():
    table = run(ExperimentConfig(geometry="flat3torus", deformation="canonical", r_max=4, outputs=["report"]))
    verdicts = {r.quantity: r.verdict for r in table.rows}
    for r in range(2, 5):
        assert verdicts[f"variation.r{r}.integral"] == "zero"
    assert not table.failures


def test_warping_equivalence_rows_pass(tmp_path):
    out = tmp_path / "w.json"
    code = main(["--geometry", "flat3torus", "--deformation", "warping", "--rmax", "3", "--format", "json", "--out", str(out)])
    assert code == 0
    rows = json.loads(out.read_text())
    eq = [r for r in rows if r["quantity"].endswith(".equivalence")]
    assert len(eq) == 2 and all(r["verdict"] == "pass" for r in eq)
    assert any(r["quantity"] == "warping.identity.r3" and r["verdict"] == "pass" for r in rows)


@pytest.mark.parametrize(
    "argv",
    [
        ["--grid", "12"],
        ["--grid", "1024"],
        ["--rmax", "1"],
        ["--geometry", "klein"],
        ["--deformation", "twist"],
        ["--config", "/nonexistent/cfg.json"],
        ["--geometry", "flat3torus", "--deformation", "cheeger"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().out == ""


def test_bad_config_key_and_expression(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"geometry": "flat3torus", "colour": "red"}))
    assert main(["--config", str(cfg)]) == 2
    cfg.write_text(json.dumps({"deformation": "conformal", "params": {"h": "__import__('os')"}}))
    assert main(["--config", str(cfg)]) == 2


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"geometry": "s3hopf", "deformation": "custom-g1", "r_max": 5, "outputs": ["report"], "format": "json"}))
    assert main(["--config", str(cfg), "--geometry", "flat3torus", "--rmax", "2", "--format", "csv"]) == 0
    rows = _rows(capsys.readouterr().out)
    names = {r["quantity"] for r in rows}
    assert "variation.r2.integral" in names and "variation.r3.integral" not in names


def test_inline_geometry_config(tmp_path, capsys):
    spec = {
        "domain": [[0, 6.283185307179586]] * 2,
        "periodic": [True, True],
        "metric": [["1", "0"], ["0", "1"]],
        "torus": {"base": [0, 0], "du": [1, 0], "dv": [0, 1]},
    }
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"geometry": spec, "deformation": "custom-g1", "params": {"g1": [["exp(0.2*sin(x1))", "0"], ["0", "1"]]}, "r_max": 2}))
    assert main(["--config", str(cfg)]) == 0
    rows = _rows(capsys.readouterr().out)
    assert any(r["quantity"] == "first_order.identity" and r["verdict"] == "pass" for r in rows)


def test_failing_row_exits_1(monkeypatch, capsys):
    def fake_run(cfg):
        t = ResultTable()
        t.check("forced", False, 1.0, 0.0, "always fails")
        return t

    monkeypatch.setattr(cli, "run", fake_run)
    assert main([]) == 1
    assert "assertion failed: forced" in capsys.readouterr().err


def test_cheeger_rows_on_product():
    table = run(ExperimentConfig(geometry="s2xs2", deformation="cheeger", r_max=2, outputs=["report"]))
    names = {r.quantity: r for r in table.rows}
    assert "cheeger.limit_integral" in names and "cheeger.limit_oracle" in names
    assert not table.failures


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "blendcurv", "--rmax", "2", "--format", "json"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert isinstance(json.loads(proc.stdout), list)


def test_validate_rejects_bad_outputs():
    with pytest.raises(UsageError):
        run(ExperimentConfig(outputs=["plots"]))
    with pytest.raises(UsageError):
        run(ExperimentConfig(t_grid=[0.0]))
