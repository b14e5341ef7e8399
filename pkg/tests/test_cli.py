import json

import numpy as np
import pytest

from flexopt.cli import main
from flexopt.solver import read_mps_reference


def _run(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def _series(path, values):
    path.write_text("t,value\n" + "".join(f"{t},{v!r}\n" for t, v in enumerate(values)))
    return str(path)


def test_metrics_flat_load(tmp_path, capsys):
    rng = np.random.default_rng(0)
    pv = rng.uniform(10, 90, 24)
    prices = _series(tmp_path / "p.csv", pv.tolist())
    cefs = _series(tmp_path / "c.csv", rng.uniform(0.2, 0.6, 24).tolist())
    load = _series(tmp_path / "l.csv", [250.0] * 24)
    code, out, _ = _run(capsys, "metrics", "--prices", prices, "--cefs", cefs, "--load", load)
    assert code == 0
    assert json.loads(out)["pi_rate"] == pytest.approx(1.0, abs=1e-12)
    code, out, _ = _run(capsys, "metrics", "--prices", prices, "--cefs", cefs, "--load", load, "--window", "0:6")
    assert code == 0 and json.loads(out)["twap"] == pytest.approx(pv[:6].mean(), rel=1e-12)


def test_synth_then_run_then_report(tmp_path, capsys):
    ds = tmp_path / "ds"
    assert _run(capsys, "synth", "--synth-seed", "2", "--horizon", "24", "--out", str(ds))[0] == 0
    study = tmp_path / "study.json"
    code, out, _ = _run(
        capsys, "run", "--dataset", str(ds), "--contexts", "c_base", "--scenarios", "REF,noFlex", "--out", str(study)
    )
    assert code == 0 and json.loads(out)["failed"] == []
    assert len(json.loads(study.read_text())["cells"]) == 2
    code, _, _ = _run(capsys, "report", str(study), "--format", "csv-dir", "--out", str(tmp_path / "t"))
    assert code == 0 and (tmp_path / "t" / "pareto.csv").exists()
    code, out, _ = _run(capsys, "report", str(study))
    assert code == 0 and "TAC" in out


def test_export_mps_reimports(tmp_path, capsys):
    out = tmp_path / "m.mps"
    code, text, _ = _run(capsys, "export-mps", "--synth-seed", "1", "--horizon", "24", "--scenario", "noFlex", "--out", str(out))
    assert code == 0
    info = json.loads(text)
    back = read_mps_reference(out)
    assert back.n_vars == info["n_vars"] and len(back.integer_columns) == info["n_binaries"]


def test_config_overrides_flags(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[study]\nscenarios = ["REF"]\n[run]\nsynth_seed = 3\nhorizon = 24\n')
    out = tmp_path / "s.json"
    code, _, _ = _run(
        capsys, "run", "--dataset", "does-not-exist", "--scenarios", "fullFlex",
        "--contexts", "c_base", "--config", str(cfg), "--out", str(out),
    )
    assert code == 0
    cells = json.loads(out.read_text())["cells"]
    assert [c["scenario"] for c in cells] == ["REF"]


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--out", "x.json"],
        ["run", "--dataset", "a", "--synth-seed", "1", "--out", "x.json"],
        ["frobnicate"],
        ["report", "missing.json"],
    ],
)
def test_errors_are_json_on_stderr(capsys, argv):
    code, _, err = _run(capsys, *argv)
    assert code != 0
    payload = json.loads(err.strip().splitlines()[-1])
    assert set(payload) == {"error", "message"}


def test_bad_config_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[study]\ncolour = "red"\n')
    code, _, err = _run(capsys, "run", "--synth-seed", "1", "--config", str(cfg), "--out", str(tmp_path / "s.json"))
    assert code == 2 and json.loads(err.strip().splitlines()[-1])["error"] == "UsageError"
