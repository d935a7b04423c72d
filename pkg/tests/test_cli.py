import json

import numpy as np
import pytest

from arnold_diffusion.cli import EXIT_DOMAIN, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, run


def only_run(root):
    (path,) = [p for p in root.iterdir() if p.is_dir()]
    return path


def test_melnikov_reports_four_points(tmp_path, capsys):
    assert run(["melnikov", "--epsilon", "0.25", "--a", "1", "--out", str(tmp_path)]) == EXIT_OK
    d = only_run(tmp_path)
    assert (d / "melnikov.csv").read_text().startswith("t,theta,M")
    assert len(json.loads((d / "critical_points.json").read_text())["points"]) == 4
    assert json.loads((d / "manifest.json").read_text())["outcome"]["critical_points"] == 4
    assert str(d) in capsys.readouterr().out


def test_simulate_on_torus_keeps_action(tmp_path):
    argv = ["simulate", "--epsilon", "0.25", "--mu", "0", "--duration", "100", "--a", "0.3", "--out", str(tmp_path)]
    assert run(argv) == EXIT_OK
    data = np.loadtxt(only_run(tmp_path) / "orbit.csv", delimiter=",", skiprows=1)
    assert np.abs(data[:, 3] - 0.3).max() <= 1e-12 and data[-1, 0] == pytest.approx(100.0)


def test_usage_errors_exit_one(capsys):
    assert run(["nonsense"]) == EXIT_USAGE
    assert run(["simulate", "--epsilon", "abc"]) == EXIT_USAGE
    assert run([]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_help_exits_zero(capsys):
    assert run(["--help"]) == EXIT_OK


def test_domain_error_exits_two(tmp_path, capsys):
    assert run(["simulate", "--epsilon", "-1", "--out", str(tmp_path)]) == EXIT_DOMAIN
    assert "epsilon" in capsys.readouterr().err


def test_numerical_failure_names_stage(tmp_path, capsys):
    argv = ["chain", "--mu", "0", "--a-minus", "0", "--a-plus", "0.1", "--out", str(tmp_path)]
    assert run(argv) == EXIT_NUMERICAL
    assert "build_chain" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mus": [1e-2, 1e-3], "c": 2.0}))
    out = tmp_path / "runs"
    assert run(["gaps", "--config", str(cfg), "--c", "1", "--out", str(out)]) == EXIT_OK
    d = only_run(out)
    resolved = json.loads((d / "config.json").read_text())
    assert resolved["c"] == 1.0 and resolved["mus"] == [1e-2, 1e-3]
    assert (d / "gaps.csv").read_text().splitlines()[0] == "mu,gap,step,ratio"


def test_unknown_config_key_is_a_domain_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(["gaps", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_DOMAIN


def test_identical_config_gives_identical_summaries(tmp_path):
    outs = []
    for name in ("x", "y"):
        assert run(["splitting", "--mu", "1e-3", "--a", "0.5", "--resolution", "16,16", "--step", "0.01",
                    "--out", str(tmp_path / name)]) == EXIT_OK
        outs.append(only_run(tmp_path / name))
    assert outs[0].name.split("-")[-1] == outs[1].name.split("-")[-1]
    for f in ("critical_points.json", "manifest.json", "config.json"):
        a, b = ((o / f).read_bytes() for o in outs)
        assert a == b


def test_manifold_and_chain(tmp_path):
    assert run(["manifold", "--mu", "1e-3", "--a", "0.5", "--resolution", "16,16,36", "--step", "0.01",
                "--out", str(tmp_path / "m")]) == EXIT_OK
    man = json.loads((only_run(tmp_path / "m") / "manifest.json").read_text())
    assert man["outcome"]["hj_residual"] < 1e-4
    assert run(["chain", "--mu", "1e-3", "--a-minus", "0.3", "--a-plus", "0.301", "--c", "0.5",
                "--out", str(tmp_path / "c")]) == EXIT_OK
    chain = json.loads((only_run(tmp_path / "c") / "chain.json").read_text())
    assert len(chain["levels"]) == 3 and chain["c_used"] == 0.5


def test_diffuse_writes_orbit_and_summary(tmp_path):
    argv = ["diffuse", "--mu", "1e-3", "--a-minus", "0.3", "--a-plus", "0.301", "--c", "0.5", "--out", str(tmp_path)]
    assert run(argv) == EXIT_OK
    d = only_run(tmp_path)
    summary = json.loads((d / "summary.json").read_text())
    assert set(summary) == {"I_min", "I_max", "T", "max_junction_defect"}
    assert summary["I_max"] - summary["I_min"] >= 0.001 - 1e-9
    assert (d / "orbit.csv").read_text().startswith("t,theta,q,I,p")
