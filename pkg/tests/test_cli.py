import subprocess
import sys

import numpy as np
import pytest

from nflab.cli import (EXIT_CHECKS_FAILED, EXIT_CONFIG, EXIT_IO, EXIT_NONCONVERGENCE,
                       EXIT_NUMERIC, EXIT_OK, EXIT_STEP_COLLAPSE, main)
from nflab import dynamics
from nflab.io import read_csv

SMALL = {
    "simulate": "n = 31\nt_end = 0.5\n",
    "decay": "n = 31\nD = 0.5\ndt_max = 0.01\nt_end = 4\n",
    "steady1d": "n = 63\ngamma = 1\nc = 2\ninitial = constant-vector(1)\ndt0 = 0.01\nt_end = 200\n",
    "pattern": "n = 31\nc = 2\nhorizon = 50\n",
    "spectrum": "n = 31\nD = 0.1\ndt0 = 0.01\ndt_max = 0.5\nhorizon = 100\n",
    "limits": ("n = 31\ninitial = constant-vector(0.5)\nt_end = 5\nD_list = 0.1, 0.01\n"
               "large_D_t_end = 60\n"),
    "mollified": "n = 31\nepsilon = 0.001\nt_end = 0.5\n",
}


def _run(tmp_path, name, text, *extra):
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text(text)
    out = tmp_path / f"out_{name}"
    return main([name, "--config", str(cfg), "--out", str(out), *extra]), out


@pytest.mark.parametrize("name", sorted(SMALL))
def test_subcommands_succeed_and_are_reproducible(tmp_path, name, capsys):
    code, out = _run(tmp_path, name, SMALL[name], "--no-figures")
    assert code == EXIT_OK, capsys.readouterr()
    _, checks = read_csv(out / "checks.csv")
    assert checks and all(row[-1] == "1" for row in checks)
    first = {p.name: p.read_bytes() for p in out.glob("*.csv")}
    code2, out2 = main([name, "--config", str(tmp_path / f"{name}.cfg"), "--out",
                        str(tmp_path / "again"), "--no-figures"]), tmp_path / "again"
    assert code2 == EXIT_OK
    assert {p.name: p.read_bytes() for p in out2.glob("*.csv")} == first
    assert not list(out.glob("*.png"))


def test_figures_written(tmp_path):
    code, out = _run(tmp_path, "simulate", SMALL["simulate"])
    assert code == EXIT_OK
    pngs = sorted(p.name for p in out.glob("*.png"))
    assert pngs == ["m_final.png", "trace.png"]
    assert (out / "trace.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_seed_flag_changes_random_fields(tmp_path):
    text = "n = 31\nt_end = 0.1\ninitial = seeded-random(0.5)\n"
    _, a = _run(tmp_path, "simulate", text, "--no-figures", "--seed", "1")
    cfg = tmp_path / "simulate.cfg"
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--no-figures",
          "--seed", "2"])
    assert (a / "final.csv").read_bytes() != (tmp_path / "b" / "final.csv").read_bytes()


def test_checks_failed_exit(tmp_path):
    # gamma = 2 relaxes only algebraically near x = 0, so a short run misses the tolerance
    code, out = _run(tmp_path, "steady1d",
                     "n = 31\ninitial = constant-vector(1)\ndt0 = 0.01\nt_end = 5\n",
                     "--no-figures")
    assert code == EXIT_CHECKS_FAILED
    header, rows = read_csv(out / "comparison.csv")
    assert header == ["x", "B", "m_initial", "m_final", "m_steady", "abs_err"]


@pytest.mark.parametrize("text", ["gamma = 0.5\n", "bogus = 1\n", "D = x\n"])
def test_config_errors_exit_2(tmp_path, text, capsys):
    code, _ = _run(tmp_path, "simulate", text)
    assert code == EXIT_CONFIG
    assert "line 1" in capsys.readouterr().err


def test_invalid_experiment_input_exit_2(tmp_path):
    assert _run(tmp_path, "steady1d", "dim = 2\nn = 8\n")[0] == EXIT_CONFIG
    assert _run(tmp_path, "pattern", "gamma = 1\nn = 15\n")[0] == EXIT_CONFIG


def test_snapshot_errors(tmp_path):
    bad = tmp_path / "bad.nfs"
    bad.write_bytes(b"garbage")
    assert _run(tmp_path, "simulate", f"initial = from-snapshot({bad})\n")[0] == EXIT_IO
    missing = tmp_path / "missing.nfs"
    assert _run(tmp_path, "simulate", f"initial = from-snapshot({missing})\n")[0] == EXIT_IO


def test_nonconvergence_and_collapse_exit_codes(tmp_path, monkeypatch):
    assert _run(tmp_path, "spectrum", "n = 15\nsource = constant(0)\nD = 0.1\n")[0] == EXIT_NUMERIC
    monkeypatch.setattr(dynamics, "ENERGY_SLACK", -1e300)
    assert _run(tmp_path, "simulate", "n = 15\n")[0] == EXIT_STEP_COLLAPSE
    monkeypatch.undo()
    from nflab import experiments

    def boom(*a, **k):
        from nflab.errors import NonConvergence
        raise NonConvergence("forced", 1, 1.0)

    monkeypatch.setattr(experiments, "simulate", boom)
    assert _run(tmp_path, "simulate", "n = 15\n")[0] == EXIT_NONCONVERGENCE


def test_help_lists_defaults():
    proc = subprocess.run([sys.executable, "-m", "nflab.cli", "simulate", "--help"],
                          capture_output=True, text=True, check=True)
    assert "D = 0.01" in proc.stdout and "--no-figures" in proc.stdout


def test_default_config_without_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["mollified", "--no-figures", "--out", "o"]) in (EXIT_OK, EXIT_CHECKS_FAILED)
    assert (tmp_path / "o" / "trace.csv").exists()
