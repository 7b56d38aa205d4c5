import json
from pathlib import Path

import pytest

from rholab.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_exponents_report(tmp_path, capsys):
    assert main(["exponents", "--set", "q=4", "--set", "d=3", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "q_gamma 8" in out and "p0 inf" in out
    data = json.loads((tmp_path / "exponents.json").read_text())
    assert data["q_gamma"] == "8"


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["exponents", "--set", "q=1"]) == EXIT_CONFIG
    assert main(["cz", "--set", "mode=nope"]) == EXIT_CONFIG
    assert main(["sweep", "--set", "bogus=1"]) == EXIT_CONFIG
    assert main(["weight-constant", "--set", "class=A_7"]) == EXIT_CONFIG
    assert main(["exponents", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    bad = tmp_path / "bad.yaml"
    bad.write_text("[1, 2]")
    assert main(["exponents", "--config", str(bad)]) == EXIT_CONFIG


def test_refused_hypothesis_exits_1(capsys):
    code = main(["sweep", "--set", "u=power:-2", "--set", "points=64", "--set", "precheck_points=64",
                 "--set", "precheck_refinements=1"])
    assert code == EXIT_FAIL
    assert "refused" in capsys.readouterr().err


def test_sweep_writes_csv_per_level(tmp_path):
    assert main(["sweep", "--config", str(CONFIGS / "10_sawyer.yaml"), "--refine", "1",
                 "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "sweep_level0.csv").exists() and (tmp_path / "sweep_level1.csv").exists()
    assert "sup_by_level" in (tmp_path / "sweep.txt").read_text()


@pytest.mark.parametrize("cmd,cfg", [
    ("maximal", None), ("cz", None), ("covering", None), ("verify-rho", None),
    ("cz", "04_cz_invariants.yaml"), ("shen-rho", "05_shen_rho.yaml"),
    ("kernel-check", "12_kernel_checks.yaml"), ("sigma-search", "09_mixed_sweep.yaml"),
])
def test_subcommands_pass(tmp_path, cmd, cfg):
    argv = [cmd, "--out", str(tmp_path)]
    if cfg:
        argv += ["--config", str(CONFIGS / cfg)]
    if cmd == "covering":
        argv += ["--set", "h=0.05"]
    assert main(argv) == EXIT_OK
    assert (tmp_path / f"{cmd}.txt").exists() and (tmp_path / f"{cmd}.json").exists()


def test_weight_constant_refinement(capsys):
    assert main(["weight-constant", "--set", "w=power:-2", "--set", "points=64", "--refine", "2"]) == EXIT_FAIL
    assert "diverges true" in capsys.readouterr().out
