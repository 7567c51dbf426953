import json

import numpy as np
import pytest

from dbarlab import cli
from dbarlab.config import load_config, parse_override
from dbarlab.errors import ConfigError

SMALL = ["--grid.R=3", "--grid.h=0.25", "--eigs.k=12"]


@pytest.fixture(autouse=True)
def sandbox(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("DBARLAB_CACHE_DIR", str(tmp_path / "cache"))
    return tmp_path


def out_dir(sandbox):
    return sandbox / "dbarlab-out"


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_parse_override_literals():
    assert parse_override("--grid.R=8") == ("grid", "R", 8)
    assert parse_override("--grid.shape=disk") == ("grid", "shape", "disk")
    assert parse_override("--diagnose.radii=[1, 2]") == ("diagnose", "radii", [1, 2])
    assert parse_override("--seed=3") == ("", "seed", 3)


def test_config_file_and_override_precedence(sandbox):
    path = sandbox / "run.toml"
    path.write_text("[grid]\nR = 4.0\nh = 0.2\n[weight]\nm = 4\n")
    cfg = load_config(path, ["--grid.R=5"])
    assert (cfg.grid.R, cfg.grid.h, cfg.weight.m) == (5.0, 0.2, 4.0)


@pytest.mark.parametrize("text", [
    "[grid]\nRR = 4\n",
    "[nonsense]\nx = 1\n",
    "[grid]\nh = -0.1\n",
    "[grid]\nR = 'big'\n",
    "[eigs]\nk = 2.5\n",
    "[output]\nformats = ['png']\n",
])
def test_config_strictness(sandbox, text):
    path = sandbox / "bad.toml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_malformed_config_exit_code(sandbox, capsys):
    path = sandbox / "bad.toml"
    path.write_text("[grid\nR = ")
    assert cli.run("eigs", path) == 1
    assert error_of(capsys)["exit_code"] == 1
    assert not out_dir(sandbox).exists()


def test_unknown_key_fails_before_work(sandbox, capsys):
    assert cli.run("eigs", None, ["--grid.Rx=3"]) == 1
    assert error_of(capsys)["error"] == "ConfigError"
    assert not out_dir(sandbox).exists()


def test_eigs_writes_artifacts_and_caches(sandbox, capsys):
    assert cli.run("eigs", None, SMALL) == 0
    assert "lambda_1=" in capsys.readouterr().out
    out = out_dir(sandbox)
    first = (out / "eigs.csv").read_bytes()
    payload = json.loads((out / "eigs.json").read_text())
    assert 1.9 <= payload["lambda_1"] <= 2.1
    assert (out / "eigs.dat").exists()
    entries = list((sandbox / "cache").iterdir())
    assert len(entries) == 1
    meta = json.loads((entries[0] / "meta.json").read_text())
    assert {"tool_version", "timestamp"} <= set(meta)

    (out / "eigs.csv").unlink()
    assert cli.run("eigs", None, SMALL) == 0
    assert "(cache)" in capsys.readouterr().out
    assert (out / "eigs.csv").read_bytes() == first


def test_eigs_deterministic_without_cache(sandbox):
    assert cli.run("eigs", None, SMALL + ["--no-cache"]) == 0
    a = (out_dir(sandbox) / "eigs.csv").read_bytes()
    assert cli.run("eigs", None, SMALL + ["--no-cache"]) == 0
    assert (out_dir(sandbox) / "eigs.csv").read_bytes() == a
    assert not (sandbox / "cache").exists()


def test_eigs_partial_result_is_flagged(sandbox):
    # Without restarts and with an unreachable tolerance pairs stay unconverged.
    code = cli.run("eigs", None, SMALL + ["--eigs.max_restarts=0", "--eigs.tol=1e-30"])
    assert code == 0
    payload = json.loads((out_dir(sandbox) / "eigs.json").read_text())
    assert payload["converged"] < payload["k"]


def test_solve_numeric_failure_exit_code(sandbox, capsys):
    assert cli.run("solve", None, ["--grid.R=3", "--grid.h=0.25", "--solver.max_iter=2"]) == 2
    err = error_of(capsys)
    assert err["error"] == "ConvergenceError" and err["exit_code"] == 2
    assert "residual" in err


def test_solve_outputs(sandbox):
    assert cli.run("solve", None, ["--grid.R=4", "--grid.h=0.1", "--solve.trials=10"]) == 0
    out = out_dir(sandbox)
    payload = json.loads((out / "solve.json").read_text())
    assert payload["weighted_norm_sq"] == pytest.approx(np.pi / 4, rel=0.02)
    assert payload["minimality_probe"] >= -1e-9
    assert (out / "u.csv").read_text().splitlines()[0] == "x,y,re,im"
    assert (out / "u_axis.dat").exists()


def test_domain_too_large_is_config_error(sandbox, capsys):
    assert cli.run("solve", None, ["--weight.m=4", "--grid.R=6", "--grid.h=0.5"]) == 1
    err = error_of(capsys)
    assert err["error"] == "DomainTooLargeError" and "radius" in err


def test_weights_check(sandbox):
    assert cli.run("weights-check", None, ["--grid.R=3", "--grid.h=0.25",
                                           "--weights_check.resolution=0.02"]) == 0
    payload = json.loads((out_dir(sandbox) / "weights-check.json").read_text())
    assert payload["doubling"]["C_hat"] == pytest.approx(4.0, rel=0.02)
    assert payload["subharmonic"] is True


def test_tabulated_weight_from_config(sandbox):
    axis = np.round(np.arange(-40, 41) * 0.05, 10).tolist()
    with open(sandbox / "phi.csv", "w") as fh:
        fh.write("x,y,phi\n")
        for x in axis:
            for y in axis:
                fh.write(f"{x!r},{y!r},{x * x + y * y!r}\n")
    flags = ["--weight.kind=tabulated", "--weight.table_path=phi.csv", "--grid.R=1.5",
             "--grid.h=0.1", "--eigs.k=6"]
    assert cli.run("eigs", None, flags) == 0
    assert 1.9 <= json.loads((out_dir(sandbox) / "eigs.json").read_text())["lambda_1"] <= 2.6


def test_diagnose_strict_inconclusive(sandbox, capsys):
    axis = np.round(np.arange(-40, 41) * 0.1, 10).tolist()
    with open(sandbox / "zero.csv", "w") as fh:
        fh.write("x,y,phi\n")
        for x in axis:
            for y in axis:
                fh.write(f"{x!r},{y!r},0.0\n")
    flags = ["--weight.kind=tabulated", "--weight.table_path=zero.csv", "--grid.R=2",
             "--grid.h=0.1", "--diagnose.radii=[0.0, 0.5, 1.0]", "--diagnose.ball_radius=0.5",
             "--diagnose.samples_per_ring=4"]
    assert cli.run("diagnose", None, flags + ["--strict"]) == 3
    assert cli.run("diagnose", None, flags) == 0
    assert "Inconclusive" in capsys.readouterr().out


def test_diagnose_quartic_strict_compact(sandbox):
    assert cli.run("diagnose", None, ["--weight.m=4", "--strict", "--workers=2"]) == 0
    out = out_dir(sandbox)
    payload = json.loads((out / "diagnose.json").read_text())
    assert payload["verdict"] == "Compact"
    for name in ("mu_profile.dat", "laplacian_profile.dat", "magnetic.dat"):
        assert (out / name).exists()


def test_scan_mu(sandbox):
    flags = ["--grid.R=3", "--grid.h=0.15", "--diagnose.radii=[0.0, 1.0]",
             "--diagnose.samples_per_ring=4"]
    assert cli.run("scan-mu", None, flags) == 0
    payload = json.loads((out_dir(sandbox) / "scan-mu.json").read_text())
    assert len(payload["mu_hat"]) == 2


def test_report_empty_directory(sandbox, capsys):
    out_dir(sandbox).mkdir()
    assert cli.run("report") == 1
    assert "missing" in error_of(capsys)["message"]


def test_report_merges_and_is_idempotent(sandbox):
    assert cli.run("eigs", None, SMALL) == 0
    assert cli.run("solve", None, ["--grid.R=3", "--grid.h=0.25", "--solve.trials=5"]) == 0
    assert cli.run("report") == 0
    out = out_dir(sandbox)
    first = json.loads((out / "report.json").read_text())
    text = (out / "report.txt").read_text()
    assert "lambda_1=" in text and "|u|^2=" in text
    assert "diagnose.json" in first["missing"]
    assert cli.run("report") == 0
    second = json.loads((out / "report.json").read_text())
    first.pop("generated"), second.pop("generated")
    assert first == second
    assert (out / "report.txt").read_text() == text


def test_bad_command_and_stray_argument(sandbox):
    assert cli.main(["frobnicate"]) == 1
    assert cli.run("eigs", None, ["stray"]) == 1


@pytest.mark.slow
def test_fock_eigs_diagnose_report(sandbox):
    assert cli.run("eigs", None, ["--weight.m=2", "--grid.R=6", "--grid.h=0.1", "--eigs.k=40"]) == 0
    out = out_dir(sandbox)
    lam1 = float((out / "eigs.csv").read_text().splitlines()[1].split(",")[1])
    assert 1.9 <= lam1 <= 2.1
    assert cli.run("diagnose", None, ["--weight.m=2", "--strict"]) == 0
    assert cli.run("report") == 0
    text = (out / "report.txt").read_text()
    assert "verdict=NonCompact" in text and "lambda_1=2.00" in text
