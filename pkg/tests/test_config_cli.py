from __future__ import annotations

import io

import pytest
from hypothesis import given, strategies as st

from fmingraph.cli import main, run
from fmingraph.config import ConfigError, parse_config, render_config, render_manifest

MINIMAL = "[model]\nmanifold = euclidean\n[experiment]\nexperiment = solve-ball\n[grid]\nR = 2\n"


def test_minimal_config_parses():
    cfg = parse_config(MINIMAL)
    assert (cfg.manifold, cfg.experiment, cfg.R) == ("euclidean", "solve-ball", 2.0)


def test_flat_file_without_sections():
    assert parse_config("manifold = euclidean\nexperiment = jacobi\n").experiment == "jacobi"


def test_delta_error_names_delta1():
    with pytest.raises(ConfigError) as e:
        parse_config("manifold = power(2,0.5)\nexperiment = barrier-verify\ndelta = 0.9\n")
    assert "delta must lie in (0, min(delta1, eps))" in str(e.value)
    assert "delta1 = 0.125" in str(e.value)


def test_all_errors_reported():
    text = "experiment = jacobi\nmanifold = euclidean\nR = 1\nfoo = 2\nR = 3\n[grid]\nn = 3\nn_r = x\n"
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    errs = e.value.errors
    assert "duplicate key 'R' at lines 3 and 5" in errs
    assert any("unknown key 'foo'" in x for x in errs)
    assert any("belongs in section [model]" in x for x in errs)
    assert any("'n_r'" in x for x in errs)


def test_missing_required_keys():
    with pytest.raises(ConfigError) as e:
        parse_config("[grid]\nR = 2\n")
    assert len([x for x in e.value.errors if "missing required key" in x]) == 2


def test_out_of_range_values():
    with pytest.raises(ConfigError) as e:
        parse_config("manifold = euclidean\nexperiment = jacobi\nL = 2\nR = -1\ntol = 0\n")
    msg = str(e.value)
    assert "L must exceed 8/pi" in msg and "R must be positive" in msg and "tol must be positive" in msg


@given(st.sampled_from(["euclidean", "hyperbolic(0.5)", "power(2,0.5)", "exp(1,0.5)"]),
       st.sampled_from(["jacobi", "assumptions", "barrier-verify", "solve-ball", "exhaustion", "nonuniqueness"]),
       st.floats(0.1, 100), st.integers(2, 500), st.floats(1e-14, 1e-3), st.booleans(),
       st.lists(st.floats(1, 1e3), min_size=1, max_size=6, unique=True))
def test_manifest_round_trip(man, kind, R, n_r, tol, override, radii):
    text = (f"manifold = {man}\nexperiment = {kind}\nR = {R!r}\nn_r = {n_r}\ntol = {tol!r}\n"
            f"override = {override}\nradii = {','.join(repr(r) for r in sorted(radii))}\n")
    cfg = parse_config(text)
    assert parse_config(render_config(cfg)) == cfg
    assert parse_config(render_manifest(cfg, ["result: PASS"], "x")) == cfg


def test_cli_barrier_power_zero_drift(tmp_path):
    code = main(["barrier", "--out", str(tmp_path), "--set", "manifold=power(2,0.5)"])
    assert code == 0
    assert (tmp_path / "barrier.csv").exists() and (tmp_path / "manifest.txt").exists()


def test_cli_solve_without_override_exits_1(tmp_path):
    code = main(["solve", "--out", str(tmp_path), "--set", "drift=selfshrinker"])
    assert code == 1
    report = (tmp_path / "report.txt").read_text()
    assert "ball solvability fails" in report and "r=0.498047" in report


def test_cli_bad_grid_is_usage_error(tmp_path, capsys):
    assert main(["solve", "--out", str(tmp_path), "--grid", "64by32"]) == 1
    assert "NRxNT" in capsys.readouterr().err


def test_cli_nonuniqueness_outputs(tmp_path):
    assert main(["demo-nonuniqueness", "--out", str(tmp_path), "--grid", "64x32"]) == 0
    for name in ("solution_upper.csv", "solution_lower.csv", "solution_disk.csv", "report.txt"):
        assert (tmp_path / name).exists()


def test_cli_verification_failure_exit_2(tmp_path):
    # height barrier with C below sup F fails verification
    code = main(["barrier", "--out", str(tmp_path), "--set", "barrier=height",
                 "--set", "drift=bounded(0.5,0)", "--set", "C=0.4", "--set", "R=1"])
    assert code == 2


def test_run_is_deterministic(tmp_path):
    cfg = parse_config("manifold = power(2,0.5)\nexperiment = solve-ball\nphi = cos(1)\nR = 3\n"
                       "drift = bounded(0.1,3)\n")
    a = run(cfg, tmp_path / "a", stream=io.StringIO())
    b = run(cfg, tmp_path / "b", stream=io.StringIO())
    assert a.code == b.code == 0
    for name in ("solution.csv", "residuals.csv", "report.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_manifest_from_run_round_trips(tmp_path):
    cfg = parse_config(MINIMAL)
    run(cfg, tmp_path, stream=io.StringIO())
    assert parse_config((tmp_path / "manifest.txt").read_text()) == cfg


@pytest.mark.parametrize("sub", ["jacobi", "check"])
def test_cli_other_subcommands(tmp_path, sub):
    code = main([sub, "--out", str(tmp_path), "--set", "manifold=power(2,0.5)",
                 "--set", "drift=bounded(0.1,3)", "--set", "a0=capped(1)"])
    assert code == 0
