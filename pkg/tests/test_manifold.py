from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fmingraph.errors import IntegrationError, ParameterError, SingularityError
from fmingraph.manifold import (build_model, check_assumptions, custom_profile, laplacian_rho,
                                profile_from_name, riccati_comparison_check, solve_jacobi)


def test_euclidean_jacobi_is_identity():
    sol = solve_jacobi(lambda t: 0.0 * t, 10.0, 1e-3)
    assert np.max(np.abs(sol.f - sol.r)) < 1e-12


def test_unit_curvature_gives_sinh():
    sol = solve_jacobi(lambda t: 1.0 + 0.0 * t, 5.0, 1e-3)
    rel = np.abs(sol.f[1:] / np.sinh(sol.r[1:]) - 1.0)
    assert rel.max() < 1e-9


def test_power_tail_matches_closed_form():
    # a = sqrt2/t for t >= 1, a = 0 below: f = t on [0,1], then c1 t^2 + c2/t with C^1 matching
    a = lambda t: np.where(t >= 1.0, math.sqrt(2.0) / np.maximum(t, 1.0), 0.0)  # noqa: E731
    sol = solve_jacobi(a, 10.0, 1e-3, breakpoints=(1.0,))
    c1, c2 = 2.0 / 3.0, 1.0 / 3.0  # c1 + c2 = 1, 2 c1 - c2 = 1
    t = sol.r[sol.r >= 1.0]
    exact = c1 * t**2 + c2 / t
    assert np.max(np.abs(sol.f[sol.r >= 1.0] / exact - 1.0)) < 1e-7


def test_overflow_needs_log_space():
    with pytest.raises(IntegrationError, match="log_space"):
        solve_jacobi(lambda t: 10.0 + 0.0 * t, 80.0, 1e-2)


def test_non_finite_profile_reports_radius():
    with pytest.raises(IntegrationError, match="r="):
        solve_jacobi(lambda t: np.where(t > 0.5, np.nan, 0.0), 1.0, 1e-3)


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
def test_hyperbolic_ratio_is_coth(k):
    M = build_model(f"hyperbolic({k})", 2)
    r = np.array([0.5, 1.0, 5.0, 50.0, 500.0])
    assert np.allclose(M.ratio(r), k / np.tanh(k * r), rtol=1e-9)


@given(st.floats(0.05, 3.0))
def test_jacobi_comparison_with_euclidean(k):
    sol = solve_jacobi(lambda t: k + 0.0 * t, 4.0, 1e-2, log_space=True)
    fin = np.isfinite(sol.f)
    assert np.all(sol.fp[fin] >= 1.0 - 1e-12)
    assert np.all(sol.f[fin] >= sol.r[fin] * (1 - 1e-12))


def test_laplacian_examples(euclid):
    assert laplacian_rho(euclid, 2.0) == pytest.approx(0.5, abs=1e-12)
    H = build_model("hyperbolic(1)", 2)
    assert laplacian_rho(H, 1.0) == pytest.approx(1.0 / math.tanh(1.0), rel=1e-9)
    with pytest.raises(SingularityError):
        laplacian_rho(euclid, 0.0)


def test_power_laplacian_trend():
    M = build_model("power(2,0.5)", 3)
    rho = np.array([1e3, 1e5, 1e8])
    assert np.allclose(laplacian_rho(M, rho) * rho, 4.0, rtol=1e-3)


def test_riccati_examples(euclid):
    assert riccati_comparison_check(euclid, 0.0, 1.0, 50.0).holds
    assert riccati_comparison_check(build_model("hyperbolic(1)", 2), 1.0, 1.0, 30.0).holds
    v = riccati_comparison_check(euclid, 0.6, 2.0, 10.0)
    assert not v.holds and v.reason == "hypothesis H(rho_start) >= F violated"


@pytest.mark.parametrize("preset", ["power(2,0.5)", "exp(1,0.5)"])
def test_presets_pass_all_assumptions(preset):
    rep = check_assumptions(preset)
    assert rep.passed and rep.structure_ok, rep.summary()


def test_flat_space_fails_A5():
    P = custom_profile(lambda t: 0.0 * t, lambda t: 0.0 * t, name="flat")
    rep = check_assumptions(P, 1e6)
    assert not rep["A5"].ok


def test_probe_before_regime_rejected():
    with pytest.raises(ParameterError, match="probe window precedes asymptotic regime"):
        check_assumptions("power(2,0.5)", 1.0)


@pytest.mark.parametrize("bad", ["power(0.5,1)", "hyperbolic(0)", "nope", "exp(1,2,3)"])
def test_bad_presets(bad):
    with pytest.raises(ParameterError):
        profile_from_name(bad)


def test_jacobi_csv_schema(tmp_path, power):
    p = power.fa.to_csv(tmp_path / "a.csv")
    assert p.read_text().splitlines()[0] == "r,f,f_prime,log_f"
