from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fmingraph.barriers import (AngularCutoff, Region, admissible_delta, build_asymptotic_psi,
                                build_global_V, build_gradient_barrier, build_height_barrier,
                                choose_gradient_params, find_R3, height_bound, psi_region, ramp5,
                                verify_supersolution)
from fmingraph.drift import bounded_drift, f1_fraction_drift, radial_drift, zero_drift
from fmingraph.errors import DomainError, ParameterError
from fmingraph.potential import decay_weight

R3_POWER = 90.50966799187809  # find_R3 regression fixture: delta = 0.0625, A = 2, L = 3


def test_height_bound_examples():
    assert height_bound(1.0, 1.0) == pytest.approx(math.e * (1 - math.exp(-1)), rel=1e-15)
    assert height_bound(0.0, 3.0) == 0.0
    B = build_height_barrier(2.0, 1.0, 0.0, C=2.0)
    # d = R - r is the distance to the boundary, so h'(0) is read off at r = R
    assert -float(B.derivs(np.array([B.params["R"]])).r[0]) == pytest.approx(math.exp(4.0))


def test_height_barrier_requires_finite_F():
    with pytest.raises(ParameterError):
        build_height_barrier(1.0, math.inf, 0.0)


def test_height_barrier_C_vs_F(euclid):
    D = radial_drift("half", lambda r: 0.5 + 0.0 * np.asarray(r, dtype=float))
    good = build_height_barrier(2.0, 0.5, 0.0)
    bad = build_height_barrier(2.0, 0.5, 0.0, C=0.4)
    reg = Region(0.0, 1.0)
    assert verify_supersolution(good, D, euclid, reg).verdict
    assert not verify_supersolution(bad, D, euclid, reg).verdict


def test_gradient_barrier_boundary_case():
    B = build_gradient_barrier(1.0, 1.0, 1.0, 0.25, 8.0)
    assert B.params["slope"] == pytest.approx(3.0, rel=1e-14)


@pytest.mark.parametrize("eps", [0.0, 0.5, 0.7, -0.1])
def test_gradient_barrier_eps_range(eps):
    with pytest.raises(ParameterError):
        build_gradient_barrier(1.0, 1.0, 1.0, eps, 1e6)


def test_gradient_slope_grows_with_K():
    slopes = [build_gradient_barrier(1.0, 1.0, 1.0, 0.25, K).params["slope"] for K in (8, 80, 800, 8000)]
    assert np.all(np.diff(slopes) > 0)


@given(st.floats(0.0, 5.0), st.floats(0.0, 3.0), st.floats(0.0, 5.0), st.floats(0.0, 2.0), st.floats(0.01, 4))
def test_chosen_gradient_params_admissible(u_sup, phi_sup, c2, grad, H):
    gp = choose_gradient_params(u_sup, phi_sup, c2, grad, H)
    assert 0 < gp.eps < 0.5
    assert gp.K >= (1 - 2 * gp.eps) / gp.eps**2 * (1 - 1e-12)


def test_ramp5_endpoints():
    S, S1, S2 = ramp5(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    assert list(S) == [0.0, 0.0, 0.5, 1.0, 1.0]
    assert S1[0] == S1[-1] == 0.0 and S2[1] == S2[3] == 0.0


def test_cutoff_examples():
    c = AngularCutoff(3.0)
    assert np.all(c(np.array([1.0, 10.0, 1e3]), 2.0 / 3.0 + 0.01) == 1.0)
    assert np.all(c(np.array([5.0, 50.0]), 0.0) == 0.0)
    with pytest.raises(ParameterError, match="8/pi"):
        AngularCutoff(8.0 / math.pi)


def test_psi_decays_on_axis(power):
    psi = build_asymptotic_psi(power, 2.0, 0.0625, 10.0, AngularCutoff())
    v = psi(np.array([10.0, 1e3, 1e6, 1e12, 1e40]), 0.0)
    assert np.all(np.diff(v) < 0) and v[-1] < 1e-2


def test_delta_range_names_delta1(power):
    top = admissible_delta(power, 0.5)
    with pytest.raises(ParameterError, match="delta1"):
        build_asymptotic_psi(power, 1.0, top, 10.0, AngularCutoff())


def test_psi_region_must_avoid_pole(power):
    psi = build_asymptotic_psi(power, 1.0, 0.05, 10.0, AngularCutoff())
    with pytest.raises(DomainError):
        verify_supersolution(psi, zero_drift(), power, Region(0.0, 10.0, 0.5))


def test_V_with_half_first_branch(power):
    a0 = decay_weight()
    V = build_global_V(power, a0, 1.0)
    D = f1_fraction_drift(power, a0, 0.5, first_only=True)
    rep = verify_supersolution(V, D, power, Region(0.0, 1e3), (1000, 1))
    assert rep.verdict and rep.worst_margin > 0


def test_V_zero_drift_margin_lower_bound(power):
    a0 = decay_weight()
    V = build_global_V(power, a0, 1.0)
    rep = verify_supersolution(V, zero_drift(), power, Region(0.0, 100.0), (400, 1))
    r = rep.r.ravel()
    g = np.interp(r, V.extra.r, V.extra.g)
    floor = a0(r) / (1.0 + g * g) ** 1.5
    assert rep.verdict
    assert np.all(rep.margin.ravel() >= floor * (1 - 1e-6))


def test_find_R3_regression(power):
    delta = admissible_delta(power, 0.5) / 2.0
    s = find_R3(power, zero_drift(), 2.0, delta)
    assert s.found and s.R3 == pytest.approx(R3_POWER, rel=1e-12)
    assert all(not r.verdict for r in s.reports[:-1])


def test_find_R3_refinement_stable(power):
    delta = admissible_delta(power, 0.5) / 2.0
    psi = build_asymptotic_psi(power, 2.0, delta, R3_POWER, AngularCutoff())
    reg = psi_region(R3_POWER, psi.cutoff)
    a = verify_supersolution(psi, zero_drift(), power, reg, (160, 121))
    b = verify_supersolution(psi, zero_drift(), power, reg, (320, 241))
    assert a.verdict and b.verdict
    assert abs(b.worst_margin - a.worst_margin) <= 0.1 * abs(a.worst_margin)


def test_bounded_drift_V(power):
    V = build_global_V(power, decay_weight(), 1.0)
    rep = verify_supersolution(V, bounded_drift(0.01, 4), power, Region(0.0, 50.0))
    assert rep.verdict


def test_barrier_csv(tmp_path, power):
    V = build_global_V(power, decay_weight(), 1.0)
    rep = verify_supersolution(V, zero_drift(), power, Region(0.0, 10.0), (20, 1))
    assert rep.to_csv(tmp_path / "b.csv").read_text().splitlines()[0] == "r,theta,value,margin"
