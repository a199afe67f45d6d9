from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fmingraph.errors import DomainError, QuadratureError
from fmingraph.potential import (constant_weight, decay_weight, g_table, kernel_integral, integral_of_g,
                                 potential_table, weight_from_name, zero_weight)

# independent oracle: tests/oracles/potential_power_oracle.py (DOP853 + mpmath)
V_EXCESS_1E3 = 0.17678553692166509
H_POWER = -1.21820684995714


@pytest.mark.parametrize("c", [0.5, 1.0, 3.0])
def test_g_constant_weight_euclidean(euclid, c):
    r = np.array([0.0, 0.5, 1.0, 4.0, 15.0])
    assert np.allclose(g_table(euclid, constant_weight(c), r), c * r / 2.0, atol=1e-14)


def test_g_constant_weight_hyperbolic(hyper):
    r = np.array([0.5, 1.0, 3.0, 10.0, 40.0])
    exact = 2.0 * (np.cosh(r) - 1.0) / np.sinh(r)
    assert np.allclose(g_table(hyper, constant_weight(2.0), r), exact, rtol=1e-12)


def test_g_zero_weight(power):
    assert np.all(g_table(power, zero_weight(), np.linspace(0, 50, 11)) == 0.0)


def test_zero_weight_gives_constant_V(power):
    t = potential_table(power, zero_weight(), np.linspace(0, 100, 21), 1.5)
    assert t.H == 0.0
    assert np.all(t.V == 1.5)


def test_negative_weight_rejected():
    with pytest.raises(DomainError):
        constant_weight(-1.0)


def test_divergent_kernel_is_named(hyper):
    with pytest.raises(QuadratureError, match="integrability kernel"):
        kernel_integral(hyper, constant_weight(1.0))


def test_power_V_matches_oracle(power):
    t = potential_table(power, decay_weight(), np.concatenate([np.linspace(0, 20, 81),
                                                               np.geomspace(20, 1e3, 61)[1:]]), 1.0)
    assert t.H == pytest.approx(H_POWER, rel=1e-10)
    assert t.V[-1] - 1.0 == pytest.approx(V_EXCESS_1E3, rel=1e-9)
    assert np.all(np.diff(t.V) < 0)
    assert t.H_converged


def test_two_routes_agree(power):
    r = np.array([0.0, 0.5, 2.0, 10.0, 300.0])
    t = potential_table(power, decay_weight(), r, 0.0)
    assert np.allclose(t.V, integral_of_g(power, decay_weight(), r), rtol=1e-12, atol=1e-14)


def test_H_independent_of_radii(power):
    a = potential_table(power, decay_weight(), np.linspace(0, 10, 11)).H
    b = potential_table(power, decay_weight(), np.geomspace(1e-3, 500, 37)).H
    assert a == pytest.approx(b, rel=1e-12)


@given(st.floats(0.0, 50.0), st.floats(1e-3, 50.0))
def test_g_monotone_in_weight(r, c):
    # g is linear in a0
    from fmingraph.manifold import build_model
    M = build_model("hyperbolic(1)", 2)
    one = g_table(M, constant_weight(1.0), np.array([r]))[0]
    assert g_table(M, constant_weight(c), np.array([r]))[0] == pytest.approx(c * one, rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("name,value", [("decay(2,2)", 1.0), ("capped(1)", 1.0), ("const(2)", 2.0),
                                        ("zero", 0.0)])
def test_weight_presets_at_origin(name, value):
    assert float(weight_from_name(name)(np.array([0.0]))[0]) == pytest.approx(value)
