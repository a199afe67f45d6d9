from __future__ import annotations

import numpy as np
import pytest

from fmingraph.audits import FourierData, comparison_audit, estimate_audit, random_fourier
from fmingraph.drift import bounded_drift, selfshrinker_drift
from fmingraph.errors import PreconditionError
from fmingraph.solver import PolarGrid, solve_dirichlet_ball


def test_fourier_extension_matches_boundary():
    d = FourierData(0.3, (1.0, 0.2), (0.0, -0.4))
    th = np.linspace(0, 6, 13)
    assert np.allclose(d.extension(2.0, th, 2.0), d(th))
    assert d.grad_sup(1.0) > 0 and FourierData(0.5).grad_sup(1.0) == 0.0


@pytest.mark.parametrize("drift", [bounded_drift(0.1, 3), bounded_drift(0.3, 1)])
def test_estimate_audit_holds(power, drift):
    phi = FourierData(0.2, (0.5, 0.1), (0.0, -0.3))
    g = PolarGrid.build(power, 1.0, 32, 32)
    o = solve_dirichlet_ball(phi, drift, power, g, "zero")
    a = estimate_audit(o, drift, power, phi, tol=1e-10)
    assert a.ok and a.u_sup <= a.height_bound


def test_estimate_audit_needs_bounded_drift(euclid):
    g = PolarGrid.build(euclid, 1.0, 8, 8)
    o = solve_dirichlet_ball(0.0, selfshrinker_drift(), euclid, g, override=True)
    with pytest.raises(PreconditionError):
        estimate_audit(o, selfshrinker_drift(), euclid, FourierData(0.0), tol=1e-10)


def test_comparison_audit_small(hyper):
    res = comparison_audit(hyper, bounded_drift(0.1, 3), n_pairs=4, grid=(16, 16))
    assert res.ok and len(res.pairs) == 4


def test_comparison_rejects_t_dependent(euclid):
    with pytest.raises(PreconditionError):
        comparison_audit(euclid, selfshrinker_drift())


def test_random_fourier_reproducible():
    a = random_fourier(np.random.default_rng(1))
    b = random_fourier(np.random.default_rng(1))
    assert a == b
