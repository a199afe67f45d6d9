from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fmingraph import kernels
from fmingraph.asymptotic import hemisphere
from fmingraph.drift import bounded_drift, selfshrinker_drift, zero_drift
from fmingraph.errors import PreconditionError
from fmingraph.solver import (GridFunction, PolarGrid, gradient_sup, height_sup, jacobian_matrix,
                              lift_radial, residual, residual_vector, solve_dirichlet_ball, solve_radial)


@pytest.fixture(scope="module")
def disk(euclid):
    return PolarGrid.build(euclid, 2.0, 32, 16)


def _kernel_args(grid, D, u, phi):
    return (u, grid.fh, grid.fn, grid.dr, grid.dth, grid.cap, D.mp(grid.r), D.rp(u), phi,
            grid.cos_t, grid.sin_t)


def test_zero_is_exact_solution(disk):
    u = GridFunction(disk, np.zeros((disk.n_r + 1, disk.n_theta)))
    assert np.all(residual(u, zero_drift()).values == 0.0)
    assert np.all(residual(u, selfshrinker_drift()).values == 0.0)


def test_hemisphere_residual_second_order(euclid):
    D = selfshrinker_drift()
    norms = []
    for n_r in (32, 64, 128):
        g = PolarGrid.build(euclid, 2.0, n_r, 32)
        u = g.sample(hemisphere(1.0))
        res = residual_vector(u, D, g, np.zeros(g.n_theta))
        inner = np.concatenate([[0.0], g.r[1:-1]]) <= 1.5
        body = np.abs(np.concatenate([[res[0]], res[1:1 + (n_r - 1) * 32]]))
        ring = np.concatenate([[True], np.repeat(inner[1:], 32)])
        norms.append(body[ring].max())
    ratios = np.array(norms[:-1]) / np.array(norms[1:])
    assert np.all(np.abs(np.log2(ratios) - 2.0) < 0.2)


def test_zero_data_zero_drift_converges_immediately(disk, euclid):
    o = solve_dirichlet_ball(0.0, zero_drift(), euclid, disk)
    assert o.converged and o.iterations <= 1
    assert np.all(o.u.values == 0.0)


@pytest.mark.parametrize("init,origin", [("bump+", 2.0), ("bump-", -2.0), ("zero", 0.0)])
def test_selfshrinker_branches(euclid, init, origin):
    g = PolarGrid.build(euclid, 2.0, 64, 32)
    o = solve_dirichlet_ball(0.0, selfshrinker_drift(), euclid, g, init, override=True)
    assert o.converged
    assert o.u_origin == pytest.approx(origin, abs=0.03)
    assert "no-uniqueness-guarantee" in o.flags


def test_ball_precondition_names_radius(euclid, disk):
    with pytest.raises(PreconditionError, match=r"r=0\.\d+"):
        solve_dirichlet_ball(0.0, selfshrinker_drift(), euclid, disk)


def test_jacobian_matches_finite_differences(power):
    g = PolarGrid.build(power, 3.0, 8, 8)
    D = bounded_drift(0.3, 1)
    rng = np.random.default_rng(7)
    u = rng.normal(size=(g.n_r + 1, g.n_theta))
    u[0] = u[0, 0]
    phi = u[-1].copy()
    J = jacobian_matrix(u, D, g).toarray()
    x0 = g.pack(u)
    h = 1e-6
    fd = np.empty_like(J)
    for k in range(x0.size):
        e = np.zeros_like(x0)
        e[k] = h
        fd[:, k] = (residual_vector(g.unpack(x0 + e), D, g, phi)
                    - residual_vector(g.unpack(x0 - e), D, g, phi)) / (2 * h)
    assert np.max(np.abs(J - fd)) <= 1e-6 * max(1.0, np.max(np.abs(J)))


def test_numba_numpy_parity_residual_and_jacobian(euclid):
    g = PolarGrid.build(euclid, 2.0, 16, 12)
    D = selfshrinker_drift()
    rng = np.random.default_rng(3)
    u = rng.normal(size=(g.n_r + 1, g.n_theta))
    u[0] = u[0, 0]
    phi = np.zeros(g.n_theta)
    args = _kernel_args(g, D, u, phi)
    assert np.allclose(kernels.polar_residual_numpy(*args), kernels.polar_residual_numba(*args),
                       rtol=1e-13, atol=1e-13)
    jargs = args[:8] + (D.rpp(u),) + args[9:]
    a = kernels.polar_jacobian_numpy(*jargs)
    b = kernels.polar_jacobian_numba(*jargs)
    n = g.size
    import scipy.sparse as sp
    Ma = sp.coo_matrix((a[2], (a[0], a[1])), shape=(n, n)).toarray()
    Mb = sp.coo_matrix((b[2], (b[0], b[1])), shape=(n, n)).toarray()
    assert np.allclose(Ma, Mb, rtol=1e-12, atol=1e-12)


def test_numba_numpy_parity_jacobi():
    h = 1e-2
    t = np.arange(500) * h
    k2 = lambda x: (1.0 + np.sin(x)) ** 2  # noqa: E731
    args = (k2(t), k2(t + h / 2), k2(t + h), np.full(t.size, h), 1e100)
    for x, y in zip(kernels.jacobi_scan_numpy(*args), kernels.jacobi_scan_numba(*args)):
        assert np.allclose(x, y, rtol=1e-13, atol=0)


@given(st.integers(0, 2**31 - 1), st.sampled_from(["selfshrinker", "bounded"]))
def test_residual_is_odd(seed, which):
    from fmingraph.manifold import build_model
    M = build_model("euclidean", 2)
    g = PolarGrid.build(M, 1.5, 6, 8)
    D = selfshrinker_drift() if which == "selfshrinker" else bounded_drift(0.4, 2)
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(g.n_r + 1, g.n_theta))
    u[0] = u[0, 0]
    phi = rng.normal(size=g.n_theta)
    assert np.allclose(residual_vector(-u, D, g, -phi), -residual_vector(u, D, g, phi),
                       rtol=1e-12, atol=1e-12)


def test_radial_solver_hemisphere(euclid):
    o = solve_radial(0.0, selfshrinker_drift(), euclid, 2.0, 128, "bump+", override=True)
    assert o.converged
    assert np.max(np.abs(o.profile - np.sqrt(np.clip(4 - o.r**2, 0, None)))) < 0.03


def test_radial_zero(euclid):
    o = solve_radial(0.0, zero_drift(), euclid, 2.0, 32)
    assert o.converged and np.all(o.profile == 0.0)


def test_radial_lift_matches_polar(euclid):
    o = solve_radial(0.0, selfshrinker_drift(), euclid, 2.0, 32, "bump+", override=True)
    g = PolarGrid.build(euclid, 2.0, 32, 16)
    u = lift_radial(o.profile, g)
    res = residual(u, selfshrinker_drift())
    assert np.max(np.abs(res.values)) < 1e-9


def test_radial_higher_dimension_constant_data():
    from fmingraph.manifold import build_model
    M = build_model("hyperbolic(1)", 3)
    o = solve_radial(0.7, bounded_drift(0.2, 2), M, 2.0, 64)
    assert o.converged and o.profile[-1] == 0.7


def test_gradient_and_height_sup(euclid):
    g = PolarGrid.build(euclid, 1.9, 512, 16)
    u = GridFunction(g, g.sample(hemisphere(1.0)))
    gs = gradient_sup(u)
    assert gs.boundary_sup == pytest.approx(1.9 / math.sqrt(4 - 1.9**2), rel=0.02)
    c = GridFunction(g, np.full((g.n_r + 1, g.n_theta), -1.5))
    assert gradient_sup(c).sup == 0.0 and height_sup(c) == 1.5


def test_solution_csv_schema(tmp_path, disk):
    u = GridFunction(disk, np.zeros((disk.n_r + 1, disk.n_theta)))
    lines = u.to_csv(tmp_path / "u.csv").read_text().splitlines()
    assert lines[0] == "r,theta,u" and len(lines) == 1 + 1 + disk.n_r * disk.n_theta
