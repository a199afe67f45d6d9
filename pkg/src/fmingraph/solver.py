"""Finite-volume Newton solver for the f-minimal graph equation on geodesic balls.

Two discretisations share one flux convention:

* a 2-D polar grid (n = 2) with a single origin node closed by a pole cap,
* a radial 1-D grid for rotationally symmetric data in any dimension.

In both, face fluxes f^{n-1} u_r / W are differenced over cell volumes and the
drift term (m' u_r - r'(u)) / W is subtracted at the nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import kernels
from .drift import DriftFunction, check_ball_solvability, zero_drift
from .errors import PreconditionError
from .io import write_csv
from .manifold import ModelManifold
from .quadrature import gauss_nodes

_GX, _GW = gauss_nodes(16)


def _cap_integral(M: ModelManifold, h: float, power: int) -> float:
    """int_0^h f_a^power dr."""
    x = 0.5 * h * (_GX + 1.0)
    return float(0.5 * h * np.dot(_GW, M.f(x) ** power))


# ---------------------------------------------------------------------------
# Grids and grid functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PolarGrid:
    """Uniform polar grid on B(o, R): rings r_i = i R / n_r, i = 0..n_r."""

    M: ModelManifold
    R: float
    n_r: int
    n_theta: int
    r: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    fn: np.ndarray = field(repr=False)
    fh: np.ndarray = field(repr=False)
    cap: float = 0.0
    cos_t: np.ndarray = field(default=None, repr=False)
    sin_t: np.ndarray = field(default=None, repr=False)

    @classmethod
    def build(cls, M: ModelManifold, R: float, n_r: int, n_theta: int) -> "PolarGrid":
        if M.n != 2:
            raise PreconditionError("the polar grid needs n = 2; use solve_radial for n > 2")
        if n_r < 2 or n_theta < 4:
            raise ValueError("grid needs n_r >= 2 and n_theta >= 4")
        r = np.linspace(0.0, R, n_r + 1)
        dr = R / n_r
        theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
        fn = M.f(r)
        fh = M.f(0.5 * (r[1:] + r[:-1]))
        cap = 2.0 * math.pi * _cap_integral(M, 0.5 * dr, 1)
        return cls(M, float(R), n_r, n_theta, r, theta, fn, fh, cap, np.cos(theta), np.sin(theta))

    @property
    def dr(self) -> float:
        return self.R / self.n_r

    @property
    def dth(self) -> float:
        return 2.0 * math.pi / self.n_theta

    @property
    def size(self) -> int:
        return 1 + self.n_r * self.n_theta

    @property
    def grid_id(self) -> str:
        return f"polar(R={self.R:g},{self.n_r}x{self.n_theta})"

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r, self.theta, indexing="ij")

    def pack(self, u2d: np.ndarray) -> np.ndarray:
        return np.concatenate([[u2d[0, 0]], u2d[1:].ravel()])

    def unpack(self, vec: np.ndarray) -> np.ndarray:
        u = np.empty((self.n_r + 1, self.n_theta))
        u[0] = vec[0]
        u[1:] = vec[1:].reshape(self.n_r, self.n_theta)
        return u

    def sample(self, fn: Callable) -> np.ndarray:
        rr, tt = self.mesh()
        out = np.asarray(fn(rr, tt), dtype=float) * np.ones_like(rr)
        out[0] = out[0, 0]
        return out


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: PolarGrid
    values: np.ndarray

    @property
    def grid_id(self) -> str:
        return self.grid.grid_id

    @property
    def boundary_trace(self) -> np.ndarray:
        return self.values[-1]

    @property
    def origin(self) -> float:
        return float(self.values[0, 0])

    def to_csv(self, path: Path | str) -> Path:
        """Columns r, theta, u; the origin appears once with theta = 0."""
        rr, tt = self.grid.mesh()
        return write_csv(path, ["r", "theta", "u"],
                         [np.concatenate([[0.0], rr[1:].ravel()]),
                          np.concatenate([[0.0], tt[1:].ravel()]),
                          np.concatenate([[self.origin], self.values[1:].ravel()])])


@dataclass(frozen=True, eq=False)
class RadialGrid:
    M: ModelManifold
    R: float
    n_r: int
    r: np.ndarray = field(repr=False)
    fh_m: np.ndarray = field(repr=False)
    vol: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, M: ModelManifold, R: float, n_r: int) -> "RadialGrid":
        r = np.linspace(0.0, R, n_r + 1)
        dr = R / n_r
        m = M.n - 1
        with np.errstate(over="ignore"):
            fh_m = np.exp(m * M.log_f(0.5 * (r[1:] + r[:-1])))
            vol = np.exp(m * M.log_f(np.where(r > 0, r, 1.0))) * dr
        vol[0] = _cap_integral(M, 0.5 * dr, m)
        return cls(M, float(R), n_r, r, fh_m, vol)

    @property
    def dr(self) -> float:
        return self.R / self.n_r


# ---------------------------------------------------------------------------
# Discrete operator
# ---------------------------------------------------------------------------


def _coefficients(D: DriftFunction, grid: PolarGrid, u: np.ndarray):
    mp = D.mp(grid.r)
    rp = D.rp(u)
    rpp = D.rpp(u)
    return mp, rp, rpp


def residual_vector(u: np.ndarray, D: DriftFunction, grid: PolarGrid, phi: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(u)):
        raise ValueError("non-finite values in u")
    mp, rp, _ = _coefficients(D, grid, u)
    return kernels.polar_residual(u, grid.fh, grid.fn, grid.dr, grid.dth, grid.cap, mp, rp,
                                  np.asarray(phi, dtype=float), grid.cos_t, grid.sin_t)


def jacobian_matrix(u: np.ndarray, D: DriftFunction, grid: PolarGrid) -> sp.csr_matrix:
    mp, rp, rpp = _coefficients(D, grid, u)
    rows, cols, vals = kernels.polar_jacobian(u, grid.fh, grid.fn, grid.dr, grid.dth, grid.cap,
                                              mp, rp, rpp, grid.cos_t, grid.sin_t)
    n = grid.size
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def residual(u: GridFunction, D: DriftFunction, M: ModelManifold | None = None,
             grid: PolarGrid | None = None) -> GridFunction:
    """Node-wise div(grad u / W) - <grad f, nu>; boundary rows hold u - phi = 0."""
    grid = u.grid if grid is None else grid
    res = residual_vector(u.values, D, grid, u.values[-1])
    return GridFunction(grid, grid.unpack(res))


# ---------------------------------------------------------------------------
# Newton iteration
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SolveOutcome:
    u: GridFunction | None
    history: tuple[float, ...]
    iterations: int
    damping_events: int
    converged: bool
    initial_guess: str
    flags: tuple[str, ...] = ()
    message: str = ""
    profile: np.ndarray | None = field(default=None, repr=False)
    r: np.ndarray | None = field(default=None, repr=False)

    @property
    def residual_norm(self) -> float:
        return self.history[-1] if self.history else math.inf

    @property
    def u_origin(self) -> float:
        if self.u is not None:
            return self.u.origin
        return float(self.profile[0])


def _newton(F: Callable, J: Callable, x0: np.ndarray, *, tol: float, max_iter: int,
            ptc_steps: int = 200):
    """Damped Newton with Armijo backtracking on the 2-norm and a
    pseudo-transient fallback once the damping floor is hit."""
    x = x0.copy()
    r = F(x)
    hist = [float(np.max(np.abs(r)))]
    damp = 0
    it = 0
    msg = ""
    while hist[-1] > tol and it < max_iter:
        it += 1
        A = J(x)
        dx = spsolve(A.tocsc(), -r)
        norm0 = float(np.linalg.norm(r))
        lam = 1.0
        while True:
            xt = x + lam * dx
            try:
                rt = F(xt)
                ok = np.all(np.isfinite(rt)) and np.linalg.norm(rt) <= (1.0 - 1e-4 * lam) * norm0
            except ValueError:
                ok = False
            if ok:
                break
            lam *= 0.5
            damp += 1
            if lam < 2.0**-20:
                break
        if lam >= 2.0**-20:
            x, r = xt, rt
            hist.append(float(np.max(np.abs(r))))
            continue
        # pseudo-transient continuation: (I/dt - J) dx = F
        dt = 1e-3
        prev = norm0
        eye = sp.identity(x.size, format="csr")
        for _ in range(ptc_steps):
            A = J(x)
            dx = spsolve((eye / dt - A).tocsc(), r)
            xt = x + dx
            rt = F(xt)
            if not np.all(np.isfinite(rt)):
                dt *= 0.25
                continue
            x, r = xt, rt
            cur = float(np.linalg.norm(r))
            dt = min(dt * prev / max(cur, 1e-300), 1e12)
            prev = cur
            hist.append(float(np.max(np.abs(r))))
            if dt > 1e6:
                break
        msg = "pseudo-transient continuation used"
        it += 1
    converged = hist[-1] <= tol
    if not converged and not msg:
        msg = "iteration cap reached"
    return x, hist, it, damp, converged, msg


def _boundary_values(phi, grid: PolarGrid) -> np.ndarray:
    if callable(phi):
        vals = np.asarray(phi(grid.theta), dtype=float)
    else:
        vals = np.asarray(phi, dtype=float)
    return np.broadcast_to(vals, (grid.n_theta,)).astype(float)


def initial_guess(kind, grid: PolarGrid, phi: np.ndarray, D: DriftFunction,
                  amp: float = 0.5) -> tuple[np.ndarray, str]:
    """Menu: 'zero', 'harmonic', 'bump+', 'bump-', an array or a callable (r, theta)."""
    rr, _ = grid.mesh()
    if isinstance(kind, str):
        if kind == "zero":
            u = np.zeros_like(rr)
        elif kind in ("bump+", "bump-"):
            s = 1.0 if kind == "bump+" else -1.0
            u = s * amp * np.sqrt(np.clip(1.0 - (rr / grid.R) ** 2, 0.0, None))
        elif kind == "harmonic":
            z = np.zeros_like(rr)
            F0 = residual_vector(z, zero_drift(), grid, phi)
            J0 = jacobian_matrix(z, zero_drift(), grid)
            u = grid.unpack(spsolve(J0.tocsc(), -F0))
        else:
            raise ValueError(f"unknown initial guess {kind!r}")
        label = kind
    elif callable(kind):
        u = grid.sample(kind)
        label = "callable"
    else:
        u = np.array(kind, dtype=float).reshape(rr.shape)
        label = "array"
    u = u.copy()
    u[0] = u[0, 0]
    u[-1] = phi
    return u, label


def solve_dirichlet_ball(phi_bdry, D: DriftFunction, M: ModelManifold, grid: PolarGrid,
                         u0="zero", *, tol: float = 1e-10, max_iter: int = 60,
                         override: bool = False, bump_amp: float = 0.5) -> SolveOutcome:
    """Damped Newton for the Dirichlet problem on B(o, grid.R).

    Raises PreconditionError when the ball solvability bound fails and
    ``override`` is not set; stagnation returns a non-converged outcome.
    """
    if grid.M is not M:
        raise ValueError("grid was built for a different model")
    if not override:
        ball = check_ball_solvability(D, M, grid.R)
        if not ball.ok:
            fr = "unbounded F" if ball.failing_radius is None else f"r={ball.failing_radius:.6g}"
            raise PreconditionError(
                f"ball solvability fails for drift {D.name} on B(o,{grid.R:g}) at {fr}")
    phi = _boundary_values(phi_bdry, grid)
    u, label = initial_guess(u0, grid, phi, D, bump_amp)

    def F(x):
        return residual_vector(grid.unpack(x), D, grid, phi)

    def J(x):
        return jacobian_matrix(grid.unpack(x), D, grid)

    x, hist, it, damp, conv, msg = _newton(F, J, grid.pack(u), tol=tol, max_iter=max_iter)
    flags = ("no-uniqueness-guarantee",) if D.t_dependent else ()
    return SolveOutcome(GridFunction(grid, grid.unpack(x)), tuple(hist), it, damp, conv, label,
                        flags, msg)


# ---------------------------------------------------------------------------
# Radial reduction
# ---------------------------------------------------------------------------


def radial_residual(u: np.ndarray, D: DriftFunction, grid: RadialGrid, phi_R: float) -> np.ndarray:
    dr = grid.dr
    p = np.diff(u) / dr
    flux = grid.fh_m * p / np.sqrt(1.0 + p * p)
    out = np.empty_like(u)
    pc = np.zeros_like(u)
    pc[1:-1] = (u[2:] - u[:-2]) / (2.0 * dr)
    rhs = (D.mp(grid.r) * pc - D.rp(u)) / np.sqrt(1.0 + pc * pc)
    out[0] = flux[0] / grid.vol[0] - rhs[0]
    out[1:-1] = (flux[1:] - flux[:-1]) / grid.vol[1:-1] - rhs[1:-1]
    out[-1] = u[-1] - phi_R
    return out


def radial_jacobian(u: np.ndarray, D: DriftFunction, grid: RadialGrid) -> sp.csr_matrix:
    n = u.size
    dr = grid.dr
    p = np.diff(u) / dr
    dflux = grid.fh_m / (dr * (1.0 + p * p) ** 1.5)  # d flux_{i+1/2} / d u_{i+1}
    main = np.zeros(n)
    upper = np.zeros(n - 1)
    lower = np.zeros(n - 1)
    vol = grid.vol
    # flux_{i+1/2} enters row i with +1/vol_i and row i+1 with -1/vol_{i+1}
    main[:-1] -= dflux / vol[:-1]
    upper += dflux / vol[:-1]
    main[1:-1] -= dflux[:-1] / vol[1:-1]
    lower[:-1] += dflux[:-1] / vol[1:-1]
    pc = np.zeros(n)
    pc[1:-1] = (u[2:] - u[:-2]) / (2.0 * dr)
    w = np.sqrt(1.0 + pc * pc)
    mp = D.mp(grid.r)
    num = mp * pc - D.rp(u)
    dpc = mp / w - num * pc / w**3
    main += D.rpp(u) / w
    upper[1:] -= dpc[1:-1] / (2.0 * dr)
    lower[:-1] += dpc[1:-1] / (2.0 * dr)
    main[-1] = 1.0
    lower[-1] = 0.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr")


def solve_radial(phi_R: float, D: DriftFunction, M: ModelManifold, R: float, n_r: int,
                 u0="zero", *, tol: float = 1e-10, max_iter: int = 60, override: bool = False,
                 bump_amp: float = 0.5) -> SolveOutcome:
    """Solve (f^{n-1} u'/W)' = f^{n-1}(m' u' - r'(u))/W, u'(0) = 0, u(R) = phi_R."""
    if not override:
        ball = check_ball_solvability(D, M, R)
        if not ball.ok:
            fr = "unbounded F" if ball.failing_radius is None else f"r={ball.failing_radius:.6g}"
            raise PreconditionError(f"ball solvability fails for drift {D.name} on B(o,{R:g}) at {fr}")
    grid = RadialGrid.build(M, R, n_r)
    if isinstance(u0, str):
        if u0 == "zero":
            u = np.zeros(n_r + 1)
        elif u0 in ("bump+", "bump-"):
            s = 1.0 if u0 == "bump+" else -1.0
            u = s * bump_amp * np.sqrt(np.clip(1.0 - (grid.r / R) ** 2, 0.0, None))
        else:
            raise ValueError(f"unknown initial guess {u0!r}")
        label = u0
    elif callable(u0):
        u, label = np.asarray(u0(grid.r), dtype=float), "callable"
    else:
        u, label = np.array(u0, dtype=float), "array"
    u = u.copy()
    u[-1] = phi_R
    x, hist, it, damp, conv, msg = _newton(lambda v: radial_residual(v, D, grid, phi_R),
                                           lambda v: radial_jacobian(v, D, grid), u,
                                           tol=tol, max_iter=max_iter)
    flags = ("no-uniqueness-guarantee",) if D.t_dependent else ()
    return SolveOutcome(None, tuple(hist), it, damp, conv, label, flags, msg, profile=x, r=grid.r)


def lift_radial(profile: np.ndarray, grid: PolarGrid) -> GridFunction:
    """Copy a radial profile onto every ray of a polar grid with the same rings."""
    profile = np.asarray(profile, dtype=float)
    if profile.size != grid.n_r + 1:
        raise ValueError("radial profile and polar grid have different ring counts")
    return GridFunction(grid, np.repeat(profile[:, None], grid.n_theta, axis=1))


# ---------------------------------------------------------------------------
# Sup norms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradientSup:
    sup: float
    boundary_sup: float
    origin: float


def gradient_sup(u: GridFunction, grid: PolarGrid | None = None) -> GradientSup:
    """Discrete sup of |grad u|: central differences inside, one-sided on the boundary ring."""
    grid = u.grid if grid is None else grid
    v = u.values
    dr, dth = grid.dr, grid.dth
    ur = np.empty_like(v)
    ur[1:-1] = (v[2:] - v[:-2]) / (2.0 * dr)
    if v.shape[0] >= 3:
        ur[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dr)
    else:
        ur[-1] = (v[-1] - v[-2]) / dr
    ut = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2.0 * dth)
    f = grid.fn[:, None]
    mag = np.sqrt(ur[1:] ** 2 + (ut[1:] / f[1:]) ** 2)
    gx = 2.0 * np.dot(v[1] - v[0, 0], grid.cos_t) / (grid.n_theta * dr)
    gy = 2.0 * np.dot(v[1] - v[0, 0], grid.sin_t) / (grid.n_theta * dr)
    g0 = math.hypot(gx, gy)
    return GradientSup(float(max(np.max(mag), g0)), float(np.max(mag[-1])), g0)


def height_sup(u: GridFunction | np.ndarray) -> float:
    vals = u.values if isinstance(u, GridFunction) else np.asarray(u)
    return float(np.max(np.abs(vals)))
