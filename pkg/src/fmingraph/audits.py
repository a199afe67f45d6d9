"""A-priori estimate audits on converged ball solutions.

The height audit compares sup|u| with sup|phi| + h(A); the gradient audit
compares the boundary-ring gradient with psi'(0) + sup|grad phi~| for the
barrier parameters the construction would choose; the comparison audit
solves ordered pairs of boundary data and measures order violations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .barriers import build_height_barrier, choose_gradient_params
from .drift import DriftFunction
from .errors import PreconditionError
from .manifold import ModelManifold
from .solver import PolarGrid, SolveOutcome, gradient_sup, solve_dirichlet_ball


@dataclass(frozen=True)
class FourierData:
    """phi(theta) = c0 + sum_k (a_k cos k theta + b_k sin k theta), extended
    to the ball as c0 + sum_k (r/R)^k (...), the Euclidean harmonic extension."""

    c0: float
    a: tuple[float, ...] = ()
    b: tuple[float, ...] = ()

    def __call__(self, theta):
        th = np.asarray(theta, dtype=float)
        out = np.full_like(th, self.c0)
        for k, (ak, bk) in enumerate(zip(self.a, self.b), start=1):
            out = out + ak * np.cos(k * th) + bk * np.sin(k * th)
        return out

    def extension(self, r, theta, R: float):
        s = np.asarray(r, dtype=float) / R
        th = np.asarray(theta, dtype=float)
        out = np.full(np.broadcast(s, th).shape, self.c0)
        for k, (ak, bk) in enumerate(zip(self.a, self.b), start=1):
            out = out + s**k * (ak * np.cos(k * th) + bk * np.sin(k * th))
        return out

    def sup(self) -> float:
        return float(np.max(np.abs(self(np.linspace(0, 2 * math.pi, 2048, endpoint=False)))))

    def grad_sup(self, R: float) -> float:
        """sup over the closed ball of |grad phi~| (attained on the boundary)."""
        t = np.linspace(0, 2 * math.pi, 2048, endpoint=False)
        dr = sum(k / R * (ak * np.cos(k * t) + bk * np.sin(k * t))
                 for k, (ak, bk) in enumerate(zip(self.a, self.b), start=1))
        dt = sum(k / R * (-ak * np.sin(k * t) + bk * np.cos(k * t))
                 for k, (ak, bk) in enumerate(zip(self.a, self.b), start=1))
        return float(np.max(np.hypot(dr, dt))) if self.a else 0.0

    def c2_norm(self, R: float) -> float:
        """|phi|_0 + |grad phi|_0 + |hess phi|_0 with a coefficient-sum bound on the Hessian."""
        hess = sum(k * max(k - 1, 0) / R**2 * math.hypot(ak, bk)
                   for k, (ak, bk) in enumerate(zip(self.a, self.b), start=1))
        return self.sup() + self.grad_sup(R) + hess

    def shifted(self, c: float) -> "FourierData":
        return FourierData(self.c0 + c, self.a, self.b)


@dataclass(frozen=True)
class EstimateAudit:
    label: str
    converged: bool
    u_sup: float
    height_bound: float
    height_margin: float
    grad_boundary: float
    grad_bound: float
    grad_margin: float
    tol: float

    @property
    def ok(self) -> bool:
        slack = 10.0 * self.tol
        return self.converged and self.height_margin >= -slack and self.grad_margin >= -slack


def estimate_audit(outcome: SolveOutcome, D: DriftFunction, M: ModelManifold, phi: FourierData,
                   *, tol: float, label: str = "") -> EstimateAudit:
    """Check one converged solution against the height and boundary-gradient bounds."""
    if not D.bounded:
        raise PreconditionError("estimate audits need a bounded drift")
    grid = outcome.u.grid
    R = grid.R
    A = 2.0 * R
    F_sup = float(np.max(D.F_effective(np.linspace(0.0, R, 1025))))
    phi_sup = phi.sup()
    hb = build_height_barrier(A, F_sup, phi_sup).params["bound"]
    vals = outcome.u.values
    u_sup = float(np.max(np.abs(vals)))
    h_margin = float(np.min(phi_sup + hb - np.abs(vals)))
    H_bdry = (M.n - 1) * float(M.ratio(np.array([R]))[0])
    gp = choose_gradient_params(phi_sup + hb, phi_sup, phi.c2_norm(R), phi.grad_sup(R), H_bdry)
    grad_phi = phi.grad_sup(R)
    bound = gp.slope + grad_phi
    gs = gradient_sup(outcome.u)
    return EstimateAudit(label, outcome.converged, u_sup, phi_sup + hb, h_margin, gs.boundary_sup, bound,
                         float(bound - gs.boundary_sup), tol)


def random_fourier(rng: np.random.Generator, modes: int = 3, scale: float = 1.0) -> FourierData:
    a = tuple(float(x) for x in scale * rng.normal(size=modes) / np.arange(1, modes + 1) ** 2)
    b = tuple(float(x) for x in scale * rng.normal(size=modes) / np.arange(1, modes + 1) ** 2)
    return FourierData(float(scale * rng.normal()), a, b)


@dataclass(frozen=True)
class ComparisonPair:
    index: int
    lower: FourierData
    upper: FourierData
    converged: bool
    violation: float


@dataclass(frozen=True)
class ComparisonAudit:
    pairs: tuple[ComparisonPair, ...]
    tol: float

    @property
    def worst(self) -> float:
        return max(p.violation for p in self.pairs)

    @property
    def ok(self) -> bool:
        return all(p.converged for p in self.pairs) and self.worst <= 10.0 * self.tol


def comparison_audit(M: ModelManifold, D: DriftFunction, *, R: float = 1.0, n_pairs: int = 20,
                     grid: tuple[int, int] = (32, 32), seed: int = 20240607, tol: float = 1e-10,
                     ) -> ComparisonAudit:
    """Solve n_pairs ordered boundary-data pairs phi_lo <= phi_hi and record
    max(u_lo - u_hi, 0) over the grid for each pair."""
    if D.t_dependent:
        raise PreconditionError(f"drift {D.name} depends on t; comparison does not apply")
    rng = np.random.default_rng(seed)
    g = PolarGrid.build(M, R, *grid)
    pairs = []
    for k in range(n_pairs):
        lo = random_fourier(rng)
        bump = random_fourier(rng, scale=0.5)
        # shift so that hi - lo = bump - min(bump) + gap >= gap > 0
        gap = float(rng.uniform(0.0, 0.2))
        t = np.linspace(0, 2 * math.pi, 4096, endpoint=False)
        shift = -float(np.min(bump(t))) + gap
        hi_off = FourierData(lo.c0 + bump.c0 + shift,
                             tuple(x + y for x, y in zip(lo.a, bump.a)),
                             tuple(x + y for x, y in zip(lo.b, bump.b)))
        u_lo = solve_dirichlet_ball(lo, D, M, g, "zero", tol=tol)
        u_hi = solve_dirichlet_ball(hi_off, D, M, g, "zero", tol=tol)
        viol = float(max(np.max(u_lo.u.values - u_hi.u.values), 0.0))
        pairs.append(ComparisonPair(k, lo, hi_off, u_lo.converged and u_hi.converged, viol))
    return ComparisonAudit(tuple(pairs), tol)
