"""Barrier families and pointwise verification of Q~[v] = div(grad v / W) + F <= 0.

Radial barriers carry analytic first and second radial derivatives; the
angular barrier psi carries its full polar derivative set. Verification
evaluates the mean curvature operator from those derivatives with the
model's divergence formula, so no finite differences enter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .drift import DriftFunction
from .errors import DomainError, ParameterError
from .io import fmt, write_csv
from .manifold import ModelManifold
from .potential import PotentialTable, g_table, potential_table


class Derivs(NamedTuple):
    """Polar derivative set of a function v(r, theta)."""

    v: np.ndarray
    r: np.ndarray
    t: np.ndarray
    rr: np.ndarray
    rt: np.ndarray
    tt: np.ndarray


def _zeros_like(*arrs):
    z = np.zeros(np.broadcast(*arrs).shape)
    return z


# ---------------------------------------------------------------------------
# Radial barriers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadialBarrier:
    """Radial barrier v(r) with analytic derivatives.

    ``evaluate`` maps radii to (v, v', v''); ``r``/``value``/``d1``/``d2``
    hold the construction-time table.
    """

    kind: str
    params: dict
    r: np.ndarray
    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    evaluate: Callable = field(repr=False)
    domain: tuple[float, float] = (0.0, math.inf)
    extra: object = field(default=None, repr=False)

    def derivs(self, r, theta=None) -> Derivs:
        r = np.asarray(r, dtype=float)
        shape = r.shape if theta is None else np.broadcast(r, np.asarray(theta)).shape
        v, v1, v2 = (np.broadcast_to(x, shape) for x in self.evaluate(np.broadcast_to(r, shape)))
        z = np.zeros(shape)
        return Derivs(v, v1, z, v2, z, z)

    def __call__(self, r):
        return self.evaluate(np.asarray(r, dtype=float))[0]

    def to_csv(self, path: Path | str) -> Path:
        return write_csv(path, ["r", "value", "d1", "d2"], [self.r, self.value, self.d1, self.d2])


def _eval_flat(fn, r):
    """Evaluate a sorted-input table function on arbitrary radii."""
    r = np.asarray(r, dtype=float)
    uniq, inv = np.unique(r.ravel(), return_inverse=True)
    outs = fn(uniq)
    return tuple(o[inv].reshape(r.shape) for o in outs)


def height_bound(A: float, C: float) -> float:
    """h(A) = (e^{AC}/C)(1 - e^{-CA})."""
    if A == 0:
        return 0.0
    return math.expm1(A * C) / C


def build_height_barrier(A: float, F_sup: float, phi_sup: float, *, C: float | None = None,
                         R: float | None = None) -> RadialBarrier:
    """phi_sup + h(d) with d = R - r the distance to the boundary of B(o, R).

    h(d) = (e^{AC}/C)(1 - e^{-Cd}); C defaults to F_sup + 1 and R to A/2.
    """
    if not math.isfinite(F_sup):
        raise ParameterError("height barrier needs a finite F_sup; restrict the drift to a slab")
    if A < 0:
        raise ParameterError("diameter A must be non-negative")
    C = F_sup + 1.0 if C is None else float(C)
    if C <= 0:
        raise ParameterError("C must be positive")
    R = A / 2.0 if R is None else float(R)
    eAC = math.exp(A * C)

    def ev(r):
        d = R - np.asarray(r, dtype=float)
        hp = np.exp(C * (A - d))
        h = (eAC / C) * -np.expm1(-C * d)
        return phi_sup + h, -hp, -C * hp

    r = np.linspace(0.0, R, 257)
    v, v1, v2 = ev(r)
    params = {"A": A, "C": C, "F_sup": F_sup, "phi_sup": phi_sup, "R": R,
              "bound": height_bound(A, C), "C_gt_F": C > F_sup}
    return RadialBarrier("height", params, r, v, v1, v2, ev, (0.0, R))


@dataclass(frozen=True)
class GradientParams:
    eps: float
    K: float
    C: float
    theta: float
    S: float

    @property
    def slope(self) -> float:
        return self.C * self.K / math.log1p(self.K)


def gradient_theta(H_bdry: float, phi_C2: float, grad_phi: float) -> float:
    """Collar constant from the eigenvalue bounds of the linearised operator."""
    p2 = grad_phi**2
    c1 = 1.0 / math.sqrt(2.0 + p2)
    c2 = (1.0 + p2) / (1.0 + math.sqrt(2.0 + p2))
    return (c2 * H_bdry + phi_C2 + p2 * H_bdry) / (c1**2 * (1.0 + p2))


def choose_gradient_params(u_sup: float, phi_sup: float, phi_C2: float, grad_phi: float,
                           H_bdry: float) -> GradientParams:
    """Pick (eps, K) so that psi(eps) >= C/2 >= u_sup + phi_sup."""
    theta = gradient_theta(H_bdry, phi_C2, grad_phi)
    s = min(1.0 / theta, 0.49) if theta > 0 else 0.49
    S = u_sup + phi_sup
    K = max(math.expm1(min(2.0 * S / s, 700.0)), 4.0 / s**2, 2.0 / s)
    while True:
        eps = s - 1.0 / K
        if eps > 0 and K >= (1.0 - 2.0 * eps) / eps**2:
            break
        K *= 2.0
    return GradientParams(eps, K, (eps + 1.0 / K) * math.log1p(K), theta, S)


def build_gradient_barrier(u_sup: float, phi_C2: float, H_bdry: float, eps_collar: float,
                           K: float, *, phi_sup: float = 0.0, R: float = 1.0) -> RadialBarrier:
    """psi(t) = C log(1 + K t)/log(1 + K) on the collar 0 <= t <= eps_collar.

    C = (eps + 1/K) log(1 + K), so psi'(0) = (eps + 1/K) K. As a function on
    the ball the barrier is phi_sup + psi(R - r).
    """
    eps = float(eps_collar)
    if not 0 < eps < 0.5:
        raise ParameterError("eps_collar must lie in (0, 1/2)")
    if K < (1.0 - 2.0 * eps) / eps**2 * (1 - 1e-12):
        raise ParameterError(f"K must be >= (1-2 eps)/eps^2 = {(1 - 2 * eps) / eps**2:.6g}")
    lk = math.log1p(K)
    C = (eps + 1.0 / K) * lk

    def ev(r):
        d = R - np.asarray(r, dtype=float)
        return (phi_sup + C * np.log1p(K * d) / lk, -C * K / (lk * (1 + K * d)),
                -C * K * K / (lk * (1 + K * d) ** 2))

    r = np.linspace(R - eps, R, 129)
    v, v1, v2 = ev(r)
    params = {"u_sup": u_sup, "phi_C2": phi_C2, "H_bdry": H_bdry, "eps": eps, "K": K, "C": C,
              "slope": C * K / lk, "psi_eps": C * math.log1p(K * eps) / lk, "R": R}
    return RadialBarrier("gradient", params, r, v, v1, v2, ev, (R - eps, R))


def build_g(M: ModelManifold, a0, radii) -> np.ndarray:
    """g(r) = f_a^{1-n}(r) int_0^r a0 f_a^{n-1} on sorted radii (g(0) = 0)."""
    return g_table(M, a0, radii)


def default_V_radii(r_max: float = 1e3) -> np.ndarray:
    head = np.linspace(0.0, min(20.0, r_max), 801)
    if r_max <= 20.0:
        return head
    return np.union1d(head, np.geomspace(20.0, r_max, 241))


def build_global_V(M: ModelManifold, a0, phi_sup: float, radii=None) -> RadialBarrier:
    """V(r) = phi_sup + int_r^inf g, with V' = -g and V'' = (n-1)(f'/f) g - a0."""
    radii = default_V_radii() if radii is None else np.asarray(radii, dtype=float)
    m = M.n - 1
    n = M.n

    def second(r, g):
        pos = r > 0
        ratio = M.ratio(np.where(pos, r, 1.0))
        a = np.exp(a0.log_value(r))
        return np.where(pos, m * ratio * g - a, -a / n)

    def table(r):
        tab = potential_table(M, a0, r, phi_sup)
        return tab.V, -tab.g, second(r, tab.g)

    tab = potential_table(M, a0, radii, phi_sup)
    params = {"a0": a0.name, "phi_sup": phi_sup, "H": tab.H, "H_converged": tab.H_converged,
              "bracket_monotone": tab.bracket_monotone, "n": n}
    return RadialBarrier("global_V", params, radii, tab.V, -tab.g, second(radii, tab.g),
                         lambda r: _eval_flat(table, r), (0.0, math.inf), extra=tab)


def potential_of(barrier: RadialBarrier) -> PotentialTable:
    if barrier.kind != "global_V":
        raise ParameterError("not a global_V barrier")
    return barrier.extra


# ---------------------------------------------------------------------------
# Angular cutoff and the asymptotic barrier
# ---------------------------------------------------------------------------


def ramp5(x):
    """Quintic C^2 ramp: 0 below 0, 1 above 1. Returns (S, S', S'')."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    S = x**3 * (10.0 - 15.0 * x + 6.0 * x * x)
    S1 = 30.0 * x * x * (1.0 - x) ** 2
    S2 = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x)
    return S, S1, S2


@dataclass(frozen=True)
class AngularCutoff:
    """h(r, theta) = S(max(2 - 2r, L|theta|)) around the direction theta = 0."""

    L: float = 3.0

    def __post_init__(self):
        if self.L <= 8.0 / math.pi:
            raise ParameterError(f"L must exceed 8/pi = {8 / math.pi:.6g}")

    @property
    def sigma_theta(self) -> float:
        return 1.0 / self.L

    @property
    def R1(self) -> float:
        return 0.5

    def derivs(self, r, theta) -> Derivs:
        r = np.asarray(r, dtype=float)
        th = np.asarray(theta, dtype=float)
        r, th = np.broadcast_arrays(r, th)
        radial = 2.0 - 2.0 * r
        angular = self.L * np.abs(th)
        use_r = radial > angular
        S, S1, S2 = ramp5(np.where(use_r, radial, angular))
        sgn = np.sign(th)
        z = np.zeros(r.shape)
        return Derivs(
            S,
            np.where(use_r, -2.0 * S1, 0.0),
            np.where(use_r, 0.0, self.L * sgn * S1),
            np.where(use_r, 4.0 * S2, 0.0),
            z,
            np.where(use_r, 0.0, self.L**2 * S2),
        )

    def __call__(self, r, theta):
        return self.derivs(r, theta).v

    def measure(self, M: ModelManifold, R1: float, R_out: float, n_r: int = 200,
                n_theta: int = 241) -> tuple[float, float]:
        """Measured (c1, c2): sup |grad h| f_a and sup |Hess h| f_a / b on 3-cone minus B(o,R1)."""
        r, th = _cone_grid(R1, R_out, 3.0 / self.L, n_r, n_theta)
        d = self.derivs(r, th)
        f = M.f(r)
        ratio = M.ratio(r)
        grad = np.hypot(d.r, d.t / f)
        Hrr, Hrt, Htt = _orthonormal_hessian(d, f, ratio)
        hess = np.sqrt(Hrr**2 + 2 * Hrt**2 + Htt**2)
        b = M.profile.b(r)
        return float(np.max(grad * f)), float(np.max(hess * f / b))


def _cone_grid(R_in: float, R_out: float, half_angle: float, n_r: int, n_theta: int,
               open_inner: bool = True):
    r = np.geomspace(R_in, R_out, n_r + (1 if open_inner else 0))
    if open_inner:
        r = r[1:]
    th = np.linspace(-half_angle, half_angle, n_theta)
    return np.meshgrid(r, th, indexing="ij")


def _orthonormal_hessian(d: Derivs, f, ratio):
    Hrr = d.rr
    Hrt = (d.rt - ratio * d.t) / f
    Htt = d.tt / f**2 + ratio * d.r
    return Hrr, Hrt, Htt


def admissible_delta(M: ModelManifold, eps: float | None = None) -> float:
    """min(delta1, eps): the open upper end for delta."""
    d1 = M.profile.delta1(M.n)
    e = M.profile.eps if eps is None else eps
    return min(d1, e) if e > 0 else d1


@dataclass(frozen=True, eq=False)
class AsymptoticPsi:
    """psi = A (R3^delta r^-delta + h) on the cone region outside B(o, R3)."""

    kind: str
    A: float
    delta: float
    R3: float
    cutoff: AngularCutoff
    params: dict

    def derivs(self, r, theta) -> Derivs:
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise DomainError("asymptotic barrier is singular at rho = 0")
        h = self.cutoff.derivs(r, theta)
        A, d, R3 = self.A, self.delta, self.R3
        p = (R3 / r) ** d
        return Derivs(A * (p + h.v), A * (-d * p / r + h.r), A * h.t,
                      A * (d * (d + 1.0) * p / r**2 + h.rr), A * h.rt, A * h.tt)

    def __call__(self, r, theta):
        return self.derivs(r, theta).v


def build_asymptotic_psi(M: ModelManifold, A: float, delta: float, R3: float,
                         cutoff: AngularCutoff, *, eps: float | None = None) -> AsymptoticPsi:
    if M.n != 2:
        raise ParameterError("the angular barrier is implemented for n = 2")
    top = admissible_delta(M, eps)
    if not 0 < delta < top:
        raise ParameterError(f"delta must lie in (0, min(delta1, eps)) = (0, {top:.6g}); "
                             f"delta1 = {M.profile.delta1(M.n):.6g}")
    if R3 <= 0 or A <= 0:
        raise ParameterError("A and R3 must be positive")
    return AsymptoticPsi("asymptotic_psi", float(A), float(delta), float(R3), cutoff,
                         {"A": A, "delta": delta, "R3": R3, "L": cutoff.L, "delta_max": top})


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """r in [r_min, r_max] (open at r_min if ``open_inner``), |theta| <= half_angle."""

    r_min: float
    r_max: float
    half_angle: float = 0.0
    open_inner: bool = False
    label: str = ""

    def describe(self) -> str:
        lo = "(" if self.open_inner else "["
        s = f"r in {lo}{self.r_min:.6g}, {self.r_max:.6g}]"
        if self.half_angle > 0:
            s += f", |theta| <= {self.half_angle:.6g}"
        return f"{self.label}: {s}" if self.label else s


@dataclass(frozen=True, eq=False)
class BarrierReport:
    kind: str
    region: str
    grid: tuple[int, int]
    worst_margin: float
    verdict: bool
    worst_r: float
    worst_theta: float
    r: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    value: np.ndarray = field(repr=False)
    margin: np.ndarray = field(repr=False)
    subsolution: bool = False
    note: str = ""

    def __bool__(self) -> bool:
        return self.verdict

    def verdict_block(self) -> str:
        what = "subsolution" if self.subsolution else "supersolution"
        lines = [f"barrier {self.kind} ({what} check)",
                 f"  region: {self.region}",
                 f"  grid: {self.grid[0]} x {self.grid[1]}",
                 f"  worst margin: {fmt(self.worst_margin)} at r={fmt(self.worst_r)} theta={fmt(self.worst_theta)}",
                 f"  verdict: {'PASS' if self.verdict else 'FAIL'}"]
        if self.note:
            lines.append(f"  note: {self.note}")
        return "\n".join(lines)

    def to_csv(self, path: Path | str) -> Path:
        return write_csv(path, ["r", "theta", "value", "margin"],
                         [self.r.ravel(), self.theta.ravel(), self.value.ravel(), self.margin.ravel()])


def mean_curvature_operator(d: Derivs, M: ModelManifold, r) -> np.ndarray:
    """div(grad v / W) from polar derivatives (radial formula when v is radial)."""
    r = np.asarray(r, dtype=float)
    m = M.n - 1
    pos = r > 0
    rs = np.where(pos, r, 1.0)
    ratio = M.ratio(rs)
    if not np.any(d.t) and not np.any(d.rt) and not np.any(d.tt):
        W = np.sqrt(1.0 + d.r**2)
        out = d.rr / W**3 + m * ratio * d.r / W
        # smooth radial v at the origin: div = n v''(0)
        return np.where(pos, out, M.n * d.rr)
    if M.n != 2:
        raise ParameterError("non-radial verification is implemented for n = 2")
    if not np.all(pos):
        raise DomainError("non-radial barrier evaluated at rho = 0")
    f = M.f(r)
    gr, gt = d.r, d.t / f
    Hrr, Hrt, Htt = _orthonormal_hessian(d, f, ratio)
    q = gr * gr + gt * gt
    lap = Hrr + Htt
    quad = gr * gr * Hrr + 2.0 * gr * gt * Hrt + gt * gt * Htt
    return ((1.0 + q) * lap - quad) / (1.0 + q) ** 1.5


def q_tilde(d: Derivs, D: DriftFunction, M: ModelManifold, r, *, sign: float = 1.0) -> np.ndarray:
    """Q~[v] = div(grad v / W) + sign * F; sign = -1 gives the mirrored operator."""
    return mean_curvature_operator(d, M, r) + sign * D.F_effective(np.asarray(r, dtype=float))


def verify_supersolution(barrier, D: DriftFunction, M: ModelManifold, region: Region,
                         grid: tuple[int, int] = (400, 1), *, subsolution: bool = False) -> BarrierReport:
    """Evaluate Q~ on a tensor grid of ``region`` and report the worst margin.

    The margin is -Q~[v] for the supersolution check and Q~_-[-v] (with -F)
    for the mirrored subsolution check; pass iff the worst margin is > 0.
    Height barriers additionally require C > F, folded into the margin.
    """
    n_r, n_t = grid
    if isinstance(barrier, AsymptoticPsi):
        if region.r_min <= 0:
            raise DomainError("region intersects rho = 0 for the asymptotic barrier")
        r, th = _cone_grid(region.r_min, region.r_max, region.half_angle, n_r, max(n_t, 3),
                           region.open_inner)
    else:
        if region.open_inner:
            r1 = np.linspace(region.r_min, region.r_max, n_r + 1)[1:]
        else:
            r1 = np.linspace(region.r_min, region.r_max, n_r)
        r, th = r1[:, None], np.zeros((1, 1))
        r, th = np.broadcast_arrays(r, th)
        r, th = r.copy(), th.copy()
    d = barrier.derivs(r, th)
    if subsolution:
        neg = Derivs(*(-x for x in d))
        margin = q_tilde(neg, D, M, r, sign=-1.0)
        value = neg.v
    else:
        margin = -q_tilde(d, D, M, r)
        value = d.v
    note = ""
    if getattr(barrier, "kind", "") == "height":
        gap = barrier.params["C"] - D.F_effective(r)
        margin = np.minimum(margin, gap)
        note = "margin includes C - F (height barrier hypothesis C > F)"
    k = int(np.argmin(margin))
    worst = float(margin.ravel()[k])
    return BarrierReport(getattr(barrier, "kind", "custom"), region.describe(), (r.shape[0], r.shape[1]),
                         worst, bool(worst > 0), float(r.ravel()[k]), float(th.ravel()[k]),
                         r, th, value, margin, subsolution, note)


@dataclass(frozen=True, eq=False)
class R3Search:
    R3: float | None
    tried: tuple[float, ...]
    reports: tuple[BarrierReport, ...]
    psi: AsymptoticPsi | None

    @property
    def found(self) -> bool:
        return self.R3 is not None


def psi_region(R3: float, cutoff: AngularCutoff, outer_factor: float = 100.0) -> Region:
    return Region(R3, outer_factor * R3, 3.0 / cutoff.L, open_inner=True, label="3-cone minus closed ball")


def find_R3(M: ModelManifold, D: DriftFunction, A: float, delta: float, *,
            cutoff: AngularCutoff | None = None, grid: tuple[int, int] = (160, 121),
            R_start: float = 1.0, cap: float = 1e4, eps: float | None = None) -> R3Search:
    """Smallest ladder radius R = R_start 2^{j/2} with Q~[psi] < 0 on the 3-cone outside B(o, R)."""
    cutoff = AngularCutoff() if cutoff is None else cutoff
    tried, reports = [], []
    j = 0
    while True:
        R = R_start * 2.0 ** (j / 2.0)
        if R > cap:
            return R3Search(None, tuple(tried), tuple(reports), None)
        psi = build_asymptotic_psi(M, A, delta, R, cutoff, eps=eps)
        rep = verify_supersolution(psi, D, M, psi_region(R, cutoff), grid)
        tried.append(R)
        reports.append(rep)
        if rep.verdict:
            return R3Search(R, tuple(tried), tuple(reports), psi)
        j += 1
