"""Exhaustion experiment for the asymptotic Dirichlet problem on 2-D models."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .barriers import AngularCutoff, AsymptoticPsi, admissible_delta, build_global_V, find_R3
from .drift import DriftFunction, check_f1, check_f2, check_ball_solvability, selfshrinker_drift
from .errors import IntegrationError, ParameterError, PreconditionError
from .io import write_csv
from .manifold import ModelManifold, build_model, smoothstep3
from .potential import decay_weight
from .solver import GridFunction, PolarGrid, SolveOutcome, solve_dirichlet_ball


# ---------------------------------------------------------------------------
# Boundary data at infinity
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Continuous data on the circle at infinity.

    Either an exact callable or a periodic piecewise-linear table.
    """

    name: str
    fn: Callable = field(repr=False)

    def __call__(self, theta):
        return np.asarray(self.fn(np.asarray(theta, dtype=float)), dtype=float)

    @classmethod
    def table(cls, theta, values, name: str = "table") -> "BoundaryData":
        th = np.asarray(theta, dtype=float)
        v = np.asarray(values, dtype=float)
        order = np.argsort(np.mod(th, 2 * math.pi))
        th = np.mod(th, 2 * math.pi)[order]
        v = v[order]
        xs = np.concatenate([th - 2 * math.pi, th, th + 2 * math.pi])
        ys = np.concatenate([v, v, v])
        return cls(name, lambda t: np.interp(np.mod(t, 2 * math.pi), xs, ys))

    @classmethod
    def cosine(cls, amp: float = 1.0) -> "BoundaryData":
        return cls(f"{amp:g}*cos", lambda t: amp * np.cos(t))

    @classmethod
    def constant(cls, c: float) -> "BoundaryData":
        return cls(f"const({c:g})", lambda t: np.full_like(np.asarray(t, dtype=float), c))

    def sup(self, samples: int = 4096) -> float:
        return float(np.max(np.abs(self(np.linspace(0, 2 * math.pi, samples, endpoint=False)))))

    def argmax(self, samples: int = 4096) -> float:
        t = np.linspace(0, 2 * math.pi, samples, endpoint=False)
        return float(t[int(np.argmax(self(t)))])


_DATA_RE = re.compile(r"^\s*([a-z]+)\s*(?:\(([^)]*)\))?\s*$")


def boundary_from_name(text: str) -> BoundaryData:
    """'cos(a)', 'const(c)' or a bare number."""
    try:
        return BoundaryData.constant(float(text))
    except ValueError:
        pass
    m = _DATA_RE.match(text)
    args = [float(x) for x in m.group(2).split(",")] if m and m.group(2) else []
    if m and m.group(1) == "cos" and len(args) <= 1:
        return BoundaryData.cosine(*args)
    if m and m.group(1) == "const" and len(args) == 1:
        return BoundaryData.constant(args[0])
    raise ParameterError(f"unknown boundary data {text!r}; expected cos(a), const(c) or a number")


def ramp(r):
    """C^1 monotone ramp: 0 on [0, 1], 1 on [2, inf)."""
    return smoothstep3(np.asarray(r, dtype=float) - 1.0)


def extend_boundary_data(phi_inf: BoundaryData | Callable, M: ModelManifold | None = None) -> Callable:
    """phi~(r, theta) = ramp(r) * phi_inf(theta)."""
    def ext(r, theta):
        return ramp(r) * np.asarray(phi_inf(theta), dtype=float)
    return ext


# ---------------------------------------------------------------------------
# Problem and result types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AsymptoticProblem:
    M: ModelManifold
    D: DriftFunction
    phi_inf: BoundaryData
    radii: tuple[float, ...]
    dr: float = 0.25
    n_theta: int = 64
    a0: object = field(default_factory=decay_weight)
    eps: float = 0.5
    tol: float = 1e-10
    extension: str = "ramp"

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("exhaustion radii must be strictly increasing")
        if self.M.n != 2:
            raise PreconditionError("the exhaustion experiment runs on 2-D models")

    @property
    def core(self) -> float:
        return self.radii[0] / 2.0


def default_radii(preset: str) -> tuple[float, ...]:
    if preset.startswith(("hyperbolic", "exp")):
        return tuple(2.0 + j for j in range(7))
    return tuple(4.0 * 2**j for j in range(5))


@dataclass(frozen=True, eq=False)
class ExhaustionResult:
    problem: AsymptoticProblem
    outcomes: tuple[SolveOutcome, ...]
    radii: tuple[float, ...]
    sup_norms: tuple[float, ...]
    gaps: tuple[float, ...]
    gaps_monotone: bool
    V_bound_ok: bool
    V_margin: float
    V_sup: float
    complete: bool
    flags: tuple[str, ...] = ()

    @property
    def final(self) -> GridFunction:
        return self.outcomes[-1].u


def _warm_start(prev: GridFunction | None, grid: PolarGrid, ext: Callable) -> np.ndarray:
    u = grid.sample(ext)
    if prev is not None:
        k = min(prev.values.shape[0], grid.n_r + 1)
        if prev.grid.n_theta == grid.n_theta and np.allclose(prev.grid.r[:k], grid.r[:k]):
            u[:k] = prev.values[:k]
        else:
            rr, tt = grid.mesh()
            inside = rr <= prev.grid.R
            u[inside] = sample_polar(prev, rr[inside], tt[inside])
    return u


def sample_polar(u: GridFunction, r, theta) -> np.ndarray:
    """Bilinear interpolation of a grid function (periodic in theta)."""
    g = u.grid
    r = np.clip(np.asarray(r, dtype=float), 0.0, g.R)
    t = np.mod(np.asarray(theta, dtype=float), 2 * math.pi)
    x = r / g.dr
    i = np.minimum(np.floor(x).astype(int), g.n_r - 1)
    a = x - i
    y = t / g.dth
    j = np.floor(y).astype(int) % g.n_theta
    b = y - np.floor(y)
    j1 = (j + 1) % g.n_theta
    v = u.values
    return ((1 - a) * ((1 - b) * v[i, j] + b * v[i, j1]) + a * ((1 - b) * v[i + 1, j] + b * v[i + 1, j1]))


def run_exhaustion(P: AsymptoticProblem, *, override: bool = False) -> ExhaustionResult:
    """Solve on B(o, R_k) with extended data, warm-starting each radius from the last."""
    M, D = P.M, P.D
    if not override:
        f1 = check_f1(D, M, P.a0)
        f2 = check_f2(D, M, P.eps)
        ball = check_ball_solvability(D, M, P.radii[-1])
        if not (f1.ok and f2.ok and ball.ok):
            raise PreconditionError(
                f"drift {D.name} fails the exhaustion preconditions: f1={f1.ok} f2={f2.ok} ball={ball.ok}")
    ext = extend_boundary_data(P.phi_inf, M)
    phi_sup = P.phi_inf.sup()
    V = build_global_V(M, P.a0, phi_sup)
    outcomes, sups = [], []
    prev = None
    V_margin = math.inf
    for R in P.radii:
        n_r = int(round(R / P.dr))
        grid = PolarGrid.build(M, R, n_r, P.n_theta)
        u0 = _warm_start(prev, grid, ext)
        out = solve_dirichlet_ball(lambda t, R=R: ext(R, t), D, M, grid, u0, tol=P.tol,
                                   override=True)
        outcomes.append(out)
        if not out.converged:
            return _finish(P, outcomes, sups, V, V_margin, complete=False)
        vals = out.u.values
        sups.append(float(np.max(np.abs(vals))))
        Vr = V(grid.r)
        V_margin = min(V_margin, float(np.min(Vr[:, None] - np.abs(vals))))
        prev = out.u
    return _finish(P, outcomes, sups, V, V_margin, complete=True)


def _finish(P, outcomes, sups, V, V_margin, complete) -> ExhaustionResult:
    core = P.radii[0] / 2.0
    gaps = []
    for a, b in zip(outcomes[:-1], outcomes[1:]):
        if not (a.converged and b.converged):
            break
        ga, gb = a.u.grid, b.u.grid
        ka = int(np.searchsorted(ga.r, core * (1 + 1e-12), side="right"))
        if ga.n_theta == gb.n_theta and np.allclose(ga.r[:ka], gb.r[:ka]):
            gaps.append(float(np.max(np.abs(a.u.values[:ka] - b.u.values[:ka]))))
        else:
            rr, tt = ga.mesh()
            gaps.append(float(np.max(np.abs(a.u.values[:ka] - sample_polar(b.u, rr[:ka], tt[:ka])))))
    tail = gaps[1:]
    monotone = bool(np.all(np.diff(tail) <= 0)) if len(tail) > 1 else True
    flags = () if monotone else ("gaps-not-monotone",)
    V_sup = float(V(np.array([0.0]))[0])
    ok = bool(V_margin > 0) and all(s < V_sup for s in sups)
    if not ok:
        flags += ("V-bound-violated",)
    return ExhaustionResult(P, tuple(outcomes), tuple(P.radii[: len(outcomes)]), tuple(sups),
                            tuple(gaps), monotone, ok, float(V_margin), V_sup, complete, flags)


# ---------------------------------------------------------------------------
# Sandwich and boundary attainment
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SandwichReport:
    theta0: float
    eps: float
    R3: float
    L: float
    nodes: int
    worst: float
    holds: bool
    vacuous: bool
    r: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    w_minus: np.ndarray = field(repr=False)
    w_plus: np.ndarray = field(repr=False)

    def to_csv(self, path: Path | str) -> Path:
        margin = np.minimum(self.u - self.w_minus, self.w_plus - self.u)
        return write_csv(path, ["r", "theta", "u", "w_minus", "w_plus", "margin"],
                         [self.r, self.theta, self.u, self.w_minus, self.w_plus, margin])


def verify_sandwich(result: ExhaustionResult, theta0: float | None = None, eps: float = 0.1,
                    psi: AsymptoticPsi | None = None, *, tol: float | None = None) -> SandwichReport:
    """Check -psi + phi(theta0) - eps <= u <= psi + phi(theta0) + eps on the
    3-cone around theta0 outside the closed ball B(o, R3), restricted to the
    final grid. The cone is rotated so that theta0 sits on its axis."""
    P = result.problem
    phi = P.phi_inf
    theta0 = phi.argmax() if theta0 is None else theta0
    tol = P.tol if tol is None else tol
    if psi is None:
        A = 2.0 * phi.sup()
        search = find_R3(P.M, P.D, A, admissible_delta(P.M, P.eps) / 2.0)
        if not search.found:
            raise IntegrationError("find_R3 found no admissible radius below the cap")
        psi = search.psi
    u = result.final
    g = u.grid
    rr, tt = g.mesh()
    rel = np.angle(np.exp(1j * (tt - theta0)))
    sel = (rr > psi.R3) & (np.abs(rel) <= 3.0 / psi.cutoff.L)
    r, th, uv = rr[sel], rel[sel], u.values[sel]
    c = float(phi(np.array([theta0]))[0])
    if r.size:
        ps = psi(r, th)
        wm, wp = -ps + c - eps, ps + c + eps
        worst = float(np.min(np.minimum(uv - wm, wp - uv)))
    else:
        wm = wp = np.empty(0)
        worst = math.inf
    return SandwichReport(theta0, eps, psi.R3, psi.cutoff.L, int(r.size), worst,
                          bool(worst >= -10.0 * tol), r.size == 0, r, np.mod(th + theta0, 2 * math.pi),
                          uv, wm, wp)


@dataclass(frozen=True, eq=False)
class AttainmentTable:
    radii: np.ndarray
    theta: np.ndarray
    trace: np.ndarray  # shape (len(radii), len(theta))
    phi: np.ndarray
    scores: np.ndarray

    @property
    def score(self) -> float:
        return float(self.scores[-1])

    def to_csv(self, path: Path | str) -> Path:
        R = np.repeat(self.radii, self.theta.size)
        T = np.tile(self.theta, self.radii.size)
        P = np.tile(self.phi, self.radii.size)
        U = self.trace.ravel()
        return write_csv(path, ["R", "theta", "u", "phi", "abs_err"], [R, T, U, P, np.abs(U - P)])


def boundary_attainment(result: ExhaustionResult, theta=None, radii=None) -> AttainmentTable:
    """Trace u_K(R, theta) against phi_inf(theta); the score at each R is
    max_theta |u_K(R, theta) - phi_inf(theta)|, with R = 0.9 R_K last by default."""
    u = result.final
    RK = u.grid.R
    theta = np.linspace(0, 2 * math.pi, 73)[:-1] if theta is None else np.asarray(theta, dtype=float)
    if radii is None:
        radii = np.array([r for r in result.radii[:-1] if r < 0.9 * RK] + [0.9 * RK])
    radii = np.asarray(radii, dtype=float)
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    trace = sample_polar(u, rr, tt)
    phi = result.problem.phi_inf(theta)
    scores = np.max(np.abs(trace - phi[None, :]), axis=1)
    return AttainmentTable(radii, theta, trace, phi, scores)


GNUPLOT_TEMPLATE = """# trace of u(R, theta) against the data at infinity, one curve per radius
set datafile separator ','
set key outside
set xlabel 'theta'
set ylabel 'u'
plot for [R in "{radii}"] '{csv}' using ($1==R ? $2 : 1/0):3 with lines title sprintf('R=%s', R), \\
     '{csv}' using 2:4 every ::1 with points pt 7 ps 0.3 title 'phi'
"""


def export_exhaustion(result: ExhaustionResult, out_dir: Path | str, *,
                      sandwich: SandwichReport | None = None,
                      attainment: AttainmentTable | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = np.arange(len(result.gaps))
    R = np.asarray(result.radii)
    paths = [write_csv(out / "gaps.csv", ["k", "R_k", "R_k1", "gap"],
                       [k, R[: len(k)], R[1: len(k) + 1], result.gaps])]
    att = boundary_attainment(result) if attainment is None else attainment
    paths.append(att.to_csv(out / "attainment.csv"))
    if sandwich is not None:
        paths.append(sandwich.to_csv(out / "sandwich.csv"))
    script = GNUPLOT_TEMPLATE.format(radii=" ".join(format(float(x), ".17g") for x in att.radii),
                                     csv="attainment.csv")
    p = out / "traces.gp"
    p.write_text(script, encoding="utf-8")
    paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# Non-uniqueness demo
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NonuniquenessReport:
    outcomes: dict[str, SolveOutcome]
    origin_values: dict[str, float]
    distances: dict[tuple[str, str], float]
    errors: dict[str, float]

    @property
    def separated(self) -> bool:
        return all(d >= 1.0 for d in self.distances.values())

    def summary(self) -> str:
        lines = ["selfshrinker drift on B(0,2), zero boundary data"]
        for k, o in self.outcomes.items():
            lines.append(f"  init {k:6s}: converged={o.converged} iterations={o.iterations} "
                         f"u(o)={self.origin_values[k]:.10g} sup error vs analytic={self.errors[k]:.3g}")
        for (a, b), d in self.distances.items():
            lines.append(f"  sup |u_{a} - u_{b}| = {d:.10g}")
        return "\n".join(lines)


def hemisphere(sign: float, radius: float = 2.0) -> Callable:
    return lambda r, t: sign * np.sqrt(np.clip(radius**2 - np.asarray(r) ** 2, 0.0, None))


def nonuniqueness_demo(n_r: int = 256, n_theta: int = 128, *, tol: float = 1e-10,
                       bump_amp: float = 0.5) -> NonuniquenessReport:
    M = build_model("euclidean", 2)
    D = selfshrinker_drift()
    grid = PolarGrid.build(M, 2.0, n_r, n_theta)
    exact = {"bump+": hemisphere(1.0), "bump-": hemisphere(-1.0), "zero": lambda r, t: 0.0 * r}
    outs, origins, errs = {}, {}, {}
    for k in ("bump+", "bump-", "zero"):
        o = solve_dirichlet_ball(0.0, D, M, grid, k, tol=tol, override=True, bump_amp=bump_amp)
        outs[k] = o
        origins[k] = o.u_origin
        errs[k] = float(np.max(np.abs(o.u.values - grid.sample(exact[k]))))
    keys = list(outs)
    dist = {(a, b): float(np.max(np.abs(outs[a].u.values - outs[b].u.values)))
            for i, a in enumerate(keys) for b in keys[i + 1:]}
    return NonuniquenessReport(outs, origins, dist, errs)
