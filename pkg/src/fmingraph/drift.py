"""Split drifts f(x, t) = m(rho) + r(t) and the decay conditions on them."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, ParameterError
from .io import write_csv
from .manifold import ModelManifold
from .potential import g_table


def _vectorise(fn: Callable, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.asarray(fn(x), dtype=float)
    if out.shape != x.shape:
        out = np.broadcast_to(out, x.shape).copy() if out.ndim == 0 else \
            np.vectorize(lambda s: float(fn(s)), otypes=[float])(x)
    return out


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class DriftFunction:
    """f(x, t) = m(rho) + r(t), stored through the derivatives m', r', r''.

    There are no cross terms by construction, so the supremum of the ambient
    gradient over a sphere is F(rho) = sqrt(m'(rho)^2 + sup_t r'(t)^2).
    """

    name: str
    m_prime: Callable = field(default=_zero, repr=False)
    r_prime: Callable = field(default=_zero, repr=False)
    r_second: Callable = field(default=_zero, repr=False)
    r_t_sup: float = 0.0
    slab: float | None = None

    def mp(self, rho) -> np.ndarray:
        return _vectorise(self.m_prime, rho)

    def rp(self, t) -> np.ndarray:
        return _vectorise(self.r_prime, t)

    def rpp(self, t) -> np.ndarray:
        return _vectorise(self.r_second, t)

    @property
    def t_dependent(self) -> bool:
        return self.r_t_sup != 0.0

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.r_t_sup)

    def F(self, rho) -> np.ndarray:
        """Exact sup over t of |grad f| on the sphere of radius rho."""
        return np.hypot(self.mp(rho), self.r_t_sup)

    def F_slab(self, rho, T: float | None = None) -> np.ndarray:
        """sup of |grad f| over the slab |t| <= T (T defaults to ``slab``)."""
        T = self.slab if T is None else T
        if T is None:
            raise ParameterError(f"drift {self.name} has unbounded r'; a slab height is required")
        t = np.linspace(-T, T, 2001)
        return np.hypot(self.mp(rho), float(np.max(np.abs(self.rp(t)))))

    def F_effective(self, rho) -> np.ndarray:
        return self.F(rho) if self.bounded or self.slab is None else self.F_slab(rho)

    def negated(self) -> "DriftFunction":
        mp, rp, rpp = self.m_prime, self.r_prime, self.r_second
        return replace(self, name=f"-{self.name}",
                       m_prime=lambda x: -_vectorise(mp, x),
                       r_prime=lambda x: -_vectorise(rp, x),
                       r_second=lambda x: -_vectorise(rpp, x))


def zero_drift() -> DriftFunction:
    return DriftFunction("zero")


def selfshrinker_drift(slab: float | None = 4.0) -> DriftFunction:
    """f = (rho^2 + t^2)/4 in Euclidean space; r' is unbounded."""
    return DriftFunction(
        "selfshrinker",
        m_prime=lambda x: 0.5 * np.asarray(x, dtype=float),
        r_prime=lambda t: 0.5 * np.asarray(t, dtype=float),
        r_second=lambda t: np.full_like(np.asarray(t, dtype=float), 0.5),
        r_t_sup=math.inf,
        slab=slab,
    )


def bounded_drift(c: float, p: float) -> DriftFunction:
    """m'(r) = c (1 + r)^(-p), r(t) = 0, hence F(r) = |c| (1 + r)^(-p)."""
    return DriftFunction(f"bounded({c:g},{p:g})",
                         m_prime=lambda x: c * (1.0 + np.asarray(x, dtype=float)) ** -p)


def radial_drift(name: str, m_prime: Callable) -> DriftFunction:
    return DriftFunction(name, m_prime=m_prime)


def tabulated_drift(name: str, r, m_prime_values) -> DriftFunction:
    r = np.asarray(r, dtype=float)
    interp = PchipInterpolator(r, np.asarray(m_prime_values, dtype=float), extrapolate=False)
    lo, hi = float(r[0]), float(r[-1])

    def mp(x):
        x = np.asarray(x, dtype=float)
        if np.any((x < lo) | (x > hi)):
            raise DomainError(f"drift {name} evaluated outside its table [{lo:g}, {hi:g}]")
        return interp(x)

    return DriftFunction(name, m_prime=mp)


# ---------------------------------------------------------------------------
# Bounds from the model
# ---------------------------------------------------------------------------


def _sorted_eval(fn, r):
    r = np.asarray(r, dtype=float)
    flat = r.ravel()
    uniq, inv = np.unique(flat, return_inverse=True)
    return fn(uniq)[inv].reshape(r.shape)


def f1_branches(M: ModelManifold, a0, r) -> tuple[np.ndarray, np.ndarray]:
    """The two terms of the pointwise f1 bound at radii r (limits at r = 0).

    Returns (first, second) with first = (a0 + m*ratio*g^3)/(1+g^2)^(3/2) and
    second = m*ratio, m = n - 1.
    """
    m = M.n - 1

    def first(u):
        g = g_table(M, a0, u)
        pos = u > 0
        out = np.exp(a0.log_value(u)) / (1.0 + g * g) ** 1.5
        ratio = M.ratio(np.where(pos, u, 1.0))
        out = out + np.where(pos, m * ratio * g**3 / (1.0 + g * g) ** 1.5, 0.0)
        return out

    def second(u):
        pos = u > 0
        return np.where(pos, m * M.ratio(np.where(pos, u, 1.0)), np.inf)

    return _sorted_eval(first, r), _sorted_eval(second, r)


def f1_fraction_drift(M: ModelManifold, a0, q: float, *, first_only: bool = False) -> DriftFunction:
    """Radial drift with F = q * (f1 bound); the bound is evaluated exactly."""
    if not 0 <= q:
        raise ParameterError("fraction q must be non-negative")

    def mp(x):
        first, second = f1_branches(M, a0, x)
        return q * (first if first_only else np.minimum(first, second))

    label = "first" if first_only else "min"
    return DriftFunction(f"f1frac({q:g},{label},{a0.name})", m_prime=mp)


_DRIFT_RE = re.compile(r"^\s*([a-z0-9]+)\s*(?:\(([^)]*)\))?\s*$")


def drift_from_name(text: str, *, M: ModelManifold | None = None, a0=None) -> DriftFunction:
    m = _DRIFT_RE.match(text)
    if not m:
        raise ParameterError(f"unrecognised drift preset {text!r}")
    kind, raw = m.group(1), m.group(2)
    args = [float(x) for x in raw.split(",")] if raw else []
    if kind == "zero" and not args:
        return zero_drift()
    if kind == "selfshrinker" and len(args) <= 1:
        return selfshrinker_drift(*args)
    if kind == "bounded" and len(args) == 2:
        return bounded_drift(*args)
    if kind == "f1frac" and len(args) == 1:
        if M is None or a0 is None:
            raise ParameterError("drift f1frac(q) needs a model and an a0 weight")
        return f1_fraction_drift(M, a0, args[0])
    raise ParameterError(f"unknown drift preset {kind!r}; expected zero, selfshrinker[(T)], "
                         "bounded(c,p) or f1frac(q)")


# ---------------------------------------------------------------------------
# Equation right-hand side
# ---------------------------------------------------------------------------


def rhs_term(D: DriftFunction, rho, t, grad_u, M: ModelManifold | None = None):
    """<grad f, nu> for the downward normal of the graph of u.

    ``grad_u`` holds the orthonormal components (u_r, u_theta / f_a).
    """
    ur, ut = (np.asarray(c, dtype=float) for c in grad_u)
    W = np.sqrt(1.0 + ur * ur + ut * ut)
    return (D.mp(rho) * ur - D.rp(t)) / W


# ---------------------------------------------------------------------------
# Condition checks
# ---------------------------------------------------------------------------


def radius_ladder(r0: float, r_probe: float) -> np.ndarray:
    k = int(math.floor(4.0 * math.log2(r_probe / r0) + 1e-9))
    lad = r0 * 2.0 ** (np.arange(k + 1) / 4.0)
    return lad if math.isclose(lad[-1], r_probe) else np.append(lad, r_probe)


@dataclass(frozen=True, eq=False)
class F1Result:
    radii: np.ndarray
    F: np.ndarray
    first: np.ndarray
    second: np.ndarray
    margin: float
    witness: float
    ok: bool
    note: str = ""


@dataclass(frozen=True, eq=False)
class F2Result:
    radii: np.ndarray
    psi: np.ndarray
    eps: float
    ok: bool
    final: float
    decreasing: bool
    note: str = ""


@dataclass(frozen=True)
class BallSolvability:
    ok: bool
    R: float
    failing_radius: float | None
    worst_margin: float

    def __bool__(self) -> bool:
        return self.ok


_UNBOUNDED = "F is unbounded (r' unbounded); checks skipped"


def check_f1(D: DriftFunction, M: ModelManifold, a0, r_probe: float = 1e3, *,
             r0: float = 1.0) -> F1Result:
    """Evaluate both branches of the f1 bound on the ladder r0*2^(i/4).

    An extra entry at r = 0 uses the limits of both sides (first branch -> a0(0)).
    """
    radii = np.concatenate([[0.0], radius_ladder(r0, r_probe)])
    first, second = f1_branches(M, a0, radii)
    if not D.bounded:
        note = _UNBOUNDED if D.slab is None else f"{_UNBOUNDED}; slab |t| <= {D.slab:g} only"
        F = D.F_effective(radii) if D.slab is not None else np.full_like(radii, np.inf)
        return F1Result(radii, F, first, second, -math.inf, 0.0, False, note)
    F = D.F(radii)
    marg = np.minimum(first, second) - F
    k = int(np.argmin(marg))
    return F1Result(radii, F, first, second, float(marg[k]), float(radii[k]), bool(marg[k] >= 0),
                    "r=0 row holds the limits of both sides")


def check_f2(D: DriftFunction, M: ModelManifold, eps: float, r_probe: float = 1e6, *,
             r0: float = 1.0) -> F2Result:
    """Psi(r) = F f_a r^(1+eps) / f_a' on a ladder; pass iff Psi is
    non-increasing over the last decade and Psi(r_probe) < 1e-2."""
    if eps <= 0:
        raise ParameterError("eps must be positive")
    radii = radius_ladder(r0, r_probe)
    if not D.bounded:
        return F2Result(radii, np.full_like(radii, np.inf), eps, False, math.inf, False, _UNBOUNDED)
    with np.errstate(over="ignore"):
        psi = D.F(radii) * radii ** (1.0 + eps) / M.ratio(radii)
    last = radii >= r_probe / 10.0 * (1 - 1e-12)
    dec = bool(np.all(np.diff(psi[last]) <= 0))
    final = float(psi[-1])
    return F2Result(radii, psi, eps, dec and final < 1e-2, final, dec,
                    "trend proxy: non-increasing over the last decade and below 1e-2 at r_probe")


def check_ball_solvability(D: DriftFunction, M: ModelManifold, R: float, *,
                           samples: int = 1024) -> BallSolvability:
    """F(r) <= (n-1) f_a'/f_a on ``samples`` uniform radii in (0, R]."""
    r = R * np.arange(1, samples + 1) / samples
    F = D.F_effective(r) if (D.bounded or D.slab is not None) else np.full_like(r, np.inf)
    marg = (M.n - 1) * M.ratio(r) - F
    bad = np.flatnonzero(marg < 0)
    return BallSolvability(bad.size == 0, float(R), float(r[bad[0]]) if bad.size else None,
                           float(np.min(marg)))


@dataclass(frozen=True, eq=False)
class DriftConditionReport:
    drift: str
    a0: str
    f1: F1Result
    f2: F2Result
    ball: BallSolvability

    @property
    def f1_margin(self) -> float:
        return self.f1.margin

    @property
    def f1_ok(self) -> bool:
        return self.f1.ok

    @property
    def f2_ok(self) -> bool:
        return self.f2.ok

    @property
    def f2_trend(self) -> np.ndarray:
        return np.column_stack([self.f2.radii, self.f2.psi])

    @property
    def ball_solvability_ok(self) -> bool:
        return self.ball.ok

    @property
    def passed(self) -> bool:
        return self.f1_ok and self.f2_ok and self.ball_solvability_ok

    def summary(self) -> str:
        lines = [f"drift {self.drift} with a0 {self.a0}",
                 f"  f1: {'pass' if self.f1_ok else 'FAIL'} margin={self.f1_margin:.6g} at r={self.f1.witness:.6g}",
                 f"  f2: {'pass' if self.f2_ok else 'FAIL'} Psi(r_probe)={self.f2.final:.6g} "
                 f"decreasing={self.f2.decreasing} eps={self.f2.eps:g}",
                 f"  ball solvability up to R={self.ball.R:g}: {'pass' if self.ball.ok else 'FAIL'}"
                 + (f" (first failing radius {self.ball.failing_radius:.6g})" if not self.ball.ok else "")]
        for note in {self.f1.note, self.f2.note} - {""}:
            lines.append(f"  note: {note}")
        return "\n".join(lines)

    def to_csv(self, path: Path | str) -> Path:
        """One row per ladder radius: r, F, f1_first, f1_second, f1_margin, f2_psi."""
        r = np.union1d(self.f1.radii, self.f2.radii)
        i1 = np.searchsorted(self.f1.radii, r)
        on1 = (i1 < self.f1.radii.size) & (self.f1.radii[np.minimum(i1, self.f1.radii.size - 1)] == r)
        i2 = np.searchsorted(self.f2.radii, r)
        on2 = (i2 < self.f2.radii.size) & (self.f2.radii[np.minimum(i2, self.f2.radii.size - 1)] == r)
        pick = lambda arr, idx, on: np.where(on, arr[np.minimum(idx, arr.size - 1)], np.nan)  # noqa: E731
        F = pick(self.f1.F, i1, on1)
        first = pick(self.f1.first, i1, on1)
        second = pick(self.f1.second, i1, on1)
        return write_csv(path, ["r", "F", "f1_first", "f1_second", "f1_margin", "f2_psi"],
                         [r, F, first, second, np.minimum(first, second) - F, pick(self.f2.psi, i2, on2)])


def check_drift(D: DriftFunction, M: ModelManifold, a0, *, eps: float, R_ball: float,
                r_probe_f1: float = 1e3, r_probe_f2: float = 1e6) -> DriftConditionReport:
    return DriftConditionReport(D.name, a0.name, check_f1(D, M, a0, r_probe_f1),
                                check_f2(D, M, eps, r_probe_f2), check_ball_solvability(D, M, R_ball))
