"""Rotationally symmetric model manifolds with metric dr^2 + f_a(r)^2 dtheta^2.

The warping function solves the Jacobi problem f'' = a^2 f, f(0) = 0,
f'(0) = 1. It is tabulated with fixed-step RK4 up to a moderate radius and,
for the shipped presets, continued analytically beyond the radius where the
curvature function reaches its final closed form.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, IntegrationError, ParameterError, SingularityError
from .io import write_csv
from .kernels import jacobi_scan

RESCALE_THRESHOLD = 1e100
OVERFLOW_GUARD = 1e300
_LOG_SWITCH = math.log(RESCALE_THRESHOLD)


def smoothstep3(x):
    """Cubic ramp 3x^2 - 2x^3 clamped to [0, 1]."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def tail_exponent(c1: float) -> float:
    """Growth exponent of f'' = (c1/t)^2 f, i.e. the root > 1 of x(x-1) = c1^2."""
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * c1 * c1))


# ---------------------------------------------------------------------------
# Curvature profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureProfile:
    """Pinching functions a <= b of the radial sectional curvature.

    ``a_kind`` is one of ``zero``, ``power``, ``constant``, ``custom``;
    ``b_kind`` one of ``zero``, ``constant``, ``power``, ``exp``, ``custom``.
    For ``power``/``exp`` the function b is the growth law for t >= T1 with a
    constant cap on [0, T1].
    """

    name: str
    a_kind: str
    b_kind: str
    T0: float
    T1: float
    R0: float
    C1: float
    C2: float
    C3: float
    C4: float
    Q: float
    k: float = 0.0
    b_power: float = 0.0
    eps: float = 0.0
    a_custom: Callable | None = field(default=None, compare=False, repr=False)
    b_custom: Callable | None = field(default=None, compare=False, repr=False)

    # -- a ------------------------------------------------------------------
    def a(self, t):
        t = np.asarray(t, dtype=float)
        if self.a_kind == "zero":
            return np.zeros_like(t)
        if self.a_kind == "custom":
            return _call_vectorised(self.a_custom, t)
        far = self._a_far(t)
        if self.R0 <= 0.0:
            return far
        ramp = self._a_far(np.asarray(self.R0)) * smoothstep3((t - self.T0) / (self.R0 - self.T0))
        return np.where(t >= self.R0, far, ramp)

    def _a_far(self, t):
        if self.a_kind == "power":
            with np.errstate(divide="ignore"):
                return self.C1 / np.maximum(t, 1e-300)
        return np.full_like(np.asarray(t, dtype=float), self.k)

    # -- b ------------------------------------------------------------------
    def log_b(self, t):
        t = np.asarray(t, dtype=float)
        if self.b_kind == "zero":
            return np.full_like(t, -np.inf)
        if self.b_kind == "constant":
            return np.full_like(t, math.log(self.k))
        if self.b_kind == "custom":
            with np.errstate(divide="ignore"):
                return np.log(_call_vectorised(self.b_custom, t))
        s = np.maximum(t, self.T1)
        if self.b_kind == "power":
            return self.b_power * np.log(s)
        return self.b_power * np.log(s) + self.k * s

    def log_b_reduced(self, t):
        """log b(t) - b_rate*t, exact for the exponential kind at any t."""
        t = np.asarray(t, dtype=float)
        if self.b_kind != "exp":
            return self.log_b(t)
        s = np.maximum(t, self.T1)
        return self.b_power * np.log(s) + self.k * (s - t)

    def b(self, t):
        with np.errstate(over="ignore"):
            return np.exp(self.log_b(t))

    def dlog_b(self, t):
        """Logarithmic derivative b'/b."""
        t = np.asarray(t, dtype=float)
        if self.b_kind in ("zero", "constant"):
            return np.zeros_like(t)
        if self.b_kind == "custom":
            h = 1e-6 * np.maximum(1.0, t)
            with np.errstate(invalid="ignore"):
                return (self.log_b(t + h) - self.log_b(np.maximum(t - h, 0.0))) / (t + h - np.maximum(t - h, 0.0))
        slope = self.b_power / np.maximum(t, self.T1)
        if self.b_kind == "exp":
            slope = slope + self.k
        return np.where(t > self.T1, slope, 0.0)

    @property
    def b_rate(self) -> float:
        """Exponential rate of b (the k in e^{kt}); 0 for non-exponential kinds."""
        return self.k if self.b_kind == "exp" else 0.0

    @property
    def a_breakpoints(self) -> tuple[float, ...]:
        return tuple(sorted({x for x in (self.T0, self.R0) if x > 0.0}))

    @property
    def b_breakpoints(self) -> tuple[float, ...]:
        return (self.T1,) if self.b_kind in ("power", "exp") else ()

    @property
    def tail_kind(self) -> str | None:
        return {"zero": "zero", "power": "power", "constant": "constant"}.get(self.a_kind)

    @property
    def phi1(self) -> float:
        return tail_exponent(self.C1)

    def delta1(self, n: int) -> float:
        """min{C4, ((n-1)phi1 - 1)/((n-1)phi1 + 1)}."""
        p = (n - 1) * self.phi1
        return min(self.C4, (p - 1.0) / (p + 1.0))

    def describe(self) -> dict[str, float | str]:
        return {
            "name": self.name, "a_kind": self.a_kind, "b_kind": self.b_kind,
            "T0": self.T0, "T1": self.T1, "R0": self.R0, "C1": self.C1, "C2": self.C2,
            "C3": self.C3, "C4": self.C4, "Q": self.Q,
        }


def _call_vectorised(fn: Callable | None, t: np.ndarray) -> np.ndarray:
    if fn is None:
        raise DomainError("custom profile function missing")
    out = np.asarray(fn(t), dtype=float)
    if out.shape != t.shape:
        out = np.vectorize(lambda s: float(fn(s)), otypes=[float])(t)
    return out


def euclidean_profile() -> CurvatureProfile:
    return CurvatureProfile("euclidean", "zero", "zero", T0=0.0, T1=1.0, R0=0.0,
                            C1=1.0, C2=1.0, C3=1.0, C4=0.25, Q=0.5)


def hyperbolic_profile(k: float = 1.0) -> CurvatureProfile:
    if not k > 0:
        raise ParameterError("hyperbolic curvature level k must be > 0")
    return CurvatureProfile(f"hyperbolic({k:g})", "constant", "constant", T0=0.0, T1=1.0, R0=0.0,
                            C1=k, C2=1.01 * max(k, 1.0), C3=0.99 * k, C4=0.25, Q=0.5, k=k)


def power_profile(phi: float = 2.0, eps: float = 0.5) -> CurvatureProfile:
    """a = sqrt(phi(phi-1))/t and b = t^{phi-2-eps/2} far out."""
    if not phi > 1.0:
        raise ParameterError("power preset needs phi > 1")
    if not eps > 0.0:
        raise ParameterError("power preset needs eps > 0")
    c1 = math.sqrt(phi * (phi - 1.0))
    p = phi - 2.0 - 0.5 * eps
    if p + 1.0 <= 0.0:
        raise ParameterError(f"b exponent {p:g} <= -1 cannot dominate a = C1/t")
    t1 = max(2.0, 1.05 * c1 ** (1.0 / (p + 1.0)))
    t0 = 0.5 * t1
    if p < 0.0:
        q = 0.5 if -p < 0.5 else min(0.5 * (1.0 - p), 0.99)
        c2 = 1.01 * max(c1 / t1, 2.0 ** (-p))
    else:
        q = 0.5
        c2 = 1.01 * max(c1 / t1, ((t1 + 1.0) / t1) ** p)
    c3 = 0.99 * t1**p
    return CurvatureProfile(f"power({phi:g},{eps:g})", "power", "power", T0=t0, T1=t1, R0=t1,
                            C1=c1, C2=c2, C3=c3, C4=0.25 * eps, Q=q, b_power=p, eps=eps)


def exp_profile(k: float = 1.0, eps: float = 0.5) -> CurvatureProfile:
    """a -> k and b = t^{-1-eps/2} e^{kt} far out."""
    if not k > 0 or not eps > 0:
        raise ParameterError("exp preset needs k > 0 and eps > 0")
    t0, r0 = 0.5, 1.0
    bp = -(1.0 + 0.5 * eps)
    t1 = max(r0, -bp / k)
    while bp * math.log(t1) + k * t1 < math.log(k):
        t1 *= 1.05
    c3 = 0.99 * math.exp(bp * math.log(t1) + k * t1)
    return CurvatureProfile(f"exp({k:g},{eps:g})", "constant", "exp", T0=t0, T1=t1, R0=r0,
                            C1=k * t1, C2=1.01 * max(k, math.exp(k)), C3=c3, C4=0.25 * eps,
                            Q=0.5, k=k, b_power=bp, eps=eps)


def custom_profile(a_fn: Callable, b_fn: Callable, *, name: str = "custom", T0: float = 0.0,
                   T1: float = 1.0, C1: float = 1.0, C2: float = 1.0, C3: float = 1.0,
                   C4: float = 0.25, Q: float = 0.5) -> CurvatureProfile:
    return CurvatureProfile(name, "custom", "custom", T0=T0, T1=T1, R0=T1, C1=C1, C2=C2, C3=C3,
                            C4=C4, Q=Q, a_custom=a_fn, b_custom=b_fn)


_PRESET_RE = re.compile(r"^\s*([a-z]+)\s*(?:\(([^)]*)\))?\s*$")


def profile_from_name(text: str) -> CurvatureProfile:
    """Parse ``euclidean``, ``hyperbolic(k)``, ``power(phi,eps)`` or ``exp(k,eps)``."""
    m = _PRESET_RE.match(text)
    if not m:
        raise ParameterError(f"unrecognised manifold preset {text!r}")
    kind, raw = m.group(1), m.group(2)
    try:
        args = [float(x) for x in raw.split(",")] if raw and raw.strip() else []
    except ValueError as exc:
        raise ParameterError(f"bad preset arguments in {text!r}") from exc
    builders = {
        "euclidean": (euclidean_profile, 0),
        "hyperbolic": (hyperbolic_profile, 1),
        "power": (power_profile, 2),
        "exp": (exp_profile, 2),
    }
    if kind not in builders:
        raise ParameterError(f"unknown manifold preset {kind!r}")
    fn, max_args = builders[kind]
    if len(args) > max_args:
        raise ParameterError(f"preset {kind} takes at most {max_args} arguments")
    return fn(*args)


# ---------------------------------------------------------------------------
# Jacobi tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JacobiSolution:
    """Tabulated solution of f'' = k^2 f with Hermite interpolation between nodes."""

    step: float
    r_max: float
    r: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    log_f: np.ndarray
    ratio: np.ndarray
    k2_right: np.ndarray
    k2_left: np.ndarray
    k_id: str = "k"

    def _hermite(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > self.r_max * (1.0 + 1e-12)):
            raise ValueError(f"radius outside the Jacobi table [0, {self.r_max:g}]")
        r = self.r
        i = np.clip(np.searchsorted(r, x, side="right") - 1, 0, r.size - 2)
        hh = r[i + 1] - r[i]
        s = (x - r[i]) / hh
        s2, s3 = s * s, s * s * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        kr, kl = self.k2_right[i], self.k2_left[i]
        logmode = self.log_f[i] > _LOG_SWITCH
        with np.errstate(invalid="ignore", over="ignore"):
            f0, f1, d0, d1 = self.f[i], self.f[i + 1], self.fp[i], self.fp[i + 1]
            fv = h00 * f0 + h10 * hh * d0 + h01 * f1 + h11 * hh * d1
            dv = h00 * d0 + h10 * hh * kr * f0 + h01 * d1 + h11 * hh * kl * f1
            l0, l1, q0, q1 = self.log_f[i], self.log_f[i + 1], self.ratio[i], self.ratio[i + 1]
            lv = h00 * l0 + h10 * hh * q0 + h01 * l1 + h11 * hh * q1
            qv = h00 * q0 + h10 * hh * (kr - q0 * q0) + h01 * q1 + h11 * hh * (kl - q1 * q1)
        return logmode, fv, dv, lv, qv

    def log_f_at(self, x):
        lm, fv, _, lv, _ = self._hermite(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(lm, lv, np.log(fv))

    def ratio_at(self, x):
        lm, fv, dv, _, qv = self._hermite(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(lm, qv, dv / fv)

    def f_at(self, x):
        lm, fv, _, lv, _ = self._hermite(x)
        with np.errstate(over="ignore"):
            return np.where(lm, np.exp(lv), fv)

    def fp_at(self, x):
        lm, _, dv, lv, qv = self._hermite(x)
        with np.errstate(over="ignore", invalid="ignore"):
            return np.where(lm, np.exp(lv) * qv, dv)

    def to_csv(self, path: Path | str) -> Path:
        return write_csv(path, ["r", "f", "f_prime", "log_f"], [self.r, self.f, self.fp, self.log_f])


def _grid_with_breakpoints(r_max: float, step: float, breakpoints: Sequence[float]) -> np.ndarray:
    cuts = sorted({0.0, float(r_max), *(float(b) for b in breakpoints if 0.0 < b < r_max)})
    pieces = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        n = max(1, math.ceil((b - a) / step - 1e-9))
        pieces.append(np.linspace(a, b, n + 1)[:-1])
    pieces.append(np.array([float(r_max)]))
    return np.concatenate(pieces)


def solve_jacobi(
    profile_fn: Callable,
    r_max: float,
    step: float,
    *,
    breakpoints: Sequence[float] = (),
    log_space: bool = False,
    k_id: str = "k",
) -> JacobiSolution:
    """Fixed-step RK4 for (f, f')' = (f', k^2 f) from (0, 1) on [0, r_max].

    Breakpoints where ``profile_fn`` has kinks are placed exactly on nodes and
    the curvature is sampled one-sidedly there. Without ``log_space`` an
    :class:`IntegrationError` is raised once f exceeds 1e300.
    """
    if not step > 0:
        raise ParameterError("step must be positive")
    if not r_max > 0:
        raise ParameterError("r_max must be positive")
    r = _grid_with_breakpoints(r_max, step, breakpoints)
    h = np.diff(r)
    ts = np.nextafter(r[:-1], np.inf)
    te = np.nextafter(r[1:], -np.inf)
    tm = 0.5 * (r[:-1] + r[1:])
    samples = {}
    for key, t in (("s", ts), ("m", tm), ("e", te)):
        k = _call_vectorised(profile_fn, t)
        bad = ~np.isfinite(k)
        if np.any(bad):
            raise IntegrationError(f"non-finite curvature value at r={t[bad][0]:.17g}")
        if np.any(k < 0):
            raise DomainError(f"negative curvature function value at r={t[k < 0][0]:.17g}")
        samples[key] = k * k
    fs, fps, logscale = jacobi_scan(samples["s"], samples["m"], samples["e"], h, RESCALE_THRESHOLD)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        log_f = np.log(fs) + logscale
        ratio = fps / fs
        scale = np.exp(logscale)
        f = fs * scale
        fp = fps * scale
    if not log_space:
        over = log_f > math.log(OVERFLOW_GUARD)
        if np.any(over):
            raise IntegrationError(
                f"f exceeds 1e300 at r={r[over][0]:.6g}; rerun with log_space=True"
            )
    return JacobiSolution(step=float(step), r_max=float(r_max), r=r, f=f, fp=fp, log_f=log_f,
                          ratio=ratio, k2_right=samples["s"], k2_left=samples["e"], k_id=k_id)


# ---------------------------------------------------------------------------
# Analytic continuation past the table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AsymptoticTail:
    """Closed-form f_a beyond ``t_m`` where a has reached its final form."""

    kind: str
    t_m: float
    log_F: float
    s: float
    k: float = 0.0
    phi: float = 0.0
    c1: float = 0.0
    c2: float = 0.0

    @classmethod
    def match(cls, kind: str, t_m: float, log_F: float, s: float, *, C1: float = 0.0,
              k: float = 0.0) -> "AsymptoticTail":
        if kind == "power":
            phi = tail_exponent(C1)
            F, Fp = math.exp(log_F), math.exp(log_F) * s
            det = 1.0 - 2.0 * phi
            c1 = ((1.0 - phi) * t_m**-phi * F - t_m ** (1.0 - phi) * Fp) / det
            c2 = (t_m**phi * Fp - phi * t_m ** (phi - 1.0) * F) / det
            return cls(kind, t_m, log_F, s, phi=phi, c1=c1, c2=c2)
        return cls(kind, t_m, log_F, s, k=k)

    @property
    def rate(self) -> float:
        return self.k if self.kind == "constant" else 0.0

    def log_f_reduced(self, t):
        """log f(t) - rate*t, accurate even when rate*t is astronomically large."""
        t = np.asarray(t, dtype=float)
        d = t - self.t_m
        with np.errstate(over="ignore", under="ignore"):
            if self.kind == "power":
                z = (self.c2 / self.c1) * t ** (1.0 - 2.0 * self.phi)
                return math.log(self.c1) + self.phi * np.log(t) + np.log1p(z)
            if self.kind == "constant":
                sig = self.s / self.k
                e = np.exp(-2.0 * self.k * d)
                return self.log_F - self.k * self.t_m + np.log(0.5 * (1 + sig) + 0.5 * (1 - sig) * e)
            return self.log_F + np.log1p(self.s * d)

    def log_f(self, t):
        t = np.asarray(t, dtype=float)
        return self.log_f_reduced(t) + self.rate * t if self.kind == "constant" else self.log_f_reduced(t)

    def ratio(self, t):
        t = np.asarray(t, dtype=float)
        d = t - self.t_m
        with np.errstate(over="ignore", under="ignore"):
            if self.kind == "power":
                z = (self.c2 / self.c1) * t ** (1.0 - 2.0 * self.phi)
                return (self.phi + (1.0 - self.phi) * z) / (t * (1.0 + z))
            if self.kind == "constant":
                sig = self.s / self.k
                e = np.exp(-2.0 * self.k * d)
                return self.k * ((1 + sig) - (1 - sig) * e) / ((1 + sig) + (1 - sig) * e)
            return self.s / (1.0 + self.s * d)


@dataclass(frozen=True, eq=False)
class ModelManifold:
    """Model (M^n, dr^2 + f_a(r)^2 g_sphere) built from a curvature profile."""

    n: int
    profile: CurvatureProfile
    fa: JacobiSolution
    fb: JacobiSolution | None
    tail: AsymptoticTail | None

    @property
    def r_max(self) -> float:
        return math.inf if self.tail is not None else self.fa.r_max

    @property
    def r_table(self) -> float:
        return self.fa.r_max

    def _split(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("negative radius")
        if self.tail is None and np.any(r > self.fa.r_max * (1 + 1e-12)):
            raise ValueError(f"radius beyond the tabulated range {self.fa.r_max:g}")
        return r, r <= self.fa.r_max

    def log_f(self, r):
        r, inside = self._split(r)
        if self.tail is None or np.all(inside):
            return self.fa.log_f_at(r)
        out = np.empty_like(r)
        out[inside] = self.fa.log_f_at(r[inside])
        out[~inside] = self.tail.log_f(r[~inside])
        return out

    def log_f_reduced(self, r):
        """log f - rate*r with the tail's exponential rate removed analytically."""
        r, inside = self._split(r)
        rate = self.tail.rate if self.tail is not None else 0.0
        out = np.empty_like(r)
        out[inside] = self.fa.log_f_at(r[inside]) - rate * r[inside]
        if not np.all(inside):
            out[~inside] = self.tail.log_f_reduced(r[~inside])
        return out

    def ratio(self, r):
        """f_a'/f_a."""
        r, inside = self._split(r)
        if self.tail is None or np.all(inside):
            return self.fa.ratio_at(r)
        out = np.empty_like(r)
        out[inside] = self.fa.ratio_at(r[inside])
        out[~inside] = self.tail.ratio(r[~inside])
        return out

    def f(self, r):
        with np.errstate(over="ignore"):
            return np.exp(self.log_f(r))

    def fp(self, r):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.f(r) * self.ratio(r)


def build_model(
    profile: CurvatureProfile | str,
    n: int = 2,
    *,
    r_table: float | None = None,
    step: float = 1e-3,
) -> ModelManifold:
    if isinstance(profile, str):
        profile = profile_from_name(profile)
    if n < 2:
        raise ParameterError("dimension n must be >= 2")
    kind = profile.tail_kind
    if r_table is None:
        r_table = max(20.0, 2.0 * profile.R0, 2.0 * profile.T1)
    fa = solve_jacobi(profile.a, r_table, step, breakpoints=profile.a_breakpoints,
                      log_space=True, k_id="a")
    tail = None
    if kind is not None and r_table >= profile.R0:
        tail = AsymptoticTail.match(kind, fa.r_max, float(fa.log_f[-1]), float(fa.ratio[-1]),
                                    C1=profile.C1, k=profile.k)
    # f_b only where the fixed step still resolves b (step*b small)
    probe = np.linspace(0.0, r_table, 4001)
    with np.errstate(over="ignore"):
        too_stiff = step * profile.b(probe) > 0.05
    r_fb = float(probe[np.argmax(too_stiff)]) if np.any(too_stiff) else r_table
    fb = None
    if r_fb > 10 * step:
        fb = solve_jacobi(profile.b, r_fb, step, breakpoints=profile.b_breakpoints,
                          log_space=True, k_id="b")
    return ModelManifold(n=n, profile=profile, fa=fa, fb=fb, tail=tail)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def laplacian_rho(M: ModelManifold, rho):
    """(n-1) f_a'(rho)/f_a(rho), the Laplacian of the distance to the pole."""
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(rho_arr <= 0.0):
        raise SingularityError("the distance function is singular at the pole rho = 0")
    out = (M.n - 1) * M.ratio(rho_arr)
    return float(out) if np.ndim(out) == 0 else out


def sphere_mean_curvature(M: ModelManifold, rho):
    """Inward mean curvature of the geodesic sphere of radius rho."""
    return laplacian_rho(M, rho)


@dataclass(frozen=True)
class ComparisonVerdict:
    holds: bool
    reason: str
    h_start: float
    h_min: float

    def __bool__(self) -> bool:
        return self.holds


def riccati_comparison_check(M: ModelManifold, F_const: float, rho_start: float,
                             rho_end: float) -> ComparisonVerdict:
    """Integrate H' = (H^2 - F^2)/(n-1) from the sphere mean curvature at rho_start."""
    if F_const < 0:
        raise ParameterError("F_const must be non-negative")
    if rho_end < rho_start:
        raise ParameterError("rho_end must not precede rho_start")
    h0 = float(sphere_mean_curvature(M, rho_start))
    if h0 < F_const:
        return ComparisonVerdict(False, "hypothesis H(rho_start) >= F violated", h0, h0)
    n1 = M.n - 1

    def rhs(_t, y):
        return [(y[0] * y[0] - F_const * F_const) / n1]

    def blowup(_t, y):
        return y[0] - 1e12

    blowup.terminal = True
    sol = solve_ivp(rhs, (rho_start, rho_end), [h0], rtol=1e-10, atol=1e-12, events=blowup,
                    dense_output=False)
    if sol.status == -1:
        raise IntegrationError(f"comparison ODE failed: {sol.message}")
    h_min = float(np.min(sol.y[0]))
    ok = h_min >= F_const - 1e-12 * max(1.0, F_const)
    return ComparisonVerdict(ok, "H stays above F" if ok else "H dropped below F", h0, h_min)


# ---------------------------------------------------------------------------
# Assumption checks
# ---------------------------------------------------------------------------

PROXY_NOTE = "limits checked as: non-increasing over the last decade and below 1e-3 at r_probe"


@dataclass(frozen=True)
class AssumptionResult:
    name: str
    ok: bool
    margin: float
    witness: float
    detail: str


@dataclass(frozen=True)
class AssumptionReport:
    profile: str
    r_probe: float
    splice_radius: float
    results: tuple[AssumptionResult, ...]
    note: str = PROXY_NOTE

    def __getitem__(self, name: str) -> AssumptionResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.results if r.name.startswith("A"))

    @property
    def structure_ok(self) -> bool:
        return all(r.ok for r in self.results if not r.name.startswith("A"))

    def failures(self) -> list[str]:
        return [r.name for r in self.results if not r.ok]

    def summary(self) -> str:
        lines = [f"profile {self.profile}; r_probe={self.r_probe:g}; b capped below T1={self.splice_radius:g}"]
        for r in self.results:
            lines.append(f"  {r.name:<10} {'pass' if r.ok else 'FAIL'}  margin={r.margin:.6g} at r={r.witness:.6g}  {r.detail}")
        lines.append(f"  ({self.note})")
        return "\n".join(lines)


def _ladder(r0: float, r_probe: float) -> np.ndarray:
    steps = int(math.floor(4.0 * math.log2(r_probe / r0) + 1e-9))
    pts = r0 * 2.0 ** (np.arange(steps + 1) / 4.0)
    if pts[-1] < r_probe * (1 - 1e-12):
        pts = np.append(pts, r_probe)
    return pts


def _worst(values: np.ndarray, where: np.ndarray) -> tuple[float, float]:
    vals = np.where(np.isnan(values), -np.inf, values)
    i = int(np.argmin(vals))
    return float(vals[i]), float(where[i])


def _trend(q: np.ndarray, ladder: np.ndarray, r_probe: float, label: str) -> AssumptionResult:
    last = ladder >= r_probe / 10.0
    tail = q[last]
    finite = np.all(np.isfinite(tail))
    decreasing = finite and bool(np.all(np.diff(tail) <= 1e-12 * np.maximum(np.abs(tail[:-1]), 1e-300)))
    final = float(q[-1])
    ok = decreasing and final < 1e-3
    detail = f"final={final:.3e}, non-increasing over last decade={decreasing}"
    return AssumptionResult(label, bool(ok), 1e-3 - final if np.isfinite(final) else -np.inf,
                            float(ladder[-1]), detail)


def check_assumptions(profile: CurvatureProfile | str, r_probe: float = 1e40, *, n: int = 2,
                      model: ModelManifold | None = None) -> AssumptionReport:
    """Evaluate (A1)-(A7) and the structural invariants on a radius ladder."""
    if isinstance(profile, str):
        profile = profile_from_name(profile)
    P = profile
    if r_probe < P.T1:
        raise ParameterError("probe window precedes asymptotic regime")
    M = model if model is not None else build_model(P, n)
    ladder = _ladder(P.T1, r_probe)
    near = np.linspace(0.0, max(4.0 * P.T1, 10.0, 2.0 * P.R0), 2001)
    allr = np.union1d(near, ladder)
    out: list[AssumptionResult] = []

    a_all = P.a(allr)
    lb_all = P.log_b(allr)
    dlb_ladder = P.dlog_b(ladder)

    # structure
    low = allr < P.T0
    if np.any(low):
        a_dev = float(np.max(np.abs(a_all[low])))
        lb_low = lb_all[low]
        b_dev = 0.0 if np.all(np.isneginf(lb_low)) else float(np.ptp(lb_low))
        ok = a_dev == 0.0 and b_dev <= 1e-14
        out.append(AssumptionResult("flat-core", ok, -max(a_dev, b_dev), P.T0,
                                    "a = 0 and b constant on [0, T0]"))
    gap = np.full_like(a_all, np.inf)
    pos = a_all > 0.0
    gap[pos] = lb_all[pos] - np.log(a_all[pos])
    m, w = _worst(gap, allr)
    out.append(AssumptionResult("b>=a", m >= -1e-12, m, w, "log b - log a"))
    dlb_all = P.dlog_b(allr)
    decreasing = bool(np.any(dlb_all < 0))
    mono = np.all(dlb_all <= 0) if decreasing else np.all(dlb_all >= 0)
    out.append(AssumptionResult("b-monotone", bool(mono), 0.0 if mono else -1.0, float(allr[-1]),
                                "b non-increasing" if decreasing else "b non-decreasing"))

    # A1
    far = allr[allr >= P.T1]
    a_far = P.a(far)
    target = P.C1 / far
    if decreasing:
        dev = np.abs(a_far - target) / target
        m, w = _worst(-dev, far)
        out.append(AssumptionResult("A1", m >= -1e-12, m, w, "b decreasing: a = C1/t for t >= T1"))
    else:
        m, w = _worst(a_far - target, far)
        out.append(AssumptionResult("A1", m >= -1e-12, m, w, "b increasing: a >= C1/t for t >= T1"))
    # A2
    m, w = _worst(P.C2 - a_all, allr)
    out.append(AssumptionResult("A2", m >= 0, m, w, "a <= C2"))
    # A3, A4
    finite_b = np.isfinite(lb_all)
    if not np.all(finite_b):
        out.append(AssumptionResult("A3", False, -np.inf, float(allr[~finite_b][0]), "b vanishes"))
        out.append(AssumptionResult("A4", False, -np.inf, float(allr[~finite_b][0]), "b vanishes"))
    else:
        d3 = math.log(P.C2) - (P.log_b(allr + 1.0) - lb_all)
        m, w = _worst(d3, allr)
        out.append(AssumptionResult("A3", m >= -1e-12, m, w, "b(t+1) <= C2 b(t)"))
        d4 = math.log(P.C2) - (P.log_b(0.5 * allr) - lb_all)
        m, w = _worst(d4, allr)
        out.append(AssumptionResult("A4", m >= -1e-12, m, w, "b(t/2) <= C2 b(t)"))
    # A5
    if not 0.0 < P.Q < 1.0:
        out.append(AssumptionResult("A5", False, -1.0, 0.0, f"Q={P.Q:g} outside (0,1)"))
    else:
        d5 = lb_all - math.log(P.C3) + P.Q * np.log1p(allr)
        m, w = _worst(d5, allr)
        detail = "b >= C3 (1+t)^-Q" if np.isfinite(m) else "b >= C3 (1+t)^-Q fails: b vanishes"
        out.append(AssumptionResult("A5", bool(m >= -1e-12), m, w, detail))
    # A6
    lb_ladder = P.log_b(ladder)
    if not np.all(np.isfinite(lb_ladder)):
        out.append(AssumptionResult("A6", False, -np.inf, float(ladder[0]), "b vanishes; b'/b^2 undefined"))
    else:
        with np.errstate(under="ignore"):
            q6 = np.abs(dlb_ladder) * np.exp(-lb_ladder)
        res = _trend(q6, ladder, r_probe, "A6")
        out.append(AssumptionResult("A6", res.ok, res.margin, res.witness, "b'/b^2 -> 0: " + res.detail))
    # A7: exponential rates of b and f_a cancel analytically when they agree
    if M.tail is None and ladder[-1] > M.r_max:
        out.append(AssumptionResult("A7", False, -np.inf, M.r_max,
                                    f"f_a has no closed-form tail beyond r_table={M.r_max:g}; A7 undetermined"))
        return AssumptionReport(P.name, float(r_probe), P.T1, tuple(out))
    rate_b = P.b_rate
    rate_f = M.tail.rate if M.tail is not None else 0.0
    if rate_b == rate_f:
        lb_red = P.log_b_reduced(ladder)
        lf_red = M.log_f_reduced(ladder)
    else:
        lb_red = lb_ladder
        lf_red = M.log_f(ladder)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        log_q7 = (1.0 + P.C4) * np.log(ladder) + lb_red - (lf_red + np.log(M.ratio(ladder)))
        q7 = np.exp(log_q7)
    res = _trend(q7, ladder, r_probe, "A7")
    out.append(AssumptionResult("A7", res.ok, res.margin, res.witness, "t^(1+C4) b/f_a' -> 0: " + res.detail))
    return AssumptionReport(P.name, float(r_probe), P.T1, tuple(out))
