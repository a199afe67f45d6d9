"""Radial weights a0 and the integrals built from them.

With m = n - 1 and L = log f_a the quantities used throughout are

    g(r)      = int_0^r a0(t) exp(m(L(t) - L(r))) dt
    Ptilde(r) = int_r^inf exp(m(L(r) - L(s))) ds
    T(r)      = int_r^inf a0(t) Ptilde(t) dt

all evaluated in this scaled form so that exponentially growing f_a never
overflows. Ptilde has closed forms beyond the table radius of a preset model;
integrals to infinity are taken in the variable x = log t.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, ParameterError, QuadratureError
from .manifold import AsymptoticTail, ModelManifold
from .quadrature import gauss_nodes, integrate_log_tail, integrate_panels

_INNER_X, _INNER_W = gauss_nodes(20)
_SIGMA_X, _SIGMA_W = gauss_nodes(64)


# ---------------------------------------------------------------------------
# a0 weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialWeight:
    """a0(r) = min(cap, c * (shift + r)^(-p) * log(e + r)^(-alpha))."""

    name: str
    c: float = 1.0
    p: float = 2.0
    alpha: float = 2.0
    shift: float = 1.0
    cap: float = math.inf

    def __post_init__(self):
        if self.c < 0 or self.cap < 0:
            raise DomainError(f"a0 weight {self.name} is negative")

    def __call__(self, r):
        return np.exp(self.log_value(np.asarray(r, dtype=float)))

    def log_value(self, r):
        r = np.asarray(r, dtype=float)
        if self.c == 0.0:
            return np.full_like(r, -np.inf)
        with np.errstate(divide="ignore"):
            out = math.log(self.c) - self.p * np.log(self.shift + r) - self.alpha * np.log(np.log(math.e + r))
        return np.minimum(out, math.log(self.cap)) if np.isfinite(self.cap) else out

    def log_at_log(self, x):
        """log a0(e^x), usable far beyond the floating-point range of r."""
        x = np.asarray(x, dtype=float)
        if self.c == 0.0:
            return np.full_like(x, -np.inf)
        log_shift = math.log(self.shift) if self.shift > 0 else -np.inf
        out = (math.log(self.c) - self.p * np.logaddexp(log_shift, x)
               - self.alpha * np.log(np.logaddexp(1.0, x)))
        return np.minimum(out, math.log(self.cap)) if np.isfinite(self.cap) else out

    @property
    def positive(self) -> bool:
        return self.c > 0.0


@dataclass(frozen=True)
class CallableWeight:
    """Arbitrary non-negative a0 given as a vectorised callable."""

    name: str
    fn: Callable

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.asarray(self.fn(r), dtype=float)
        if out.shape != r.shape:
            out = np.vectorize(lambda s: float(self.fn(s)), otypes=[float])(r)
        if np.any(out < 0):
            raise DomainError(f"a0 weight {self.name} is negative at r={r[out < 0][0]:.6g}")
        return out

    def log_value(self, r):
        with np.errstate(divide="ignore"):
            return np.log(self(r))

    def log_at_log(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore"):
            r = np.exp(x)
        if np.any(~np.isfinite(r)):
            raise QuadratureError(f"a0 weight {self.name} has no asymptotic form beyond r=1e308")
        return self.log_value(r)

    @property
    def positive(self) -> bool:
        return True


def decay_weight(p: float = 2.0, alpha: float = 2.0, c: float = 1.0) -> RadialWeight:
    return RadialWeight(f"decay({p:g},{alpha:g})", c=c, p=p, alpha=alpha, shift=1.0)


def capped_weight(cap: float = 1.0) -> RadialWeight:
    """min(cap, r^-2 log(e + r)^-2)."""
    return RadialWeight(f"capped({cap:g})", c=1.0, p=2.0, alpha=2.0, shift=0.0, cap=cap)


def constant_weight(c: float) -> RadialWeight:
    return RadialWeight(f"const({c:g})", c=c, p=0.0, alpha=0.0)


def zero_weight() -> RadialWeight:
    return RadialWeight("zero", c=0.0)


_WEIGHT_RE = re.compile(r"^\s*([a-z]+)\s*(?:\(([^)]*)\))?\s*$")


def weight_from_name(text: str) -> RadialWeight:
    m = _WEIGHT_RE.match(text)
    if not m:
        raise ParameterError(f"unrecognised a0 preset {text!r}")
    kind = m.group(1)
    args = [float(x) for x in m.group(2).split(",")] if m.group(2) else []
    table = {"decay": (decay_weight, 3), "capped": (capped_weight, 1),
             "const": (constant_weight, 1), "zero": (zero_weight, 0)}
    if kind not in table:
        raise ParameterError(f"unknown a0 preset {kind!r}")
    fn, k = table[kind]
    if len(args) > k:
        raise ParameterError(f"a0 preset {kind} takes at most {k} arguments")
    return fn(*args)


# ---------------------------------------------------------------------------
# Closed-form Ptilde in the asymptotic region
# ---------------------------------------------------------------------------


def tail_log_ptilde(tail: AsymptoticTail, x, m: int):
    """log Ptilde(e^x) for e^x >= tail.t_m using the tail's closed form."""
    x = np.asarray(x, dtype=float)
    if tail.kind == "power":
        phi = tail.phi
        if phi * m <= 1.0:
            return np.full_like(x, np.inf)
        with np.errstate(under="ignore", over="ignore"):
            z = (tail.c2 / tail.c1) * np.exp((1.0 - 2.0 * phi) * x)
        if np.any(np.abs(z) >= 0.5):
            raise QuadratureError("power tail expansion used too close to the gluing radius")
        total = np.zeros_like(x)
        coef = 1.0
        zj = np.ones_like(x)
        for j in range(60):
            term = coef * zj / (phi * m - 1.0 + j * (2.0 * phi - 1.0))
            total = total + term
            if np.all(np.abs(term) <= 1e-18 * np.abs(total)):
                break
            coef *= -(m + j) / (j + 1.0)
            zj = zj * z
        return x + m * np.log1p(z) + np.log(total)
    if tail.kind == "constant":
        k = tail.k
        with np.errstate(over="ignore"):
            t = np.exp(np.minimum(x, 700.0))
        sig = np.where(x < 700.0, tail.ratio(t) / k, 1.0)
        w = 0.5 * (_SIGMA_X + 1.0)
        integrand = w[None, :] ** (m - 1) / ((1.0 + sig[..., None]) + (1.0 - sig[..., None]) * w[None, :] ** 2) ** m
        val = (2.0**m / k) * 0.5 * (integrand @ _SIGMA_W)
        return np.log(val)
    # zero tail: f = F (1 + s d) grows linearly
    if m == 1:
        return np.full_like(x, np.inf)
    with np.errstate(over="ignore"):
        t = np.exp(np.minimum(x, 700.0))
    lin = np.log((1.0 / tail.s + (t - tail.t_m)) / (m - 1.0))
    return np.where(x < 700.0, lin, x - math.log(m - 1.0))


# ---------------------------------------------------------------------------
# Tables on a radius grid
# ---------------------------------------------------------------------------


def refine_nodes(nodes, *, h_abs: float = 0.25, rel: float = 0.05) -> np.ndarray:
    """Insert points so every panel is at most max(h_abs, rel*left) wide.

    The nested inner rules use a fixed number of nodes per panel, which is
    accurate only when the scaled integrands vary little across a panel.
    """
    nodes = np.unique(np.asarray(nodes, dtype=float))
    out = [float(nodes[0])]
    for b in nodes[1:]:
        x = out[-1]
        while b - x > max(h_abs, rel * x) * (1 + 1e-9):
            x += max(h_abs, rel * x)
            out.append(x)
        out.append(float(b))
    return np.asarray(out)


def _require_tail(M: ModelManifold) -> AsymptoticTail:
    if M.tail is None:
        raise QuadratureError("model has no asymptotic tail; integrals to infinity are not available")
    return M.tail


def g_table(M: ModelManifold, a0, radii) -> np.ndarray:
    """g at sorted radii (0 allowed) by a forward recursion over panels."""
    r = np.asarray(radii, dtype=float)
    if np.any(np.diff(r) < 0):
        raise ValueError("radii must be sorted")
    if not getattr(a0, "positive", True):
        return np.zeros_like(r)
    nodes = np.union1d([0.0], r)
    m = M.n - 1
    L = M.log_f(nodes)
    Lnext = L[1:]

    def integrand(t, idx):
        j = idx.astype(int)
        with np.errstate(under="ignore", over="ignore", invalid="ignore"):
            out = np.exp(a0.log_value(t) + m * (M.log_f(t) - Lnext[j]))
        return np.where(np.isfinite(out), out, 0.0)

    pieces = integrate_panels(integrand, nodes[:-1], nodes[1:], param=np.arange(nodes.size - 1), atol=1e-300)
    G = np.zeros(nodes.size)
    with np.errstate(invalid="ignore", over="ignore"):
        decay = np.exp(-m * (L[1:] - L[:-1]))
    decay = np.where(np.isfinite(decay), decay, 0.0)
    for j in range(nodes.size - 1):
        G[j + 1] = G[j] * decay[j] + pieces[j]
    return np.interp(r, nodes, G) if r.size != nodes.size else G


def ptilde_table(M: ModelManifold, radii) -> np.ndarray:
    """Ptilde at sorted radii by a backward recursion from the analytic tail."""
    tail = _require_tail(M)
    r = np.asarray(radii, dtype=float)
    m = M.n - 1
    top = max(float(r[-1]), tail.t_m)
    nodes = np.union1d(r, [top])
    L = M.log_f(nodes)
    out = np.empty(nodes.size)
    out[-1] = float(np.exp(tail_log_ptilde(tail, np.log([top]), m))[0])
    if not np.isfinite(out[-1]):
        raise QuadratureError("divergent tail: int ds/f_a^(n-1) is infinite for this model")
    Lcur = L[:-1]

    def integrand(s, idx):
        j = idx.astype(int)
        with np.errstate(under="ignore", invalid="ignore"):
            v = np.exp(m * (Lcur[j] - M.log_f(s)))
        return np.where(np.isfinite(v), v, 0.0)

    pieces = integrate_panels(integrand, nodes[:-1], nodes[1:], param=np.arange(nodes.size - 1))
    with np.errstate(invalid="ignore", under="ignore"):
        carry = np.exp(m * (L[:-1] - L[1:]))
    carry = np.where(np.isfinite(carry), carry, 0.0)
    for j in range(nodes.size - 2, -1, -1):
        out[j] = pieces[j] + carry[j] * out[j + 1]
    idx = np.searchsorted(nodes, r)
    return out[idx]


def _ptilde_inside(M, t, right, L_right, P_right, m):
    """Ptilde at points t with t <= right, given Ptilde(right)."""
    Lt = M.log_f(t)
    # geometric substitution s = t*(right/t)^u absorbs the 1/s peak near t -> 0
    span = np.log(right / t)
    s = t[..., None] * np.exp(span[..., None] * 0.5 * (_INNER_X + 1.0))
    with np.errstate(under="ignore", invalid="ignore"):
        v = s * np.exp(m * (Lt[..., None] - M.log_f(s)))
        v = np.where(np.isfinite(v), v, 0.0)
        head = 0.5 * span * (v @ _INNER_W)
        carry = np.exp(m * (Lt - L_right))
    carry = np.where(np.isfinite(carry), carry, 0.0)
    return head + carry * P_right


def _g_inside(M, a0, t, left, L_left, G_left, m):
    """g at points t >= left, given g(left)."""
    Lt = M.log_f(t)
    s = left[..., None] + (t - left)[..., None] * 0.5 * (_INNER_X + 1.0)
    with np.errstate(under="ignore", invalid="ignore", over="ignore"):
        v = np.exp(a0.log_value(s) + m * (M.log_f(s) - Lt[..., None]))
        v = np.where(np.isfinite(v), v, 0.0)
        head = 0.5 * (t - left) * (v @ _INNER_W)
        carry = np.exp(-m * (Lt - L_left))
    carry = np.where(np.isfinite(carry), carry, 0.0)
    return head + carry * G_left


def a0_ptilde_panels(M: ModelManifold, a0, nodes, P_nodes) -> np.ndarray:
    """Integrals of a0*Ptilde over consecutive panels of ``nodes``."""
    m = M.n - 1
    nodes = np.asarray(nodes, dtype=float)
    right = nodes[1:]
    L_right = M.log_f(right)
    P_right = np.asarray(P_nodes, dtype=float)[1:]

    def integrand(t, idx):
        j = idx.astype(int)
        jj = np.broadcast_to(j, t.shape)
        p = _ptilde_inside(M, t, right[jj], L_right[jj], P_right[jj], m)
        with np.errstate(under="ignore"):
            return np.exp(a0.log_value(t)) * p

    return integrate_panels(integrand, nodes[:-1], right, param=np.arange(right.size), atol=1e-18)


def g_panels(M: ModelManifold, a0, nodes, G_nodes) -> np.ndarray:
    """Integrals of g over consecutive panels of ``nodes``."""
    m = M.n - 1
    nodes = np.asarray(nodes, dtype=float)
    left = nodes[:-1]
    L_left = M.log_f(left)
    G_left = np.asarray(G_nodes, dtype=float)[:-1]

    def integrand(t, idx):
        jj = np.broadcast_to(idx.astype(int), t.shape)
        return _g_inside(M, a0, t, left[jj], L_left[jj], G_left[jj], m)

    return integrate_panels(integrand, left, nodes[1:], param=np.arange(left.size))


def a0_ptilde_tail(M: ModelManifold, a0, R: float) -> float:
    """T(R) = int_R^inf a0 Ptilde, for R at or beyond the table radius."""
    tail = _require_tail(M)
    if R < tail.t_m * (1 - 1e-12):
        raise ValueError("tail integral must start inside the analytic region")
    m = M.n - 1
    x0 = math.log(R)

    def log_integrand(x):
        return a0.log_at_log(x) + tail_log_ptilde(tail, x, m) + x

    return integrate_log_tail(log_integrand, x0, label="a0(t)*Ptilde(t), the integrability kernel")


def kernel_integral(M: ModelManifold, a0) -> float:
    """int_1^inf a0(t) Ptilde(t) dt; raises QuadratureError when divergent."""
    tail = _require_tail(M)
    if not getattr(a0, "positive", True):
        return 0.0
    top = max(1.0, tail.t_m)
    nodes = refine_nodes([1.0, top], h_abs=0.125)
    P = ptilde_table(M, nodes)
    head = float(a0_ptilde_panels(M, a0, nodes, P).sum())
    return head + a0_ptilde_tail(M, a0, top)


# ---------------------------------------------------------------------------
# Global potential V and the constant H
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PotentialTable:
    """g, Ptilde and V on a radius grid together with the H ladder."""

    r: np.ndarray
    g: np.ndarray
    ptilde: np.ndarray
    I2: np.ndarray
    T: np.ndarray
    V: np.ndarray
    phi_sup: float
    H: float
    H_ladder: np.ndarray
    H_radii: np.ndarray
    H_converged: bool
    bracket_ladder: np.ndarray
    bracket_monotone: bool

    @property
    def dV(self) -> np.ndarray:
        return -self.g


def h_ladder(R0: float = 1e3, steps: int = 8) -> np.ndarray:
    return R0 * 2.0 ** np.arange(steps)


def potential_table(M: ModelManifold, a0, radii, phi_sup: float = 0.0, *,
                    ladder=None, h_tol: float = 1e-8) -> PotentialTable:
    """Tabulate V(r) = phi_sup + int_r^inf g on ``radii``.

    V is assembled as phi_sup + Ptilde*g + T, which equals the bracket
    Ptilde*g - int_0^r a0*Ptilde minus H with H = -int_0^inf a0*Ptilde. H is
    computed on the truncation ladder as -I2(R_j) - T(R_j) and declared
    converged once successive values agree to ``h_tol``.
    """
    tail = _require_tail(M)
    r = np.asarray(radii, dtype=float)
    if r.ndim != 1 or np.any(np.diff(r) <= 0) or r[0] < 0:
        raise ValueError("radii must be strictly increasing and non-negative")
    lad = h_ladder() if ladder is None else np.asarray(ladder, dtype=float)
    top = max(float(r[-1]), float(lad[-1]), tail.t_m)
    nodes = np.union1d(np.union1d(r, lad), [0.0, tail.t_m, top])
    nodes = nodes[nodes <= top]
    nodes = refine_nodes(nodes)
    G = g_table(M, a0, nodes)
    P = ptilde_table(M, nodes)
    if getattr(a0, "positive", True):
        pieces = a0_ptilde_panels(M, a0, nodes, P)
        T_top = a0_ptilde_tail(M, a0, top)
    else:
        pieces = np.zeros(nodes.size - 1)
        T_top = 0.0
    I2 = np.concatenate([[0.0], np.cumsum(pieces)])
    # summed from the far end so that small T keeps its relative accuracy
    T = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]]) + T_top
    idx = np.searchsorted(nodes, lad)
    H_lad = -I2[idx] - T[idx]
    diffs = np.abs(np.diff(H_lad))
    converged = bool(diffs.size == 0 or diffs[-1] < h_tol)
    H = float(H_lad[-1])
    bracket = P[idx] * G[idx] - I2[idx]
    db = np.diff(bracket)
    monotone = bool(np.all(db <= 0) or np.all(db >= 0))
    sel = np.searchsorted(nodes, r)
    V = phi_sup + P[sel] * G[sel] + T[sel]
    return PotentialTable(r=r, g=G[sel], ptilde=P[sel], I2=I2[sel], T=T[sel], V=V,
                          phi_sup=float(phi_sup), H=H, H_ladder=H_lad, H_radii=lad,
                          H_converged=converged, bracket_ladder=bracket,
                          bracket_monotone=monotone)


def integral_of_g(M: ModelManifold, a0, radii) -> np.ndarray:
    """int_r^inf g computed by direct quadrature of g between grid radii.

    Independent of the Ptilde route inside the table; beyond the last radius
    the identity int_R^inf g = Ptilde(R) g(R) + T(R) closes the integral.
    """
    tail = _require_tail(M)
    r = np.asarray(radii, dtype=float)
    top = max(float(r[-1]), tail.t_m)
    nodes = refine_nodes(np.union1d(np.union1d(r, [0.0]), [top]))
    G = g_table(M, a0, nodes)
    pieces = g_panels(M, a0, nodes, G)
    P_top = float(ptilde_table(M, np.array([top]))[0])
    far = P_top * G[-1] + a0_ptilde_tail(M, a0, top)
    tail_sums = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]]) + far
    return tail_sums[np.searchsorted(nodes, r)]
