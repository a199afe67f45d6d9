"""Vectorised adaptive Gauss-Legendre quadrature on panels.

Every routine accepts integrands that map a numpy array of abscissae to an
array of the same shape. Refinement is panel-wise bisection driven by the
difference between a panel estimate and the sum of its two halves.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import QuadratureError

ArrayFn = Callable[[np.ndarray], np.ndarray]

_ORDER = 10
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(_ORDER)


def _panel_rule(fn, a: np.ndarray, b: np.ndarray, param) -> np.ndarray:
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    vals = fn(x) if param is None else fn(x, param[:, None])
    return half * (np.asarray(vals, dtype=float) @ _WEIGHTS)


def integrate_panels(
    fn: ArrayFn,
    a,
    b,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-300,
    max_depth: int = 48,
    param=None,
) -> np.ndarray:
    """Integrate ``fn`` over each panel ``[a[k], b[k]]`` independently.

    With ``param`` (one value per panel) the integrand is called as
    ``fn(x, p)`` where ``p`` broadcasts against the abscissae of each panel.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    out = np.zeros(a.shape[0])
    owner = np.arange(a.shape[0])
    par = None if param is None else np.atleast_1d(np.asarray(param, dtype=float))
    depth = 0
    while a.size:
        mid = 0.5 * (a + b)
        pp = None if par is None else par[owner]
        whole = _panel_rule(fn, a, b, pp)
        left = _panel_rule(fn, a, mid, pp)
        right = _panel_rule(fn, mid, b, pp)
        halves = left + right
        if not np.all(np.isfinite(halves)):
            bad = int(np.flatnonzero(~np.isfinite(halves))[0])
            raise QuadratureError(f"non-finite integrand on [{a[bad]:.6g}, {b[bad]:.6g}]")
        ok = np.abs(whole - halves) <= np.maximum(atol, rtol * np.abs(halves))
        np.add.at(out, owner[ok], halves[ok])
        if np.all(ok):
            break
        depth += 1
        if depth > max_depth:
            bad = int(np.flatnonzero(~ok)[0])
            raise QuadratureError(
                f"adaptive quadrature did not converge on [{a[~ok][0]:.6g}, {b[~ok][0]:.6g}]"
                f" (panel {owner[bad]})"
            )
        keep = ~ok
        a_k, b_k, m_k, o_k = a[keep], b[keep], mid[keep], owner[keep]
        a = np.concatenate([a_k, m_k])
        b = np.concatenate([m_k, b_k])
        owner = np.concatenate([o_k, o_k])
    return out


def gauss_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    return np.polynomial.legendre.leggauss(order)


def cumulative(fn: ArrayFn, nodes, **kw) -> np.ndarray:
    """Running integrals from ``nodes[0]`` to every node (first entry 0)."""
    nodes = np.asarray(nodes, dtype=float)
    pieces = integrate_panels(fn, nodes[:-1], nodes[1:], **kw)
    return np.concatenate([[0.0], np.cumsum(pieces)])


def integrate(fn: ArrayFn, a: float, b: float, *, panels: int = 8, **kw) -> float:
    edges = np.linspace(a, b, panels + 1)
    return float(integrate_panels(fn, edges[:-1], edges[1:], **kw).sum())


def integrate_log_tail(
    log_fn: ArrayFn,
    x0: float,
    *,
    scale: float | None = None,
    rtol: float = 1e-10,
    atol: float = 1e-300,
    label: str = "integrand",
) -> float:
    """Return the integral of ``exp(log_fn(x))`` over ``[x0, inf)``.

    The half line is mapped onto ``[0, 1)`` by ``x = x0 + s*y/(1-y)``. Before
    integrating, the transformed integrand is sampled as ``y -> 1``; growth
    there means the integral diverges and a :class:`QuadratureError` naming
    ``label`` is raised.
    """
    s = float(scale) if scale is not None else max(1.0, abs(x0))

    def mapped(y):
        y = np.asarray(y, dtype=float)
        one_minus = 1.0 - y
        x = x0 + s * y / one_minus
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            return np.exp(log_fn(x) + np.log(s) - 2.0 * np.log(one_minus))

    probe_y = 1.0 - 10.0 ** -np.arange(2.0, 13.0)
    inner_y = np.linspace(0.0, 0.99, 100)
    with np.errstate(over="ignore", invalid="ignore"):
        probe = mapped(probe_y)
        inner = mapped(inner_y)
    bulk = float(np.nanmax(np.abs(inner))) if np.any(np.isfinite(inner)) else np.inf
    if not np.all(np.isfinite(probe)) or not np.isfinite(bulk) or probe[-1] > 1e3 * max(bulk, 1e-300):
        raise QuadratureError(f"divergent tail: {label} is not integrable at infinity")
    edges = np.linspace(0.0, 1.0, 17)
    try:
        return float(integrate_panels(mapped, edges[:-1], edges[1:], rtol=rtol, atol=atol).sum())
    except QuadratureError as exc:
        raise QuadratureError(f"tail quadrature of {label} failed: {exc}") from exc
