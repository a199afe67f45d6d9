"""Wall-clock comparison of the numba and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both variants are imported directly from fmingraph.kernels, so the env flag
FMINGRAPH_DISABLE_NUMBA only matters for what the package dispatches to.
"""

from __future__ import annotations

import argparse
import math
import timeit

import numpy as np

from fmingraph import kernels
from fmingraph._accel import HAVE_NUMBA
from fmingraph.drift import selfshrinker_drift
from fmingraph.manifold import build_model
from fmingraph.solver import PolarGrid


def _jacobi_inputs(n: int = 200_000, h: float = 1e-3):
    t = np.arange(n) * h
    k2 = lambda x: (np.sqrt(2.0) / np.maximum(x, 1.0)) ** 2  # noqa: E731
    return k2(t), k2(t + h / 2), k2(t + h), h, 1e100


def _polar_inputs(n_r: int = 256, n_theta: int = 128):
    M = build_model("euclidean", 2)
    g = PolarGrid.build(M, 2.0, n_r, n_theta)
    D = selfshrinker_drift()
    rr, _ = g.mesh()
    u = np.sqrt(np.clip(4.0 - rr**2, 0.0, None))
    mp = D.mp(g.r)
    rp, rpp = D.rp(u), D.rpp(u)
    phi = np.zeros(n_theta)
    res = (u, g.fh, g.fn, g.dr, g.dth, g.cap, mp, rp, phi, g.cos_t, g.sin_t)
    jac = (u, g.fh, g.fn, g.dr, g.dth, g.cap, mp, rp, rpp, g.cos_t, g.sin_t)
    return res, jac


def bench(repeat: int = 5) -> list[tuple[str, float, float]]:
    jac_in = _jacobi_inputs()
    res_in, pj_in = _polar_inputs()
    cases = [
        ("jacobi_scan (2e5 steps)", kernels.jacobi_scan_numpy, kernels.jacobi_scan_numba, jac_in),
        ("polar_residual (256x128)", kernels.polar_residual_numpy, kernels.polar_residual_numba, res_in),
        ("polar_jacobian (256x128)", kernels.polar_jacobian_numpy, kernels.polar_jacobian_numba, pj_in),
    ]
    rows = []
    for name, f_np, f_nb, args in cases:
        f_nb(*args)  # compile outside the timing
        t_np = min(timeit.repeat(lambda: f_np(*args), number=1, repeat=repeat))
        t_nb = min(timeit.repeat(lambda: f_nb(*args), number=1, repeat=repeat))
        rows.append((name, t_np, t_nb))
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"numba available: {HAVE_NUMBA}")
    print(f"{'kernel':<28}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, t_np, t_nb in bench(args.repeat):
        sp = t_np / t_nb if t_nb > 0 else math.inf
        print(f"{name:<28}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{sp:>10.1f}")


if __name__ == "__main__":
    main()
