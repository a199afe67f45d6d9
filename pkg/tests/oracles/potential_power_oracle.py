"""Independent high-precision value of int_{1000}^inf g for power(2,0.5), n=2.

f_a is integrated with scipy's DOP853 up to the gluing radius 20, continued
with the matched closed form c1 t^2 + c2/t, and the outer integrals are done
in mpmath after swapping the order of integration. Run manually; the printed
value is frozen in tests/test_potential.py.
"""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np
from scipy.integrate import quad, solve_ivp

from fmingraph.manifold import profile_from_name


def main() -> None:
    pr = profile_from_name("power(2,0.5)")

    def a(t):
        return float(pr.a(np.array([t]))[0])

    bps = [0.0, *sorted(set(pr.a_breakpoints)), 20.0]
    y = [0.0, 1.0]
    sols = []
    for s, e in zip(bps[:-1], bps[1:]):
        so = solve_ivp(lambda t, v: [v[1], a(t) ** 2 * v[0]], (s, e), y, method="DOP853",
                       rtol=1e-13, atol=1e-15, dense_output=True)
        sols.append((s, e, so))
        y = so.y[:, -1]
    F, Fp = y
    tm, phi = 20.0, 2.0
    det = 1 - 2 * phi
    c1 = ((1 - phi) * tm**-phi * F - tm ** (1 - phi) * Fp) / det
    c2 = (tm**phi * Fp - phi * tm ** (phi - 1) * F) / det

    def f(t):
        for s, e, so in sols:
            if s <= t <= e:
                return so.sol(t)[0]
        raise ValueError(t)

    def a0(t):
        return (1 + t) ** -2 * math.log(math.e + t) ** -2

    A20 = quad(lambda t: a0(t) * f(t), 0, 20, limit=400, epsabs=0, epsrel=1e-13, points=bps[1:-1])[0]
    mp.mp.dps = 20
    C1, C2 = mp.mpf(c1), mp.mpf(c2)
    a0m = lambda t: (1 + t) ** -2 * mp.log(mp.e + t) ** -2  # noqa: E731
    z = C2 / C1

    def P(t):  # int_t^inf dr/f
        return sum((-z) ** j * t ** (-1 - 3 * j) / (1 + 3 * j) for j in range(8)) / C1

    R = mp.mpf(1000)
    G = A20 + mp.quad(lambda t: a0m(t) * (C1 * t * t + C2 / t), [20, 100, 1000])

    def outer(x):
        e = mp.exp(x)
        return a0m(e) * (C1 * e**2 + C2 / e) * P(e) * e

    L = mp.log(R)
    value = G * P(R) + mp.quad(lambda u: outer(L / u) * L / u**2, [0, 1e-4, 1e-2, 0.5, 1])
    print(mp.nstr(value, 17))


if __name__ == "__main__":
    main()
