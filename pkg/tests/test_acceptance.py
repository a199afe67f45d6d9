"""Acceptance criteria 1-8: one PASS/FAIL line per clause, printed in the
terminal summary. Tolerances are the stated ones; nothing is loosened."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from fmingraph.asymptotic import (AsymptoticProblem, BoundaryData, boundary_attainment, hemisphere,
                                  nonuniqueness_demo, run_exhaustion, verify_sandwich)
from fmingraph.audits import FourierData, comparison_audit, estimate_audit
from fmingraph.barriers import (AngularCutoff, Region, admissible_delta, build_asymptotic_psi, build_global_V,
                                find_R3, psi_region, verify_supersolution)
from fmingraph.drift import (bounded_drift, check_drift, check_f1, check_f2, f1_fraction_drift, radial_drift,
                             selfshrinker_drift, zero_drift)
from fmingraph.errors import ParameterError
from fmingraph.manifold import build_model, check_assumptions, custom_profile, solve_jacobi
from fmingraph.potential import capped_weight, decay_weight
from fmingraph.solver import PolarGrid, residual_vector, solve_dirichlet_ball


class Clauses:
    def __init__(self, criterion: int):
        self.criterion = criterion
        self.failed: list[str] = []

    def check(self, clause: str, ok: bool, detail: str) -> None:
        line = f"criterion {self.criterion} | {clause}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        if not ok:
            self.failed.append(clause)

    def finish(self) -> None:
        assert not self.failed, f"criterion {self.criterion} failed clauses: {self.failed}"


def test_criterion_1_jacobi_oracle():
    c = Clauses(1)
    t0 = time.perf_counter()
    sol = solve_jacobi(lambda t: 1.0 + 0.0 * t, 5.0, 1e-3)
    elapsed = time.perf_counter() - t0
    rel = float(np.max(np.abs(sol.f[1:] / np.sinh(sol.r[1:]) - 1.0)))
    c.check("rel error vs sinh < 1e-9 at step 1e-3", rel < 1e-9, f"{rel:.3e}")
    errs = []
    for h in (0.1, 0.05):
        s = solve_jacobi(lambda t: 1.0 + 0.0 * t, 5.0, h)
        errs.append(float(np.max(np.abs(s.f[1:] / np.sinh(s.r[1:]) - 1.0))))
    ratio = errs[0] / errs[1]
    # at h = 1e-3 the error sits at roundoff, so the order is read off at h = 0.1 -> 0.05
    c.check("halving step divides error by a factor in [14, 18]", 14 <= ratio <= 18,
            f"h=0.1->0.05 ratio {ratio:.2f}")
    c.check("runtime < 1 s", elapsed < 1.0, f"{elapsed:.3f} s")
    c.finish()


def test_criterion_2_nonuniqueness():
    c = Clauses(2)
    t0 = time.perf_counter()
    rep = nonuniqueness_demo(256, 128, tol=1e-10)
    targets = {"bump+": 2.0, "bump-": -2.0, "zero": 0.0}
    for k, target in targets.items():
        o = rep.outcomes[k]
        c.check(f"init {k} converges with u(o) ~ {target:+g}",
                o.converged and abs(o.u_origin - target) < 0.02, f"u(o)={o.u_origin:.6f}")
        c.check(f"init {k} sup error vs analytic < 0.02 on 256x128", rep.errors[k] < 0.02,
                f"{rep.errors[k]:.4f}")
    # residual order of the analytic upper hemisphere, away from the rim where |grad u| blows up
    M = build_model("euclidean", 2)
    D = selfshrinker_drift()
    norms = []
    for n_r in (64, 128, 256):
        g = PolarGrid.build(M, 2.0, n_r, 128)
        res = residual_vector(g.sample(hemisphere(1.0)), D, g, np.zeros(128))
        inner = g.r[1:-1] <= 1.5
        body = res[1:1 + (n_r - 1) * 128].reshape(n_r - 1, 128)[inner]
        norms.append(max(abs(res[0]), float(np.max(np.abs(body)))))
    orders = np.log2(np.array(norms[:-1]) / np.array(norms[1:]))
    c.check("residual order 2.0 +- 0.2 under refinement (r <= 1.5)", bool(np.all(np.abs(orders - 2) <= 0.2)),
            "orders " + ", ".join(f"{o:.3f}" for o in orders))
    elapsed = time.perf_counter() - t0
    c.check("runtime < 2 min", elapsed < 120, f"{elapsed:.1f} s")
    c.finish()


def test_criterion_3_barrier_V():
    c = Clauses(3)
    t0 = time.perf_counter()
    M = build_model("power(2,0.5)", 2)
    a0 = decay_weight()
    V = build_global_V(M, a0, 1.0)
    D = f1_fraction_drift(M, a0, 0.5, first_only=True)
    rep = verify_supersolution(V, D, M, Region(0.0, 1e3), (2000, 1))
    c.check("Q~[V] <= 0 at every node up to r = 1e3 (margin > 0)", rep.verdict,
            f"worst margin {rep.worst_margin:.3e} at r={rep.worst_r:g}")
    dec = bool(np.all(np.diff(V.value) < 0))
    c.check("V strictly decreasing", dec, f"{V.value.size} nodes")
    excess = float(V(np.array([1e3]))[0]) - 1.0
    c.check("V(1e3) - sup|phi| < 1e-3", excess < 1e-3, f"{excess:.6e}; independent oracle 0.17678553692166509")
    elapsed = time.perf_counter() - t0
    c.check("runtime < 10 s", elapsed < 10, f"{elapsed:.2f} s")
    c.finish()


def test_criterion_4_barrier_psi():
    c = Clauses(4)
    t0 = time.perf_counter()
    M = build_model("power(2,0.5)", 2)
    delta = admissible_delta(M, 0.5) / 2.0
    search = find_R3(M, zero_drift(), 2.0, delta)
    c.check("find_R3 returns a finite radius", search.found, f"R3={search.R3}")
    psi = build_asymptotic_psi(M, 2.0, delta, search.R3, AngularCutoff())
    reg = psi_region(search.R3, psi.cutoff)
    a = verify_supersolution(psi, zero_drift(), M, reg, (160, 121))
    b = verify_supersolution(psi, zero_drift(), M, reg, (320, 241))
    c.check("verify_supersolution passes on the 3-cone minus closed B(o,R3)", a.verdict and b.verdict,
            f"margins {a.worst_margin:.4e} / {b.worst_margin:.4e}")
    drift = abs(b.worst_margin - a.worst_margin) / abs(a.worst_margin)
    c.check("grid-refinement margin drift < 10%", drift < 0.1, f"{100 * drift:.3f}%")
    elapsed = time.perf_counter() - t0
    c.check("runtime < 30 s", elapsed < 30, f"{elapsed:.2f} s")
    c.finish()


def test_criterion_5_exhaustion():
    c = Clauses(5)
    t0 = time.perf_counter()
    M = build_model("power(2,0.5)", 2)
    P = AsymptoticProblem(M, zero_drift(), BoundaryData.cosine(), (4.0, 8.0, 16.0, 32.0, 64.0))
    res = run_exhaustion(P)
    gaps = np.array(res.gaps)
    c.check("Cauchy gaps on B(o,2) decrease", bool(np.all(np.diff(gaps) < 0)),
            " ".join(f"{g:.4e}" for g in gaps))
    c.check("final Cauchy gap < 1e-3", gaps[-1] < 1e-3, f"{gaps[-1]:.4e}")
    c.check("sup|u_k| <= sup V for all k", res.V_bound_ok and max(res.sup_norms) <= res.V_sup,
            f"max sup|u_k|={max(res.sup_norms):.6g}, sup V={res.V_sup:.6g}")
    att = boundary_attainment(res)
    c.check("boundary-attainment score < 0.05 at final radius", att.score < 0.05,
            f"{att.score:.4e} at R={att.radii[-1]:g}")
    sw = verify_sandwich(res, 0.0, 0.1)
    c.check("sandwich holds at theta0=0, eps=0.1 within 10 tol", sw.holds,
            f"R3={sw.R3:.4g}, nodes={sw.nodes}, worst={sw.worst:.4g}" + (", vacuous" if sw.vacuous else ""))
    elapsed = time.perf_counter() - t0
    c.check("runtime < 15 min", elapsed < 900, f"{elapsed:.1f} s")
    c.finish()


AUDIT_MODELS = ("euclidean", "hyperbolic(1)", "power(2,0.5)", "exp(1,0.5)")
AUDIT_DRIFTS = ((0.0, 1.0), (0.1, 3.0), (0.3, 1.0))
AUDIT_DATA = (FourierData(0.0, (1.0,), (0.0,)), FourierData(0.5), FourierData(0.2, (0.5, 0.1), (0.0, -0.3)))


def test_criterion_6_estimate_audits():
    c = Clauses(6)
    tol = 1e-10
    audits = []
    for man in AUDIT_MODELS:
        M = build_model(man, 2)
        g = PolarGrid.build(M, 1.0, 32, 32)
        for cc, p in AUDIT_DRIFTS:
            D = bounded_drift(cc, p)
            for phi in AUDIT_DATA:
                o = solve_dirichlet_ball(phi, D, M, g, "zero", tol=tol)
                if o.converged:
                    audits.append(estimate_audit(o, D, M, phi, tol=tol, label=f"{man}/{D.name}"))
    total = len(AUDIT_MODELS) * len(AUDIT_DRIFTS) * len(AUDIT_DATA)
    c.check("all bounded-drift fixtures converge", len(audits) == total, f"{len(audits)}/{total}")
    hm = min(a.height_margin for a in audits)
    c.check("sup|u| <= sup|phi| + h(A) node-wise (10 tol)", hm >= -10 * tol, f"min margin {hm:.4g}")
    gm = min(a.grad_margin for a in audits)
    worst = min(audits, key=lambda a: a.grad_margin)
    c.check("boundary |grad u| <= psi'(0) + sup|grad phi~| (10 tol)", gm >= -10 * tol,
            f"tightest: {worst.label} grad {worst.grad_boundary:.4g} vs bound {worst.grad_bound:.4g}")
    c.finish()


def test_criterion_7_comparison_audit():
    c = Clauses(7)
    M = build_model("power(2,0.5)", 2)
    for D in (zero_drift(), bounded_drift(0.1, 3)):
        res = comparison_audit(M, D, n_pairs=20)
        c.check(f"20 ordered pairs give ordered solutions, drift {D.name}", res.ok,
                f"worst violation {res.worst:.3e}, all converged={all(p.converged for p in res.pairs)}")
    c.finish()


def test_criterion_8_assumption_checkers():
    c = Clauses(8)
    fixture = bounded_drift(0.1, 3)
    a0 = capped_weight()
    for preset in ("power(2,0.5)", "exp(1,0.5)"):
        rep = check_assumptions(preset)
        M = build_model(preset, 2)
        drep = check_drift(fixture, M, a0, eps=0.5, R_ball=64)
        c.check(f"{preset} passes A1-A7", rep.passed and rep.structure_ok,
                ", ".join(r.name for r in rep.results if not r.ok) or "all pass")
        c.check(f"{preset} passes f1 and f2 with {fixture.name}", drep.f1_ok and drep.f2_ok,
                f"f1 margin {drep.f1_margin:.3e}, Psi={drep.f2.final:.3e}")
    flat = check_assumptions(custom_profile(lambda t: 0.0 * t, lambda t: 0.0 * t, name="flat"), 1e6)
    c.check("violator a = b = 0 fails A5 (b vanishes)", (not flat["A5"].ok) and "b vanishes" in flat["A5"].detail,
            flat["A5"].detail)
    P = build_model("power(2,0.5)", 2)
    twice = radial_drift("2ratio", lambda r: 2.0 * P.ratio(np.maximum(r, 1e-12)))
    f1 = check_f1(twice, P, decay_weight())
    every = bool(np.all((np.minimum(f1.first, f1.second) - f1.F)[1:] < 0))
    c.check("violator F = 2(n-1) f'/f fails f1 at every r > 0", (not f1.ok) and every, f"margin {f1.margin:.3g}")
    H = build_model("hyperbolic(1)", 2)
    inv = radial_drift("1/r", lambda r: 1.0 / np.asarray(r, dtype=float))
    f2 = check_f2(inv, H, 0.5)
    c.check("violator hyperbolic F = 1/r fails f2 (Psi grows)", (not f2.ok) and not f2.decreasing,
            f"Psi(r_probe)={f2.final:.3g}")
    try:
        check_assumptions("power(2,0.5)", 1.0)
        msg = ""
    except ParameterError as exc:
        msg = str(exc)
    c.check("r_probe < T1 rejected", msg == "probe window precedes asymptotic regime", msg)
    c.finish()
