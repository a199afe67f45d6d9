"""Batch front end: ``fmingraph <subcommand> [--config PATH] [--out DIR] ...``.

Exit codes: 0 when every verification passes, 2 when a verification fails,
1 on usage errors (bad config, violated preconditions, invalid parameters).
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SCHEMA, ConfigError, ExperimentConfig, parse_config, render_config, \
    render_manifest, with_overrides
from .errors import DomainError, IntegrationError, ParameterError, PreconditionError, QuadratureError, \
    SingularityError
from .io import digest, write_csv

SUBCOMMANDS = {
    "jacobi": "jacobi",
    "check": "assumptions",
    "barrier": "barrier-verify",
    "solve": "solve-ball",
    "exhaust": "exhaustion",
    "demo-nonuniqueness": "nonuniqueness",
}
EXIT_PASS, EXIT_USAGE, EXIT_FAIL = 0, 1, 2
_USAGE_ERRORS = (ConfigError, ParameterError, PreconditionError, DomainError, SingularityError,
                 QuadratureError, IntegrationError, ValueError)


@dataclass
class RunResult:
    code: int
    out_dir: Path
    lines: list[str] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)


class _Stage:
    """Remembers which module is running so errors can be labelled."""

    name = "cli"


def _model(cfg: ExperimentConfig):
    from .manifold import build_model

    _Stage.name = "model_manifold"
    return build_model(cfg.manifold, cfg.n, r_table=cfg.r_table, step=cfg.step)


def _drift(cfg: ExperimentConfig, M):
    from .drift import drift_from_name
    from .potential import weight_from_name

    _Stage.name = "drift"
    a0 = weight_from_name(cfg.a0)
    return drift_from_name(cfg.drift, M=M, a0=a0), a0


def _jacobi(cfg, out, res):
    M = _model(cfg)
    res.files.append(M.fa.to_csv(out / "jacobi_a.csv"))
    ok = True
    for label, tab in (("a", M.fa), ("b", M.fb)):
        if tab is None:
            res.lines.append(f"f_{label}: not tabulated (step too coarse for b)")
            continue
        if label == "b":
            res.files.append(tab.to_csv(out / "jacobi_b.csv"))
        fin = np.isfinite(tab.f)
        good = bool(np.all(tab.fp[fin] >= 1.0 - 1e-12) and np.all(tab.f[fin] >= tab.r[fin] * (1 - 1e-12)))
        ok &= good
        res.lines.append(f"f_{label}: {tab.r.size} rows on [0, {tab.r_max:g}], f' >= 1 and f >= r: {good}")
    return EXIT_PASS if ok else EXIT_FAIL


def _assumptions(cfg, out, res):
    from .drift import check_drift
    from .manifold import check_assumptions

    M = _model(cfg)
    rep = check_assumptions(M.profile, cfg.r_probe, n=cfg.n, model=M)
    D, a0 = _drift(cfg, M)
    drep = check_drift(D, M, a0, eps=cfg.eps, R_ball=cfg.R)
    names = [r.name for r in rep.results]
    res.files.append(write_csv(out / "assumptions.csv", ["name", "ok", "margin", "witness"],
                               [names, [r.ok for r in rep.results], [r.margin for r in rep.results],
                                [r.witness for r in rep.results]]))
    res.files.append(drep.to_csv(out / "drift.csv"))
    res.lines += rep.summary().splitlines() + drep.summary().splitlines()
    ok = rep.passed and rep.structure_ok and drep.passed
    return EXIT_PASS if ok else EXIT_FAIL


def _barrier(cfg, out, res):
    from .barriers import AngularCutoff, Region, admissible_delta, build_global_V, build_height_barrier, \
        find_R3, verify_supersolution

    M = _model(cfg)
    D, a0 = _drift(cfg, M)
    _Stage.name = "barriers"
    extra_ok = True
    if cfg.barrier == "global_V":
        V = build_global_V(M, a0, cfg.phi_sup)
        rep = verify_supersolution(V, D, M, Region(0.0, cfg.r_max, label="ball"), (cfg.n_check, 1))
        pt = V.extra
        decreasing = bool(np.all(np.diff(V.value) < 0))
        excess = float(V(np.array([cfg.r_max]))[0]) - cfg.phi_sup
        extra_ok = decreasing
        res.lines.append(f"V(0)={float(V(np.array([0.0]))[0]):.17g} strictly decreasing={decreasing}")
        res.lines.append(f"V({cfg.r_max:g}) - phi_sup = {excess:.17g}")
        res.lines.append(f"H = {pt.H:.17g} (ladder converged: {pt.H_converged})")
        res.files.append(V.to_csv(out / "V.csv"))
    elif cfg.barrier == "height":
        A = 2.0 * cfg.R if cfg.A is None else cfg.A
        r = np.linspace(0.0, A / 2.0, 1025)
        F_sup = float(np.max(D.F_effective(r)))
        B = build_height_barrier(A, F_sup, cfg.phi_sup, C=cfg.C)
        rep = verify_supersolution(B, D, M, Region(0.0, A / 2.0, label="ball"), (cfg.n_check, 1))
        res.lines.append(f"height bound h(A) = {B.params['bound']:.17g} with A={A:g}, C={B.params['C']:g}, "
                         f"F_sup={F_sup:.6g}")
    else:
        delta = admissible_delta(M, cfg.eps) / 2.0 if cfg.delta is None else cfg.delta
        A = 2.0 * cfg.phi_sup if cfg.A is None else cfg.A
        search = find_R3(M, D, A, delta, cutoff=AngularCutoff(cfg.L), eps=cfg.eps)
        res.lines.append(f"find_R3 tried {len(search.tried)} radii; R3 = {search.R3}")
        if not search.found:
            return EXIT_FAIL
        rep = search.reports[-1]
    res.lines += rep.verdict_block().splitlines()
    res.files.append(rep.to_csv(out / "barrier.csv"))
    return EXIT_PASS if (rep.verdict and extra_ok) else EXIT_FAIL


def _solve(cfg, out, res):
    from .asymptotic import boundary_from_name
    from .solver import PolarGrid, gradient_sup, solve_dirichlet_ball, solve_radial

    M = _model(cfg)
    D, _ = _drift(cfg, M)
    phi = boundary_from_name(cfg.phi)
    _Stage.name = "solver"
    if cfg.n == 2:
        grid = PolarGrid.build(M, cfg.R, cfg.n_r, cfg.n_theta)
        o = solve_dirichlet_ball(phi, D, M, grid, cfg.init, tol=cfg.tol, max_iter=cfg.max_iter,
                                 override=cfg.override, bump_amp=cfg.bump_amp)
        res.files.append(o.u.to_csv(out / "solution.csv"))
        gs = gradient_sup(o.u)
        res.lines.append(f"sup|u| = {float(np.max(np.abs(o.u.values))):.17g}; sup|grad u| = {gs.sup:.17g}")
    else:
        vals = phi(np.linspace(0, 2 * math.pi, 64, endpoint=False))
        if np.ptp(vals) > 0:
            raise ParameterError("n > 2 runs the radial solver, which needs constant boundary data")
        if cfg.init == "harmonic":
            raise ParameterError("the radial solver supports init zero, bump+ and bump-")
        o = solve_radial(float(vals[0]), D, M, cfg.R, cfg.n_r, cfg.init, tol=cfg.tol,
                         max_iter=cfg.max_iter, override=cfg.override, bump_amp=cfg.bump_amp)
        res.files.append(write_csv(out / "solution.csv", ["r", "u"], [o.r, o.profile]))
    res.files.append(write_csv(out / "residuals.csv", ["iteration", "residual"],
                               [np.arange(len(o.history)), o.history]))
    res.lines.append(f"converged={o.converged} iterations={o.iterations} damping={o.damping_events} "
                     f"u(o)={o.u_origin:.17g} residual={o.residual_norm:.3e} {o.message}")
    if o.flags:
        res.lines.append("flags: " + ", ".join(o.flags))
    return EXIT_PASS if o.converged else EXIT_FAIL


def _exhaust(cfg, out, res):
    from .asymptotic import AsymptoticProblem, boundary_attainment, boundary_from_name, export_exhaustion, \
        run_exhaustion, verify_sandwich

    M = _model(cfg)
    D, a0 = _drift(cfg, M)
    _Stage.name = "asymptotic"
    P = AsymptoticProblem(M, D, boundary_from_name(cfg.phi_inf), tuple(cfg.radii), cfg.dr, cfg.exhaust_n_theta,
                          a0, cfg.eps, cfg.tol)
    result = run_exhaustion(P, override=cfg.override)
    att = boundary_attainment(result)
    sandwich = None
    if result.complete:
        try:
            sandwich = verify_sandwich(result, cfg.theta0, cfg.sandwich_eps)
        except IntegrationError as exc:
            res.lines.append(f"sandwich: not run ({exc})")
    res.files += export_exhaustion(result, out, sandwich=sandwich, attainment=att)
    for R, o in zip(result.radii, result.outcomes):
        res.lines.append(f"R={R:g}: converged={o.converged} iterations={o.iterations} u(o)={o.u_origin:.17g}")
    res.lines.append("gaps: " + " ".join(f"{g:.6e}" for g in result.gaps))
    res.lines.append(f"sup|u_k| <= sup V ({result.V_sup:.6g}): {result.V_bound_ok}")
    res.lines.append(f"attainment score at R={att.radii[-1]:g}: {att.score:.6e}")
    if sandwich is not None:
        res.lines.append(f"sandwich theta0={sandwich.theta0:g} eps={sandwich.eps:g} R3={sandwich.R3:.6g}: "
                         f"nodes={sandwich.nodes} worst={sandwich.worst:.6g} holds={sandwich.holds}"
                         + (" (vacuous: no grid node beyond R3)" if sandwich.vacuous else ""))
    if result.flags:
        res.lines.append("flags: " + ", ".join(result.flags))
    ok = result.complete and result.V_bound_ok and (sandwich is None or sandwich.holds)
    return EXIT_PASS if ok else EXIT_FAIL


def _nonuniqueness(cfg, out, res):
    from .asymptotic import nonuniqueness_demo

    _Stage.name = "solver"
    rep = nonuniqueness_demo(cfg.n_r, cfg.n_theta, tol=cfg.tol, bump_amp=cfg.bump_amp)
    names = {"bump+": "solution_upper.csv", "bump-": "solution_lower.csv", "zero": "solution_disk.csv"}
    for k, o in rep.outcomes.items():
        res.files.append(o.u.to_csv(out / names[k]))
    res.lines += rep.summary().splitlines()
    ok = all(o.converged for o in rep.outcomes.values()) and rep.separated
    return EXIT_PASS if ok else EXIT_FAIL


_DISPATCH = {
    "jacobi": _jacobi,
    "assumptions": _assumptions,
    "barrier-verify": _barrier,
    "solve-ball": _solve,
    "exhaustion": _exhaust,
    "nonuniqueness": _nonuniqueness,
}


def run(cfg: ExperimentConfig, out_dir: Path | str | None = None, *, stream=None) -> RunResult:
    """Run one experiment, writing CSVs, report.txt and manifest.txt into the output directory."""
    stream = sys.stdout if stream is None else stream
    out = Path(cfg.output if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = RunResult(EXIT_PASS, out)
    _Stage.name = "cli"
    try:
        res.code = _DISPATCH[cfg.experiment](cfg, out, res)
    except _USAGE_ERRORS as exc:
        res.code = EXIT_USAGE
        res.lines.append(f"error [{_Stage.name}]: {exc}")
    verdict = {EXIT_PASS: "PASS", EXIT_FAIL: "FAIL (verification)", EXIT_USAGE: "ERROR (usage)"}[res.code]
    res.lines.append(f"result: {verdict}, exit {res.code}")
    (out / "report.txt").write_text("\n".join(res.lines) + "\n", encoding="utf-8")
    text = render_config(cfg)
    (out / "manifest.txt").write_text(render_manifest(cfg, res.lines, digest(text)), encoding="utf-8")
    for line in res.lines:
        print(line, file=stream)
    return res


_GRID_RE = re.compile(r"^(\d+)x(\d+)$")


def _parse_set(items: list[str]) -> dict:
    """KEY=VALUE overrides, parsed with the config-file value parsers."""
    vals, errs = {}, []
    for item in items:
        key, sep, raw = item.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or key not in SCHEMA:
            errs.append(f"--set {item!r}: unknown key or missing '='")
            continue
        try:
            vals[key] = SCHEMA[key][1](raw)
        except ValueError as exc:
            errs.append(f"--set {item!r}: {exc}")
    if errs:
        raise ConfigError(errs)
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fmingraph", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMANDS.items():
        s = sub.add_parser(name, help=f"run the {kind} experiment")
        s.add_argument("--config", type=Path, help="experiment config file (key = value with [sections])")
        s.add_argument("--out", type=Path, help="output directory (overrides 'output')")
        s.add_argument("--grid", help="polar grid NRxNT, e.g. 256x128")
        s.add_argument("--tol", type=float, help="Newton residual tolerance")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
    return p


def config_for(args: argparse.Namespace) -> ExperimentConfig:
    kind = SUBCOMMANDS[args.command]
    if args.config is not None:
        cfg = parse_config(args.config.read_text(encoding="utf-8"))
    else:
        cfg = parse_config(f"experiment = {kind}\nmanifold = euclidean\n")
    over = _parse_set(args.set)
    over["experiment"] = kind
    if args.grid is not None:
        m = _GRID_RE.match(args.grid)
        if not m:
            raise ConfigError([f"--grid {args.grid!r}: expected NRxNT such as 64x32"])
        over["n_r"], over["n_theta"] = int(m.group(1)), int(m.group(2))
    if args.tol is not None:
        over["tol"] = args.tol
    if args.out is not None:
        over["output"] = str(args.out)
    return with_overrides(cfg, **over)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_for(args)
    except (ConfigError, OSError) as exc:
        for line in getattr(exc, "errors", [str(exc)]):
            print(f"error [config]: {line}", file=sys.stderr)
        return EXIT_USAGE
    return run(cfg).code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
