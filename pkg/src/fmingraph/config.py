"""Experiment configuration: an INI-like key = value format.

Every key lives in exactly one section, so a file without section headers is
also accepted. Parsing collects every problem before failing, and the
emitted manifest parses back to the same configuration.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields, replace
from typing import Any, Callable

from .errors import ParameterError

KINDS = ("jacobi", "assumptions", "barrier-verify", "solve-ball", "exhaustion", "nonuniqueness")
INITS = ("zero", "harmonic", "bump+", "bump-")
BARRIERS = ("global_V", "height", "psi")


class ConfigError(ValueError):
    """All problems found in a configuration text."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _float(s: str) -> float:
    v = float(s)
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


def _int(s: str) -> int:
    return int(s, 10)


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(_float(x) for x in s.split(",") if x.strip())


def _choice(options):
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


def _text(s: str) -> str:
    if not s:
        raise ValueError("empty value")
    return s


def _opt_float(s: str) -> float | None:
    return None if s.lower() in ("auto", "none", "") else _float(s)


# key -> (section, parser, default)
SCHEMA: dict[str, tuple[str, Callable[[str], Any], Any]] = {
    "experiment": ("experiment", _choice(KINDS), None),
    "output": ("experiment", _text, "out"),
    "manifold": ("model", _text, None),
    "n": ("model", _int, 2),
    "step": ("model", _float, 1e-3),
    "r_table": ("model", _opt_float, None),
    "r_probe": ("model", _float, 1e40),
    "drift": ("drift", _text, "zero"),
    "a0": ("drift", _text, "decay(2,2)"),
    "eps": ("drift", _float, 0.5),
    "R": ("grid", _float, 2.0),
    "n_r": ("grid", _int, 64),
    "n_theta": ("grid", _int, 32),
    "tol": ("solve", _float, 1e-10),
    "init": ("solve", _choice(INITS), "zero"),
    "phi": ("solve", _text, "0"),
    "override": ("solve", _bool, False),
    "bump_amp": ("solve", _float, 0.5),
    "max_iter": ("solve", _int, 60),
    "barrier": ("barrier", _choice(BARRIERS), "global_V"),
    "delta": ("barrier", _opt_float, None),
    "L": ("barrier", _float, 3.0),
    "A": ("barrier", _opt_float, None),
    "C": ("barrier", _opt_float, None),
    "phi_sup": ("barrier", _float, 1.0),
    "r_max": ("barrier", _float, 1e3),
    "n_check": ("barrier", _int, 2000),
    "radii": ("exhaust", _floats, (4.0, 8.0, 16.0, 32.0, 64.0)),
    "dr": ("exhaust", _float, 0.25),
    "exhaust_n_theta": ("exhaust", _int, 64),
    "phi_inf": ("exhaust", _text, "cos(1)"),
    "theta0": ("exhaust", _opt_float, None),
    "sandwich_eps": ("exhaust", _float, 0.1),
}
SECTIONS = ("experiment", "model", "drift", "grid", "solve", "barrier", "exhaust")
REQUIRED = ("experiment", "manifold")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    manifold: str
    output: str = "out"
    n: int = 2
    step: float = 1e-3
    r_table: float | None = None
    r_probe: float = 1e40
    drift: str = "zero"
    a0: str = "decay(2,2)"
    eps: float = 0.5
    R: float = 2.0
    n_r: int = 64
    n_theta: int = 32
    tol: float = 1e-10
    init: str = "zero"
    phi: str = "0"
    override: bool = False
    bump_amp: float = 0.5
    max_iter: int = 60
    barrier: str = "global_V"
    delta: float | None = None
    L: float = 3.0
    A: float | None = None
    C: float | None = None
    phi_sup: float = 1.0
    r_max: float = 1e3
    n_check: int = 2000
    radii: tuple[float, ...] = (4.0, 8.0, 16.0, 32.0, 64.0)
    dr: float = 0.25
    exhaust_n_theta: int = 64
    phi_inf: str = "cos(1)"
    theta0: float | None = None
    sandwich_eps: float = 0.1


def _render(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, tuple):
        return ",".join(format(float(x), ".17g") for x in v)
    return str(v)


def _validate(cfg: ExperimentConfig) -> list[str]:
    from .manifold import profile_from_name

    errs = []
    if cfg.n < 2:
        errs.append("n must be >= 2")
    if cfg.step <= 0:
        errs.append("step must be positive")
    if cfg.R <= 0:
        errs.append("R must be positive")
    if cfg.n_r < 2 or cfg.n_theta < 4:
        errs.append("grid needs n_r >= 2 and n_theta >= 4")
    if cfg.tol <= 0:
        errs.append("tol must be positive")
    if cfg.eps <= 0:
        errs.append("eps must be positive")
    if cfg.L <= 8.0 / math.pi:
        errs.append(f"L must exceed 8/pi = {8 / math.pi:.6g}")
    if cfg.exhaust_n_theta < 4:
        errs.append("exhaust_n_theta must be >= 4")
    if cfg.dr <= 0:
        errs.append("dr must be positive")
    if any(b <= a for a, b in zip(cfg.radii, cfg.radii[1:])) or any(r <= 0 for r in cfg.radii):
        errs.append("radii must be positive and strictly increasing")
    try:
        prof = profile_from_name(cfg.manifold)
    except (ParameterError, ValueError) as exc:
        errs.append(f"manifold: {exc}")
        prof = None
    if cfg.delta is not None and prof is not None:
        d1 = prof.delta1(cfg.n)
        top = min(d1, cfg.eps)
        if not 0 < cfg.delta < top:
            errs.append(f"delta must lie in (0, min(delta1, eps)) = (0, {top:.6g}); delta1 = {d1:.6g}")
    if cfg.experiment in ("exhaustion", "nonuniqueness") and cfg.n != 2:
        errs.append(f"experiment {cfg.experiment} needs n = 2")
    return errs


_SECTION_RE = re.compile(r"^\[\s*([A-Za-z_][\w-]*)\s*\]$")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing every problem."""
    errors: list[str] = []
    seen: dict[str, int] = {}
    values: dict[str, Any] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1)
            if section not in SECTIONS:
                errors.append(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key = value")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        home, parser, _ = SCHEMA[key]
        if section is not None and section in SECTIONS and section != home:
            errors.append(f"line {lineno}: key {key!r} belongs in section [{home}], not [{section}]")
            continue
        if key in seen:
            errors.append(f"duplicate key {key!r} at lines {seen[key]} and {lineno}")
            continue
        seen[key] = lineno
        try:
            values[key] = parser(val)
        except ValueError as exc:
            errors.append(f"line {lineno}: bad value for {key!r}: {exc}")
    for key in REQUIRED:
        if key not in seen:
            errors.append(f"missing required key {key!r} (section [{SCHEMA[key][0]}])")
    if errors:
        raise ConfigError(errors)
    cfg = ExperimentConfig(**values)
    errors = _validate(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    new = replace(cfg, **{k: v for k, v in kw.items() if v is not None})
    errs = _validate(new)
    if errs:
        raise ConfigError(errs)
    return new


def render_config(cfg: ExperimentConfig) -> str:
    """Full resolved configuration in the input syntax (every key present)."""
    by_section: dict[str, list[str]] = {s: [] for s in SECTIONS}
    for f in fields(cfg):
        by_section[SCHEMA[f.name][0]].append(f"{f.name} = {_render(getattr(cfg, f.name))}")
    parts = []
    for s in SECTIONS:
        parts.append(f"[{s}]")
        parts.extend(by_section[s])
        parts.append("")
    return "\n".join(parts)


def render_manifest(cfg: ExperimentConfig, results: list[str], digest: str) -> str:
    head = ["# fmingraph run manifest", f"# config sha256 {digest}"]
    tail = [f"# {line}" for line in results]
    return "\n".join(head) + "\n" + render_config(cfg) + "\n".join(tail) + ("\n" if tail else "")
