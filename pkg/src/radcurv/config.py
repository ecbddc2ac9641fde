"""Run configuration: an INI-style file with fixed sections and keys.

Grammar (``#`` or ``;`` start comments)::

    [domain]      kind = cap | star; theta0 (radians) or theta0_deg; coefficients = a0, a1, b1, ...
    [curvature]   n = 2; r; mode = scalar | f; R (scalar mode); psi_tilde (f mode: number or
                  an expression in x, y, z)
    [boundary]    phi (constant) or phi_samples (nt values); subsolution = unit-sphere | file;
                  subsolution_file (CSV ``node,rho_bar``)
    [grid]        ns; nt; accuracy = 2 | 4
    [solver]      initial_step, max_step, min_step, grow, fast_newton, max_newton, rtol,
                  armijo, backtrack, alpha_min; fail_at, fail_stage (fault injection for
                  testing: line searches at that stage with param >= fail_at always fail)
    [output]      dir
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .continuation import SolverConfig
from .sphere_chart import DomainSpec
from .symfun import CurvatureSpec


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line else ""
        super().__init__(prefix + message)


SCHEMA = {
    "domain": {"kind", "theta0", "theta0_deg", "coefficients"},
    "curvature": {"n", "r", "mode", "R", "psi_tilde"},
    "boundary": {"phi", "phi_samples", "subsolution", "subsolution_file"},
    "grid": {"ns", "nt", "accuracy"},
    "solver": {"initial_step", "max_step", "min_step", "grow", "fast_newton", "max_newton",
               "rtol", "armijo", "backtrack", "alpha_min", "fail_at", "fail_stage"},
    "output": {"dir"},
}

_SOLVER_INT = {"fast_newton", "max_newton"}
_SOLVER_STR = {"fail_stage"}


@dataclass
class RunConfig:
    domain: DomainSpec
    spec: CurvatureSpec
    mode: str = "scalar"
    R: float | None = None
    psi_expr: str | None = None
    phi: float | None = 1.0
    phi_samples: tuple | None = None
    subsolution: str = "unit-sphere"
    subsolution_file: str | None = None
    ns: int = 33
    nt: int = 64
    accuracy: int = 2
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: str = "out"

    @property
    def psi_tilde(self) -> float | None:
        """Constant target on the f-scale, or None for an expression."""
        if self.mode == "scalar":
            n = self.spec.n
            return (self.R / (n * (n - 1))) ** (1.0 / self.spec.r)
        try:
            return float(self.psi_expr)
        except ValueError:
            return None

    def psi_tilde_field(self, points: np.ndarray) -> np.ndarray:
        const = self.psi_tilde
        if const is not None:
            return np.full(len(points), const)
        names = {k: getattr(np, k) for k in ("sin", "cos", "tan", "exp", "log", "sqrt", "pi",
                                              "arccos", "arcsin", "arctan", "abs")}
        names.update(x=points[:, 0], y=points[:, 1], z=points[:, 2])
        val = eval(self.psi_expr, {"__builtins__": {}}, names)  # noqa: S307 - restricted namespace
        out = np.broadcast_to(np.asarray(val, dtype=float), (len(points),)).copy()
        if np.any(out <= 0):
            raise ConfigError("psi_tilde must be positive everywhere")
        return out

    def with_grid(self, ns: int, nt: int) -> "RunConfig":
        return replace(self, ns=ns, nt=nt)


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[(.+)\]$", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section:
            k = re.split(r"[=:]", line, maxsplit=1)[0].strip()
            if k == key:
                return no
    return None


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc), getattr(exc, "lineno", None)) from exc

    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", _line_of(text, sec))
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", _line_of(text, sec, key))

    def get(sec, key, conv=str, default=...):
        if not cp.has_option(sec, key):
            if default is ...:
                raise ConfigError(f"missing required key {key!r} in [{sec}]", _line_of(text, sec))
            return default
        raw = cp.get(sec, key)
        try:
            return conv(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}", _line_of(text, sec, key)) from exc

    def floats(raw):
        return tuple(float(x) for x in raw.replace(",", " ").split())

    # domain
    kind = get("domain", "kind")
    try:
        if kind == "cap":
            if cp.has_option("domain", "theta0_deg"):
                theta0 = math.radians(get("domain", "theta0_deg", float))
            else:
                theta0 = get("domain", "theta0", float)
            domain = DomainSpec("cap", theta0=theta0)
        elif kind == "star":
            domain = DomainSpec("star", coefficients=get("domain", "coefficients", floats))
        else:
            raise ValueError(f"unknown domain kind {kind!r}")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), _line_of(text, "domain", "kind")) from exc

    # curvature
    n = get("curvature", "n", int, 2)
    r = get("curvature", "r", int, 2)
    try:
        spec = CurvatureSpec(n, r)
    except ValueError as exc:
        raise ConfigError(str(exc), _line_of(text, "curvature", "r")) from exc
    if n != 2:
        raise ConfigError("only n = 2 grids are supported", _line_of(text, "curvature", "n"))
    mode = get("curvature", "mode", str, "scalar")
    R = psi_expr = None
    if mode == "scalar":
        if r != 2:
            raise ConfigError("scalar-curvature mode needs r = 2", _line_of(text, "curvature", "r"))
        R = get("curvature", "R", float)
        if not 0.0 < R < n * (n - 1):
            raise ConfigError(f"scalar curvature must satisfy 0 < R < n(n-1) = {n * (n - 1)}, got {R}",
                              _line_of(text, "curvature", "R"))
    elif mode == "f":
        psi_expr = get("curvature", "psi_tilde")
        try:
            if float(psi_expr) <= 0:
                raise ConfigError("psi_tilde must be positive", _line_of(text, "curvature", "psi_tilde"))
        except ValueError:
            pass
    else:
        raise ConfigError(f"unknown mode {mode!r}", _line_of(text, "curvature", "mode"))

    # boundary
    phi_samples = get("boundary", "phi_samples", floats, None)
    phi = None if phi_samples is not None else get("boundary", "phi", float, 1.0)
    if phi is not None and phi <= 0:
        raise ConfigError("phi must be positive", _line_of(text, "boundary", "phi"))
    if phi_samples is not None and min(phi_samples) <= 0:
        raise ConfigError("phi samples must be positive", _line_of(text, "boundary", "phi_samples"))
    sub = get("boundary", "subsolution", str, "unit-sphere")
    if sub not in ("unit-sphere", "file"):
        raise ConfigError(f"unknown subsolution {sub!r}", _line_of(text, "boundary", "subsolution"))
    if sub == "unit-sphere" and phi != 1.0:
        raise ConfigError("the unit-sphere subsolution requires phi = 1 on the boundary",
                          _line_of(text, "boundary", "subsolution"))
    sub_file = get("boundary", "subsolution_file", str, None)
    if sub == "file" and sub_file is None:
        raise ConfigError("subsolution = file needs subsolution_file", _line_of(text, "boundary"))

    ns = get("grid", "ns", int, 33)
    nt = get("grid", "nt", int, 64)
    accuracy = get("grid", "accuracy", int, 2)
    if ns < 9 or nt < 16 or nt % 2 or accuracy not in (2, 4):
        raise ConfigError(f"invalid grid {ns}x{nt} (accuracy {accuracy})", _line_of(text, "grid"))
    if phi_samples is not None and len(phi_samples) != nt:
        raise ConfigError(f"expected {nt} phi samples, got {len(phi_samples)}",
                          _line_of(text, "boundary", "phi_samples"))

    solver = SolverConfig()
    if cp.has_section("solver"):
        kw = {k: get("solver", k, int if k in _SOLVER_INT else str if k in _SOLVER_STR else float)
              for k in cp["solver"]}
        solver = replace(solver, **kw)

    out = get("output", "dir", str, "out")
    return RunConfig(domain=domain, spec=spec, mode=mode, R=R, psi_expr=psi_expr, phi=phi,
                     phi_samples=phi_samples, subsolution=sub, subsolution_file=sub_file,
                     ns=ns, nt=nt, accuracy=accuracy, solver=solver, output_dir=out)


def serialize_config(cfg: RunConfig) -> str:
    lines = ["[domain]", f"kind = {cfg.domain.kind}"]
    if cfg.domain.kind == "cap":
        lines.append(f"theta0 = {cfg.domain.theta0!r}")
    else:
        lines.append("coefficients = " + ", ".join(repr(c) for c in cfg.domain.coefficients))
    lines += ["", "[curvature]", f"n = {cfg.spec.n}", f"r = {cfg.spec.r}", f"mode = {cfg.mode}"]
    lines.append(f"R = {cfg.R!r}" if cfg.mode == "scalar" else f"psi_tilde = {cfg.psi_expr}")
    lines += ["", "[boundary]"]
    if cfg.phi_samples is not None:
        lines.append("phi_samples = " + ", ".join(repr(p) for p in cfg.phi_samples))
    else:
        lines.append(f"phi = {cfg.phi!r}")
    lines.append(f"subsolution = {cfg.subsolution}")
    if cfg.subsolution_file is not None:
        lines.append(f"subsolution_file = {cfg.subsolution_file}")
    lines += ["", "[grid]", f"ns = {cfg.ns}", f"nt = {cfg.nt}", f"accuracy = {cfg.accuracy}",
              "", "[solver]"]
    for f in fields(SolverConfig):
        if f.name in SCHEMA["solver"] and getattr(cfg.solver, f.name) is not None:
            val = getattr(cfg.solver, f.name)
            lines.append(f"{f.name} = {val if isinstance(val, str) else repr(val)}")
    lines += ["", "[output]", f"dir = {cfg.output_dir}", ""]
    return "\n".join(lines)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
