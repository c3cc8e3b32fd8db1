"""Command-line front end.

    mimetic-darcy <command> [--config FILE] [--key=value ...] [--out DIR]

Commands are ``solve``, ``convergence`` and ``layered``. The config file is
flat ``key = value`` text (``#`` starts a comment); command-line flags win.
Exit codes: 0 success, 1 numerical or modeling failure, 2 config error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MimeticError
from .mesh import reconstruct
from .problem import QuadratureSettings
from .quadrature import gll_points
from .solver import velocity_from_flux
from .verification import (
    CaseResult,
    ConvergenceReport,
    ConvergenceRow,
    convergence_study,
    layered_case,
    manufactured_case,
    run_case,
)

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

COMMANDS = ("solve", "convergence", "layered")
SIDES = ("left", "right", "bottom", "top")
FIELD_NAMES = ("pressure", "qx", "qy", "ux", "uy", "divergence")
REPORT_HEADER = ["case", "mode", "M", "N", "dofs", "p_l2_error", "q_l2_error", "observed_rate"]
MANUFACTURED_DOMAIN = (-1.0, 1.0, -1.0, 1.0)
UNIT_SQUARE = (0.0, 1.0, 0.0, 1.0)


class ConfigError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


@dataclass
class RunConfig:
    command: str = "solve"
    case: str | None = None
    domain: tuple[float, float, float, float] | None = None
    elements_x: int | None = None
    elements_y: int | None = None
    degree: int | None = None
    mode: str = "h"
    degrees: list[int] | None = None
    elements: list[int] | None = None
    mass_points: int | None = None
    source_points: int | None = None
    darcy_sign: str = "paper"
    bc_left: str | None = None
    bc_right: str | None = None
    bc_bottom: str | None = None
    bc_top: str | None = None
    sample_points: int | None = None
    fields: list[str] | None = None
    out: str = "out"

    @property
    def boundary(self) -> dict[str, str]:
        return {s: getattr(self, f"bc_{s}") for s in SIDES if getattr(self, f"bc_{s}") is not None}

    @property
    def quadrature(self) -> QuadratureSettings:
        return QuadratureSettings(self.mass_points, self.source_points)


def _int(key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {raw!r}") from None


def _int_list(key, raw):
    parts = [p for p in str(raw).replace(" ", "").split(",") if p]
    out = []
    for p in parts:
        if ".." in p:
            lo, hi = p.split("..", 1)
            out.extend(range(_int(key, lo), _int(key, hi) + 1))
        else:
            out.append(_int(key, p))
    if not out:
        raise ConfigError(key, "expected a nonempty integer list")
    return out


def _domain(key, raw):
    parts = [p for p in str(raw).replace(" ", "").split(",") if p]
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(key, f"expected 'x_min,x_max,y_min,y_max', got {raw!r}") from None
    if len(vals) != 4:
        raise ConfigError(key, f"expected 4 numbers, got {len(vals)}")
    return vals


def _str_list(key, raw):
    return [p for p in str(raw).replace(" ", "").split(",") if p]


PARSERS = {
    "command": lambda k, v: str(v),
    "case": lambda k, v: str(v),
    "domain": _domain,
    "elements_x": _int,
    "elements_y": _int,
    "degree": _int,
    "mode": lambda k, v: str(v),
    "degrees": _int_list,
    "elements": _int_list,
    "mass_points": _int,
    "source_points": _int,
    "darcy_sign": lambda k, v: str(v),
    "bc_left": lambda k, v: str(v),
    "bc_right": lambda k, v: str(v),
    "bc_bottom": lambda k, v: str(v),
    "bc_top": lambda k, v: str(v),
    "sample_points": _int,
    "fields": _str_list,
    "out": lambda k, v: str(v),
}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse flat ``key = value`` text; raises OSError if unreadable."""
    values: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply(values: dict[str, str]) -> RunConfig:
    cfg = RunConfig()
    for key, raw in values.items():
        if key not in PARSERS:
            raise ConfigError(key, "unknown key")
        setattr(cfg, key, PARSERS[key](key, raw))
    return cfg


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(key, message)


def validate(cfg: RunConfig) -> RunConfig:
    """Check every parameter and fill in per-command defaults."""
    _require(cfg.command in COMMANDS, "command", f"must be one of {', '.join(COMMANDS)}")
    if cfg.case is None:
        cfg.case = "layered" if cfg.command == "layered" else "manufactured"
    _require(cfg.case in ("manufactured", "layered"), "case", "must be 'manufactured' or 'layered'")
    _require(cfg.command != "layered" or cfg.case == "layered", "case", "the layered command runs the layered case")
    _require(cfg.darcy_sign in ("paper", "physical"), "darcy_sign", "must be 'paper' or 'physical'")
    _require(cfg.mode in ("h", "p"), "mode", "must be 'h' or 'p'")
    for side in SIDES:
        bc = getattr(cfg, f"bc_{side}")
        _require(bc in (None, "flux", "pressure"), f"bc_{side}", "must be 'flux' or 'pressure'")

    layered = cfg.case == "layered"
    if cfg.domain is None:
        cfg.domain = UNIT_SQUARE if layered else MANUFACTURED_DOMAIN
    x0, x1, y0, y1 = cfg.domain
    _require(x0 < x1 and y0 < y1, "domain", "needs x_min < x_max and y_min < y_max")
    _require(not layered or cfg.domain == UNIT_SQUARE, "domain", "the layered case is defined on the unit square")

    if cfg.command == "convergence":
        if cfg.degrees is None:
            cfg.degrees = [1, 2, 3] if cfg.mode == "h" else list(range(2, 11))
        if cfg.elements is None:
            cfg.elements = [2, 4, 8, 16] if cfg.mode == "h" else [2]
        _require(all(n >= 1 for n in cfg.degrees), "degrees", "every degree must be >= 1")
        _require(all(m >= 1 for m in cfg.elements), "elements", "every element count must be >= 1")
        if layered:
            _require(all(m % 3 == 0 for m in cfg.elements), "elements", "must be multiples of 3 for the layered case")
        _require(cfg.domain == MANUFACTURED_DOMAIN or layered, "domain", "convergence studies use the case's own domain")
        max_degree = max(cfg.degrees)
    else:
        default_m = 3 if layered else 2
        cfg.elements_x = default_m if cfg.elements_x is None else cfg.elements_x
        cfg.elements_y = default_m if cfg.elements_y is None else cfg.elements_y
        cfg.degree = (4 if layered else 2) if cfg.degree is None else cfg.degree
        _require(cfg.degree >= 1, "degree", "must be >= 1")
        _require(cfg.elements_x >= 1, "elements_x", "must be >= 1")
        _require(cfg.elements_y >= 1, "elements_y", "must be >= 1")
        if layered:
            _require(cfg.elements_y % 3 == 0, "elements_y", "must be a multiple of 3 for the layered case")
        max_degree = cfg.degree

    if cfg.mass_points is not None:
        _require(cfg.mass_points >= max_degree + 2, "mass_points", f"must be >= N + 2 = {max_degree + 2}")
    if cfg.source_points is not None:
        _require(cfg.source_points >= 2, "source_points", "must be >= 2")
    if cfg.sample_points is not None:
        _require(cfg.sample_points >= 2, "sample_points", "must be >= 2")
    if cfg.fields is None:
        cfg.fields = [] if cfg.command == "convergence" else (
            ["pressure", "qx", "qy", "ux"] if layered else ["pressure", "qx", "qy"]
        )
    for name in cfg.fields:
        _require(name in FIELD_NAMES, "fields", f"unknown field {name!r}; expected {', '.join(FIELD_NAMES)}")
    return cfg


def parse_config(argv: list[str] | None = None) -> RunConfig:
    """Build a validated RunConfig from a command line (config file + flags)."""
    parser = argparse.ArgumentParser(prog="mimetic-darcy", description="Mixed mimetic spectral element Darcy solver.", allow_abbrev=False)
    parser.add_argument("command", nargs="?", help="solve | convergence | layered")
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--out", help="output directory (default ./out)")
    ns, rest = parser.parse_known_args(argv)

    values: dict[str, str] = {}
    if ns.config:
        values.update(read_config_file(ns.config))
    i = 0
    while i < len(rest):
        arg = rest[i]
        if not arg.startswith("--"):
            raise ConfigError(arg, "expected --key=value")
        body = arg[2:]
        if "=" in body:
            key, value = body.split("=", 1)
        else:
            if i + 1 >= len(rest):
                raise ConfigError(body, "missing value")
            key, value = body, rest[i + 1]
            i += 1
        values[key.replace("-", "_")] = value
        i += 1
    if ns.command is not None:
        values["command"] = ns.command
    if ns.out is not None:
        values["out"] = ns.out
    return validate(_apply(values))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.17g}"


def write_report(path: Path, case: str, mode: str, rows: list[ConvergenceRow]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in rows:
            w.writerow([case, mode, r.M, r.N, r.dofs, _fmt(r.p_l2_error), _fmt(r.q_l2_error), _fmt(r.observed_rate)])


def sample_field(result: CaseResult, name: str, n_points: int):
    """Field values at ``n_points`` GLL points per element direction."""
    pts = gll_points(n_points).nodes
    mesh, dofmap, fields = result.mesh, result.dofmap, result.fields
    if name in ("ux", "uy"):
        x, y, ux, uy = velocity_from_flux(result.spec, mesh, dofmap, fields, pts)
        return x, y, ux if name == "ux" else uy
    which, coeffs = {
        "pressure": ("pressure", fields.pressure),
        "qx": ("flux_x", fields.flux),
        "qy": ("flux_y", fields.flux),
        "divergence": ("divergence", fields.flux),
    }[name]
    return reconstruct(mesh, dofmap, coeffs, which, pts)


def write_field(path: Path, x: np.ndarray, y: np.ndarray, values: np.ndarray) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "value"])
        for xv, yv, vv in zip(x.ravel(), y.ravel(), values.ravel()):
            w.writerow([_fmt(xv), _fmt(yv), _fmt(vv)])


def _single_row(res: CaseResult) -> ConvergenceRow:
    m = res.mesh
    M = m.elements_x if m.elements_x == m.elements_y else f"{m.elements_x}x{m.elements_y}"
    return ConvergenceRow(M=M, N=m.degree, dofs=res.dofs, p_l2_error=res.pressure_error, q_l2_error=res.flux_error)


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.command == "convergence":
        report: ConvergenceReport = convergence_study(
            cfg.case, cfg.mode, cfg.degrees, cfg.elements, cfg.darcy_sign, cfg.quadrature, cfg.boundary or None
        )
        write_report(out / "report.csv", cfg.case, cfg.mode, report.rows)
        for r in report.rows:
            rate = "" if r.observed_rate is None else f"  rate={r.observed_rate:.3f}"
            print(f"M={r.M:>3} N={r.N:>2} dofs={r.dofs:>6}  p_err={r.p_l2_error:.3e}  q_err={r.q_l2_error:.3e}{rate}")
        if report.error:
            print(f"error: {report.error}", file=sys.stderr)
            return EXIT_NUMERICAL
        return EXIT_OK

    if cfg.case == "layered":
        spec = layered_case(cfg.elements_x, cfg.elements_y, cfg.degree, cfg.darcy_sign, cfg.boundary or None, cfg.quadrature)
    else:
        spec = manufactured_case(cfg.elements_x, cfg.degree, cfg.darcy_sign, cfg.boundary or None, cfg.quadrature, cfg.domain)
        spec = dataclasses.replace(spec, elements_y=cfg.elements_y)
    res = run_case(spec)
    write_report(out / "report.csv", cfg.case, "single", [_single_row(res)])
    n_sample = cfg.sample_points or (cfg.degree + 1)
    for name in cfg.fields:
        write_field(out / f"field_{name}.csv", *sample_field(res, name, n_sample))
    print(
        f"{cfg.case}: M={cfg.elements_x}x{cfg.elements_y} N={cfg.degree} dofs={res.dofs} "
        f"p_err={res.pressure_error:.3e} q_err={res.flux_error:.3e} "
        f"mass_balance={res.fields.mass_balance:.1e}"
    )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return run(cfg)
    except MimeticError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
