"""Error norms, benchmark problems and h/p convergence studies."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import SaddleSystem, assemble
from .basis import tabulate
from .errors import MimeticError, UsageError
from .mesh import DofMap, Mesh, build_mesh, physical_grid, reconstruct
from .problem import (
    MIN_SOURCE_POINTS,
    DarcySign,
    FluxBC,
    PermeabilityField,
    PressureBC,
    ProblemSpec,
    QuadratureSettings,
)
from .quadrature import gll_points
from .solver import SolutionFields, solve_saddle

ANISOTROPIC_K = np.array([[2.0, 1.0], [1.0, 2.0]])
LAYER_BREAKS = (1.0 / 3.0, 2.0 / 3.0)
LAYER_ALPHA = (0.3, 0.7, 0.5)

_OUTWARD = {"left": (-1.0, 0.0), "right": (1.0, 0.0), "bottom": (0.0, -1.0), "top": (0.0, 1.0)}


def _boundary_from_exact(exact_pressure, exact_flux, kinds: dict[str, str]):
    bcs = {}
    for side, kind in kinds.items():
        if kind == "pressure":
            bcs[side] = PressureBC(exact_pressure)
        elif kind == "flux":
            nx, ny = _OUTWARD[side]

            def normal_flux(x, y, nx=nx, ny=ny):
                qx, qy = exact_flux(x, y)
                return nx * qx + ny * qy

            bcs[side] = FluxBC(normal_flux)
        else:
            raise UsageError(f"side {side!r}: boundary kind must be 'flux' or 'pressure', got {kind!r}")
    return bcs


def manufactured_case(
    elements: int = 2,
    degree: int = 2,
    darcy_sign: DarcySign = "paper",
    boundary: dict[str, str] | None = None,
    quadrature: QuadratureSettings | None = None,
    domain: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0),
) -> ProblemSpec:
    """Anisotropic K = [[2, 1], [1, 2]] with exact pressure ``exp(xy)``.

    The source is ``div q`` for the exact flux ``q = s K grad p`` where
    ``s = +1`` for ``darcy_sign='paper'`` and ``-1`` for ``'physical'``.
    All four sides prescribe the exact normal flux unless ``boundary`` maps
    sides to ``'pressure'``.
    """
    s = 1.0 if darcy_sign == "paper" else -1.0

    def pressure(x, y):
        return np.exp(x * y)

    def flux(x, y):
        e = np.exp(x * y)
        return s * (2.0 * y + x) * e, s * (y + 2.0 * x) * e

    def source(x, y):
        return s * 2.0 * (1.0 + x * x + x * y + y * y) * np.exp(x * y)

    kinds = {side: "flux" for side in _OUTWARD}
    kinds.update(boundary or {})
    return ProblemSpec(
        name="manufactured",
        domain=domain,
        elements_x=elements,
        elements_y=elements,
        degree=degree,
        permeability=PermeabilityField.constant(ANISOTROPIC_K),
        source=source,
        boundary=_boundary_from_exact(pressure, flux, kinds),
        exact_pressure=pressure,
        exact_flux=flux,
        darcy_sign=darcy_sign,
        quadrature=quadrature or QuadratureSettings(),
    )


def layer_alpha(y):
    y = np.asarray(y, dtype=np.float64)
    return np.where(y <= LAYER_BREAKS[0], LAYER_ALPHA[0], np.where(y <= LAYER_BREAKS[1], LAYER_ALPHA[1], LAYER_ALPHA[2]))


def layered_case(
    elements_x: int = 3,
    elements_y: int = 3,
    degree: int = 4,
    darcy_sign: DarcySign = "paper",
    boundary: dict[str, str] | None = None,
    quadrature: QuadratureSettings | None = None,
) -> ProblemSpec:
    """Three horizontal layers on the unit square, flow driven left to right.

    Unit pressure drop between the left and right sides, no flow through
    top and bottom. ``elements_y`` must be a multiple of 3 so the layer
    interfaces are element edges.
    """
    if elements_y % 3:
        raise UsageError(f"layered case needs elements_y divisible by 3, got {elements_y}")
    s = 1.0 if darcy_sign == "paper" else -1.0

    def permeability(x, y):
        a = layer_alpha(y)
        K = np.zeros(np.shape(a) + (2, 2))
        K[..., 0, 0] = a
        K[..., 1, 1] = a
        return K

    def pressure(x, y):
        # flow runs along +x under either sign convention
        return (np.asarray(x) if s > 0 else 1.0 - np.asarray(x)) + 0.0 * np.asarray(y)

    def flux(x, y):
        a = layer_alpha(y) * np.ones_like(np.asarray(x, dtype=np.float64))
        return a, np.zeros_like(a)

    def source(x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    kinds = {"left": "pressure", "right": "pressure", "bottom": "flux", "top": "flux"}
    kinds.update(boundary or {})
    return ProblemSpec(
        name="layered",
        domain=(0.0, 1.0, 0.0, 1.0),
        elements_x=elements_x,
        elements_y=elements_y,
        degree=degree,
        permeability=PermeabilityField(permeability, y_breaks=LAYER_BREAKS),
        source=source,
        boundary=_boundary_from_exact(pressure, flux, kinds),
        exact_pressure=pressure,
        exact_flux=flux,
        darcy_sign=darcy_sign,
        quadrature=quadrature or QuadratureSettings(),
    )


def _quadrature_grid(mesh: Mesh, n_points: int):
    rule = gll_points(n_points)
    w = np.outer(rule.weights, rule.weights) * (mesh.dx * mesh.dy / 4.0)
    return rule, tabulate(mesh.degree, rule.nodes), w


def _inside(mesh: Mesh, x: np.ndarray, y: np.ndarray):
    """Pull element-edge points a hair inward so piecewise data is read from the owning element."""
    x0 = mesh.domain[0] + mesh.dx * np.arange(mesh.elements_x)[:, None, None, None]
    y0 = mesh.domain[2] + mesh.dy * np.arange(mesh.elements_y)[None, :, None, None]
    px, py = 1e-13 * mesh.dx, 1e-13 * mesh.dy
    return np.clip(x, x0 + px, x0 + mesh.dx - px), np.clip(y, y0 + py, y0 + mesh.dy - py)


def l2_error(
    mesh: Mesh,
    dofmap: DofMap,
    coefficients,
    which: str,
    exact,
    n_points: int | None = None,
    align_mean: bool = False,
) -> float:
    """L2 norm of ``numerical - exact`` over the domain.

    ``which`` is ``'pressure'`` (scalar, ``exact(x, y)``) or ``'flux'``
    (vector, ``exact(x, y) -> (qx, qy)``). Each element is integrated with a
    GLL rule of ``n_points`` per direction (default ``N + 4``). With
    ``align_mean`` the numerical pressure is first shifted to the exact mean.
    """
    if exact is None:
        raise UsageError("l2_error needs an exact solution")
    n_points = mesh.degree + 4 if n_points is None else n_points
    rule, basis, w = _quadrature_grid(mesh, n_points)
    if which == "pressure":
        x, y, num = reconstruct(mesh, dofmap, coefficients, "pressure", rule.nodes, basis=basis)
        x, y = _inside(mesh, x, y)
        ex = np.asarray(exact(x, y), dtype=np.float64) * np.ones_like(x)
        if align_mean:
            num = num + (np.sum(w * ex) - np.sum(w * num)) / np.sum(w * np.ones_like(x))
        return math.sqrt(float(np.sum(w * (num - ex) ** 2)))
    if which == "flux":
        x, y, qx = reconstruct(mesh, dofmap, coefficients, "flux_x", rule.nodes, basis=basis)
        _, _, qy = reconstruct(mesh, dofmap, coefficients, "flux_y", rule.nodes, basis=basis)
        ex_x, ex_y = exact(*_inside(mesh, x, y))
        return math.sqrt(float(np.sum(w * ((qx - ex_x) ** 2 + (qy - ex_y) ** 2))))
    raise UsageError(f"l2_error field must be 'pressure' or 'flux', got {which!r}")


def l2_norm(mesh: Mesh, fn, n_points: int) -> float:
    """L2 norm of a scalar function over the mesh, same quadrature as ``l2_error``."""
    rule, _, w = _quadrature_grid(mesh, n_points)
    x, y = physical_grid(mesh, rule.nodes)
    return math.sqrt(float(np.sum(w * np.asarray(fn(x, y)) ** 2)))


@dataclass
class CaseResult:
    spec: ProblemSpec
    mesh: Mesh
    dofmap: DofMap
    system: SaddleSystem
    fields: SolutionFields
    pressure_error: float | None
    flux_error: float | None

    @property
    def dofs(self) -> int:
        return self.dofmap.n_q + self.dofmap.n_p


def run_case(spec: ProblemSpec, method: str | None = None) -> CaseResult:
    """Assemble, solve and (when an exact solution exists) measure errors."""
    mesh, dofmap = build_mesh(spec.domain, spec.elements_x, spec.elements_y, spec.degree)
    system = assemble(spec, mesh, dofmap)
    fields = solve_saddle(system, method=method)
    n_err = spec.degree + 4
    p_err = q_err = None
    if spec.exact_pressure is not None:
        p_err = l2_error(mesh, dofmap, fields.pressure, "pressure", spec.exact_pressure, n_err, align_mean=system.has_gauge)
    if spec.exact_flux is not None:
        q_err = l2_error(mesh, dofmap, fields.flux, "flux", spec.exact_flux, n_err)
    return CaseResult(spec, mesh, dofmap, system, fields, p_err, q_err)


@dataclass
class ConvergenceRow:
    M: int
    N: int
    dofs: int
    p_l2_error: float
    q_l2_error: float
    observed_rate: float | None = None
    flux_rate: float | None = None
    mass_balance: float = 0.0
    symmetric: bool = True


@dataclass
class ConvergenceReport:
    case: str
    mode: str
    rows: list[ConvergenceRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    error: str | None = None

    def finest_rate(self, N: int | None = None) -> float | None:
        rows = [r for r in self.rows if N is None or r.N == N]
        return rows[-1].observed_rate if rows else None


CASES = {"manufactured": manufactured_case, "layered": layered_case}


def _rate(e_prev: float, e_cur: float, h_prev: float, h_cur: float) -> float | None:
    if e_prev <= 0 or e_cur <= 0:
        return None
    return math.log(e_prev / e_cur) / math.log(h_prev / h_cur)


def convergence_study(
    case: str,
    mode: str,
    degrees,
    elements,
    darcy_sign: DarcySign = "paper",
    quadrature: QuadratureSettings | None = None,
    boundary: dict[str, str] | None = None,
) -> ConvergenceReport:
    """Run one solve per (M, N) configuration and collect errors.

    In ``h`` mode the configurations are grouped by degree and the
    observed rate compares consecutive mesh counts of the same degree. In
    ``p`` mode they are grouped by mesh count and no rate is reported.
    A failing solve stops the study; the rows gathered so far are kept and
    ``error`` holds the message.
    """
    if case not in CASES:
        raise UsageError(f"unknown case {case!r}; expected one of {sorted(CASES)}")
    if mode not in ("h", "p"):
        raise UsageError(f"mode must be 'h' or 'p', got {mode!r}")
    degrees, elements = list(degrees), list(elements)
    if not degrees or not elements:
        raise UsageError("convergence study needs nonempty degree and element lists")

    quadrature = quadrature or QuadratureSettings()
    report = ConvergenceReport(
        case=case,
        mode=mode,
        metadata={
            "degrees": degrees,
            "elements": elements,
            "darcy_sign": darcy_sign,
            "mass_points": quadrature.mass_points or "N+2",
            "source_points": quadrature.source_points or f"max(N+4,{MIN_SOURCE_POINTS})",
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        },
    )
    if mode == "h":
        configs = [(M, N) for N in degrees for M in elements]
    else:
        configs = [(M, N) for M in elements for N in degrees]

    prev = None
    for M, N in configs:
        if case == "layered":
            spec = layered_case(M, M, N, darcy_sign, boundary, quadrature)
        else:
            spec = manufactured_case(M, N, darcy_sign, boundary, quadrature)
        try:
            res = run_case(spec)
        except MimeticError as exc:
            report.error = f"M={M} N={N}: {exc}"
            break
        a = res.system.matrix
        row = ConvergenceRow(
            M=M,
            N=N,
            dofs=res.dofs,
            p_l2_error=res.pressure_error,
            q_l2_error=res.flux_error,
            mass_balance=res.fields.mass_balance,
            symmetric=(a - a.T).count_nonzero() == 0,
        )
        if mode == "h" and prev is not None and prev.N == N:
            h_prev, h_cur = 1.0 / prev.M, 1.0 / M
            row.observed_rate = _rate(prev.p_l2_error, row.p_l2_error, h_prev, h_cur)
            row.flux_rate = _rate(prev.q_l2_error, row.q_l2_error, h_prev, h_cur)
        report.rows.append(row)
        prev = row
    return report
