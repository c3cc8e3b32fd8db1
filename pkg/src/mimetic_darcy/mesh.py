"""Tensor-product rectangular meshes, degree-of-freedom numbering and field reconstruction.

Flux coefficients are the fluxes through the sub-edges between GLL lines
and are shared between the two elements adjacent to an interface.
Pressure coefficients are element-local expansion coefficients in the
product edge basis ``eps_i(xi) eps_j(eta)``.

Global numbering
    x-fluxes by (vertical line, row), then y-fluxes by (horizontal line,
    column). Pressures are numbered separately by (column, row) of the
    global sub-cell grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import numpy.typing as npt

from .basis import BasisSet, tabulate
from .errors import UsageError
from .quadrature import gll_rule

Side = Literal["left", "right", "bottom", "top"]
SIDES: tuple[Side, ...] = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Mesh:
    domain: tuple[float, float, float, float]
    elements_x: int
    elements_y: int
    degree: int

    @property
    def dx(self) -> float:
        return (self.domain[1] - self.domain[0]) / self.elements_x

    @property
    def dy(self) -> float:
        return (self.domain[3] - self.domain[2]) / self.elements_y

    @property
    def n_elements(self) -> int:
        return self.elements_x * self.elements_y

    def element_bounds(self, ex: int, ey: int) -> tuple[float, float, float, float]:
        self._check_element(ex, ey)
        x0 = self.domain[0] + ex * self.dx
        y0 = self.domain[2] + ey * self.dy
        return x0, x0 + self.dx, y0, y0 + self.dy

    def x_edges(self) -> np.ndarray:
        return self.domain[0] + self.dx * np.arange(self.elements_x + 1)

    def y_edges(self) -> np.ndarray:
        return self.domain[2] + self.dy * np.arange(self.elements_y + 1)

    def _check_element(self, ex: int, ey: int) -> None:
        if not (0 <= ex < self.elements_x and 0 <= ey < self.elements_y):
            raise UsageError(
                f"element ({ex}, {ey}) outside the "
                f"{self.elements_x}x{self.elements_y} mesh"
            )


@dataclass(frozen=True)
class BoundaryDof:
    index: int
    side: Side
    start: float  # arc coordinate along the side (y for left/right, x for bottom/top)
    end: float


@dataclass(frozen=True)
class DofMap:
    """Global indices of the flux and pressure coefficients.

    ``qx_map[ex, ey, i, j - 1]`` is the global index of the local x-flux
    ``q^x_{i,j}`` (``i = 0..N``, ``j = 1..N``); ``qy_map[ex, ey, i - 1, j]``
    that of ``q^y_{i,j}``; ``p_map[ex, ey, i - 1, j - 1]`` the pressure index.
    """

    n_qx: int
    n_qy: int
    n_p: int
    qx_map: np.ndarray
    qy_map: np.ndarray
    p_map: np.ndarray
    boundary_dofs: tuple[BoundaryDof, ...] = field(repr=False)

    @property
    def n_q(self) -> int:
        return self.n_qx + self.n_qy

    def element_flux_dofs(self, ex: int, ey: int) -> np.ndarray:
        """Global flux indices in local order: x-fluxes then y-fluxes, row-major."""
        return np.concatenate([self.qx_map[ex, ey].ravel(), self.qy_map[ex, ey].ravel()])

    def element_pressure_dofs(self, ex: int, ey: int) -> np.ndarray:
        return self.p_map[ex, ey].ravel()

    def boundary_by_side(self, side: Side) -> list[BoundaryDof]:
        return [b for b in self.boundary_dofs if b.side == side]


def build_mesh(
    domain: tuple[float, float, float, float],
    elements_x: int,
    elements_y: int,
    degree: int,
) -> tuple[Mesh, DofMap]:
    x_min, x_max, y_min, y_max = (float(v) for v in domain)
    for name, value in (("elements_x", elements_x), ("elements_y", elements_y), ("degree", degree)):
        if int(value) != value or value < 1:
            raise UsageError(f"{name} must be an integer >= 1, got {value}")
    if not (x_min < x_max and y_min < y_max):
        raise UsageError(f"degenerate domain rectangle {domain}")
    mx, my, N = int(elements_x), int(elements_y), int(degree)
    mesh = Mesh((x_min, x_max, y_min, y_max), mx, my, N)

    rows, cols = my * N, mx * N
    n_qx = (cols + 1) * rows
    n_qy = (rows + 1) * cols
    n_p = cols * rows

    ex = np.arange(mx)[:, None, None, None]
    ey = np.arange(my)[None, :, None, None]
    i_node = np.arange(N + 1)[None, None, :, None]
    j_node = np.arange(N + 1)[None, None, None, :]
    i_cell = np.arange(N)[None, None, :, None]
    j_cell = np.arange(N)[None, None, None, :]

    qx_map = (ex * N + i_node) * rows + (ey * N + j_cell)
    qy_map = n_qx + (ey * N + j_node) * cols + (ex * N + i_cell)
    p_map = (ex * N + i_cell) * rows + (ey * N + j_cell)
    for arr in (qx_map, qy_map, p_map):
        arr.setflags(write=False)

    # GLL sub-edge extents along each side
    ref = gll_rule(N).nodes
    ys = (mesh.domain[2] + (np.arange(my)[:, None] + (ref[None, :] + 1) / 2) * mesh.dy)
    xs = (mesh.domain[0] + (np.arange(mx)[:, None] + (ref[None, :] + 1) / 2) * mesh.dx)
    bdofs: list[BoundaryDof] = []
    for side in SIDES:
        if side in ("left", "right"):
            gi = 0 if side == "left" else cols
            for e in range(my):
                for j in range(N):
                    bdofs.append(BoundaryDof(int(gi * rows + e * N + j), side, float(ys[e, j]), float(ys[e, j + 1])))
        else:
            gj = 0 if side == "bottom" else rows
            for e in range(mx):
                for i in range(N):
                    bdofs.append(BoundaryDof(int(n_qx + gj * cols + e * N + i), side, float(xs[e, i]), float(xs[e, i + 1])))

    dofmap = DofMap(n_qx, n_qy, n_p, qx_map, qy_map, p_map, tuple(bdofs))
    return mesh, dofmap


def map_to_physical(mesh: Mesh, element: tuple[int, int], ref_point) -> tuple:
    """Affine map from the reference square to element ``(ex, ey)``."""
    ex, ey = element
    mesh._check_element(ex, ey)
    xi, eta = ref_point
    x = mesh.domain[0] + (ex + (np.asarray(xi) + 1.0) / 2.0) * mesh.dx
    y = mesh.domain[2] + (ey + (np.asarray(eta) + 1.0) / 2.0) * mesh.dy
    return x, y


def physical_grid(mesh: Mesh, xi, eta=None) -> tuple[np.ndarray, np.ndarray]:
    """Physical coordinates of a reference tensor grid in every element.

    Returns arrays of shape ``(M_x, M_y, len(xi), len(eta))``.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    eta = xi if eta is None else np.atleast_1d(np.asarray(eta, dtype=np.float64))
    ex = np.arange(mesh.elements_x)[:, None, None, None]
    ey = np.arange(mesh.elements_y)[None, :, None, None]
    x = mesh.domain[0] + (ex + (xi[None, None, :, None] + 1.0) / 2.0) * mesh.dx
    y = mesh.domain[2] + (ey + (eta[None, None, None, :] + 1.0) / 2.0) * mesh.dy
    shape = (mesh.elements_x, mesh.elements_y, xi.size, eta.size)
    return np.broadcast_to(x, shape).copy(), np.broadcast_to(y, shape).copy()


FIELDS = ("flux_x", "flux_y", "pressure", "divergence")


def _flux_parts(dofmap: DofMap, coefficients: np.ndarray, which: str):
    n = coefficients.size
    if which == "flux_x" and n == dofmap.n_qx:
        return coefficients, None
    if which == "flux_y" and n == dofmap.n_qy:
        return None, np.concatenate([np.zeros(dofmap.n_qx), coefficients])
    if n == dofmap.n_q:
        return coefficients, coefficients
    raise UsageError(
        f"{which} needs {dofmap.n_q} flux coefficients"
        + (f" (or {dofmap.n_qx})" if which == "flux_x" else "")
        + (f" (or {dofmap.n_qy})" if which == "flux_y" else "")
        + f", got {n}"
    )


def reconstruct(
    mesh: Mesh,
    dofmap: DofMap,
    coefficients,
    which: str,
    ref_points,
    ref_points_y=None,
    basis: BasisSet | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate a discrete field on a reference tensor grid in every element.

    Parameters
    ----------
    coefficients
        Pressure vector (``n_p``) or flux vector (``n_q``; ``n_qx``/``n_qy``
        also accepted for the matching component).
    which
        One of ``flux_x``, ``flux_y``, ``pressure``, ``divergence``.
    ref_points, ref_points_y
        Sample points in [-1, 1] along xi and eta (eta defaults to xi).

    Returns
    -------
    x, y, values
        Arrays of shape ``(M_x, M_y, Q_xi, Q_eta)``. Flux values are
        physical densities, so integrating them over a sub-edge gives back
        the coefficient.
    """
    if which not in FIELDS:
        raise UsageError(f"unknown field {which!r}; expected one of {FIELDS}")
    coefficients = np.asarray(coefficients, dtype=np.float64)
    N = mesh.degree
    bx = basis if basis is not None else tabulate(N, ref_points)
    by = bx if ref_points_y is None else tabulate(N, ref_points_y)
    x, y = physical_grid(mesh, bx.points, by.points)
    sx, sy = 2.0 / mesh.dx, 2.0 / mesh.dy

    if which == "pressure":
        if coefficients.size != dofmap.n_p:
            raise UsageError(f"pressure needs {dofmap.n_p} coefficients, got {coefficients.size}")
        c = coefficients[dofmap.p_map]
        vals = np.einsum("xyij,iq,jr->xyqr", c, bx.edge_table, by.edge_table)
        return x, y, vals

    qx_vec, q_all = _flux_parts(dofmap, coefficients, which)
    if which == "flux_x":
        c = qx_vec[dofmap.qx_map]
        vals = np.einsum("xyij,iq,jr->xyqr", c, bx.lagrange_table, by.edge_table) * sy
    elif which == "flux_y":
        c = q_all[dofmap.qy_map]
        vals = np.einsum("xyij,iq,jr->xyqr", c, bx.edge_table, by.lagrange_table) * sx
    else:
        if q_all is None:
            raise UsageError(f"divergence needs {dofmap.n_q} flux coefficients")
        cx = q_all[dofmap.qx_map]
        cy = q_all[dofmap.qy_map]
        vals = (
            np.einsum("xyij,iq,jr->xyqr", cx, bx.lagrange_deriv_table, by.edge_table)
            + np.einsum("xyij,iq,jr->xyqr", cy, bx.edge_table, by.lagrange_deriv_table)
        ) * (sx * sy)
    return x, y, vals
