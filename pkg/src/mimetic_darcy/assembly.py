"""Element matrices and the global symmetric saddle-point system.

Block structure, with ``p'`` the pressure times the sign convention::

    [ M_K        E^T M_vol ] [ q  ]   [ boundary pressure functional ]
    [ M_vol E    0         ] [ p' ] = [ source functional            ]

``M_K`` is the Gram matrix of the flux basis under ``(a, b) -> int a . K^-1 b``,
``M_vol`` pairs the volume basis with the pressure basis and ``E`` is the
incidence matrix. Prescribed fluxes are eliminated; without any pressure
boundary condition a Lagrange multiplier fixes the pressure mean to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .basis import BasisSet, tabulate
from .errors import IllPosedProblemError, UsageError
from .mesh import DofMap, Mesh, build_mesh
from .problem import FluxBC, PermeabilityField, PressureBC, ProblemSpec
from .quadrature import QuadratureRule, gll_points
from .topology import IncidenceMatrix, incidence_div

COMPATIBILITY_TOL = 1e-10


@lru_cache(maxsize=None)
def _rule_and_basis(N: int, n_points: int) -> tuple[QuadratureRule, BasisSet]:
    rule = gll_points(n_points)
    return rule, tabulate(N, rule.nodes)


def _symmetrize(a):
    return 0.5 * (a + a.T)


def mass_matrix_flux(
    bounds: tuple[float, float, float, float],
    N: int,
    K: PermeabilityField,
    n_points: int | None = None,
) -> np.ndarray:
    """Element matrix of the K^-1 weighted inner product of flux densities.

    Local order: ``(N + 1) N`` x-fluxes ``(i, j)`` row-major, then ``N (N + 1)``
    y-fluxes ``(i, j)`` row-major. The basis densities carry the factors
    ``2 / dy`` (x-flux) and ``2 / dx`` (y-flux) so that coefficients are
    sub-edge fluxes.
    """
    n_points = N + 2 if n_points is None else n_points
    x0, x1, y0, y1 = bounds
    dx, dy = x1 - x0, y1 - y0
    rule, b = _rule_and_basis(N, n_points)
    L, Ed = b.lagrange_table, b.edge_table
    Q = rule.nodes.size

    xq = x0 + (rule.nodes[:, None] + 1.0) * (dx / 2.0)
    yq = y0 + (rule.nodes[None, :] + 1.0) * (dy / 2.0)
    xq, yq = np.broadcast_arrays(xq, yq)
    Kq = K.on_element(xq, yq, y0, y1)
    Kinv = K.checked_inverse(Kq, xq, yq)
    w = np.outer(rule.weights, rule.weights) * (dx * dy / 4.0)

    vx = (np.einsum("iq,jr->ijqr", L, Ed) * (2.0 / dy)).reshape((N + 1) * N, Q * Q)
    vy = (np.einsum("iq,jr->ijqr", Ed, L) * (2.0 / dx)).reshape(N * (N + 1), Q * Q)
    wxx = (w * Kinv[..., 0, 0]).ravel()
    wxy = (w * Kinv[..., 0, 1]).ravel()
    wyx = (w * Kinv[..., 1, 0]).ravel()
    wyy = (w * Kinv[..., 1, 1]).ravel()
    mxx = (vx * wxx) @ vx.T
    mxy = (vx * wxy) @ vy.T
    myx = (vy * wyx) @ vx.T
    myy = (vy * wyy) @ vy.T
    return _symmetrize(np.block([[mxx, mxy], [myx, myy]]))


def mass_matrix_volume(N: int, n_points: int | None = None) -> np.ndarray:
    """Pairing of the volume and pressure bases, ``int eps_i eps_j eps_k eps_l``.

    Independent of the element size: the Jacobian of the integral cancels
    against the ``4 / (dx dy)`` density scaling of the volume basis.
    """
    n_points = N + 2 if n_points is None else n_points
    rule, b = _rule_and_basis(N, n_points)
    m1 = _symmetrize((b.edge_table * rule.weights) @ b.edge_table.T)
    return np.kron(m1, m1)


def source_functional(
    bounds: tuple[float, float, float, float],
    N: int,
    source,
    n_points: int | None = None,
) -> np.ndarray:
    """``int_element phi * eps_i(xi) eps_j(eta) dx dy`` for the N^2 pressure basis functions."""
    n_points = N + 4 if n_points is None else n_points
    x0, x1, y0, y1 = bounds
    dx, dy = x1 - x0, y1 - y0
    rule, b = _rule_and_basis(N, n_points)
    xq = x0 + (rule.nodes[:, None] + 1.0) * (dx / 2.0)
    yq = y0 + (rule.nodes[None, :] + 1.0) * (dy / 2.0)
    xq, yq = np.broadcast_arrays(xq, yq)
    fq = np.asarray(source(xq, yq), dtype=np.float64) * np.ones_like(xq)
    wf = np.outer(rule.weights, rule.weights) * fq * (dx * dy / 4.0)
    return np.einsum("iq,jr,qr->ij", b.edge_table, b.edge_table, wf).ravel()


@dataclass
class SaddleSystem:
    """Assembled system over the free fluxes, the pressures and the optional gauge."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_q: int
    n_p: int
    free_flux: np.ndarray
    prescribed_flux: np.ndarray
    prescribed_values: np.ndarray
    has_gauge: bool
    sign: float
    flux_mass: sp.csr_matrix = field(repr=False)
    volume_mass: sp.csr_matrix = field(repr=False)
    incidence: IncidenceMatrix = field(repr=False)
    source: np.ndarray = field(repr=False)
    gauge: np.ndarray | None = field(default=None, repr=False)
    compatibility_residual: float | None = None

    @property
    def n_free(self) -> int:
        return self.free_flux.size

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        """Unpack a solution vector into (full flux vector, p', gauge multiplier)."""
        q = np.empty(self.n_q)
        q[self.prescribed_flux] = self.prescribed_values
        q[self.free_flux] = x[: self.n_free]
        p = x[self.n_free : self.n_free + self.n_p]
        lam = float(x[-1]) if self.has_gauge else 0.0
        return q, p, lam

    def discrete_source(self) -> np.ndarray:
        """Volume coefficients ``phi_hat`` solving ``M_vol phi_hat = source``."""
        return _block_solve(self.volume_mass, self.source)


def _block_solve(m: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    return splu(m.tocsc()).solve(rhs)


def _check_breaks(spec: ProblemSpec, mesh: Mesh) -> None:
    edges = mesh.y_edges()
    for yb in spec.permeability.y_breaks:
        if not (mesh.domain[2] < yb < mesh.domain[3]):
            continue
        if np.min(np.abs(edges - yb)) > 1e-12 * (mesh.domain[3] - mesh.domain[2]):
            raise UsageError(
                f"permeability jumps at y={yb:g}, which is not an element interface "
                f"of the {mesh.elements_x}x{mesh.elements_y} mesh"
            )


def _side_geometry(mesh: Mesh, side: str):
    """Yield ``(element, (component, local line index), fixed coord, a, b)`` per element on a side."""
    N = mesh.degree
    x0, x1, y0, y1 = mesh.domain
    if side in ("left", "right"):
        ex = 0 if side == "left" else mesh.elements_x - 1
        i = 0 if side == "left" else N
        for ey in range(mesh.elements_y):
            _, _, a, b = mesh.element_bounds(ex, ey)
            yield (ex, ey), ("x", i), (x0 if side == "left" else x1), a, b
    else:
        ey = 0 if side == "bottom" else mesh.elements_y - 1
        j = 0 if side == "bottom" else N
        for ex in range(mesh.elements_x):
            a, b, _, _ = mesh.element_bounds(ex, ey)
            yield (ex, ey), ("y", j), (y0 if side == "bottom" else y1), a, b


def _trace_points(side: str, fixed: float, s: np.ndarray):
    if side in ("left", "right"):
        return np.full_like(s, fixed), s
    return s, np.full_like(s, fixed)


ORIENTATION = {"left": -1.0, "right": 1.0, "bottom": -1.0, "top": 1.0}


def boundary_flux_values(spec: ProblemSpec, mesh: Mesh, dofmap: DofMap, n_points: int):
    """Prescribed flux coefficients (positive along +x / +y) for flux-BC sides."""
    rule = gll_points(n_points)
    idx, vals = [], []
    for bdof in dofmap.boundary_dofs:
        bc = spec.boundary[bdof.side]
        if not isinstance(bc, FluxBC):
            continue
        s, w = rule.mapped(bdof.start, bdof.end)
        x, y = _trace_points(bdof.side, _side_coord(mesh, bdof.side), s)
        outward = float(np.sum(w * np.asarray(bc.normal_flux(x, y), dtype=np.float64) * np.ones_like(s)))
        idx.append(bdof.index)
        vals.append(ORIENTATION[bdof.side] * outward)
    return np.array(idx, dtype=np.int64), np.array(vals, dtype=np.float64)


def _side_coord(mesh: Mesh, side: str) -> float:
    x0, x1, y0, y1 = mesh.domain
    return {"left": x0, "right": x1, "bottom": y0, "top": y1}[side]


def boundary_pressure_functional(spec: ProblemSpec, mesh: Mesh, dofmap: DofMap, n_points: int) -> np.ndarray:
    """``b(tau) = sign * integral of pbar (tau . n)`` over the pressure-BC sides."""
    N = mesh.degree
    rule, b = _rule_and_basis(N, n_points)
    out = np.zeros(dofmap.n_q)
    for side, bc in spec.boundary.items():
        if not isinstance(bc, PressureBC):
            continue
        for (ex, ey), (comp, k), fixed, a, c in _side_geometry(mesh, side):
            s = a + (rule.nodes + 1.0) * (c - a) / 2.0
            x, y = _trace_points(side, fixed, s)
            pbar = np.asarray(bc.pressure(x, y), dtype=np.float64) * np.ones_like(s)
            # density scale 2/h cancels the arc-length Jacobian h/2
            local = b.edge_table @ (rule.weights * pbar)
            if comp == "x":
                dofs = dofmap.qx_map[ex, ey, k, :]
            else:
                dofs = dofmap.qy_map[ex, ey, :, k]
            out[dofs] += spec.sign * ORIENTATION[side] * local
    return out


def assemble(
    spec: ProblemSpec,
    mesh: Mesh | None = None,
    dofmap: DofMap | None = None,
    E: IncidenceMatrix | None = None,
) -> SaddleSystem:
    """Assemble the symmetric saddle-point system of a problem.

    Prescribed fluxes are eliminated from both the rows and the columns, so
    the matrix stays exactly symmetric. Without any pressure boundary the
    pressure is fixed by a multiplier row enforcing zero mean.

    Raises
    ------
    IllPosedProblemError
        All sides carry flux data that does not balance the source.
    SingularMaterialError
        The permeability is not SPD at some quadrature point.
    UsageError
        A permeability jump does not lie on an element interface.
    """
    if mesh is None or dofmap is None:
        mesh, dofmap = build_mesh(spec.domain, spec.elements_x, spec.elements_y, spec.degree)
    if E is None:
        E = incidence_div(mesh, dofmap)
    _check_breaks(spec, mesh)
    N = mesh.degree
    n_mass = spec.quadrature.mass(N)
    n_src = spec.quadrature.source(N)

    mvol_el = mass_matrix_volume(N, n_mass)
    nloc_q = 2 * N * (N + 1)
    nloc_p = N * N
    rows_q, cols_q, vals_q = [], [], []
    rows_p, cols_p, vals_p = [], [], []
    f = np.zeros(dofmap.n_p)
    for ex in range(mesh.elements_x):
        for ey in range(mesh.elements_y):
            bounds = mesh.element_bounds(ex, ey)
            qd = dofmap.element_flux_dofs(ex, ey)
            pd = dofmap.element_pressure_dofs(ex, ey)
            mk = mass_matrix_flux(bounds, N, spec.permeability, n_mass)
            rows_q.append(np.repeat(qd, nloc_q))
            cols_q.append(np.tile(qd, nloc_q))
            vals_q.append(mk.ravel())
            rows_p.append(np.repeat(pd, nloc_p))
            cols_p.append(np.tile(pd, nloc_p))
            vals_p.append(mvol_el.ravel())
            f[pd] += source_functional(bounds, N, spec.source, n_src)

    mk = sp.csr_matrix(
        (np.concatenate(vals_q), (np.concatenate(rows_q), np.concatenate(cols_q))),
        shape=(dofmap.n_q, dofmap.n_q),
    )
    mk = _symmetrize(mk).tocsr()
    mvol = sp.csr_matrix(
        (np.concatenate(vals_p), (np.concatenate(rows_p), np.concatenate(cols_p))),
        shape=(dofmap.n_p, dofmap.n_p),
    )
    mvol = _symmetrize(mvol).tocsr()
    div_block = (mvol @ E.to_float()).tocsr()

    presc_idx, presc_val = boundary_flux_values(spec, mesh, dofmap, n_src)
    order = np.argsort(presc_idx)
    presc_idx, presc_val = presc_idx[order], presc_val[order]
    free = np.setdiff1d(np.arange(dofmap.n_q), presc_idx)
    bp = boundary_pressure_functional(spec, mesh, dofmap, n_src)

    compat = None
    if spec.all_flux:
        # constant pressure 1 has coefficients h_i h_j (products of GLL gaps)
        h = np.diff(gll_points(N + 1).nodes)
        ones_p = np.empty(dofmap.n_p)
        ones_p[dofmap.p_map.reshape(-1, N * N)] = np.outer(h, h).ravel()
        total_source = float(f @ ones_p)
        side_of = {b.index: b.side for b in dofmap.boundary_dofs}
        orient = np.array([ORIENTATION[side_of[int(k)]] for k in presc_idx])
        total_out = float(np.sum(orient * presc_val))
        scale = max(1.0, abs(total_source), float(np.sum(np.abs(presc_val))))
        compat = abs(total_source - total_out)
        if compat > COMPATIBILITY_TOL * scale:
            raise IllPosedProblemError(
                f"all-flux boundary data incompatible with the source: "
                f"integral of source {total_source:.17g} vs net outflow {total_out:.17g}"
            )

    mk_ff = mk[free][:, free]
    mk_fc = mk[free][:, presc_idx]
    div_f = div_block[:, free]
    div_c = div_block[:, presc_idx]

    rhs_q = bp[free] - mk_fc @ presc_val
    rhs_p = f - div_c @ presc_val
    blocks = [[mk_ff, div_f.T], [div_f, None]]
    rhs = [rhs_q, rhs_p]

    gauge = None
    has_gauge = not any(isinstance(bc, PressureBC) for bc in spec.boundary.values())
    if has_gauge:
        # mean of p_h: every pressure basis function integrates to dx dy / 4
        area = (mesh.domain[1] - mesh.domain[0]) * (mesh.domain[3] - mesh.domain[2])
        gauge = np.full(dofmap.n_p, mesh.dx * mesh.dy / 4.0 / area)
        g = sp.csr_matrix(gauge[:, None])
        blocks = [
            [mk_ff, div_f.T, None],
            [div_f, None, g],
            [None, g.T, None],
        ]
        rhs.append(np.zeros(1))

    matrix = sp.bmat(blocks, format="csr")
    return SaddleSystem(
        matrix=matrix,
        rhs=np.concatenate(rhs),
        n_q=dofmap.n_q,
        n_p=dofmap.n_p,
        free_flux=free,
        prescribed_flux=presc_idx,
        prescribed_values=presc_val,
        has_gauge=has_gauge,
        sign=spec.sign,
        flux_mass=mk,
        volume_mass=mvol,
        incidence=E,
        source=f,
        gauge=gauge,
        compatibility_residual=compat,
    )
