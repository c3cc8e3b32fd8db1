"""Direct solution of the symmetric indefinite saddle-point system."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.linalg import splu

from .assembly import SaddleSystem
from .basis import tabulate
from .errors import SolverError, UsageError
from .mesh import DofMap, Mesh, reconstruct
from .problem import ProblemSpec

DENSE_LIMIT = 20_000


@dataclass(frozen=True)
class PivotReport:
    method: str
    n_1x1: int = 0
    n_2x2: int = 0
    inertia: tuple[int, int, int] | None = None  # (positive, negative, zero)
    min_abs_pivot: float | None = None


@dataclass
class SolutionFields:
    flux: np.ndarray
    pressure: np.ndarray
    gauge_multiplier: float
    residual: float
    mass_balance: float
    pivots: PivotReport = field(repr=False)


def _bunch_kaufman_solve(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, PivotReport]:
    """Solve with LAPACK ``dsysv`` and read the inertia off the block-diagonal factor.

    A pivot below ``n * eps * ||A||_inf`` counts as a breakdown: singular
    saddle systems rarely produce an exactly zero pivot in floating point.
    """
    n = a.shape[0]
    a_norm = float(np.max(np.sum(np.abs(a), axis=1), initial=0.0))
    lwork, _ = lapack.dsysv_lwork(n, lower=True)
    # default lwork is minimal, which forces the unblocked algorithm
    lu, ipiv, x, info = lapack.dsysv(a, b, lwork=int(lwork), lower=True, overwrite_a=True, overwrite_b=False)
    if info < 0:
        raise SolverError(f"dsysv rejected argument {-info}")
    if info > 0:
        raise SolverError(
            f"symmetric indefinite factorization broke down at pivot {info - 1} "
            "(singular system; is the pressure gauge missing?)",
            pivot=info - 1,
        )

    pos = neg = zero = n1 = n2 = 0
    min_piv, min_at = np.inf, -1
    k = 0
    while k < n:
        if ipiv[k] > 0:
            ev = np.array([lu[k, k]])
            step = 1
            n1 += 1
        else:
            block = np.array([[lu[k, k], lu[k + 1, k]], [lu[k + 1, k], lu[k + 1, k + 1]]])
            ev = np.linalg.eigvalsh(block)
            step = 2
            n2 += 1
        pos += int(np.sum(ev > 0))
        neg += int(np.sum(ev < 0))
        zero += int(np.sum(ev == 0))
        if np.min(np.abs(ev)) < min_piv:
            min_piv, min_at = float(np.min(np.abs(ev))), k
        k += step
    if n and min_piv <= n * np.finfo(np.float64).eps * a_norm:
        raise SolverError(
            f"symmetric indefinite factorization broke down at pivot {min_at}: "
            f"|d| = {min_piv:.3e} relative to ||A|| = {a_norm:.3e} "
            "(singular system; is the pressure gauge missing?)",
            pivot=min_at,
        )
    return x, PivotReport("bunch-kaufman", n1, n2, (pos, neg, zero), min_piv)


def _sparse_lu_solve(a: sp.csr_matrix, b: np.ndarray) -> tuple[np.ndarray, PivotReport]:
    try:
        lu = splu(a.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"sparse LU factorization failed: {exc}") from exc
    return lu.solve(b), PivotReport("sparse-lu")


def solve_linear(system: SaddleSystem, dense_limit: int = DENSE_LIMIT, method: str | None = None):
    """Solve ``A x = b`` and return ``(x, PivotReport)``.

    ``method`` forces ``'bunch-kaufman'``, ``'lu'`` (dense general LU) or
    ``'sparse-lu'``; by default Bunch-Kaufman is used up to ``dense_limit``.
    """
    a = system.matrix
    b = system.rhs
    if method is None:
        method = "bunch-kaufman" if a.shape[0] <= dense_limit else "sparse-lu"
    if method == "bunch-kaufman":
        return _bunch_kaufman_solve(a.toarray(), b)
    if method == "lu":
        lu, piv, x, info = lapack.dgesv(a.toarray(), b)
        if info > 0:
            raise SolverError(f"LU factorization broke down at pivot {info - 1}", pivot=info - 1)
        return x, PivotReport("lu")
    if method == "sparse-lu":
        return _sparse_lu_solve(a, b)
    raise UsageError(f"unknown solve method {method!r}")


def mass_balance_residual(system: SaddleSystem, flux: np.ndarray) -> float:
    """``||E q - phi_hat||_inf / max(1, ||phi_hat||_inf)``."""
    phi_hat = system.discrete_source()
    div = system.incidence.to_float() @ flux
    return float(np.max(np.abs(div - phi_hat)) / max(1.0, float(np.max(np.abs(phi_hat)))))


def solve_saddle(system: SaddleSystem, dense_limit: int = DENSE_LIMIT, method: str | None = None) -> SolutionFields:
    x, pivots = solve_linear(system, dense_limit, method)
    a, b = system.matrix, system.rhs
    r = a @ x - b
    a_norm = float(np.max(np.abs(a).sum(axis=1))) if a.nnz else 0.0
    denom = a_norm * float(np.max(np.abs(x), initial=0.0)) + float(np.max(np.abs(b), initial=0.0))
    residual = float(np.max(np.abs(r), initial=0.0)) / denom if denom > 0 else 0.0
    q, p_scaled, lam = system.split(x)
    return SolutionFields(
        flux=q,
        pressure=system.sign * p_scaled,
        gauge_multiplier=lam,
        residual=residual,
        mass_balance=mass_balance_residual(system, q),
        pivots=pivots,
    )


def velocity_from_flux(
    spec: ProblemSpec,
    mesh: Mesh,
    dofmap: DofMap,
    fields: SolutionFields,
    ref_points,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Velocity ``u = K^-1 q`` on a reference tensor grid in every element.

    Returns ``(x, y, u_x, u_y)`` with shape ``(M_x, M_y, Q, Q)``.
    """
    basis = tabulate(mesh.degree, ref_points)
    x, y, qx = reconstruct(mesh, dofmap, fields.flux, "flux_x", ref_points, basis=basis)
    _, _, qy = reconstruct(mesh, dofmap, fields.flux, "flux_y", ref_points, basis=basis)
    ux = np.empty_like(qx)
    uy = np.empty_like(qy)
    K = spec.permeability
    for ex in range(mesh.elements_x):
        for ey in range(mesh.elements_y):
            _, _, y0, y1 = mesh.element_bounds(ex, ey)
            xe, ye = x[ex, ey], y[ex, ey]
            kinv = K.checked_inverse(K.on_element(xe, ye, y0, y1), xe, ye)
            ux[ex, ey] = kinv[..., 0, 0] * qx[ex, ey] + kinv[..., 0, 1] * qy[ex, ey]
            uy[ex, ey] = kinv[..., 1, 0] * qx[ex, ey] + kinv[..., 1, 1] * qy[ex, ey]
    return x, y, ux, uy
