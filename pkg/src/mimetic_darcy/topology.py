"""Incidence matrix of the discrete divergence (sub-edge fluxes to sub-cells)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import DofMap, Mesh


@dataclass(frozen=True)
class IncidenceMatrix:
    """Integer CSR matrix with one row per sub-cell and one column per flux.

    Row ``(i, j)`` holds ``+1, -1, +1, -1`` on ``q^x_{i,j}``, ``q^x_{i-1,j}``,
    ``q^y_{i,j}``, ``q^y_{i,j-1}``: the net outflow of the sub-cell.
    """

    matrix: sp.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other

    def to_float(self) -> sp.csr_matrix:
        return self.matrix.astype(np.float64)

    def to_coo_text(self) -> str:
        """Coordinate listing ``row col value``, one nonzero per line, sorted."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"{coo.row[k]} {coo.col[k]} {coo.data[k]:+d}" for k in order]
        return "\n".join(lines) + "\n"


def incidence_div(mesh: Mesh, dofmap: DofMap) -> IncidenceMatrix:
    N = mesh.degree
    rows_per_line = mesh.elements_y * N
    cols = mesh.elements_x * N
    gi, gj = np.meshgrid(np.arange(cols), np.arange(rows_per_line), indexing="ij")
    cell = (gi * rows_per_line + gj).ravel()

    right = ((gi + 1) * rows_per_line + gj).ravel()
    left = (gi * rows_per_line + gj).ravel()
    top = (dofmap.n_qx + (gj + 1) * cols + gi).ravel()
    bottom = (dofmap.n_qx + gj * cols + gi).ravel()

    row = np.concatenate([cell, cell, cell, cell])
    col = np.concatenate([right, left, top, bottom])
    val = np.concatenate(
        [np.ones_like(cell), -np.ones_like(cell), np.ones_like(cell), -np.ones_like(cell)]
    ).astype(np.int8)
    mat = sp.csr_matrix((val, (row, col)), shape=(dofmap.n_p, dofmap.n_q), dtype=np.int8)
    mat.sort_indices()
    return IncidenceMatrix(mat)
