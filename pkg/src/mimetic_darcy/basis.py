"""Nodal (Lagrange) and edge (histopolation) polynomial bases in 1D.

The Lagrange polynomials ``l_0 .. l_N`` interpolate point values on the
GLL nodes. The edge polynomials ``eps_1 .. eps_N`` are built from them as
``eps_i = -sum_{k<i} l_k'`` and integrate to one over the i-th node interval
and to zero over every other one.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import numpy.typing as npt

from .errors import UsageError
from .quadrature import gll_rule

Array = npt.NDArray[np.float64]


def barycentric_weights(nodes: Array) -> Array:
    nodes = np.asarray(nodes, dtype=np.float64)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def lagrange_table(nodes: Array, points: Array) -> Array:
    """Values ``l_i(x_q)`` as an ``(N + 1, Q)`` array (barycentric form)."""
    nodes = np.asarray(nodes, dtype=np.float64)
    x = np.atleast_1d(np.asarray(points, dtype=np.float64))
    w = barycentric_weights(nodes)
    diff = x[None, :] - nodes[:, None]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        terms = w[:, None] / diff
        table = terms / np.sum(terms, axis=0)
    # exact hits and subnormal offsets (where w / diff overflows) snap to the node
    hit = (diff == 0.0) | ~np.isfinite(terms)
    cols = np.any(hit, axis=0)
    table[:, cols] = hit[:, cols].astype(np.float64)
    return table


def lagrange_deriv_table(nodes: Array, points: Array) -> Array:
    """Derivatives ``l_i'(x_q)`` as an ``(N + 1, Q)`` array.

    Evaluated as ``w_i * sum_k prod_{m != i, k} (x - x_m)`` using prefix and
    suffix products, which has no cancellation near the nodes.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    x = np.atleast_1d(np.asarray(points, dtype=np.float64))
    n = nodes.size
    w = barycentric_weights(nodes)
    out = np.empty((n, x.size))
    diff = x[None, :] - nodes[:, None]
    for i in range(n):
        d = np.delete(diff, i, axis=0)
        m = d.shape[0]
        prefix = np.ones((m + 1, x.size))
        suffix = np.ones((m + 1, x.size))
        for k in range(m):
            prefix[k + 1] = prefix[k] * d[k]
            suffix[m - k - 1] = suffix[m - k] * d[m - k - 1]
        out[i] = w[i] * np.sum(prefix[:m] * suffix[1:], axis=0)
    return out


def edge_table(nodes: Array, points: Array) -> Array:
    """Values ``eps_i(x_q)``, ``i = 1..N``, as an ``(N, Q)`` array."""
    dl = lagrange_deriv_table(nodes, points)
    return -np.cumsum(dl[:-1], axis=0)


def _check_index(i: int, lo: int, hi: int, what: str) -> None:
    if not lo <= i <= hi:
        raise UsageError(f"{what} index {i} outside [{lo}, {hi}]")


def lagrange_eval(nodes: Array, i: int, xi: float) -> float:
    nodes = np.asarray(nodes, dtype=np.float64)
    _check_index(i, 0, nodes.size - 1, "Lagrange")
    return float(lagrange_table(nodes, [xi])[i, 0])


def lagrange_deriv(nodes: Array, i: int, xi: float) -> float:
    nodes = np.asarray(nodes, dtype=np.float64)
    _check_index(i, 0, nodes.size - 1, "Lagrange")
    return float(lagrange_deriv_table(nodes, [xi])[i, 0])


def edge_eval(nodes: Array, i: int, xi: float) -> float:
    """Value of the edge polynomial ``eps_i`` (``1 <= i <= N``) at ``xi``."""
    nodes = np.asarray(nodes, dtype=np.float64)
    _check_index(i, 1, nodes.size - 1, "edge")
    return float(edge_table(nodes, [xi])[i - 1, 0])


@dataclass(frozen=True)
class BasisSet:
    """Lagrange and edge polynomials of one degree tabulated at fixed points."""

    degree: int
    nodes: Array
    points: Array
    lagrange_table: Array
    lagrange_deriv_table: Array
    edge_table: Array


@lru_cache(maxsize=None)
def _gll_nodes(N: int) -> Array:
    return gll_rule(N).nodes


def tabulate(degree: int, points) -> BasisSet:
    """Tabulate the GLL-based bases of ``degree`` at ``points``."""
    if int(degree) != degree or degree < 1:
        raise UsageError(f"basis degree must be an integer >= 1, got {degree}")
    nodes = _gll_nodes(int(degree))
    pts = np.atleast_1d(np.asarray(points, dtype=np.float64)).copy()
    tables = [
        lagrange_table(nodes, pts),
        lagrange_deriv_table(nodes, pts),
        edge_table(nodes, pts),
    ]
    for t in (pts, *tables):
        t.setflags(write=False)
    return BasisSet(int(degree), nodes, pts, *tables)
