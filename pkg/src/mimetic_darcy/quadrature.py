"""Legendre polynomials and Gauss-Lobatto-Legendre quadrature on [-1, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .errors import QuadratureError, UsageError

NEWTON_TOL = 1e-15
NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class QuadratureRule:
    """GLL rule with ``degree + 1`` nodes.

    ``degree`` is the polynomial degree of the nodal basis built on the
    nodes, so the rule integrates polynomials up to ``2 * degree - 1``
    exactly.
    """

    degree: int
    nodes: npt.NDArray[np.float64]
    weights: npt.NDArray[np.float64]

    @property
    def n_points(self) -> int:
        return self.degree + 1

    def mapped(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights transplanted to the interval ``[a, b]``."""
        half = 0.5 * (b - a)
        return a + half * (self.nodes + 1.0), half * self.weights


def _legendre_arrays(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return L_n, L_{n-1} and L'_n at ``x`` (L_{-1} taken as 0)."""
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    dp_prev = np.zeros_like(x)
    dp = np.zeros_like(x)
    for k in range(n):
        # (k+1) L_{k+1} = (2k+1) x L_k - k L_{k-1};  L'_{k+1} = L'_{k-1} + (2k+1) L_k
        p_next = ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
        dp_next = dp_prev + (2 * k + 1) * p
        p_prev, p = p, p_next
        dp_prev, dp = dp, dp_next
    return p, p_prev, dp


def legendre_eval(n: int, xi: float) -> tuple[float, float]:
    """Evaluate the Legendre polynomial L_n and its derivative at ``xi``.

    Uses the three-term recurrence for the values and
    ``L'_{k+1} = L'_{k-1} + (2k + 1) L_k`` for the derivative, which stays
    finite at the endpoints.

    Examples
    --------
    >>> legendre_eval(2, 0.5)
    (-0.125, 1.5)
    """
    if n < 0:
        raise UsageError(f"Legendre degree must be >= 0, got {n}")
    value, _, deriv = _legendre_arrays(n, np.asarray(float(xi)))
    return float(value), float(deriv)


def gll_rule(N: int) -> QuadratureRule:
    """Gauss-Lobatto-Legendre rule of degree ``N`` (``N + 1`` points).

    Interior nodes are the roots of L'_N, found by Newton iteration started
    from the Chebyshev-Gauss-Lobatto points. Weights are
    ``2 / (N (N + 1) L_N(x_i)^2)``.
    """
    if int(N) != N or N < 1:
        raise UsageError(f"GLL degree must be an integer >= 1, got {N}")
    N = int(N)
    x = -np.cos(np.pi * np.arange(N + 1) / N)
    x[0], x[-1] = -1.0, 1.0

    interior = x[1:-1].copy()
    if interior.size:
        for _ in range(NEWTON_MAX_ITER):
            p, _, dp = _legendre_arrays(N, interior)
            # Legendre ODE gives L'' from L and L' away from the endpoints
            d2p = (2.0 * interior * dp - N * (N + 1) * p) / (1.0 - interior**2)
            step = dp / d2p
            interior -= step
            if np.max(np.abs(step)) <= NEWTON_TOL:
                break
        else:
            raise QuadratureError(
                f"GLL node iteration did not converge for N={N} "
                f"after {NEWTON_MAX_ITER} iterations"
            )
        x[1:-1] = interior

    x = 0.5 * (x - x[::-1])
    p_n, _, _ = _legendre_arrays(N, x)
    w = 2.0 / (N * (N + 1) * p_n**2)
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(degree=N, nodes=x, weights=w)


def gll_points(n_points: int) -> QuadratureRule:
    """GLL rule specified by its number of points (``>= 2``)."""
    if n_points < 2:
        raise UsageError(f"a GLL rule needs at least 2 points, got {n_points}")
    return gll_rule(n_points - 1)
