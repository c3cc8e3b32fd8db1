"""Problem data: permeability tensor field, sources, boundary conditions."""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace
from typing import Literal, Union

import numpy as np

from .errors import SingularMaterialError, UsageError
from .mesh import SIDES, Side

DarcySign = Literal["paper", "physical"]
ScalarFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
VectorFn = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]

SYMMETRY_TOL = 1e-14
MIN_SOURCE_POINTS = 10


@dataclass(frozen=True)
class PermeabilityField:
    """Symmetric positive definite 2x2 tensor field ``K(x, y)``.

    ``evaluator(x, y)`` takes arrays of any (equal) shape and returns an
    array of shape ``x.shape + (2, 2)``. ``y_breaks`` lists horizontal lines
    across which ``K`` may jump; element edges must align with them and
    values on such an edge are taken from inside the element.
    """

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    y_breaks: tuple[float, ...] = ()

    @classmethod
    def constant(cls, K) -> PermeabilityField:
        K = np.array(K, dtype=np.float64)
        if K.shape != (2, 2):
            raise UsageError(f"permeability must be 2x2, got shape {K.shape}")

        def evaluate(x, y):
            shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
            return np.broadcast_to(K, shape + (2, 2)).copy()

        return cls(evaluate)

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        K = np.asarray(self.evaluator(x, y), dtype=np.float64)
        return np.broadcast_to(K, np.broadcast(x, y).shape + (2, 2))

    def on_element(self, x, y, y_lo: float, y_hi: float) -> np.ndarray:
        """Evaluate inside an element spanning ``[y_lo, y_hi]`` in y."""
        if self.y_breaks:
            pad = 1e-12 * (y_hi - y_lo)
            y = np.clip(y, y_lo + pad, y_hi - pad)
        return self(x, y)

    def checked_inverse(self, K: np.ndarray, x, y) -> np.ndarray:
        """Invert a stack of tensors, raising on asymmetric or non-SPD ones."""
        asym = np.abs(K[..., 0, 1] - K[..., 1, 0])
        det = K[..., 0, 0] * K[..., 1, 1] - K[..., 0, 1] * K[..., 1, 0]
        bad = (asym > SYMMETRY_TOL * np.maximum(1.0, np.abs(K[..., 0, 1]))) | ~(det > 0) | ~(K[..., 0, 0] > 0)
        if np.any(bad):
            k = np.argwhere(bad)[0]
            point = (float(np.asarray(x)[tuple(k)]), float(np.asarray(y)[tuple(k)]))
            raise SingularMaterialError(
                f"permeability is not symmetric positive definite at {point}: "
                f"K = {K[tuple(k)].tolist()}",
                point=point,
            )
        inv = np.empty_like(K)
        inv[..., 0, 0] = K[..., 1, 1] / det
        inv[..., 1, 1] = K[..., 0, 0] / det
        inv[..., 0, 1] = -K[..., 0, 1] / det
        inv[..., 1, 0] = -K[..., 1, 0] / det
        return inv


@dataclass(frozen=True)
class FluxBC:
    """Prescribed outward normal flux ``q . n`` on a side, as a function of (x, y)."""

    normal_flux: ScalarFn


@dataclass(frozen=True)
class PressureBC:
    """Prescribed pressure trace on a side, as a function of (x, y)."""

    pressure: ScalarFn


BoundaryCondition = Union[FluxBC, PressureBC]


@dataclass(frozen=True)
class QuadratureSettings:
    """Points per direction used by the assembly.

    ``None`` selects the defaults: ``N + 2`` GLL points for mass matrices
    and ``max(N + 4, MIN_SOURCE_POINTS)`` for the source and boundary data.
    The floor keeps all-flux problems compatible to round-off on coarse
    meshes, where the discrete mass balance depends on it.
    """

    mass_points: int | None = None
    source_points: int | None = None

    def mass(self, N: int) -> int:
        return self.mass_points if self.mass_points is not None else N + 2

    def source(self, N: int) -> int:
        return self.source_points if self.source_points is not None else max(N + 4, MIN_SOURCE_POINTS)


@dataclass(frozen=True)
class ProblemSpec:
    """A complete Darcy problem on a rectangle plus its discretization parameters.

    ``darcy_sign='paper'`` solves ``u = grad p``; ``'physical'`` solves
    ``u = -grad p``. In both cases ``q = K u`` and ``div q = source``.
    """

    name: str
    domain: tuple[float, float, float, float]
    elements_x: int
    elements_y: int
    degree: int
    permeability: PermeabilityField
    source: ScalarFn
    boundary: Mapping[Side, BoundaryCondition]
    exact_pressure: ScalarFn | None = None
    exact_flux: VectorFn | None = None
    darcy_sign: DarcySign = "paper"
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)

    def __post_init__(self):
        missing = [s for s in SIDES if s not in self.boundary]
        extra = [s for s in self.boundary if s not in SIDES]
        if missing or extra:
            raise UsageError(
                f"boundary conditions must name each side once; missing={missing} unknown={extra}"
            )
        for side, bc in self.boundary.items():
            if not isinstance(bc, (FluxBC, PressureBC)):
                raise UsageError(f"side {side!r}: condition must be FluxBC or PressureBC, got {bc!r}")
        if self.darcy_sign not in ("paper", "physical"):
            raise UsageError(f"darcy_sign must be 'paper' or 'physical', got {self.darcy_sign!r}")

    @property
    def sign(self) -> float:
        return 1.0 if self.darcy_sign == "paper" else -1.0

    @property
    def all_flux(self) -> bool:
        return all(isinstance(bc, FluxBC) for bc in self.boundary.values())

    def with_mesh(self, elements_x: int, elements_y: int | None = None, degree: int | None = None) -> ProblemSpec:
        return replace(
            self,
            elements_x=elements_x,
            elements_y=elements_x if elements_y is None else elements_y,
            degree=self.degree if degree is None else degree,
        )
