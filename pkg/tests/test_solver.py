from dataclasses import replace

import numpy as np
import pytest

from mimetic_darcy.assembly import assemble
from mimetic_darcy.errors import SolverError, UsageError
from mimetic_darcy.mesh import build_mesh
from mimetic_darcy.problem import FluxBC, PermeabilityField, ProblemSpec
from mimetic_darcy.solver import solve_linear, solve_saddle, velocity_from_flux
from mimetic_darcy.verification import ANISOTROPIC_K, layered_case, manufactured_case, run_case

SIDES = ("left", "right", "bottom", "top")
OUTWARD = {"left": (-1, 0), "right": (1, 0), "bottom": (0, -1), "top": (0, 1)}


def uniform_flux_spec(qx, qy, K, M=2, N=2):
    bcs = {
        s: FluxBC(lambda x, y, n=OUTWARD[s]: (n[0] * qx + n[1] * qy) * np.ones_like(x))
        for s in SIDES
    }
    return ProblemSpec(
        "uniform", (0.0, 1.0, 0.0, 1.0), M, M, N, PermeabilityField.constant(K), lambda x, y: 0.0 * x, bcs
    )


def test_zero_data_zero_solution():
    bcs = {s: FluxBC(lambda x, y: 0.0 * x) for s in SIDES}
    spec = ProblemSpec("zero", (0, 1, 0, 1), 2, 2, 3, PermeabilityField.constant(np.eye(2)), lambda x, y: 0.0 * x, bcs)
    fields = solve_saddle(assemble(spec))
    assert np.all(fields.flux == 0) and np.all(fields.pressure == 0)


def test_refinement_reduces_error():
    coarse = run_case(manufactured_case(2, 3))
    fine = run_case(manufactured_case(4, 3))
    assert fine.pressure_error < coarse.pressure_error
    assert fine.flux_error < coarse.flux_error


@pytest.mark.parametrize("spec", [manufactured_case(2, 3), manufactured_case(3, 2), layered_case(3, 3, 2)],
                         ids=["manufactured-2-3", "manufactured-3-2", "layered"])
def test_solve_methods_agree(spec):
    sys = assemble(spec)
    x_bk, _ = solve_linear(sys, method="bunch-kaufman")
    x_lu, _ = solve_linear(sys, method="lu")
    x_sp, _ = solve_linear(sys, method="sparse-lu")
    np.testing.assert_allclose(x_bk, x_lu, atol=1e-10)
    np.testing.assert_allclose(x_bk, x_sp, atol=1e-10)
    # dense limit switches to sparse LU
    _, piv = solve_linear(sys, dense_limit=10)
    assert piv.method == "sparse-lu"


def test_unknown_method():
    with pytest.raises(UsageError):
        solve_linear(assemble(manufactured_case(1, 1)), method="cholesky")


def test_missing_gauge_is_reported():
    sys = assemble(manufactured_case(2, 2))
    n = sys.dimension - 1
    stripped = replace(sys, matrix=sys.matrix[:n, :n].tocsr(), rhs=sys.rhs[:n], has_gauge=False)
    with pytest.raises(SolverError) as info:
        solve_linear(stripped)
    assert info.value.pivot is not None and 0 <= info.value.pivot < n


@pytest.mark.parametrize("spec", [manufactured_case(3, 2), layered_case(3, 3, 3)], ids=["gauged", "pressure-bc"])
def test_inertia_of_saddle_system(spec):
    sys = assemble(spec)
    _, piv = solve_linear(sys)
    # with a gauge the constant pressure mode and the multiplier add one +/- pair
    g = int(sys.has_gauge)
    assert piv.inertia == (sys.n_free + g, sys.n_p, 0)
    assert piv.n_1x1 + 2 * piv.n_2x2 == sys.dimension


def test_residual_and_mass_balance():
    fields = solve_saddle(assemble(manufactured_case(4, 3)))
    assert fields.residual < 1e-14
    assert fields.mass_balance < 1e-12


def test_deterministic_bytes():
    a = solve_saddle(assemble(manufactured_case(3, 3)))
    b = solve_saddle(assemble(manufactured_case(3, 3)))
    assert a.flux.tobytes() == b.flux.tobytes()
    assert a.pressure.tobytes() == b.pressure.tobytes()


def test_velocity_identity_tensor():
    spec = uniform_flux_spec(0.4, -1.3, np.eye(2))
    mesh, dm = build_mesh(spec.domain, 2, 2, 2)
    fields = solve_saddle(assemble(spec, mesh, dm))
    _, _, ux, uy = velocity_from_flux(spec, mesh, dm, fields, np.linspace(-1, 1, 5))
    np.testing.assert_allclose(ux, 0.4, atol=1e-12)
    np.testing.assert_allclose(uy, -1.3, atol=1e-12)


def test_velocity_anisotropic_tensor():
    # K^-1 (1, 0) for K = [[2, 1], [1, 2]]
    spec = uniform_flux_spec(1.0, 0.0, ANISOTROPIC_K, M=3, N=3)
    mesh, dm = build_mesh(spec.domain, 3, 3, 3)
    fields = solve_saddle(assemble(spec, mesh, dm))
    _, _, ux, uy = velocity_from_flux(spec, mesh, dm, fields, np.linspace(-1, 1, 4))
    np.testing.assert_allclose(ux, 2 / 3, atol=1e-12)
    np.testing.assert_allclose(uy, -1 / 3, atol=1e-12)


@pytest.mark.parametrize("N", [1, 2, 4])
def test_layered_velocity_is_uniform(N):
    res = run_case(layered_case(3, 3, N))
    pts = np.linspace(-0.9, 0.9, 4)
    _, _, ux, uy = velocity_from_flux(res.spec, res.mesh, res.dofmap, res.fields, pts)
    np.testing.assert_allclose(ux, 1.0, atol=1e-11)
    np.testing.assert_allclose(uy, 0.0, atol=1e-11)
