import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimetic_darcy.assembly import (
    assemble,
    boundary_pressure_functional,
    mass_matrix_flux,
    mass_matrix_volume,
    source_functional,
)
from mimetic_darcy.errors import IllPosedProblemError, SingularMaterialError, UsageError
from mimetic_darcy.mesh import build_mesh, reconstruct
from mimetic_darcy.problem import FluxBC, PermeabilityField, PressureBC, ProblemSpec
from mimetic_darcy.quadrature import gll_rule
from mimetic_darcy.verification import layered_case, manufactured_case
from oracles import edge_polys, gauss_integrate, gauss_integrate_2d, lagrange_polys

IDENTITY = PermeabilityField.constant(np.eye(2))
ANISO = [[2.0, 1.0], [1.0, 2.0]]


def make_spec(boundary=None, source=lambda x, y: 0.0 * x, K=IDENTITY, M=1, N=1, domain=(0.0, 1.0, 0.0, 1.0)):
    if boundary is None:
        boundary = {s: FluxBC(lambda x, y: 0.0 * x) for s in ("left", "right", "bottom", "top")}
    return ProblemSpec("test", domain, M, M, N, K, source, boundary)


def flux_mass_oracle(bounds, N, K):
    """Element flux mass matrix from power-basis polynomials and Gauss-Legendre."""
    x0, x1, y0, y1 = bounds
    dx, dy = x1 - x0, y1 - y0
    Kinv = np.linalg.inv(np.asarray(K, dtype=float))
    nodes = gll_rule(N).nodes
    L, Ep = lagrange_polys(nodes), edge_polys(nodes)
    funcs = []
    for i in range(N + 1):
        for j in range(N):
            funcs.append((lambda s, t, i=i, j=j: L[i](s) * Ep[j](t) * 2 / dy, 0))
    for i in range(N):
        for j in range(N + 1):
            funcs.append((lambda s, t, i=i, j=j: Ep[i](s) * L[j](t) * 2 / dx, 1))
    n = len(funcs)
    M = np.zeros((n, n))
    for a, (fa, ca) in enumerate(funcs):
        for b, (fb, cb) in enumerate(funcs):
            g = lambda s, t: fa(s, t) * fb(s, t) * Kinv[ca, cb]
            M[a, b] = gauss_integrate_2d(g, (-1, 1, -1, 1), N + 2) * dx * dy / 4
    return M


def test_flux_mass_lowest_order_entry():
    m = mass_matrix_flux((0.0, 2.0, 0.0, 2.0), 1, IDENTITY)
    # l_0(xi)^2 * (1/2)^2 over [-1, 1]^2: 2/3 * 2 * 1/4 = 1/3
    assert m[0, 0] == pytest.approx(1 / 3, abs=1e-15)
    assert m.shape == (4, 4)


@pytest.mark.parametrize("N", [1, 2, 3])
@pytest.mark.parametrize("K", [np.eye(2), ANISO, [[3.0, -0.5], [-0.5, 0.7]]])
def test_flux_mass_matches_oracle(N, K):
    bounds = (0.5, 1.25, -1.0, 0.0)
    m = mass_matrix_flux(bounds, N, PermeabilityField.constant(K))
    np.testing.assert_allclose(m, flux_mass_oracle(bounds, N, K), atol=1e-13)


def test_flux_mass_anisotropic_couples_components():
    N = 2
    m = mass_matrix_flux((0.0, 1.0, 0.0, 1.0), N, PermeabilityField.constant(ANISO))
    nx = (N + 1) * N
    assert np.abs(m[:nx, nx:]).max() > 1e-3
    np.testing.assert_array_equal(m, m.T)
    iso = mass_matrix_flux((0.0, 1.0, 0.0, 1.0), N, IDENTITY)
    assert np.all(iso[:nx, nx:] == 0)


@pytest.mark.parametrize("c", [0.01, 3.0, 250.0])
def test_flux_mass_scales_inversely_with_k(c):
    bounds = (0.0, 1.0, 0.0, 0.5)
    base = mass_matrix_flux(bounds, 3, PermeabilityField.constant(ANISO))
    scaled = mass_matrix_flux(bounds, 3, PermeabilityField.constant(c * np.array(ANISO)))
    np.testing.assert_allclose(scaled, base / c, rtol=1e-13)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_flux_mass_is_spd(N):
    m = mass_matrix_flux((0.0, 0.3, 0.0, 2.0), N, PermeabilityField.constant(ANISO))
    assert np.linalg.eigvalsh(m).min() > 0


def test_volume_mass_lowest_order():
    # eps_1 = 1/2 on [-1, 1], so (1/2)^4 * 4
    np.testing.assert_allclose(mass_matrix_volume(1), [[0.25]], atol=1e-16)


@pytest.mark.parametrize("N", [1, 2, 4, 7])
def test_volume_mass_matches_oracle(N):
    Ep = edge_polys(gll_rule(N).nodes)
    m1 = np.array([[gauss_integrate(lambda s: a(s) * b(s), -1, 1, N + 1) for b in Ep] for a in Ep])
    np.testing.assert_allclose(mass_matrix_volume(N), np.kron(m1, m1), atol=1e-13)
    assert np.linalg.eigvalsh(mass_matrix_volume(N)).min() > 0


def test_volume_mass_independent_of_element_size():
    a = assemble(make_spec(N=3, domain=(0, 1, 0, 1)))
    b = assemble(make_spec(N=3, domain=(-5, 40, 2, 2.001)))
    assert (a.volume_mass != b.volume_mass).nnz == 0


def test_source_functional_zero():
    assert np.all(source_functional((0, 1, 0, 1), 3, lambda x, y: 0.0 * x) == 0)


@pytest.mark.parametrize("N", [1, 2, 5])
def test_source_functional_reproduces_integral(N):
    # the constant 1 has pressure coefficients h_i h_j, so the pairing is the integral of phi
    bounds = (0.2, 0.7, -1.0, 0.5)
    h = np.diff(gll_rule(N).nodes)
    ones = np.outer(h, h).ravel()
    f = source_functional(bounds, N, lambda x, y: np.ones_like(x))
    assert f @ ones == pytest.approx(0.5 * 1.5, rel=1e-14)
    phi = lambda x, y: np.sin(x) * np.exp(y)
    f = source_functional(bounds, N, phi, 12)
    assert f @ ones == pytest.approx(gauss_integrate_2d(phi, bounds, 20), rel=1e-12)


def test_source_functional_matches_oracle():
    N, bounds = 3, (0.0, 2.0, 1.0, 2.0)
    phi = lambda x, y: x**2 * y
    Ep = edge_polys(gll_rule(N).nodes)
    expected = []
    for i in range(N):
        for j in range(N):
            g = lambda s, t, i=i, j=j: Ep[i](s) * Ep[j](t) * phi(1.0 + s, 1.5 + t / 2)
            expected.append(gauss_integrate_2d(g, (-1, 1, -1, 1), 8) * 2 * 1 / 4)
    np.testing.assert_allclose(source_functional(bounds, N, phi), expected, atol=1e-14)


def test_zero_data_gives_zero_rhs():
    sys = assemble(make_spec())
    assert np.all(sys.rhs == 0)
    assert sys.n_free == 0 and sys.n_p == 1 and sys.has_gauge


@pytest.mark.parametrize("case", ["manufactured", "layered"])
def test_matrix_exactly_symmetric(case):
    spec = manufactured_case(3, 3) if case == "manufactured" else layered_case(3, 3, 3)
    A = assemble(spec).matrix
    assert (A - A.T).nnz == 0 or np.abs((A - A.T).data).max() == 0


def test_dimensions_two_by_two():
    sys = assemble(manufactured_case(2, 2))
    assert sys.n_q == 40 and sys.n_free == 24 and sys.n_p == 16
    assert sys.dimension == 41


def test_pressure_sides_remove_gauge():
    sys = assemble(layered_case(1, 3, 2))
    assert not sys.has_gauge
    assert sys.dimension == sys.n_free + sys.n_p


def test_incompatible_flux_data():
    spec = make_spec(source=lambda x, y: np.ones_like(x))
    with pytest.raises(IllPosedProblemError):
        assemble(spec)
    # balanced by unit outflow through the right side
    ok = dict(spec.boundary, right=FluxBC(lambda x, y: np.ones_like(x)))
    sys = assemble(make_spec(boundary=ok, source=lambda x, y: np.ones_like(x)))
    assert sys.compatibility_residual < 1e-14


def test_singular_material():
    bad = PermeabilityField.constant([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(SingularMaterialError) as info:
        assemble(make_spec(K=bad))
    x, y = info.value.point
    assert 0 <= x <= 1 and 0 <= y <= 1


def test_asymmetric_material_rejected():
    with pytest.raises(SingularMaterialError):
        assemble(make_spec(K=PermeabilityField.constant([[2.0, 0.5], [0.0, 2.0]])))


def test_misaligned_layers():
    spec = layered_case(3, 3, 2).with_mesh(3, 4)
    with pytest.raises(UsageError):
        assemble(spec)


def test_problem_spec_validates_sides():
    with pytest.raises(UsageError):
        make_spec(boundary={"left": FluxBC(lambda x, y: x)})
    with pytest.raises(UsageError):
        make_spec(boundary={s: 1.0 for s in ("left", "right", "bottom", "top")})


@settings(max_examples=15, deadline=None)
@given(N=st.integers(1, 5), mx=st.integers(1, 3), my=st.integers(1, 3), seed=st.integers(0, 2**16))
def test_divergence_pairing_equals_integral(N, mx, my, seed):
    # p . (M_vol E q) must equal the integral of p_h div q_h
    spec = make_spec(N=N, domain=(0.0, 1.5, -0.5, 0.5))
    spec = spec.with_mesh(mx, my)
    mesh, dm = build_mesh(spec.domain, mx, my, N)
    sys = assemble(spec, mesh, dm)
    rng = np.random.default_rng(seed)
    q, p = rng.normal(size=dm.n_q), rng.normal(size=dm.n_p)
    discrete = p @ (sys.volume_mass @ (sys.incidence.to_float() @ q))
    g, w = np.polynomial.legendre.leggauss(N + 2)
    _, _, ph = reconstruct(mesh, dm, p, "pressure", g)
    _, _, dq = reconstruct(mesh, dm, q, "divergence", g)
    W = np.outer(w, w) * mesh.dx * mesh.dy / 4
    assert discrete == pytest.approx(np.sum(ph * dq * W), abs=1e-11 * max(1.0, abs(discrete)))


def test_unit_boundary_pressure_functional():
    one = PressureBC(lambda x, y: np.ones_like(x))
    spec = make_spec(boundary={s: one for s in ("left", "right", "bottom", "top")}, M=2, N=3)
    mesh, dm = build_mesh(spec.domain, 2, 2, 3)
    bp = boundary_pressure_functional(spec, mesh, dm, 8)
    orient = {"left": -1, "right": 1, "bottom": -1, "top": 1}
    expected = np.zeros(dm.n_q)
    for b in dm.boundary_dofs:
        expected[b.index] = orient[b.side]
    np.testing.assert_allclose(bp, expected, atol=1e-14)


def test_boundary_pressure_functional_is_trace_integral():
    pbar = lambda x, y: np.cos(x) + x * y
    bc = PressureBC(pbar)
    spec = make_spec(boundary={s: bc for s in ("left", "right", "bottom", "top")}, M=2, N=3, domain=(0, 2, 0, 1))
    mesh, dm = build_mesh(spec.domain, 2, 2, 3)
    q = np.random.default_rng(0).normal(size=dm.n_q)
    bp = boundary_pressure_functional(spec, mesh, dm, 10)
    # oracle: integrate pbar (q_h . n) along each side with Gauss-Legendre
    g, w = np.polynomial.legendre.leggauss(12)
    total = 0.0
    for ex in range(2):
        for ey in range(2):
            x0, x1, y0, y1 = mesh.element_bounds(ex, ey)
            # on a 2x2 mesh every element owns one vertical and one horizontal boundary side
            xi = -1.0 if ex == 0 else 1.0
            _, _, v = reconstruct(mesh, dm, q, "flux_x", [xi], g)
            y = y0 + (g + 1) * (y1 - y0) / 2
            x = x0 if ex == 0 else x1
            total += xi * np.sum(w * pbar(x, y) * v[ex, ey, 0]) * (y1 - y0) / 2
            eta = -1.0 if ey == 0 else 1.0
            _, _, v = reconstruct(mesh, dm, q, "flux_y", g, [eta])
            x = x0 + (g + 1) * (x1 - x0) / 2
            y = y0 if ey == 0 else y1
            total += eta * np.sum(w * pbar(x, y) * v[ex, ey, :, 0]) * (x1 - x0) / 2
    assert bp @ q == pytest.approx(total, abs=1e-12)


def test_assembly_deterministic():
    a, b = assemble(manufactured_case(3, 3)), assemble(manufactured_case(3, 3))
    assert a.matrix.data.tobytes() == b.matrix.data.tobytes()
    assert a.rhs.tobytes() == b.rhs.tobytes()
