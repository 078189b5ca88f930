import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bionet import fem
from bionet.fem import DUNAVANT_4, EDGE_MIDPOINT, TensorField
from bionet.mesh import build_unit_square_mesh, reflection_permutation
from bionet.model import build_source


@pytest.fixture(scope="module")
def mesh():
    return build_unit_square_mesh(12)


def random_tensor(rng, n):
    return TensorField(rng.random(n) + 0.5, 0.2 * rng.standard_normal(n), rng.random(n) + 0.5)


def assert_symmetric(A, rtol=1e-13):
    D = A.toarray()
    assert np.abs(D - D.T).max() <= rtol * np.abs(D).max()


@pytest.mark.parametrize("rule", [EDGE_MIDPOINT, DUNAVANT_4])
def test_quadrature_exactness(rule):
    # exact integral of x^a y^b over the unit reference triangle, divided by its area
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-15)
    x, y = rule.points[:, 1], rule.points[:, 2]
    for a in range(rule.degree + 1):
        for b in range(rule.degree + 1 - a):
            exact = 2 * math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            assert rule.weights @ (x**a * y**b) == pytest.approx(exact, abs=1e-12)


def test_mass_matrix_basic(mesh):
    M = fem.assemble_mass(mesh)
    assert M.sum() == pytest.approx(1.0, abs=1e-13)
    one = np.ones(mesh.n_nodes)
    assert one @ (M @ one) == pytest.approx(1.0, abs=1e-13)
    assert (M.diagonal() > 0).all()
    assert_symmetric(M)
    np.testing.assert_allclose(M @ one, fem.assemble_load(mesh, 1.0), rtol=1e-13)


def test_mass_matrix_single_square():
    # two triangles of area 1/2: nodes 0=(0,0) 1=(0,1) 2=(1,0) 3=(1,1); diagonal 0-3
    M = fem.assemble_mass(build_unit_square_mesh(1)).toarray()
    area = 0.5
    expected = np.array([
        [2 * area / 6, area / 12, area / 12, 2 * area / 12],
        [area / 12, area / 6, 0.0, area / 12],
        [area / 12, 0.0, area / 6, area / 12],
        [2 * area / 12, area / 12, area / 12, 2 * area / 6],
    ])
    np.testing.assert_allclose(M, expected, atol=1e-15)


def test_stiffness(mesh):
    K = fem.assemble_stiffness(mesh)
    np.testing.assert_allclose(K @ np.ones(mesh.n_nodes), 0.0, atol=1e-13)
    x = mesh.nodes[:, 0]
    assert x @ (K @ x) == pytest.approx(1.0, abs=1e-12)
    D = K.toarray()
    assert np.array_equal(D, D.T)


def test_weighted_stiffness_reductions(mesh):
    n = mesh.n_nodes
    K = fem.assemble_stiffness(mesh).toarray()
    W0 = fem.assemble_weighted_stiffness(mesh, TensorField.constant(n, 0, 0, 0), 1.0).toarray()
    np.testing.assert_allclose(W0, K, atol=1e-12)
    WI = fem.assemble_weighted_stiffness(mesh, TensorField.constant(n, 1, 0, 1), 0.1).toarray()
    np.testing.assert_allclose(WI, 1.1 * K, atol=1e-12)


@pytest.mark.parametrize("r", [0.1, 1e-3])
def test_weighted_stiffness_anisotropic(mesh, r):
    W = fem.assemble_weighted_stiffness(mesh, TensorField.constant(mesh.n_nodes, 1, 0, 0), r)
    x, y = mesh.nodes.T
    assert x @ (W @ x) == pytest.approx(1 + r, abs=1e-12)
    assert y @ (W @ y) == pytest.approx(r, abs=1e-12)
    np.testing.assert_allclose(W @ np.ones(mesh.n_nodes), 0.0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 2.0))
def test_weighted_stiffness_linear_in_coefficient(seed, r):
    m = build_unit_square_mesh(6)
    rng = np.random.default_rng(seed)
    C1, C2 = random_tensor(rng, m.n_nodes), random_tensor(rng, m.n_nodes)
    both = TensorField(*(a + b for a, b in zip(C1.components(), C2.components())))
    K = fem.assemble_stiffness(m).toarray()
    A = lambda C, rr: fem.assemble_weighted_stiffness(m, C, rr).toarray()
    np.testing.assert_allclose(A(C1, r), A(C1, 0.0) + r * K, atol=1e-11)
    np.testing.assert_allclose(A(both, 0.0), A(C1, 0.0) + A(C2, 0.0), atol=1e-11)
    assert_symmetric(fem.assemble_weighted_stiffness(m, C1, r))


def test_weighted_mass(mesh):
    M = fem.assemble_mass(mesh).toarray()
    np.testing.assert_allclose(fem.assemble_weighted_mass(mesh, 1.0).toarray(), M, atol=1e-15)
    np.testing.assert_allclose(fem.assemble_weighted_mass(mesh, 5.0).toarray(), 5 * M, atol=1e-14)
    from bionet.model import metabolic_weight
    w = metabolic_weight(mesh, TensorField.constant(mesh.n_nodes, 1, 0, 1), 0.1, 1.25)
    scalar = (math.sqrt(2) + 0.1) ** (1.25 - 2)
    np.testing.assert_allclose(w, scalar, rtol=1e-15)
    np.testing.assert_allclose(fem.assemble_weighted_mass(mesh, w).toarray(), scalar * M, atol=1e-14)


def test_weighted_mass_rejects_non_finite(mesh):
    w = np.ones((mesh.n_elements, 3))
    w[3, 1] = np.inf
    with pytest.raises(ValueError):
        fem.assemble_weighted_mass(mesh, w)


def test_weighted_mass_symmetric_random(mesh):
    rng = np.random.default_rng(1)
    w = rng.random((mesh.n_elements, 3)) + 0.1
    assert_symmetric(fem.assemble_weighted_mass(mesh, w))


def test_load_vectors(mesh):
    assert fem.assemble_load(mesh, 1.0).sum() == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_array_equal(fem.assemble_load(mesh, 0.0), 0.0)
    S = build_source(mesh, 500.0, (0.25, 0.25))
    assert abs(fem.assemble_load(mesh, S).sum()) <= 1e-13
    # degree-2 integrand is integrated exactly
    b = fem.assemble_load(mesh, lambda x, y: x * y)
    assert b.sum() == pytest.approx(0.25, abs=1e-14)


def test_element_gradients(mesh):
    x, y = mesh.nodes.T
    np.testing.assert_allclose(fem.element_gradients(mesh, x), [[1.0, 0.0]] * mesh.n_elements, atol=1e-12)
    np.testing.assert_allclose(fem.element_gradients(mesh, np.full(mesh.n_nodes, 3.0)), 0.0, atol=1e-12)
    np.testing.assert_allclose(fem.element_gradients(mesh, x + 2 * y), [[1.0, 2.0]] * mesh.n_elements,
                               atol=1e-11)


def test_l2_norms():
    m = build_unit_square_mesh(64)
    one = np.ones(m.n_nodes)
    assert fem.l2_norm(m, one) == pytest.approx(1.0, abs=1e-13)
    assert fem.relative_l2_error(m, one, one) == 0.0
    assert fem.l2_norm(m, m.nodes[:, 0]) == pytest.approx(math.sqrt(1 / 3), abs=1e-6)
    with pytest.raises(ZeroDivisionError):
        fem.relative_l2_error(m, one, np.zeros(m.n_nodes))


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_mass_form_exact_for_linear_fields(a, b, c):
    m = build_unit_square_mesh(5)
    x, y = m.nodes.T
    u = a + b * x + c * y
    exact = a * a + b * b / 3 + c * c / 3 + a * b + a * c + b * c / 2
    assert u @ (fem.assemble_mass(m) @ u) == pytest.approx(exact, abs=1e-12)


def test_frobenius_norm():
    C = TensorField(np.array([1.0, 0.0, 3.0]), np.array([0.0, 0.0, 4.0]), np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(fem.frobenius_norm_field(C), [math.sqrt(2), 0.0, math.sqrt(41)])


def test_eigenvalues():
    C = TensorField(np.array([2.0, 1.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    lo, hi = C.eigenvalues()
    np.testing.assert_allclose(lo, [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(hi, [2.0, 2.0], atol=1e-15)


def test_stencil_matches_csr(mesh):
    rng = np.random.default_rng(3)
    A = fem.assemble_weighted_stiffness(mesh, random_tensor(rng, mesh.n_nodes), 0.01)
    x = rng.standard_normal(mesh.n_nodes)
    np.testing.assert_allclose(fem.StencilMatrix(mesh, A) @ x, A @ x, rtol=0, atol=1e-13)
    with pytest.raises(ValueError):
        fem.StencilMatrix(build_unit_square_mesh(3), A)


def test_assembly_commutes_with_reflection_bitwise(mesh):
    """Mirrored data give mirrored matrices, loads and products exactly."""
    rng = np.random.default_rng(4)
    perm = reflection_permutation(mesh)
    a, b = rng.random(mesh.n_nodes), rng.random(mesh.n_nodes)
    C = TensorField(a, b + b[perm], a[perm])
    for A in (fem.assemble_mass(mesh), fem.assemble_stiffness(mesh),
              fem.assemble_weighted_stiffness(mesh, C, 1e-3)):
        D = A.toarray()
        assert np.array_equal(D[np.ix_(perm, perm)], D)
        op = fem.StencilMatrix(mesh, A)
        u = rng.standard_normal(mesh.n_nodes)
        assert np.array_equal((op @ u)[perm], op @ u[perm])
    assert np.array_equal(fem.assemble_load(mesh, a)[perm], fem.assemble_load(mesh, a[perm]))


def test_combine_keeps_pattern(mesh):
    M, K = fem.assemble_mass(mesh), fem.assemble_stiffness(mesh)
    A = fem.combine((1.0, M), (0.5, K))
    np.testing.assert_allclose(A.toarray(), (M + 0.5 * K).toarray(), atol=1e-15)
    assert A.nnz == M.nnz
