import math

import numpy as np
import pytest
import scipy.sparse as sp

from bionet import fem
from bionet.fem import TensorField
from bionet.linsolve import (IncompatibleRHS, IndefinitenessDetected, NonConvergence, SolverConfig,
                             cg_solve, solve_neumann_singular)
from bionet.mesh import build_unit_square_mesh


def cos_cos(x, y):
    return np.cos(np.pi * x) * np.cos(np.pi * y)


def neumann_poisson(n, cfg=None, x0=None):
    m = build_unit_square_mesh(n)
    K = fem.assemble_stiffness(m)
    b = fem.assemble_load(m, lambda x, y: 2 * np.pi**2 * cos_cos(x, y))
    return m, solve_neumann_singular(K, b, fem.assemble_mass(m), cfg, x0=x0)


def test_scaled_mass_system():
    m = build_unit_square_mesh(10)
    A = 3.0 * fem.assemble_mass(m)
    b = np.random.default_rng(0).standard_normal(m.n_nodes)
    cfg = SolverConfig(rel_tolerance=1e-10)
    x, rep = cg_solve(A, b, cfg)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert rep.residual_norm <= 1e-10 * rep.rhs_norm
    assert rep.iterations > 0


def test_zero_rhs():
    A = sp.identity(5, format="csr")
    x, rep = cg_solve(A, np.zeros(5))
    np.testing.assert_array_equal(x, 0.0)
    assert rep.iterations == 0


@pytest.mark.parametrize("preconditioner", ["none", "jacobi"])
def test_random_spd_against_dense_solve(preconditioner):
    rng = np.random.default_rng(42)
    B = rng.standard_normal((50, 50))
    A = B @ B.T + 50 * np.eye(50)
    b = rng.standard_normal(50)
    x, _ = cg_solve(sp.csr_matrix(A), b, SolverConfig(rel_tolerance=1e-12, preconditioner=preconditioner))
    np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-8)


def test_non_convergence():
    m = build_unit_square_mesh(10)
    K = fem.assemble_stiffness(m) + fem.assemble_mass(m)
    with pytest.raises(NonConvergence) as info:
        cg_solve(K, np.ones(m.n_nodes) + m.nodes[:, 0], SolverConfig(max_iterations=2))
    assert info.value.report.iterations == 2


def test_indefinite_detected():
    A = sp.diags([1.0, -1.0, 2.0]).tocsr()
    with pytest.raises(IndefinitenessDetected):
        cg_solve(A, np.array([1.0, 1.0, 1.0]), SolverConfig(preconditioner="none"))
    with pytest.raises(IndefinitenessDetected):
        cg_solve(A, np.array([1.0, 1.0, 1.0]), SolverConfig(preconditioner="jacobi"))


def test_indefinite_coefficient_surfaces_in_pressure_solve():
    m = build_unit_square_mesh(8)
    C = TensorField.constant(m.n_nodes, -2.0, 0.0, -2.0)
    K = fem.assemble_weighted_stiffness(m, C, 0.1)
    b = fem.assemble_load(m, lambda x, y: cos_cos(x, y))
    with pytest.raises(IndefinitenessDetected):
        solve_neumann_singular(K, b, fem.assemble_mass(m), SolverConfig(preconditioner="none"))


@pytest.mark.parametrize("kwargs", [dict(rel_tolerance=0.0), dict(rel_tolerance=1.0),
                                    dict(max_iterations=0), dict(preconditioner="ilu")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_neumann_zero_rhs():
    m = build_unit_square_mesh(4)
    x = solve_neumann_singular(fem.assemble_stiffness(m), np.zeros(m.n_nodes), fem.assemble_mass(m))
    np.testing.assert_array_equal(x, 0.0)


def test_neumann_incompatible():
    m = build_unit_square_mesh(8)
    with pytest.raises(IncompatibleRHS):
        solve_neumann_singular(fem.assemble_stiffness(m), fem.assemble_load(m, 1.0), fem.assemble_mass(m))


def test_neumann_manufactured_and_mean():
    m, p = neumann_poisson(32, SolverConfig(rel_tolerance=1e-12))
    M = fem.assemble_mass(m)
    assert abs(np.ones(m.n_nodes) @ (M @ p)) <= 1e-12
    assert fem.l2_error(m, p, cos_cos) < 5e-3


def test_neumann_order_two():
    cfg = SolverConfig(rel_tolerance=1e-12)
    errors = [fem.l2_error(*neumann_poisson(n, cfg), cos_cos) for n in (32, 64)]
    assert errors[0] / errors[1] == pytest.approx(4.0, abs=0.3)


def test_neumann_invariant_to_constant_shift_of_guess():
    cfg = SolverConfig(rel_tolerance=1e-12)
    rng = np.random.default_rng(5)
    m = build_unit_square_mesh(16)
    guess = rng.standard_normal(m.n_nodes)
    _, a = neumann_poisson(16, cfg, x0=guess)
    _, b = neumann_poisson(16, cfg, x0=guess + 7.5)
    np.testing.assert_allclose(a, b, atol=1e-12)
