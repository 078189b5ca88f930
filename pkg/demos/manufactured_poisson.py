"""Manufactured solution for the pressure equation.

With C = 0 and r = 1 the pressure problem is the pure-Neumann Poisson
equation. p = cos(pi x) cos(pi y) has zero normal derivative and zero mean,
so S = 2 pi^2 p reproduces it exactly. P1 elements should show second order.
"""
# %%
import math

import numpy as np

from bionet import fem
from bionet.fem import TensorField
from bionet.linsolve import SolverConfig
from bionet.mesh import build_unit_square_mesh
from bionet.model import solve_pressure


def exact(x, y):
    return np.cos(np.pi * x) * np.cos(np.pi * y)


# %%
errors = {}
for n in (8, 16, 32, 64, 128):
    mesh = build_unit_square_mesh(n)
    zero = TensorField.constant(mesh.n_nodes, 0.0, 0.0, 0.0)
    S = 2 * np.pi**2 * fem.evaluate(mesh, exact)
    p = solve_pressure(mesh, zero, 1.0, S, SolverConfig(rel_tolerance=1e-12))
    errors[n] = fem.l2_error(mesh, p, exact)

# %%
print(f"{'n':>5}  {'L2 error':>12}  order")
prev = None
for n, err in errors.items():
    order = "" if prev is None else f"{math.log2(prev / err):.3f}"
    print(f"{n:>5}  {err:12.4e}  {order}")
    prev = err
