"""Network formation in the Test-DD regime at reduced resolution.

Starting from the isotropic C = I, the pressure gradient of the Gaussian
source drives anisotropy. The eigenvalue gap of C is a cheap indicator
that channels have formed. Arguments: preset (default Test-DD1) and mesh
size (default 60).
"""
# %%
import sys
from dataclasses import replace

import numpy as np

from bionet import io
from bionet.fem import frobenius_norm_field
from bionet.model import run_simulation

preset = sys.argv[1] if len(sys.argv) > 1 else "Test-DD1"
n = int(sys.argv[2]) if len(sys.argv) > 2 else 60
params = replace(io.preset_params(preset), n_div=n)


def progress(state, record):
    if record.step % 100 == 0:
        lo, hi = state.conductivity.eigenvalues()
        print(f"t = {record.time:5.2f}  energy {record.energy:.5f}  max gap {np.max(hi - lo):.4f}")


result = run_simulation(params, [progress])

# %%
mesh, C = result.mesh, result.state.conductivity
norm = frobenius_norm_field(C)
print(f"final max |C| = {norm.max():.4f}, min |C| = {norm.min():.2e}, steady = {result.steady}")

# %%
try:
    import matplotlib.pyplot as plt
    from matplotlib.tri import Triangulation
except ImportError:
    plt = None
if plt is not None:
    tri = Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.elements)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.tripcolor(tri, norm, shading="gouraud", cmap="viridis")
    ax.set_aspect("equal")
    ax.set_title(f"|C| at t = {result.state.time:g}, {preset}, h = 1/{n}")
    fig.savefig(f"pattern_{preset}.png", dpi=120)
    print(f"saved pattern_{preset}.png")
