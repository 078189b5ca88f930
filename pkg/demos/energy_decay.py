"""Energy of the regularised Test-A1 run on a coarse mesh.

The semi-implicit scheme is expected to dissipate the discrete energy.
Pass a mesh size as the first argument (default 40).
"""
# %%
import sys
from dataclasses import replace

import numpy as np

from bionet import io
from bionet.model import run_simulation

n = int(sys.argv[1]) if len(sys.argv) > 1 else 40
params = replace(io.preset_params("Test-A1"), n_div=n, dt=1.0 / n)
result = run_simulation(params)

# %%
t = np.array([r.time for r in result.records])
E = np.array([r.energy for r in result.records])
print(f"E(0) = {E[0]:.6f}, E(T) = {E[-1]:.6f}, ratio {E[-1] / E[0]:.3f}")
print(f"largest relative rise after step 1: {np.max(E[2:] / E[1:-1]) - 1:.2e}")

# %%
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    fig, ax = plt.subplots()
    ax.plot(t, E)
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.set_title(f"Test-A1, h = 1/{n}")
    fig.savefig("energy_decay.png", dpi=120)
    print("saved energy_decay.png")
