"""Nested-mesh accuracy study with dt = h.

Each row compares the final |C| on h with the run on h/2. Test-A1 should
approach first order, the time discretisation being the dominant error.
"""
# %%
import sys

from bionet import accuracy, io

preset = sys.argv[1] if len(sys.argv) > 1 else "Test-A1"
levels = int(sys.argv[2]) if len(sys.argv) > 2 else 4

rows = accuracy.richardson_study(io.preset_params(preset), accuracy.halving_levels(20, levels))
print(preset)
print(accuracy.format_table(rows), end="")
