"""Convergence study on nested meshes with the time step tied to h."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import fem
from .linsolve import SolverConfig
from .mesh import build_unit_square_mesh, coarse_to_fine_injection
from .model import ModelParams, run_simulation


@dataclass(frozen=True)
class ConvergenceRow:
    """Error of ``|C|`` on the mesh of size ``h`` against the ``h/2`` run."""

    h: float
    error: float
    order: Optional[float] = None


def _final_norm(params: ModelParams, n_div: int, solver: Optional[SolverConfig]) -> np.ndarray:
    run = replace(params, n_div=n_div, dt=1.0 / n_div)
    result = run_simulation(run, solver=solver, steady_tol=None)
    return result.state.conductivity.norm()


def _divisions(h_list: Sequence[float]) -> list[int]:
    divs = []
    for h in h_list:
        n = Fraction(h).limit_denominator(10**6)
        if n.numerator != 1 or abs(float(n) - h) > 1e-12:
            raise ValueError(f"mesh size {h!r} is not 1/n for an integer n")
        divs.append(n.denominator)
    if len(divs) < 2:
        raise ValueError("need at least two mesh sizes")
    for a, b in zip(divs, divs[1:]):
        if b != 2 * a:
            raise ValueError(f"mesh sizes 1/{a} and 1/{b} are not nested by a factor 2")
    return divs


def richardson_study(params: ModelParams, h_list: Sequence[float],
                     solver: Optional[SolverConfig] = None,
                     workers: int = 1) -> list[ConvergenceRow]:
    """Relative L2 error of ``|C|(T)`` between consecutive levels, with ``dt = h``.

    ``h_list`` must be decreasing with each entry half the previous one.
    Row ``k`` compares the run on ``h_list[k]`` with the run on
    ``h_list[k + 1]``, the finer field injected onto the coarse nodes.
    """
    divs = _divisions(h_list)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            norms = list(pool.map(_final_norm, [params] * len(divs), divs, [solver] * len(divs)))
    else:
        norms = [_final_norm(params, n, solver) for n in divs]

    rows: list[ConvergenceRow] = []
    prev = None
    for k in range(len(divs) - 1):
        coarse = build_unit_square_mesh(divs[k])
        fine = build_unit_square_mesh(divs[k + 1])
        ref = norms[k + 1][coarse_to_fine_injection(coarse, fine)]
        err = fem.relative_l2_error(coarse, norms[k], ref)
        order = math.log2(prev / err) if prev is not None else None
        rows.append(ConvergenceRow(1.0 / divs[k], err, order))
        prev = err
    return rows


def halving_levels(n_coarsest: int, levels: int) -> list[float]:
    return [1.0 / (n_coarsest * 2**k) for k in range(levels)]


def _h_label(h: float) -> str:
    return f"1/{round(1.0 / h)}"


def format_table(rows: Sequence[ConvergenceRow]) -> str:
    lines = [f"{'h':>8}  {'error':>14}  {'order':>6}"]
    for row in rows:
        order = "--" if row.order is None else f"{row.order:.2f}"
        lines.append(f"{_h_label(row.h):>8}  {row.error:>14.6g}  {order:>6}")
    return "\n".join(lines) + "\n"


def write_convergence_csv(rows: Sequence[ConvergenceRow], path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h", "error", "order"])
        for row in rows:
            w.writerow([repr(row.h), repr(row.error), "" if row.order is None else repr(row.order)])
