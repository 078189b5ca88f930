"""Cai-Hu network formation model: pressure solve, conductivity update, energy.

The time loop is partitioned.  Starting from ``p^0`` computed from ``C^0``,
each step advances the conductivity with the lagged pressure,

    (C^{n+1}, B) + dt D^2 (grad C^{n+1}, grad B)
        + dt alpha ((|C^n| + eps)^(gamma - 2) C^{n+1}, B)
        = (C^n, B) + dt c^2 (grad p^n (x) grad p^n, B),

and then recomputes the pressure from ``C^{n+1}``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from . import fem
from .fem import EDGE_MIDPOINT, TensorField
from .linsolve import SolverConfig, SolverError, cg_solve, solve_neumann_singular
from .mesh import TriMesh, build_unit_square_mesh, reflection_permutation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelParams:
    """Model constants, source description and discretisation controls.

    ``alpha``, ``c2`` and ``d2`` may be zero (degenerate limits used in
    verification); everything else must be strictly positive.
    """

    alpha: float
    c2: float
    d2: float
    eps: float
    gamma: float
    r: float
    t_final: float
    sigma: float = 500.0
    x0: tuple[float, float] = (0.25, 0.25)
    dt: float = 0.01
    n_div: int = 600

    def __post_init__(self):
        for name in ("alpha", "c2", "d2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be non-negative, got {v!r}")
        for name in ("eps", "gamma", "r", "t_final", "sigma", "dt"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if int(self.n_div) != self.n_div or self.n_div < 1:
            raise ValueError(f"n_div must be a positive integer, got {self.n_div!r}")
        object.__setattr__(self, "x0", (float(self.x0[0]), float(self.x0[1])))

    @property
    def h(self) -> float:
        return 1.0 / self.n_div

    def step_sizes(self) -> list[float]:
        """Time steps covering ``[0, t_final]``; the last one may be shorter."""
        ratio = self.t_final / self.dt
        n = round(ratio)
        if n >= 1 and abs(ratio - n) <= 1e-9 * max(1.0, ratio):
            return [self.dt] * n
        n = math.ceil(ratio)
        return [self.dt] * (n - 1) + [self.t_final - (n - 1) * self.dt]


@dataclass
class SimState:
    time: float
    pressure: np.ndarray
    conductivity: TensorField
    step_index: int


@dataclass
class SimRecord:
    step: int
    time: float
    energy: float
    increment_norm: float
    snapshot: Optional[SimState] = None
    min_eigenvalue: Optional[float] = None


class SimulationError(RuntimeError):
    """A failure inside the time loop, tagged with where it happened."""

    def __init__(self, stage: str, step: int, cause: Exception):
        super().__init__(f"{stage} failed at step {step}: {cause}")
        self.stage = stage
        self.step = step
        self.cause = cause


@dataclass
class SimulationResult:
    records: list[SimRecord]
    state: SimState
    steady: bool = False
    mesh: Optional[TriMesh] = field(default=None, repr=False)


def gaussian_bump(mesh: TriMesh, sigma: float, x0=(0.25, 0.25)) -> np.ndarray:
    """Nodal values of ``exp(-sigma |x - x0|^2)``."""
    d = mesh.nodes - np.asarray(x0, dtype=float)
    return np.exp(-sigma * (d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]))


def build_source(mesh: TriMesh, sigma: float, x0=(0.25, 0.25)) -> np.ndarray:
    """Nodal source ``E - mean(E)`` for the Gaussian bump ``E``.

    The mean is taken with the same quadrature the load vector uses, so the
    assembled load of the result sums to zero up to rounding.
    """
    E = gaussian_bump(mesh, sigma, x0)
    weights = fem.assemble_load(mesh, 1.0)
    return E - (weights @ E) / weights.sum()


def initial_conductivity(mesh: TriMesh) -> TensorField:
    return TensorField.constant(mesh.n_nodes, 1.0, 0.0, 1.0)


def solve_pressure(mesh: TriMesh, C: TensorField, r: float, S: np.ndarray,
                   cfg: Optional[SolverConfig] = None,
                   x0: Optional[np.ndarray] = None) -> np.ndarray:
    """Zero-mean solution of ``((r I + C) grad p, grad q) = (S, q)``."""
    K = fem.StencilMatrix(mesh, fem.assemble_weighted_stiffness(mesh, C, r))
    b = fem.assemble_load(mesh, S)
    return solve_neumann_singular(K, b, fem.assemble_mass(mesh), cfg, x0=x0,
                                  pairing=reflection_permutation(mesh))


def metabolic_weight(mesh: TriMesh, C: TensorField, eps: float, gamma: float) -> np.ndarray:
    """``(|C| + eps)^(gamma - 2)`` at the quadrature points."""
    a, b, c = (fem.interpolate(mesh, x) for x in C.components())
    norm = np.sqrt((a * a + c * c) + 2.0 * (b * b))
    with np.errstate(over="ignore", divide="ignore"):
        w = (norm + eps) ** (gamma - 2.0)
    if not np.isfinite(w).all():
        raise FloatingPointError(
            f"metabolic weight overflowed; eps={eps!r} is too small for gamma={gamma!r}"
        )
    return w


def step_conductivity(mesh: TriMesh, C_n: TensorField, p_n: np.ndarray,
                      params: ModelParams, cfg: Optional[SolverConfig] = None,
                      dt: Optional[float] = None) -> TensorField:
    """One semi-implicit Backward-Euler step for the conductivity tensor."""
    dt = params.dt if dt is None else dt
    M = fem.assemble_mass(mesh)
    terms = [(1.0, M)]
    if params.d2 > 0:
        terms.append((dt * params.d2, fem.assemble_stiffness(mesh)))
    if params.alpha > 0:
        w = metabolic_weight(mesh, C_n, params.eps, params.gamma)
        terms.append((dt * params.alpha, fem.assemble_weighted_mass(mesh, w)))
    A = fem.StencilMatrix(mesh, fem.combine(*terms))
    Mop = fem.StencilMatrix(mesh, M)
    pairing = reflection_permutation(mesh)

    g = fem.element_gradients(mesh, p_n)
    q = EDGE_MIDPOINT.n_points
    products = (g[:, 0] * g[:, 0], g[:, 0] * g[:, 1], g[:, 1] * g[:, 1])
    out = []
    for c_n, gg in zip(C_n.components(), products):
        rhs = Mop @ c_n
        if params.c2 > 0:
            rhs = rhs + (dt * params.c2) * fem.assemble_load(mesh, np.repeat(gg[:, None], q, axis=1))
        x, _ = cg_solve(A, rhs, cfg, x0=c_n, pairing=pairing)
        out.append(x)
    return TensorField(*out)


def compute_energy(mesh: TriMesh, C: TensorField, p: np.ndarray, params: ModelParams) -> float:
    """Gradient-flow energy of the pair ``(C, p)``.

    Sum of the diffusive part ``d2/2 |grad C|^2``, the activation part
    ``c2 grad p . (r I + C) grad p`` and the metabolic part
    ``alpha/gamma |C|^gamma``; ``eps`` plays no role here.
    """
    geo = fem._geometry(mesh)
    rule = EDGE_MIDPOINT
    grads = [fem.element_gradients(mesh, c) for c in C.components()]
    grad_sq = (np.sum(grads[0] ** 2, axis=1) + 2.0 * np.sum(grads[1] ** 2, axis=1)
               + np.sum(grads[2] ** 2, axis=1))
    diffusive = 0.5 * params.d2 * float(geo.areas @ grad_sq)

    gp = fem.element_gradients(mesh, p)
    a11, a12, a22 = (fem.quadrature_mean(fem.interpolate(mesh, c, rule), rule) for c in C.components())
    quad_form = ((params.r + a11) * gp[:, 0] ** 2 + 2.0 * a12 * gp[:, 0] * gp[:, 1]
                 + (params.r + a22) * gp[:, 1] ** 2)
    activation = params.c2 * float(geo.areas @ quad_form)

    a, b, c = (fem.interpolate(mesh, x, rule) for x in C.components())
    norm = np.sqrt((a * a + c * c) + 2.0 * (b * b))
    metabolic = (params.alpha / params.gamma) * fem.integrate(mesh, norm ** params.gamma, rule)
    return diffusive + activation + metabolic


def _increment_norm(M, C_new: TensorField, C_old: TensorField) -> float:
    sq = 0.0
    for k, (u, v) in enumerate(zip(C_new.components(), C_old.components())):
        d = u - v
        sq += (2.0 if k == 1 else 1.0) * float(d @ (M @ d))
    return math.sqrt(max(sq, 0.0))


def _tensor_norm(M, C: TensorField) -> float:
    return _increment_norm(M, C, TensorField.constant(len(C.c11), 0.0, 0.0, 0.0))


Callback = Callable[[SimState, SimRecord], None]


def run_simulation(params: ModelParams, callbacks: Iterable[Callback] = (), *,
                   solver: Optional[SolverConfig] = None,
                   source: Optional[np.ndarray] = None,
                   initial: Optional[TensorField] = None,
                   mesh: Optional[TriMesh] = None,
                   steady_tol: Optional[float] = 1e-8,
                   steady_window: int = 10,
                   snapshot_every: Optional[int] = None) -> SimulationResult:
    """March the coupled system from ``t = 0`` to ``params.t_final``.

    One :class:`SimRecord` is produced for the initial state and one per
    step.  The loop stops early once the relative increment norm stays
    below ``steady_tol`` for ``steady_window`` consecutive steps; pass
    ``steady_tol=None`` to always run to the final time.  Snapshots (with
    the most negative nodal eigenvalue of ``C``) are attached to the
    initial record, every ``snapshot_every`` steps, and the final record.
    ``callbacks`` are called as ``cb(state, record)`` after each record.
    """
    mesh = mesh or build_unit_square_mesh(params.n_div)
    if mesh.n_div != params.n_div:
        raise ValueError("mesh does not match params.n_div")
    cfg = solver or SolverConfig()
    callbacks = list(callbacks)
    S = build_source(mesh, params.sigma, params.x0) if source is None else np.asarray(source, float)
    C = initial_conductivity(mesh) if initial is None else initial
    M = fem.assemble_mass(mesh)

    def snapshot(state: SimState, record: SimRecord):
        record.snapshot = SimState(state.time, state.pressure.copy(),
                                   TensorField(*(c.copy() for c in state.conductivity.components())),
                                   state.step_index)
        record.min_eigenvalue = float(state.conductivity.eigenvalues()[0].min())

    def emit(state: SimState, record: SimRecord):
        records.append(record)
        for cb in callbacks:
            cb(state, record)

    try:
        p = solve_pressure(mesh, C, params.r, S, cfg)
    except (SolverError, FloatingPointError, ValueError) as exc:
        raise SimulationError("pressure solve", 0, exc) from exc

    state = SimState(0.0, p, C, 0)
    records: list[SimRecord] = []
    first = SimRecord(0, 0.0, compute_energy(mesh, C, p, params), 0.0)
    snapshot(state, first)
    emit(state, first)

    steps = params.step_sizes()
    quiet = 0
    steady = False
    t = 0.0
    for n, dt in enumerate(steps, start=1):
        try:
            C_new = step_conductivity(mesh, C, p, params, cfg, dt=dt)
        except (SolverError, FloatingPointError, ValueError) as exc:
            raise SimulationError("conductivity step", n, exc) from exc
        if not C_new.is_finite():
            raise SimulationError("conductivity step", n, FloatingPointError("non-finite conductivity"))
        try:
            p = solve_pressure(mesh, C_new, params.r, S, cfg, x0=p)
        except (SolverError, FloatingPointError, ValueError) as exc:
            raise SimulationError("pressure solve", n, exc) from exc

        increment = _increment_norm(M, C_new, C) / dt
        C = C_new
        t = params.t_final if n == len(steps) else n * params.dt
        state = SimState(t, p, C, n)
        record = SimRecord(n, t, compute_energy(mesh, C, p, params), increment)

        if steady_tol:
            scale = _tensor_norm(M, C)
            rel = increment / scale if scale > 0 else increment
            quiet = quiet + 1 if rel < steady_tol else 0
            steady = quiet >= steady_window
        last = steady or n == len(steps)
        if last or (snapshot_every and n % snapshot_every == 0):
            snapshot(state, record)
        emit(state, record)
        if steady:
            log.info("steady state reached at step %d (t=%g)", n, t)
            break

    return SimulationResult(records, state, steady, mesh)


__all__ = [
    "ModelParams", "SimState", "SimRecord", "SimulationError", "SimulationResult",
    "gaussian_bump", "build_source", "initial_conductivity", "solve_pressure", "metabolic_weight",
    "step_conductivity", "compute_energy", "run_simulation",
]
