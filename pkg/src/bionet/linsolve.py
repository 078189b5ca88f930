"""Preconditioned conjugate gradients, including the pure Neumann case."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

COMPATIBILITY_THRESHOLD = 1e-10


class SolverError(RuntimeError):
    """Base class for linear solver failures."""


class NonConvergence(SolverError):
    def __init__(self, message: str, report: "SolveReport"):
        super().__init__(message)
        self.report = report


class IndefinitenessDetected(SolverError):
    """Raised when CG meets a direction with ``p^T A p <= 0``."""


class IncompatibleRHS(SolverError):
    """Right-hand side of a pure Neumann problem is not orthogonal to constants."""


@dataclass(frozen=True)
class SolverConfig:
    rel_tolerance: float = 1e-10
    max_iterations: Optional[int] = None  # None -> 10 x unknowns
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if not 0.0 < self.rel_tolerance < 1.0:
            raise ValueError("rel_tolerance must lie in (0, 1)")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")

    def iteration_limit(self, n: int) -> int:
        return self.max_iterations if self.max_iterations is not None else 10 * n


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual_norm: float
    rhs_norm: float


def _inverse_diagonal(A: sp.spmatrix, cfg: SolverConfig) -> Optional[np.ndarray]:
    if cfg.preconditioner == "none":
        return None
    d = A.diagonal()
    if np.any(d <= 0):
        raise IndefinitenessDetected("non-positive diagonal entry; Jacobi is undefined")
    return 1.0 / d


def _inner(pairing: Optional[np.ndarray]):
    """Euclidean inner product; with ``pairing`` it is evaluated as
    ``sum(w + w[pairing]) / 2`` which is bitwise invariant when both
    arguments are permuted by the involution ``pairing``."""
    if pairing is None:
        return lambda u, v: float(u @ v)

    def inner(u, v):
        w = u * v
        return 0.5 * float(np.sum(w + w[pairing]))
    return inner


def _pcg(A, b, x, cfg: SolverConfig, inv_diag, project: bool, pairing=None):
    n = b.shape[0]
    dot = _inner(pairing)
    bnorm = math.sqrt(dot(b, b))
    target = cfg.rel_tolerance * bnorm
    r = b - A @ x
    if project:
        r -= r.mean()
    rnorm = math.sqrt(dot(r, r))
    if rnorm <= target:
        return x, SolveReport(0, rnorm, bnorm)
    z = r * inv_diag if inv_diag is not None else r.copy()
    p = z.copy()
    rz = dot(r, z)
    limit = cfg.iteration_limit(n)
    for it in range(1, limit + 1):
        Ap = A @ p
        pAp = dot(p, Ap)
        if not pAp > 0.0:
            raise IndefinitenessDetected(
                f"p^T A p = {pAp:.3e} at CG iteration {it}; operator is not positive definite"
            )
        step = rz / pAp
        x += step * p
        r -= step * Ap
        if project:
            r -= r.mean()
        rnorm = math.sqrt(dot(r, r))
        if rnorm <= target:
            return x, SolveReport(it, rnorm, bnorm)
        z = r * inv_diag if inv_diag is not None else r
        rz_new = dot(r, z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    report = SolveReport(limit, rnorm, bnorm)
    raise NonConvergence(
        f"CG did not converge in {limit} iterations (relative residual {rnorm / bnorm:.3e})",
        report,
    )


def cg_solve(A: sp.spmatrix, b: np.ndarray, cfg: Optional[SolverConfig] = None,
             x0: Optional[np.ndarray] = None,
             pairing: Optional[np.ndarray] = None) -> tuple[np.ndarray, SolveReport]:
    """Solve the SPD system ``A x = b``.

    Stops once ``||b - A x|| <= cfg.rel_tolerance * ||b||``.  ``pairing``
    is an optional index involution used to symmetrise inner products (see
    :func:`_inner`); it does not change the mathematics.
    """
    cfg = cfg or SolverConfig()
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return np.zeros_like(b), SolveReport(0, 0.0, 0.0)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    return _pcg(A, b, x, cfg, _inverse_diagonal(A, cfg), project=False, pairing=pairing)


def solve_neumann_singular(K: sp.spmatrix, b: np.ndarray, M: sp.spmatrix,
                           cfg: Optional[SolverConfig] = None,
                           x0: Optional[np.ndarray] = None,
                           pairing: Optional[np.ndarray] = None) -> np.ndarray:
    """Solve ``K x = b`` where ``K`` has the constants as its null space.

    The constant mode is projected out of the initial guess and of every
    residual; the returned ``x`` has zero weighted mean, ``1^T M x = 0``.
    """
    cfg = cfg or SolverConfig()
    b = np.asarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b)
    total = float(b.sum())
    if abs(total) > COMPATIBILITY_THRESHOLD * bnorm:
        raise IncompatibleRHS(
            f"right-hand side sums to {total:.3e} (|b| = {bnorm:.3e}); "
            "the source must have zero integral"
        )
    b = b - b.mean()
    mass = np.asarray(M.sum(axis=0)).ravel()
    measure = float(mass.sum())
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    x -= (mass @ x) / measure
    x, _ = _pcg(K, b, x, cfg, _inverse_diagonal(K, cfg), project=True, pairing=pairing)
    x -= (mass @ x) / measure
    return x
