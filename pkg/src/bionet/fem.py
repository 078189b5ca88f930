"""P1 finite element assembly on :class:`~bionet.mesh.TriMesh`.

Scalar fields are plain nodal ``numpy`` vectors.  Assembled operators are
``scipy.sparse.csr_matrix`` objects with sorted indices; every element
matrix is symmetrised before scattering, so the global matrices are
symmetric bit for bit.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle, barycentric points, weights summing to 1."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)


EDGE_MIDPOINT = QuadratureRule(
    points=np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
    weights=np.full(3, 1.0 / 3.0),
    degree=2,
)


def _dunavant4() -> QuadratureRule:
    a1, w1 = 0.445948490915965, 0.223381589678011
    a2, w2 = 0.091576213509771, 0.109951743655322
    pts = []
    for a, b in ((a1, 1 - 2 * a1), (a2, 1 - 2 * a2)):
        pts += [[a, a, b], [a, b, a], [b, a, a]]
    w = np.array([w1] * 3 + [w2] * 3)
    return QuadratureRule(np.array(pts), w / w.sum(), 4)


DUNAVANT_4 = _dunavant4()

FieldLike = Union[np.ndarray, float, Callable[[np.ndarray, np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class TensorField:
    """Nodal symmetric 2x2 tensor field; only c11, c12, c22 are stored."""

    c11: np.ndarray
    c12: np.ndarray
    c22: np.ndarray

    def __post_init__(self):
        if not (len(self.c11) == len(self.c12) == len(self.c22)):
            raise ValueError("tensor components must have equal length")

    @classmethod
    def constant(cls, n: int, c11: float, c12: float, c22: float) -> "TensorField":
        return cls(np.full(n, float(c11)), np.full(n, float(c12)), np.full(n, float(c22)))

    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.c11, self.c12, self.c22

    def norm(self) -> np.ndarray:
        return frobenius_norm_field(self)

    def eigenvalues(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodal (lambda_min, lambda_max)."""
        mean = 0.5 * (self.c11 + self.c22)
        rad = np.hypot(0.5 * (self.c11 - self.c22), self.c12)
        return mean - rad, mean + rad

    def is_finite(self) -> bool:
        return all(np.isfinite(c).all() for c in self.components())

    def permuted(self, perm: np.ndarray, swap_diagonal: bool = False) -> "TensorField":
        a, b, c = (x[perm] for x in self.components())
        return TensorField(c, b, a) if swap_diagonal else TensorField(a, b, c)


def frobenius_norm_field(C: TensorField) -> np.ndarray:
    """Frobenius norm at each node, the off-diagonal entry counted twice."""
    return np.sqrt((C.c11 * C.c11 + C.c22 * C.c22) + 2.0 * (C.c12 * C.c12))


# Stencil offsets (di, dj); mirror pairs sit next to each other so that
# the grouped sum in StencilMatrix.__matmul__ commutes with reflection.
_STENCIL = ((0, 0), (1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, -1))


def _contract(values: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """``values @ coeffs`` summed left to right, the same way on every row."""
    out = values[:, :1] * coeffs[0]
    for k in range(1, coeffs.shape[0]):
        out = out + values[:, k:k + 1] * coeffs[k]
    return out


class _Geometry:
    """Per-mesh cache: areas, basis gradients and the scatter maps.

    Assembly is arranged so that floating-point results commute exactly
    with the reflection ``(x, y) -> (y, x)``: upper triangles are visited
    in the mirror image of the lower triangles' vertex order, and matrix
    and load entries accumulate their element contributions in an order
    that the reflection maps onto itself.
    """

    def __init__(self, mesh: TriMesh):
        n_div = mesh.n_div
        el = np.array(mesh.elements)
        el[1::2] = el[1::2][:, [0, 2, 1]]
        self.elements = el
        p = mesh.nodes[el]
        x, y = p[..., 0], p[..., 1]
        e1x, e1y = x[:, 1] - x[:, 0], y[:, 1] - y[:, 0]
        e2x, e2y = x[:, 2] - x[:, 0], y[:, 2] - y[:, 0]
        signed = 0.5 * (e1x * e2y - e1y * e2x)
        self.areas = np.abs(signed)
        twice = 2.0 * signed
        gx = np.column_stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]])
        gy = np.column_stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]])
        self.grads = np.stack([gx / twice[:, None], gy / twice[:, None]], axis=-1)

        # mirror partner of each element and a reflection-invariant sort key
        cell = np.arange(n_div * n_div)
        ci, cj = np.divmod(cell, n_div)
        partner = np.empty(2 * n_div * n_div, dtype=np.int64)
        partner[0::2] = 2 * (cj * n_div + ci) + 1
        partner[1::2] = 2 * (cj * n_div + ci)
        key = np.minimum(np.arange(len(partner)), partner)

        n = mesh.n_nodes
        n1 = n_div + 1
        rows = np.repeat(el, 3, axis=1).ravel()
        cols = np.tile(el, (1, 3)).ravel()
        keys, inverse = np.unique(rows * n + cols, return_inverse=True)
        slots = inverse.ravel()
        self._matrix_order = np.lexsort((np.repeat(key, 9), slots))
        self._matrix_slots = slots[self._matrix_order]
        self.indices = (keys % n).astype(np.int32)
        counts = np.bincount(keys // n, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.shape = (n, n)

        # neighbour index (n = padding zero) and CSR position per stencil offset
        ki, kj = np.divmod(np.arange(n), n1)
        self.stencil_nbr = np.full((len(_STENCIL), n), n, dtype=np.int64)
        self.stencil_pos = np.full((len(_STENCIL), n), -1, dtype=np.int64)
        for s_idx, (di, dj) in enumerate(_STENCIL):
            ni, nj = ki + di, kj + dj
            ok = (ni >= 0) & (ni <= n_div) & (nj >= 0) & (nj <= n_div)
            nbr = ni * n1 + nj
            self.stencil_nbr[s_idx, ok] = nbr[ok]
            self.stencil_pos[s_idx, ok] = np.searchsorted(keys, np.arange(n)[ok] * n + nbr[ok])
        if not np.array_equal(np.sort(self.stencil_pos[self.stencil_pos >= 0]), np.arange(len(keys))):
            raise AssertionError("P1 sparsity pattern is not a 7-point stencil")

        self.partner = partner
        on_diag = np.divmod(el, n1)
        self._diag_vertex = on_diag[0] == on_diag[1]
        nodes_flat = el.ravel()
        self._load_order = np.lexsort((np.repeat(key, 3), nodes_flat))
        self._load_nodes = nodes_flat[self._load_order]
        self.n_nodes = n

    def scatter(self, local: np.ndarray) -> sp.csr_matrix:
        local = 0.5 * (local + local.transpose(0, 2, 1))
        return self.matrix(np.bincount(self._matrix_slots,
                                       weights=local.ravel()[self._matrix_order],
                                       minlength=len(self.indices)))

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        A = sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)
        A.has_sorted_indices = True
        return A

    def has_pattern(self, A: sp.csr_matrix) -> bool:
        return (A.shape == self.shape and A.nnz == len(self.indices)
                and np.array_equal(A.indptr, self.indptr) and np.array_equal(A.indices, self.indices))

    def accumulate(self, local: np.ndarray) -> np.ndarray:
        # an element and its mirror image share every diagonal vertex; give
        # both the pair average so their order in the sum is irrelevant
        local = np.where(self._diag_vertex, 0.5 * (local + local[self.partner]), local)
        return np.bincount(self._load_nodes, weights=local.ravel()[self._load_order],
                           minlength=self.n_nodes)


_GEOMETRY: "weakref.WeakKeyDictionary[TriMesh, _Geometry]" = weakref.WeakKeyDictionary()


def _geometry(mesh: TriMesh) -> _Geometry:
    geo = _GEOMETRY.get(mesh)
    if geo is None:
        geo = _GEOMETRY[mesh] = _Geometry(mesh)
    return geo


def quadrature_points(mesh: TriMesh, rule: QuadratureRule = EDGE_MIDPOINT) -> np.ndarray:
    """Physical coordinates of the quadrature points, shape (n_elements, q, 2).

    All quadrature-point arrays in this module share this point ordering.
    """
    p = mesh.nodes[_geometry(mesh).elements]
    return np.stack([_contract(p[..., 0], rule.points.T), _contract(p[..., 1], rule.points.T)], axis=-1)


def interpolate(mesh: TriMesh, u: np.ndarray, rule: QuadratureRule = EDGE_MIDPOINT) -> np.ndarray:
    """Evaluate the P1 interpolant of nodal ``u`` at quadrature points."""
    return _contract(np.asarray(u, dtype=float)[_geometry(mesh).elements], rule.points.T)


def quadrature_mean(values: np.ndarray, rule: QuadratureRule = EDGE_MIDPOINT) -> np.ndarray:
    """Weighted average of quadrature-point values over each element."""
    return _contract(values, rule.weights[:, None])[:, 0]


def evaluate(mesh: TriMesh, f: FieldLike, rule: QuadratureRule = EDGE_MIDPOINT) -> np.ndarray:
    """Bring ``f`` to quadrature-point values of shape (n_elements, q).

    ``f`` may be a scalar, a nodal vector, an array already shaped
    (n_elements, q), or a callable ``f(x, y)``.
    """
    shape = (mesh.n_elements, rule.n_points)
    if callable(f):
        xq = quadrature_points(mesh, rule)
        return np.broadcast_to(np.asarray(f(xq[..., 0], xq[..., 1]), dtype=float), shape)
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        return np.broadcast_to(f, shape)
    if f.shape == (mesh.n_nodes,):
        return interpolate(mesh, f, rule)
    if f.shape == shape:
        return f
    raise ValueError(f"cannot evaluate field of shape {f.shape} on this mesh")


def integrate(mesh: TriMesh, f: FieldLike, rule: QuadratureRule = EDGE_MIDPOINT) -> float:
    vals = evaluate(mesh, f, rule)
    return float(_geometry(mesh).areas @ quadrature_mean(vals, rule))


def combine(*terms: tuple[float, sp.csr_matrix]) -> sp.csr_matrix:
    """Linear combination of matrices that share one sparsity pattern.

    Unlike ``A + B`` in scipy, explicit zeros are kept, so the result still
    matches the mesh pattern expected by :class:`StencilMatrix`.
    """
    (s0, A0), rest = terms[0], terms[1:]
    data = s0 * A0.data
    for s, A in rest:
        if A.nnz != A0.nnz or not np.array_equal(A.indices, A0.indices):
            raise ValueError("matrices do not share a sparsity pattern")
        data = data + s * A.data
    out = sp.csr_matrix((data, A0.indices.copy(), A0.indptr.copy()), shape=A0.shape)
    out.has_sorted_indices = True
    return out


class StencilMatrix:
    """Matrix-vector product of an assembled matrix in 7-point stencil form.

    Gives the same numbers as ``csr @ x`` up to summation order, but the
    order is fixed so that ``(A @ x)[perm] == A @ x[perm]`` holds bit for
    bit for the mesh reflection ``perm`` whenever ``A`` itself is
    reflection invariant.
    """

    def __init__(self, mesh: TriMesh, A: sp.csr_matrix):
        geo = _geometry(mesh)
        if not geo.has_pattern(A):
            raise ValueError("matrix was not assembled on this mesh")
        self.csr = A
        self.shape = A.shape
        pos = geo.stencil_pos
        self._coef = np.where(pos >= 0, A.data[np.maximum(pos, 0)], 0.0)
        self._nbr = geo.stencil_nbr

    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        xp = np.append(np.asarray(x, dtype=float), 0.0)
        t = self._coef * xp[self._nbr]
        return (t[0] + ((t[1] + t[2]) + (t[3] + t[4]))) + (t[5] + t[6])


def assemble_weighted_mass(mesh: TriMesh, w: FieldLike = 1.0,
                           rule: QuadratureRule = EDGE_MIDPOINT) -> sp.csr_matrix:
    """Mass matrix of ``(w u, v)`` with ``w`` sampled at quadrature points."""
    wq = evaluate(mesh, w, rule)
    if not np.isfinite(wq).all():
        raise ValueError("mass weight has non-finite values")
    geo = _geometry(mesh)
    scale = geo.areas[:, None] * wq * rule.weights
    products = np.einsum("qa,qb->qab", rule.points, rule.points).reshape(rule.n_points, 9)
    return geo.scatter(_contract(scale, products).reshape(-1, 3, 3))


def assemble_mass(mesh: TriMesh) -> sp.csr_matrix:
    return assemble_weighted_mass(mesh, 1.0)


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    geo = _geometry(mesh)
    gx, gy = geo.grads[..., 0], geo.grads[..., 1]
    dots = gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :]
    return geo.scatter(geo.areas[:, None, None] * dots)


def assemble_weighted_stiffness(mesh: TriMesh, C: TensorField, r: float,
                                rule: QuadratureRule = EDGE_MIDPOINT) -> sp.csr_matrix:
    """Stiffness matrix of ``((r I + C) grad u, grad v)``.

    ``C`` is interpolated to the quadrature points; since P1 gradients are
    constant per element only its quadrature average enters.  No positivity
    check is made on ``r I + C``.
    """
    if r < 0:
        raise ValueError("r must be non-negative")
    geo = _geometry(mesh)
    a11, a12, a22 = (quadrature_mean(interpolate(mesh, c, rule), rule)[:, None]
                     for c in C.components())
    gx, gy = geo.grads[..., 0], geo.grads[..., 1]
    flux_x = (r + a11) * gx + a12 * gy
    flux_y = a12 * gx + (r + a22) * gy
    local = flux_x[:, :, None] * gx[:, None, :] + flux_y[:, :, None] * gy[:, None, :]
    return geo.scatter(geo.areas[:, None, None] * local)


def assemble_load(mesh: TriMesh, f: FieldLike, rule: QuadratureRule = EDGE_MIDPOINT) -> np.ndarray:
    """Load vector ``(f, phi_k)`` for every node ``k``."""
    fq = evaluate(mesh, f, rule)
    geo = _geometry(mesh)
    return geo.accumulate(_contract(geo.areas[:, None] * fq * rule.weights, rule.points))


def element_gradients(mesh: TriMesh, u: np.ndarray) -> np.ndarray:
    """Gradient of the P1 interpolant on each element, shape (n_elements, 2)."""
    geo = _geometry(mesh)
    ue = np.asarray(u, dtype=float)[geo.elements]
    g = geo.grads
    return ue[:, 0:1] * g[:, 0] + ue[:, 1:2] * g[:, 1] + ue[:, 2:3] * g[:, 2]


def l2_norm(mesh: TriMesh, u: np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    return float(np.sqrt(max(u @ (assemble_mass(mesh) @ u), 0.0)))


def relative_l2_error(mesh: TriMesh, u: np.ndarray, v: np.ndarray) -> float:
    ref = l2_norm(mesh, v)
    if ref == 0.0:
        raise ZeroDivisionError("reference field has zero L2 norm")
    return l2_norm(mesh, np.asarray(u) - np.asarray(v)) / ref


def l2_error(mesh: TriMesh, u: np.ndarray, exact: Callable, rule: QuadratureRule = DUNAVANT_4) -> float:
    """L2 distance between the P1 interpolant of ``u`` and a function."""
    diff = interpolate(mesh, u, rule) - evaluate(mesh, exact, rule)
    return float(np.sqrt(integrate(mesh, diff**2, rule)))


def tensor_l2_norm(mesh: TriMesh, C: TensorField) -> float:
    M = assemble_mass(mesh)
    sq = C.c11 @ (M @ C.c11) + 2.0 * (C.c12 @ (M @ C.c12)) + C.c22 @ (M @ C.c22)
    return float(np.sqrt(max(sq, 0.0)))
