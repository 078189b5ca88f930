"""Uniform triangulations of the unit square.

Nodes are numbered lexicographically, ``k = i * (n_div + 1) + j`` for the
node at ``(i h, j h)``.  Every square cell is cut along its SW-NE diagonal,
so the mesh is invariant under the reflection ``(x, y) -> (y, x)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable uniform triangulation of ``[0, 1]^2``.

    Attributes
    ----------
    n_div : int
        Subdivisions per side, ``h = 1 / n_div``.
    nodes : (n_nodes, 2) float array
    elements : (n_elements, 3) int array, counter-clockwise
    boundary_nodes : sorted int array of nodes on the boundary
    """

    n_div: int
    nodes: np.ndarray
    elements: np.ndarray
    boundary_nodes: np.ndarray

    @property
    def h(self) -> float:
        return 1.0 / self.n_div

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def element_areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def node_index(self, i, j):
        """Index of the node at grid position ``(i, j)``."""
        return np.asarray(i) * (self.n_div + 1) + np.asarray(j)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def build_unit_square_mesh(n_div: int) -> TriMesh:
    """Structured mesh of the unit square with ``2 n_div^2`` triangles."""
    if int(n_div) != n_div or n_div < 1:
        raise ValueError(f"n_div must be a positive integer, got {n_div!r}")
    n = int(n_div)
    idx = np.arange(n + 1)
    # i / n, not i * h: nested meshes then share bit-identical coordinates
    coords = idx / n
    ii, jj = np.meshgrid(idx, idx, indexing="ij")
    nodes = np.column_stack([coords[ii.ravel()], coords[jj.ravel()]])

    ci, cj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ci, cj = ci.ravel(), cj.ravel()
    sw = ci * (n + 1) + cj
    se = sw + (n + 1)
    ne = se + 1
    nw = sw + 1
    lower = np.column_stack([sw, se, ne])
    upper = np.column_stack([sw, ne, nw])
    elements = np.empty((2 * n * n, 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper

    on_bnd = (ii == 0) | (ii == n) | (jj == 0) | (jj == n)
    boundary = np.flatnonzero(on_bnd.ravel())
    return TriMesh(n, _readonly(nodes), _readonly(elements), _readonly(boundary))


def reflection_permutation(mesh: TriMesh) -> np.ndarray:
    """Permutation ``perm`` with ``nodes[perm[k]] == nodes[k][::-1]``."""
    n1 = mesh.n_div + 1
    k = np.arange(mesh.n_nodes)
    i, j = np.divmod(k, n1)
    return j * n1 + i


def coarse_to_fine_injection(coarse: TriMesh, fine: TriMesh) -> np.ndarray:
    """Map each coarse node to the coincident node of a 2x refined mesh."""
    if fine.n_div != 2 * coarse.n_div:
        raise ValueError(
            f"meshes are not nested: fine n_div={fine.n_div} is not "
            f"2 x coarse n_div={coarse.n_div}"
        )
    k = np.arange(coarse.n_nodes)
    i, j = np.divmod(k, coarse.n_div + 1)
    return (2 * i) * (fine.n_div + 1) + 2 * j
