"""P1 finite elements on the unit interval and the unit square.

Functions on the domain are called with an array ``x`` of shape
``(npoints, dim)`` and must return ``npoints`` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "FemSystem",
    "InvalidCoefficientError",
    "Mesh",
    "assemble_boundary_load",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_system",
    "build_interval_mesh",
    "build_unit_square_mesh",
    "integrate_dofs",
    "l2_project",
]

SpaceFunction = Callable[[np.ndarray], np.ndarray]


class InvalidCoefficientError(ValueError):
    """Raised when the diffusion coefficient is not uniformly positive."""


# {{{ meshes


@dataclass(frozen=True)
class Mesh:
    dim: int
    #: node coordinates, shape ``(nnodes, dim)``
    nodes: np.ndarray
    #: element connectivity, shape ``(nelements, dim + 1)``
    elements: np.ndarray
    #: boundary facets (points in 1d, edges in 2d), shape ``(nfacets, dim)``
    boundary_facets: np.ndarray
    #: maximal element diameter
    h: float

    @property
    def nnodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def nelements(self) -> int:
        return self.elements.shape[0]

    @property
    def measures(self) -> np.ndarray:
        """Element lengths (1d) or areas (2d)."""
        return _element_measures(self)

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)


def _element_measures(mesh: Mesh) -> np.ndarray:
    p = mesh.nodes[mesh.elements]
    if mesh.dim == 1:
        return p[:, 1, 0] - p[:, 0, 0]

    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def build_interval_mesh(n_cells: int) -> Mesh:
    """Uniform partition of (0, 1) into ``n_cells`` segments."""
    if n_cells < 1:
        raise ValueError(f"n_cells must be positive, got {n_cells}")

    nodes = np.linspace(0.0, 1.0, n_cells + 1).reshape(-1, 1)
    idx = np.arange(n_cells)
    elements = np.column_stack([idx, idx + 1])
    boundary = np.array([[0], [n_cells]])

    return Mesh(dim=1, nodes=nodes, elements=elements,
                boundary_facets=boundary, h=1.0 / n_cells)


def build_unit_square_mesh(n: int) -> Mesh:
    """Uniform ``n x n`` grid of (0, 1)^2, each square cut along the same diagonal."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")

    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i + j * (n + 1)

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    v0, v1, v2, v3 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    elements = np.concatenate([
        np.column_stack([v0, v1, v2]),
        np.column_stack([v0, v2, v3]),
    ])

    k = np.arange(n)
    bottom = np.column_stack([vid(k, 0), vid(k + 1, 0)])
    right = np.column_stack([vid(n, k), vid(n, k + 1)])
    top = np.column_stack([vid(k + 1, n), vid(k, n)])
    left = np.column_stack([vid(0, k + 1), vid(0, k)])
    boundary = np.concatenate([bottom, right, top, left])

    return Mesh(dim=2, nodes=nodes, elements=elements,
                boundary_facets=boundary, h=math.sqrt(2.0) / n)


# }}}


# {{{ assembly


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    # local: (nelements, k, k) element matrices
    k = mesh.elements.shape[1]
    rows = np.repeat(mesh.elements, k, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, k)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)),
                      shape=(mesh.nnodes, mesh.nnodes))
    return A.tocsr()


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Exact P1 mass matrix."""
    meas = mesh.measures
    if mesh.dim == 1:
        ref = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    else:
        ref = (np.ones((3, 3)) + np.eye(3)) / 12.0

    return _scatter(mesh, meas[:, None, None] * ref[None])


def _p1_gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the element basis functions, shape ``(ne, dim + 1, dim)``."""
    p = mesh.nodes[mesh.elements]
    if mesh.dim == 1:
        L = p[:, 1, 0] - p[:, 0, 0]
        return np.stack([-1.0 / L, 1.0 / L], axis=1)[:, :, None]

    # B maps reference gradients: grad phi = B^{-T} grad phi_ref
    B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    BinvT = np.linalg.inv(B).transpose(0, 2, 1)
    return np.einsum("eij,kj->eki", BinvT, ref)


def _evaluate_coefficient(mesh: Mesh, a: SpaceFunction | float | None) -> np.ndarray:
    if a is None:
        a = 1.0
    if callable(a):
        values = np.broadcast_to(
            np.asarray(a(mesh.centroids), dtype=float), (mesh.nelements,))
    else:
        values = np.full(mesh.nelements, float(a))

    if not np.all(values > 0):
        raise InvalidCoefficientError(
            f"diffusion coefficient must be positive, min = {values.min()}")

    return values


def assemble_stiffness(mesh: Mesh, a: SpaceFunction | float | None = None) -> sp.csr_matrix:
    """P1 stiffness matrix with ``a`` sampled at element centroids."""
    coef = _evaluate_coefficient(mesh, a)
    grads = _p1_gradients(mesh)
    local = np.einsum("eid,ejd->eij", grads, grads)
    local *= (coef * mesh.measures)[:, None, None]

    return _scatter(mesh, local)


def assemble_boundary_load(mesh: Mesh, g: SpaceFunction | float | None) -> np.ndarray:
    r"""Load vector :math:`(g, \varphi_i)_{\partial\Omega}`.

    In 1d the boundary measure is the counting measure on the endpoints, in
    2d every edge is integrated with the trapezoid rule.
    """
    load = np.zeros(mesh.nnodes)
    if g is None:
        return load

    facets = mesh.boundary_facets
    if mesh.dim == 1:
        idx = facets[:, 0]
        gv = _evaluate_on(g, mesh.nodes[idx])
        np.add.at(load, idx, gv)
        return load

    a, b = facets[:, 0], facets[:, 1]
    length = np.linalg.norm(mesh.nodes[b] - mesh.nodes[a], axis=1)
    np.add.at(load, a, 0.5 * length * _evaluate_on(g, mesh.nodes[a]))
    np.add.at(load, b, 0.5 * length * _evaluate_on(g, mesh.nodes[b]))
    return load


def _evaluate_on(v: SpaceFunction | float, x: np.ndarray) -> np.ndarray:
    if callable(v):
        return np.broadcast_to(np.asarray(v(x), dtype=float), (x.shape[0],))
    return np.full(x.shape[0], float(v))


# }}}


# {{{ system


@dataclass(frozen=True)
class FemSystem:
    """Assembled matrices for a mesh; immutable after construction."""

    mesh: Mesh
    M: sp.csr_matrix
    K: sp.csr_matrix
    #: ``int_vec @ c`` is the integral of the finite element function ``c``
    int_vec: np.ndarray
    _mass_lu: object = field(default=None, repr=False, compare=False)

    @property
    def ndofs(self) -> int:
        return self.mesh.nnodes

    def solve_mass(self, b: np.ndarray) -> np.ndarray:
        if self._mass_lu is None:
            return spla.spsolve(self.M.tocsc(), b)
        return self._mass_lu.solve(b)


def assemble_system(mesh: Mesh, a: SpaceFunction | float | None = None) -> FemSystem:
    M = assemble_mass(mesh)
    K = assemble_stiffness(mesh, a)
    int_vec = np.asarray(M @ np.ones(mesh.nnodes)).ravel()
    lu = spla.splu(M.tocsc())
    return FemSystem(mesh=mesh, M=M, K=K, int_vec=int_vec, _mass_lu=lu)


def _load_quadrature(mesh: Mesh, v: SpaceFunction | float) -> np.ndarray:
    """``b_i = (v, phi_i)`` with a rule exact for quadratic integrands."""
    p = mesh.nodes[mesh.elements]
    meas = mesh.measures
    b = np.zeros(mesh.nnodes)

    if mesh.dim == 1:
        va = _evaluate_on(v, p[:, 0])
        vb = _evaluate_on(v, p[:, 1])
        vm = _evaluate_on(v, 0.5 * (p[:, 0] + p[:, 1]))
        # Simpson per element
        np.add.at(b, mesh.elements[:, 0], meas / 6.0 * (va + 2.0 * vm))
        np.add.at(b, mesh.elements[:, 1], meas / 6.0 * (2.0 * vm + vb))
        return b

    # edge midpoint rule: phi_i is 1/2 on the two adjacent edge midpoints
    m01 = _evaluate_on(v, 0.5 * (p[:, 0] + p[:, 1]))
    m12 = _evaluate_on(v, 0.5 * (p[:, 1] + p[:, 2]))
    m02 = _evaluate_on(v, 0.5 * (p[:, 0] + p[:, 2]))
    np.add.at(b, mesh.elements[:, 0], meas / 6.0 * (m01 + m02))
    np.add.at(b, mesh.elements[:, 1], meas / 6.0 * (m01 + m12))
    np.add.at(b, mesh.elements[:, 2], meas / 6.0 * (m12 + m02))
    return b


def l2_project(system: FemSystem, v: SpaceFunction | float) -> np.ndarray:
    """L2 projection of ``v`` onto the P1 space."""
    b = _load_quadrature(system.mesh, v)
    c = system.solve_mass(b)
    if not np.all(np.isfinite(c)):
        raise np.linalg.LinAlgError("mass matrix solve failed in l2_project")

    return c


def integrate_dofs(system: FemSystem, c: np.ndarray) -> np.ndarray | float:
    """Integral over the domain of the P1 function(s) with dofs ``c``.

    ``c`` may be a single vector or a stack of vectors along the first axis.
    """
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != system.ndofs:
        raise ValueError(
            f"dof vector has length {c.shape[-1]}, expected {system.ndofs}")

    result = c @ system.int_vec
    return float(result) if result.ndim == 0 else result


# }}}
