"""Fully discrete scheme for the semilinear subdiffusion problem.

Backward Euler convolution quadrature in time, P1 Galerkin in space. The
fractional derivative, diffusion and potential terms are implicit, the
nonlinearity is lagged by one step and replaced by its nodal interpolant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from subdiffinv.fem import FemSystem, assemble_boundary_load, l2_project
from subdiffinv.frac_cq import cq_weights

__all__ = [
    "DivergenceError",
    "PotentialGrid",
    "ProblemSpec",
    "SolverError",
    "TimeGrid",
    "Trajectory",
    "boundary_integrals",
    "evaluate_source",
    "solve_forward",
]


class SolverError(RuntimeError):
    """A linear solve inside the time stepper failed."""

    def __init__(self, message: str, step: int | None = None) -> None:
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class DivergenceError(SolverError):
    """The discrete solution became non-finite."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_n = n * T / N`` for ``n = 0..N``."""

    T: float
    N: int

    def __post_init__(self) -> None:
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.N < 1:
            raise ValueError(f"N must be positive, got {self.N}")

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def t(self) -> np.ndarray:
        return self.tau * np.arange(self.N + 1)

    def refine(self, factor: int) -> TimeGrid:
        return TimeGrid(self.T, self.N * factor)

    def coarsen(self, factor: int) -> TimeGrid:
        if factor < 1 or self.N % factor != 0:
            raise ValueError(f"N={self.N} is not divisible by factor {factor}")
        return TimeGrid(self.T, self.N // factor)


@dataclass(frozen=True)
class ProblemSpec:
    """Data of the direct problem.

    ``f(u, x, t)`` and ``g(x, t)`` are vectorized over nodes, ``x`` has shape
    ``(npoints, dim)``. ``g = None`` means homogeneous Neumann data.
    """

    alpha: float
    T: float
    u0: Callable[[np.ndarray], np.ndarray] | float
    f: Callable[[np.ndarray, np.ndarray, float], np.ndarray] | None = None
    g: Callable[[np.ndarray, float], np.ndarray] | None = None
    a: Callable[[np.ndarray], np.ndarray] | float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")


@dataclass(frozen=True)
class PotentialGrid:
    """Potential values ``q[1..N]`` constrained to ``[0, c0]``."""

    values: np.ndarray
    c0: float

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("potential values must be a 1d sequence")
        if np.any(values < 0) or np.any(values > self.c0):
            raise ValueError(f"potential leaves the admissible box [0, {self.c0}]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class Trajectory:
    #: dof vectors, shape ``(N + 1, ndofs)``; ``u[0]`` is the projected initial datum
    u: np.ndarray
    grid: TimeGrid


def evaluate_source(
    spec: ProblemSpec,
    u: np.ndarray,
    t: float,
    x: np.ndarray | None = None,
) -> np.ndarray:
    """Nodal values ``f(u_i, x_i, t)`` of the nonlinearity."""
    u = np.asarray(u, dtype=float)
    if spec.f is None:
        return np.zeros_like(u)

    F = np.broadcast_to(np.asarray(spec.f(u, x, t), dtype=float), u.shape)
    if not np.all(np.isfinite(F)):
        raise DivergenceError(f"non-finite source term at t={t}")
    return F


def boundary_integrals(spec: ProblemSpec, system: FemSystem, grid: TimeGrid) -> np.ndarray:
    """Boundary load vectors ``G^n`` for ``n = 0..N``, shape ``(N + 1, ndofs)``."""
    G = np.zeros((grid.N + 1, system.ndofs))
    if spec.g is None:
        return G

    for n, tn in enumerate(grid.t):
        G[n] = assemble_boundary_load(system.mesh, lambda x, tn=tn: spec.g(x, tn))
    return G


# {{{ linear solvers


class _BandedSolver:
    """Direct solver for ``c * M + K`` with tridiagonal (1d) matrices."""

    def __init__(self, system: FemSystem) -> None:
        def upper_band(A):
            ab = np.zeros((2, A.shape[0]))
            ab[0, 1:] = A.diagonal(1)
            ab[1] = A.diagonal()
            return ab

        self.Mb = upper_band(system.M)
        self.Kb = upper_band(system.K)

    def __call__(self, c: float, rhs: np.ndarray, x0: np.ndarray, step: int) -> np.ndarray:
        try:
            return la.solveh_banded(c * self.Mb + self.Kb, rhs, check_finite=False)
        except la.LinAlgError as exc:
            raise SolverError(str(exc), step=step) from exc


class _CGSolver:
    """Jacobi preconditioned conjugate gradients for ``c * M + K``."""

    def __init__(self, system: FemSystem, rtol: float = 1.0e-10) -> None:
        M, K = system.M, system.K
        self.same_pattern = (
            np.array_equal(M.indptr, K.indptr) and np.array_equal(M.indices, K.indices))
        self.M, self.K = M, K
        self.dM, self.dK = M.diagonal(), K.diagonal()
        self.rtol = rtol
        self.maxiter = 10 * system.ndofs

    def __call__(self, c: float, rhs: np.ndarray, x0: np.ndarray, step: int) -> np.ndarray:
        if self.same_pattern:
            A = sp.csr_matrix((c * self.M.data + self.K.data, self.M.indices, self.M.indptr),
                              shape=self.M.shape)
        else:
            A = (c * self.M + self.K).tocsr()

        P = sp.diags(1.0 / (c * self.dM + self.dK))
        x, info = spla.cg(A, rhs, x0=x0, rtol=self.rtol, atol=0.0,
                          maxiter=self.maxiter, M=P)
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge (info={info})", step=step)
        return x


def _make_solver(system: FemSystem):
    if system.mesh.dim == 1:
        return _BandedSolver(system)
    return _CGSolver(system)


# }}}


def solve_forward(
    spec: ProblemSpec,
    system: FemSystem,
    grid: TimeGrid,
    q: np.ndarray | PotentialGrid,
) -> Trajectory:
    r"""Run the time stepper for the potential values ``q[1..N]``.

    For ``n = 1..N`` the step solves

    .. math::

        (\tau^{-\alpha} M + K + q_n M) u^n
            = M F^{n-1} + G^n
            + \tau^{-\alpha} M \Big(s_n u^0 - \sum_{j=1}^n w_j u^{n-j}\Big),

    where ``s_n`` are the partial sums of the CQ weights.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (grid.N,):
        raise ValueError(f"expected {grid.N} potential values, got shape {q.shape}")
    if not math.isclose(grid.T, spec.T, rel_tol=1.0e-12):
        raise ValueError(f"time grid ends at {grid.T} but the problem at {spec.T}")

    N, tau, alpha = grid.N, grid.tau, spec.alpha
    t = grid.t
    x = system.mesh.nodes
    M = system.M
    scale = tau ** (-alpha)

    w = cq_weights(alpha, N).w
    w_rev = np.ascontiguousarray(w[::-1])
    s = np.cumsum(w)
    G = boundary_integrals(spec, system, grid) if spec.g is not None else None
    solve = _make_solver(system)

    U = np.empty((N + 1, system.ndofs))
    U[0] = l2_project(system, spec.u0)

    for n in range(1, N + 1):
        try:
            F = evaluate_source(spec, U[n - 1], t[n], x)
        except DivergenceError as exc:
            raise DivergenceError(str(exc), step=n) from exc
        # sum_{j=1}^n w_j u^{n-j}
        history = w_rev[N - n:N] @ U[:n]
        rhs = M @ (F + scale * (s[n] * U[0] - history))
        if G is not None:
            rhs += G[n]

        U[n] = solve(scale + q[n - 1], rhs, U[n - 1], n)
        if not np.all(np.isfinite(U[n])):
            raise DivergenceError("non-finite solution", step=n)

    return Trajectory(u=U, grid=grid)
