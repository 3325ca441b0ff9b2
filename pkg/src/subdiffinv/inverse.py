"""Projected fixed-point reconstruction of a time-dependent potential.

Given the observation ``m_delta``, each sweep runs the direct solver with
the current potential and updates

    q[n] <- clamp((int f(u[n], t_n) - D[n] + int_bdry g(t_n)) / m_delta[n], 0, c0)

where ``D`` is the discrete Caputo derivative of the data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from subdiffinv.fem import FemSystem, integrate_dofs
from subdiffinv.forward import (
    PotentialGrid,
    ProblemSpec,
    SolverError,
    TimeGrid,
    boundary_integrals,
    evaluate_source,
    solve_forward,
)
from subdiffinv.frac_cq import cq_caputo
from subdiffinv.metrics import NormSpec, lp_seq_norm
from subdiffinv.observation import (
    InadmissibleDataError,
    ObservationSeries,
    check_admissible,
)

__all__ = [
    "InverseConfig",
    "ReconstructionError",
    "ReconstructionResult",
    "clamp_potential",
    "reconstruct",
]

log = logging.getLogger(__name__)


class ReconstructionError(RuntimeError):
    def __init__(self, message: str, iteration: int) -> None:
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class InverseConfig:
    c0: float = 3.0
    max_iterations: int = 50
    #: stop once ||q_{k+1} - q_k|| <= stop_tolerance * ||q_{k+1}|| (discrete l^p)
    stop_tolerance: float = 1.0e-10
    p: float = 2.0
    #: rate parameter of the weighted diagnostic norm
    lam: float = 25.0
    #: positive lower bound of the exact data; ``None`` uses ``min(m_delta)``
    m_star: float | None = None

    def __post_init__(self) -> None:
        if self.c0 <= 0:
            raise ValueError(f"c0 must be positive, got {self.c0}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.p < 1:
            raise ValueError(f"p must be at least 1, got {self.p}")


@dataclass(frozen=True)
class ReconstructionResult:
    q_star: PotentialGrid
    #: ``iterates[0]`` is the initial guess, ``iterates[k]`` the k-th update
    iterates: list[PotentialGrid]
    converged: bool
    iterations_used: int
    successive_diffs: list[float]
    #: discrete Caputo derivative of the data, shared by every iteration
    caputo_data: np.ndarray = field(repr=False)

    def errors(self, q_true: np.ndarray, tau: float, p: float = 2.0, lam: float = 0.0) -> np.ndarray:
        """``||q_k - q_true||`` in the (weighted) discrete norm for every stored iterate."""
        spec = NormSpec(p=p, lam=lam, tau=tau)
        return np.array([lp_seq_norm(np.asarray(q) - q_true, spec) for q in self.iterates])


def clamp_potential(v: np.ndarray, c0: float) -> PotentialGrid:
    """Entrywise projection onto the box ``[0, c0]``."""
    if c0 <= 0:
        raise ValueError(f"c0 must be positive, got {c0}")
    return PotentialGrid(np.clip(np.asarray(v, dtype=float), 0.0, c0), c0)


def reconstruct(
    spec: ProblemSpec,
    system: FemSystem,
    grid: TimeGrid,
    m_delta: ObservationSeries,
    cfg: InverseConfig | None = None,
    q0: np.ndarray | None = None,
) -> ReconstructionResult:
    if cfg is None:
        cfg = InverseConfig()
    if m_delta.grid != grid:
        raise ValueError(f"data grid {m_delta.grid} does not match {grid}")

    md = m_delta.values
    m_star = cfg.m_star if cfg.m_star is not None else float(np.min(md))
    if m_star <= 0:
        raise InadmissibleDataError(f"data must be positive, min = {np.min(md)}")
    adm = check_admissible(m_delta, m_star)
    if not adm.passed:
        raise InadmissibleDataError(
            f"min m_delta = {adm.minimum:.6g} is below m_star / 2 = {adm.threshold:.6g}")

    D = cq_caputo(md, spec.alpha, grid.tau)
    D.setflags(write=False)
    boundary = boundary_integrals(spec, system, grid)[1:].sum(axis=1)
    # everything but the nonlinear term is fixed across iterations
    offset = boundary - D
    denom = md[1:]

    x = system.mesh.nodes
    t = grid.t
    norm = NormSpec(p=cfg.p, lam=0.0, tau=grid.tau)

    q = clamp_potential(np.zeros(grid.N) if q0 is None else q0, cfg.c0)
    iterates = [q]
    diffs: list[float] = []
    converged = False

    for k in range(1, cfg.max_iterations + 1):
        try:
            traj = solve_forward(spec, system, grid, q)
            F = np.stack([evaluate_source(spec, traj.u[n], t[n], x)
                          for n in range(1, grid.N + 1)])
        except SolverError as exc:
            raise ReconstructionError(str(exc), iteration=k) from exc

        source = integrate_dofs(system, F)
        q_next = clamp_potential((source + offset) / denom, cfg.c0)

        diff = lp_seq_norm(q_next.values - q.values, norm)
        size = lp_seq_norm(q_next.values, norm)
        diffs.append(diff)
        iterates.append(q_next)
        q = q_next
        log.debug("iteration %3d: successive difference %.3e", k, diff)

        if diff <= cfg.stop_tolerance * max(size, np.finfo(float).tiny):
            converged = True
            break

    return ReconstructionResult(
        q_star=q,
        iterates=iterates,
        converged=converged,
        iterations_used=len(diffs),
        successive_diffs=diffs,
        caputo_data=D,
    )
