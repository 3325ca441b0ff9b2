"""Integral observations, synthetic noise and CSV persistence."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from subdiffinv.fem import FemSystem, integrate_dofs
from subdiffinv.forward import TimeGrid, Trajectory

__all__ = [
    "Admissibility",
    "InadmissibleDataError",
    "ObservationSeries",
    "add_noise",
    "add_scaled_noise",
    "check_admissible",
    "downsample",
    "noise_sample",
    "observe",
    "read_observation_csv",
    "write_observation_csv",
]


class InadmissibleDataError(ValueError):
    """Data not bounded away from zero; the inversion refuses to run."""


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """Samples ``m[0..N]`` of the domain integral on ``grid``.

    ``epsilon is None`` marks exact data; otherwise ``epsilon``, ``seed`` and
    the realized max-norm noise level ``delta`` describe the perturbation.
    """

    values: np.ndarray
    grid: TimeGrid
    epsilon: float | None = None
    seed: int | None = None
    delta: float = 0.0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.N + 1,):
            raise ValueError(
                f"expected {self.grid.N + 1} samples, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def is_exact(self) -> bool:
        return self.epsilon is None


def observe(trajectory: Trajectory, system: FemSystem) -> ObservationSeries:
    return ObservationSeries(integrate_dofs(system, trajectory.u), trajectory.grid)


def noise_sample(n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. uniform variates on ``[-1, 1]`` from a PCG64 stream."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return 2.0 * rng.random(n) - 1.0


def _perturbed(m: ObservationSeries, noise: np.ndarray, epsilon: float, seed: int):
    values = m.values.copy()
    # the initial value is kept exact
    values[1:] += noise
    delta = float(np.max(np.abs(values - m.values)))
    return replace(m, values=values, epsilon=epsilon, seed=seed, delta=delta)


def add_noise(m: ObservationSeries, epsilon: float, seed: int) -> ObservationSeries:
    """``m_delta[n] = m[n] + epsilon * zeta_n`` for ``n = 1..N``."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")

    zeta = noise_sample(m.grid.N, seed)
    return _perturbed(m, epsilon * zeta, float(epsilon), seed)


def add_scaled_noise(m: ObservationSeries, delta: float, seed: int) -> ObservationSeries:
    """Uniform noise rescaled so that its max-norm is exactly ``delta``."""
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")

    zeta = noise_sample(m.grid.N, seed)
    zeta /= np.max(np.abs(zeta))
    return _perturbed(m, delta * zeta, float(delta), seed)


class Admissibility(NamedTuple):
    passed: bool
    minimum: float
    threshold: float


def check_admissible(m_delta: ObservationSeries, m_star: float) -> Admissibility:
    """Check ``min m_delta >= m_star / 2``."""
    if m_star <= 0:
        raise ValueError(f"m_star must be positive, got {m_star}")

    minimum = float(np.min(m_delta.values))
    return Admissibility(minimum >= 0.5 * m_star, minimum, 0.5 * m_star)


def downsample(fine: ObservationSeries, factor: int) -> ObservationSeries:
    """Keep every ``factor``-th sample."""
    if factor < 1 or fine.grid.N % factor != 0:
        raise ValueError(f"N={fine.grid.N} is not divisible by factor {factor}")

    return replace(fine, values=fine.values[::factor], grid=fine.grid.coarsen(factor))


# {{{ csv


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_observation_csv(
    path: str | Path,
    series: ObservationSeries,
    exact: ObservationSeries | None = None,
) -> None:
    """Write ``n,t,m`` (exact data) or ``n,t,m,m_delta`` (noisy data)."""
    t = series.grid.t
    with open(path, "w", newline="") as outf:
        writer = csv.writer(outf, lineterminator="\n")
        if exact is None:
            writer.writerow(["n", "t", "m"])
            for n, (tn, mn) in enumerate(zip(t, series.values)):
                writer.writerow([n, _fmt(tn), _fmt(mn)])
        else:
            writer.writerow(["n", "t", "m", "m_delta"])
            for n, (tn, mn, md) in enumerate(zip(t, exact.values, series.values)):
                writer.writerow([n, _fmt(tn), _fmt(mn), _fmt(md)])


def read_observation_csv(path: str | Path) -> tuple[ObservationSeries, ObservationSeries | None]:
    """Read a file written by :func:`write_observation_csv`.

    :returns: the series to invert (``m_delta`` if present, else ``m``) and
        the exact series when the file carries both.
    """
    with open(path, newline="") as inf:
        rows = list(csv.DictReader(inf))
    if not rows:
        raise ValueError(f"no observations in {path}")

    t = np.array([float(r["t"]) for r in rows])
    grid = TimeGrid(float(t[-1]), len(rows) - 1)
    if not np.allclose(t, grid.t, rtol=0.0, atol=1.0e-12 * grid.T):
        raise ValueError(f"{path} is not sampled on a uniform grid")

    m = ObservationSeries(np.array([float(r["m"]) for r in rows]), grid)
    if "m_delta" not in rows[0]:
        return m, None

    md = np.array([float(r["m_delta"]) for r in rows])
    delta = float(np.max(np.abs(md - m.values)))
    noisy = ObservationSeries(md, grid, epsilon=float("nan"), delta=delta)
    return noisy, m


# }}}
