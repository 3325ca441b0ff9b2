"""Problem presets, synthetic data generation and the convergence studies."""

from __future__ import annotations

import csv
import dataclasses
import functools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from subdiffinv.fem import FemSystem, Mesh, assemble_system, build_interval_mesh, build_unit_square_mesh
from subdiffinv.forward import ProblemSpec, SolverError, TimeGrid, solve_forward
from subdiffinv.inverse import InverseConfig, ReconstructionResult, reconstruct
from subdiffinv.metrics import NormSpec, lp_seq_norm, reconstruction_error
from subdiffinv.observation import (
    InadmissibleDataError,
    ObservationSeries,
    add_noise,
    add_scaled_noise,
    downsample,
    observe,
)

log = logging.getLogger(__name__)

PROBLEMS = ("1d", "2d")
POTENTIALS = ("q1", "q2", "q3")
STUDIES = ("h", "tau", "delta", "semiconv", "iter")

#: |u| beyond which the preset nonlinearity u**2 is frozen
SOURCE_CUTOFF = 10.0

#: time-step counts giving the best noisy reconstructions, by fractional order
OPTIMAL_N = {0.3: 2**7, 0.5: 2**5, 0.7: 2**4}


# {{{ reference potentials


def reference_potential(name: str, t, T: float = 0.5) -> np.ndarray:
    """Evaluate one of the reference potentials ``q1``, ``q2``, ``q3`` on ``[0, T]``."""
    t = np.asarray(t, dtype=float)
    eps = 1.0e-12 * T
    if np.any(t < -eps) or np.any(t > T + eps):
        raise ValueError(f"t must lie in [0, {T}]")

    if name == "q1":
        return 1.0 + np.cos(5.0 * t)

    if name == "q2":
        s = 8.0 / T
        return np.select(
            [t <= T / 4, t <= T / 2, t <= 3 * T / 4],
            [-s * t + 2.7, s * t - 1.3, -s * t + 6.7],
            default=s * t - 5.3,
        )

    if name == "q3":
        # right-continuous at the breakpoints
        return np.select(
            [t < T / 4, t < T / 2, t < 3 * T / 4],
            [2.5, 1.0, 2.0],
            default=1.5,
        ).astype(float)

    raise ValueError(f"unknown potential {name!r}, expected one of {POTENTIALS}")


def potential_function(name: str, T: float = 0.5) -> Callable[[np.ndarray], np.ndarray]:
    if name not in POTENTIALS:
        raise ValueError(f"unknown potential {name!r}, expected one of {POTENTIALS}")
    return functools.partial(reference_potential, name, T=T)


# }}}


# {{{ presets


def _u0_1d(x):
    return 1.0 + np.cos(2.0 * np.pi * x[:, 0])


def _u0_2d(x):
    return (1.0 + np.cos(np.pi * x[:, 0])) * (1.0 + np.cos(np.pi * x[:, 1]))


@dataclass(frozen=True)
class _CutoffSquare:
    cutoff: float

    def __call__(self, u, x, t):
        return np.clip(u, -self.cutoff, self.cutoff) ** 2


def preset_spec(
    problem: str,
    alpha: float,
    T: float = 0.5,
    a: float = 1.0,
    cutoff: float = SOURCE_CUTOFF,
) -> ProblemSpec:
    """Test problems with ``f(u) = u**2``, ``g = 0`` and smooth initial data.

    The square is frozen for ``|u| > cutoff``, which leaves the admissible
    solutions untouched but keeps the direct problem well defined for the
    intermediate potentials visited by the fixed-point iteration.
    """
    if problem == "1d":
        u0 = _u0_1d
    elif problem == "2d":
        u0 = _u0_2d
    else:
        raise ValueError(f"unknown problem {problem!r}, expected one of {PROBLEMS}")

    return ProblemSpec(alpha=alpha, T=T, u0=u0, f=_CutoffSquare(cutoff), g=None, a=a)


def build_mesh(problem: str, n_cells: int) -> Mesh:
    if problem == "1d":
        return build_interval_mesh(n_cells)
    if problem == "2d":
        return build_unit_square_mesh(n_cells)
    raise ValueError(f"unknown problem {problem!r}")


def cells_for_h(problem: str, h: float) -> int:
    """Smallest cell count whose mesh size does not exceed ``h``."""
    diameter = 1.0 if problem == "1d" else math.sqrt(2.0)
    return max(1, math.ceil(diameter / h - 1.0e-9))


@functools.lru_cache(maxsize=32)
def _system(problem: str, n_cells: int, a: float) -> FemSystem:
    return assemble_system(build_mesh(problem, n_cells), a)


# }}}


# {{{ configuration


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "1d"
    potential: str = "q1"
    alpha: float = 0.5
    T: float = 0.5
    N: int = 128
    n_cells: int = 32
    time_factor: int = 5
    space_factor: int = 2
    epsilon: float = 0.0
    seed: int = 0
    a: float = 1.0
    cutoff: float = SOURCE_CUTOFF
    # inversion
    c0: float = 3.0
    max_iterations: int = 50
    stop_tolerance: float = 1.0e-10
    p: float = 2.0
    lam: float = 25.0
    # studies
    sweep: tuple[float, ...] = ()
    fixed_N: int = 1000
    fixed_cells: int = 100
    max_cells: int = 512
    workers: int = 1

    def __post_init__(self) -> None:
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.potential not in POTENTIALS:
            raise ValueError(f"potential must be one of {POTENTIALS}, got {self.potential!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")
        for name in ("N", "n_cells", "time_factor", "space_factor",
                     "max_iterations", "fixed_N", "fixed_cells", "max_cells", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.a <= 0 or self.cutoff <= 0 or self.c0 <= 0:
            raise ValueError("a, cutoff and c0 must be positive")

    @property
    def inverse(self) -> InverseConfig:
        return InverseConfig(c0=self.c0, max_iterations=self.max_iterations,
                             stop_tolerance=self.stop_tolerance, p=self.p, lam=self.lam)

    @property
    def spec(self) -> ProblemSpec:
        return preset_spec(self.problem, self.alpha, self.T, self.a, self.cutoff)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.N)

    @property
    def system(self) -> FemSystem:
        return _system(self.problem, self.n_cells, self.a)

    @property
    def q_true(self) -> Callable[[np.ndarray], np.ndarray]:
        return potential_function(self.potential, self.T)

    def replace(self, **kwargs) -> ExperimentConfig:
        return dataclasses.replace(self, **kwargs)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELDS[name].type
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind.startswith("tuple"):
        return tuple(float(v) for v in raw.split(",") if v.strip())
    return raw


def config_from_mapping(values: dict[str, str], base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Build a config from string values; unknown keys raise ``ValueError``."""
    changes = {}
    for key, raw in values.items():
        name = key.strip().replace("-", "_")
        if name == "lambda":
            name = "lam"
        if name not in _FIELDS:
            raise ValueError(f"unknown configuration key {key!r}")
        try:
            changes[name] = _coerce(name, raw)
        except ValueError as exc:
            raise ValueError(f"invalid value for {key!r}: {raw!r}") from exc

    return dataclasses.replace(base or ExperimentConfig(), **changes)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    return config_from_mapping(parse_config_text(text), base)


def study_defaults(kind: str) -> ExperimentConfig:
    """Baseline configuration of each study before file and flag overrides."""
    if kind == "h":
        return ExperimentConfig(sweep=(8, 16, 32, 64))
    if kind == "tau":
        return ExperimentConfig(sweep=(16, 32, 64, 128, 256))
    if kind == "delta":
        return ExperimentConfig(sweep=(4, 5, 6, 7, 8, 9))
    if kind == "semiconv":
        return ExperimentConfig(epsilon=0.01, sweep=tuple(range(3, 12)))
    if kind == "iter":
        return ExperimentConfig(max_iterations=300, stop_tolerance=1.0e-14)
    raise ValueError(f"unknown study {kind!r}, expected one of {STUDIES}")


def point_seed(master: int, index: int) -> int:
    """Independent seed for study point ``index`` derived from ``master``."""
    return int(np.random.SeedSequence([master, index]).generate_state(1)[0])


# }}}


# {{{ data generation


@functools.lru_cache(maxsize=16)
def _fine_observation(problem, potential, alpha, T, a, cutoff, N_fine, cells_fine):
    spec = preset_spec(problem, alpha, T, a, cutoff)
    grid = TimeGrid(T, N_fine)
    system = _system(problem, cells_fine, a)
    q = reference_potential(potential, grid.t[1:], T)
    return observe(solve_forward(spec, system, grid, q), system)


def exact_data(cfg: ExperimentConfig, N_fine: int | None = None) -> ObservationSeries:
    """Exact observation on the coarse grid of ``cfg``, computed on a finer grid.

    ``N_fine`` defaults to ``N * time_factor`` and must be a multiple of ``N``.
    """
    if N_fine is None:
        N_fine = cfg.N * cfg.time_factor
    if N_fine % cfg.N != 0:
        raise ValueError(f"fine grid N={N_fine} is not a multiple of N={cfg.N}")

    fine = _fine_observation(cfg.problem, cfg.potential, cfg.alpha, cfg.T, cfg.a,
                             cfg.cutoff, N_fine, cfg.n_cells * cfg.space_factor)
    return downsample(fine, N_fine // cfg.N)


def generate_data(
    cfg: ExperimentConfig,
    out: str | Path | None = None,
) -> tuple[ObservationSeries, ObservationSeries]:
    """Fine-grid solve, downsampling and noise; optionally persisted as CSV.

    :returns: the exact and the noisy coarse series (identical for
        ``epsilon = 0``).
    """
    from subdiffinv.observation import write_observation_csv

    m = exact_data(cfg)
    m_delta = add_noise(m, cfg.epsilon, cfg.seed)
    if out is not None:
        write_observation_csv(out, m_delta, exact=m)
    return m, m_delta


def run_inversion(cfg: ExperimentConfig, m_delta: ObservationSeries) -> ReconstructionResult:
    return reconstruct(cfg.spec, cfg.system, cfg.grid, m_delta, cfg.inverse)


def write_reconstruction_csv(
    path: str | Path,
    result: ReconstructionResult,
    grid: TimeGrid,
    q_true: Callable[[np.ndarray], np.ndarray],
) -> None:
    t = grid.t[1:]
    exact = q_true(t)
    with open(path, "w", newline="") as outf:
        writer = csv.writer(outf, lineterminator="\n")
        writer.writerow(["n", "t", "q_true", "q_star"])
        for n, (tn, qt, qs) in enumerate(zip(t, exact, result.q_star.values), start=1):
            writer.writerow([n, _fmt(tn), _fmt(qt), _fmt(qs)])


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# }}}


# {{{ studies


@dataclass(frozen=True)
class StudyRow:
    kind: str
    param: float
    h: float
    tau: float
    delta: float
    error: float
    iters: int
    seconds: float = field(default=float("nan"), compare=False)

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.error)


STUDY_HEADER = ("kind", "param", "h", "tau", "delta", "error", "iters", "seconds")


def _point_config(kind: str, cfg: ExperimentConfig, value: float) -> tuple[ExperimentConfig, float | None]:
    """Configuration of one study point and, for the noise study, its target delta."""
    if kind == "h":
        return cfg.replace(n_cells=int(value), N=cfg.fixed_N), None
    if kind == "tau":
        return cfg.replace(N=int(value), n_cells=cfg.fixed_cells), None
    if kind == "delta":
        # a priori coupling: delta ~ tau^(alpha + 1/2), h ~ tau^(1/4)
        N = 2 ** int(value)
        tau = cfg.T / N
        h = max(tau ** 0.25 / 4.0, 1.0 / 512.0)
        n_cells = min(cells_for_h(cfg.problem, h), cfg.max_cells)
        return cfg.replace(N=N, n_cells=n_cells), tau ** (cfg.alpha + 0.5)
    if kind == "semiconv":
        return cfg.replace(N=2 ** int(value)), None
    raise ValueError(f"unknown study {kind!r}")


def _run_point(kind: str, cfg: ExperimentConfig, index: int, value: float,
               N_fine: int | None) -> StudyRow:
    start = time.perf_counter()
    pcfg, target = _point_config(kind, cfg, value)
    tau = pcfg.T / pcfg.N
    h = build_mesh(pcfg.problem, pcfg.n_cells).h
    delta = float("nan")
    try:
        m = exact_data(pcfg, N_fine)
        seed = point_seed(cfg.seed, index)
        if target is not None:
            m_delta = add_scaled_noise(m, target, seed)
        else:
            m_delta = add_noise(m, pcfg.epsilon, seed)
        delta = m_delta.delta
        result = run_inversion(pcfg, m_delta)
        error = reconstruction_error(result.q_star.values, pcfg.q_true, pcfg.grid, pcfg.p)
        iters = result.iterations_used
    except (SolverError, InadmissibleDataError, RuntimeError) as exc:
        log.warning("study %s point %s failed: %s", kind, value, exc)
        error, iters = float("nan"), 0

    return StudyRow(kind, float(value), h, tau, delta, error, iters,
                    time.perf_counter() - start)


def _iteration_rows(cfg: ExperimentConfig) -> list[StudyRow]:
    start = time.perf_counter()
    m = exact_data(cfg)
    m_delta = add_noise(m, cfg.epsilon, point_seed(cfg.seed, 0))
    result = run_inversion(cfg, m_delta)
    grid = cfg.grid
    q_true = cfg.q_true(grid.t[1:])
    q_star = result.q_star.values
    h = cfg.system.mesh.h
    elapsed = time.perf_counter() - start

    rows = []
    for label, target, lam in (("iter:l2", q_true, 0.0), ("iter:l2w", q_true, cfg.lam),
                               ("iter:l2-limit", q_star, 0.0), ("iter:l2w-limit", q_star, cfg.lam)):
        errors = result.errors(target, grid.tau, p=cfg.p, lam=lam)
        rows.extend(StudyRow(label, float(k), h, grid.tau, m_delta.delta, float(e), k, elapsed)
                    for k, e in enumerate(errors))
    return rows


def run_study(kind: str, cfg: ExperimentConfig, sweep: Sequence[float] | None = None) -> list[StudyRow]:
    """Run every point of a study; failed points become rows with ``error = nan``."""
    if kind == "iter":
        return _iteration_rows(cfg)

    values = list(sweep if sweep is not None else cfg.sweep)
    if not values:
        raise ValueError(f"empty sweep for study {kind!r}")

    # the semi-convergence sweep shares one fine-grid solve
    N_fine = None
    if kind == "semiconv":
        N_fine = 2 ** int(max(values)) * cfg.time_factor

    args = [(kind, cfg, i, v, N_fine) for i, v in enumerate(values)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_run_point, *zip(*args)))
    return [_run_point(*a) for a in args]


def write_study_csv(path: str | Path, rows: Iterable[StudyRow], timings: bool = False) -> None:
    """Write study rows; the ``seconds`` column stays empty unless ``timings``."""
    with open(path, "w", newline="") as outf:
        writer = csv.writer(outf, lineterminator="\n")
        writer.writerow(STUDY_HEADER)
        for r in rows:
            writer.writerow([r.kind, _fmt(r.param), _fmt(r.h), _fmt(r.tau), _fmt(r.delta),
                             _fmt(r.error), r.iters, _fmt(r.seconds) if timings else ""])


def read_study_csv(path: str | Path) -> list[StudyRow]:
    with open(path, newline="") as inf:
        return [
            StudyRow(r["kind"], float(r["param"]), float(r["h"]), float(r["tau"]),
                     float(r["delta"]), float(r["error"]), int(r["iters"]),
                     float(r["seconds"]) if r["seconds"] else float("nan"))
            for r in csv.DictReader(inf)
        ]


def weighted_error_ratios(result: ReconstructionResult, tau: float, lam: float,
                          p: float = 2.0, floor: float = 1.0e-10) -> np.ndarray:
    """Ratios ``e_{k+1} / e_k`` of the distances to the final iterate.

    Pairs where ``e_k`` has dropped below ``floor`` are discarded since
    the final iterate is itself only known to that accuracy.
    """
    q_star = result.q_star.values
    spec = NormSpec(p=p, lam=lam, tau=tau)
    errors = np.array([lp_seq_norm(q.values - q_star, spec) for q in result.iterates])
    keep = errors[:-1] > floor
    return errors[1:][keep] / errors[:-1][keep]


# }}}
