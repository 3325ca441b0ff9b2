"""Command line interface: ``subdiffinv <verb> [options]``.

Exit codes: 0 success, 2 invalid configuration, 3 inadmissible data,
4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from subdiffinv import experiments as ex
from subdiffinv.forward import SolverError
from subdiffinv.inverse import ReconstructionError
from subdiffinv.metrics import reconstruction_error
from subdiffinv.observation import (
    InadmissibleDataError,
    ObservationSeries,
    observe,
    read_observation_csv,
    write_observation_csv,
)

log = logging.getLogger("subdiffinv")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INADMISSIBLE = 3
EXIT_SOLVER = 4

STUDY_VERBS = {
    "study-h": "h",
    "study-tau": "tau",
    "study-delta": "delta",
    "study-semiconv": "semiconv",
    "study-iter": "iter",
}


class ConfigError(ValueError):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value configuration file")
    common.add_argument("--out", type=Path, help="output CSV path")
    common.add_argument("--seed", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--eps", type=float, dest="epsilon")
    common.add_argument("--potential", choices=ex.POTENTIALS)
    common.add_argument("--problem", choices=ex.PROBLEMS)
    common.add_argument("--N", type=int, dest="N", help="number of time steps")
    common.add_argument("--n-cells", type=int, dest="n_cells")
    common.add_argument("--sweep", help="comma separated sweep values")
    common.add_argument("--workers", type=int)
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="subdiffinv",
        description="Forward solves and potential reconstruction for subdiffusion.")
    sub = parser.add_subparsers(dest="verb", required=True)

    sub.add_parser("forward", parents=[common],
                   help="solve the direct problem and write the observation")
    sub.add_parser("generate-data", parents=[common],
                   help="fine-grid data, downsampled and noisy")
    p = sub.add_parser("invert", parents=[common], help="reconstruct the potential")
    p.add_argument("--data", type=Path, help="observation CSV (generated if omitted)")
    p.add_argument("--m-star", type=float, dest="m_star",
                   help="lower bound of the exact data used in the admissibility check")

    for verb in STUDY_VERBS:
        p = sub.add_parser(verb, parents=[common], help=f"run the {STUDY_VERBS[verb]} study")
        p.add_argument("--timings", action="store_true",
                       help="fill the seconds column (makes output non-reproducible)")

    return parser


def _build_config(args: argparse.Namespace, base: ex.ExperimentConfig) -> tuple[ex.ExperimentConfig, set]:
    cfg = base
    explicit: dict[str, str] = {}
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from exc
        explicit.update(ex.parse_config_text(text))

    for key in ("seed", "alpha", "epsilon", "potential", "problem", "N", "n_cells",
                "sweep", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            explicit[key] = str(value)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        explicit[key] = value

    cfg = ex.config_from_mapping(explicit, base)
    names = {k.strip().replace("-", "_") for k in explicit}
    return cfg, names


def _summary(cfg: ex.ExperimentConfig, m_delta: ObservationSeries, result, error: float) -> dict:
    return {
        "problem": cfg.problem,
        "potential": cfg.potential,
        "alpha": cfg.alpha,
        "T": cfg.T,
        "N": cfg.N,
        "h": cfg.system.mesh.h,
        "epsilon": cfg.epsilon,
        "seed": cfg.seed,
        "delta": m_delta.delta,
        "iterations": result.iterations_used,
        "converged": result.converged,
        "final_error": error,
    }


def _cmd_forward(cfg, args) -> int:
    grid = cfg.grid
    q = ex.reference_potential(cfg.potential, grid.t[1:], cfg.T)
    from subdiffinv.forward import solve_forward

    m = observe(solve_forward(cfg.spec, cfg.system, grid, q), cfg.system)
    out = args.out or Path("observation.csv")
    write_observation_csv(out, m)
    log.info("wrote %s", out)
    return EXIT_OK


def _cmd_generate(cfg, args) -> int:
    out = args.out or Path("data.csv")
    ex.generate_data(cfg, out)
    log.info("wrote %s", out)
    return EXIT_OK


def _cmd_invert(cfg, args) -> int:
    if args.data is not None:
        m_delta, _ = read_observation_csv(args.data)
        if abs(m_delta.grid.T - cfg.T) > 1.0e-12 * cfg.T:
            raise ConfigError(f"data ends at T={m_delta.grid.T}, config has T={cfg.T}")
        cfg = cfg.replace(N=m_delta.grid.N)
    else:
        _, m_delta = ex.generate_data(cfg)

    inv = cfg.inverse
    if args.m_star is not None:
        from dataclasses import replace
        inv = replace(inv, m_star=args.m_star)

    from subdiffinv.inverse import reconstruct

    result = reconstruct(cfg.spec, cfg.system, cfg.grid, m_delta, inv)
    error = reconstruction_error(result.q_star.values, cfg.q_true, cfg.grid, cfg.p)

    out = args.out or Path("reconstruction.csv")
    ex.write_reconstruction_csv(out, result, cfg.grid, cfg.q_true)
    summary_path = out.with_suffix(".summary.json")
    summary_path.write_text(json.dumps(_summary(cfg, m_delta, result, error), indent=2) + "\n")
    log.info("wrote %s and %s (error %.3e after %d iterations)",
             out, summary_path, error, result.iterations_used)
    return EXIT_OK


def _cmd_study(kind, cfg, args, explicit) -> int:
    if kind == "iter" and "N" not in explicit:
        cfg = cfg.replace(N=ex.OPTIMAL_N.get(round(cfg.alpha, 6), cfg.N))

    rows = ex.run_study(kind, cfg)
    out = args.out or Path(f"study_{kind}.csv")
    ex.write_study_csv(out, rows, timings=args.timings)
    failed = sum(r.failed for r in rows)
    log.info("wrote %s (%d rows, %d failed)", out, len(rows), failed)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    # library iteration logs are too chatty even for -v
    logging.getLogger("subdiffinv.inverse").setLevel(logging.INFO)

    kind = STUDY_VERBS.get(args.verb)
    base = ex.study_defaults(kind) if kind is not None else ex.ExperimentConfig()

    try:
        cfg, explicit = _build_config(args, base)
    except ValueError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG

    try:
        if args.verb == "forward":
            return _cmd_forward(cfg, args)
        if args.verb == "generate-data":
            return _cmd_generate(cfg, args)
        if args.verb == "invert":
            return _cmd_invert(cfg, args)
        return _cmd_study(kind, cfg, args, explicit)
    except InadmissibleDataError as exc:
        log.error("inadmissible data: %s", exc)
        return EXIT_INADMISSIBLE
    except (SolverError, ReconstructionError, np.linalg.LinAlgError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except ValueError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
