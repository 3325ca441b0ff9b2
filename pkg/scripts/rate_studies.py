"""Run the h-, tau- and delta-studies and print the fitted convergence rates.

    python scripts/rate_studies.py --alpha 0.5 --out results/
"""

import argparse
from pathlib import Path

import numpy as np

from subdiffinv import experiments as ex
from subdiffinv.metrics import fit_rate


def mean_rows(kind, cfg, seeds):
    runs = [ex.run_study(kind, cfg.replace(seed=s)) for s in seeds]
    errors = np.mean([[r.error for r in rows] for rows in runs], axis=0)
    return runs[0], errors


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--alpha", type=float, nargs="+", default=[0.3, 0.5, 0.7])
    parser.add_argument("--potential", nargs="+", default=list(ex.POTENTIALS))
    parser.add_argument("--studies", nargs="+", default=["h", "tau", "delta"],
                        choices=["h", "tau", "delta"])
    parser.add_argument("--seeds", type=int, default=5, help="noise seeds for the delta-study")
    parser.add_argument("--problem", default="1d", choices=ex.PROBLEMS)
    parser.add_argument("--out", type=Path, help="directory for the study CSVs")
    args = parser.parse_args()

    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)

    print(f"{'study':6s} {'alpha':>5s} {'q':>3s} {'rate':>7s}  errors")
    for kind in args.studies:
        x_attr = {"h": "h", "tau": "tau", "delta": "delta"}[kind]
        seeds = range(args.seeds) if kind == "delta" else [0]
        for alpha in args.alpha:
            for pot in args.potential:
                cfg = ex.study_defaults(kind).replace(problem=args.problem, alpha=alpha,
                                                      potential=pot)
                rows, errors = mean_rows(kind, cfg, seeds)
                xs = [getattr(r, x_attr) for r in rows]
                ok = np.isfinite(errors)
                rate = fit_rate(np.array(xs)[ok], errors[ok]) if ok.sum() >= 2 else float("nan")
                print(f"{kind:6s} {alpha:5.2f} {pot:>3s} {rate:7.3f}  "
                      + " ".join(f"{e:.2e}" for e in errors))
                if args.out is not None:
                    ex.write_study_csv(args.out / f"{kind}_{args.problem}_{pot}_a{alpha}.csv", rows)


if __name__ == "__main__":
    main()
