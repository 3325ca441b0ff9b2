"""Error of noisy reconstructions as the time step is refined.

With a fixed noise level the error first decreases and then grows again as
the step shrinks, because the discrete fractional derivative amplifies the
noise like tau^(-alpha). Prints the error table and the best step per seed.
"""

import argparse

import numpy as np

from subdiffinv import experiments as ex


def main():
    parser = argparse.ArgumentParser(description="semi-convergence in the time step")
    parser.add_argument("--alpha", type=float, nargs="+", default=[0.3, 0.5, 0.7])
    parser.add_argument("--potential", default="q1", choices=ex.POTENTIALS)
    parser.add_argument("--eps", type=float, default=0.01)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--n-cells", type=int, default=32)
    args = parser.parse_args()

    for alpha in args.alpha:
        cfg = ex.study_defaults("semiconv").replace(alpha=alpha, potential=args.potential,
                                                    epsilon=args.eps, n_cells=args.n_cells)
        print(f"alpha = {alpha}")
        print("seed  " + " ".join(f"{'2^' + str(int(v)):>9s}" for v in cfg.sweep) + "   best")
        for seed in range(args.seeds):
            rows = ex.run_study("semiconv", cfg.replace(seed=seed))
            errors = np.array([r.error for r in rows])
            best = int(rows[int(np.nanargmin(errors))].param)
            print(f"{seed:4d}  " + " ".join(f"{e:9.3e}" for e in errors) + f"   2^{best}")


if __name__ == "__main__":
    main()
