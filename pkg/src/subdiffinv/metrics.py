"""Discrete sequence norms and empirical convergence rates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["NormSpec", "fit_rate", "lp_seq_norm", "reconstruction_error"]


@dataclass(frozen=True)
class NormSpec:
    r"""Parameters of the weighted norm

    .. math::

        \|v\|_{\ell^p_\lambda} = \Big(\tau \sum_{n=1}^N
            (e^{-\lambda t_n} |v_n|)^p\Big)^{1/p},

    with ``t_n = n * tau``; ``lam = 0`` gives the plain discrete norm and
    ``p = inf`` the weighted maximum.
    """

    p: float = 2.0
    lam: float = 0.0
    tau: float = 1.0

    def __post_init__(self) -> None:
        if not self.p >= 1:
            raise ValueError(f"p must be at least 1, got {self.p}")
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


def lp_seq_norm(v: np.ndarray, spec: NormSpec) -> float:
    v = np.abs(np.asarray(v, dtype=float))
    if v.ndim != 1 or v.size == 0:
        raise ValueError("expected a nonempty 1d sequence")

    t = spec.tau * np.arange(1, v.size + 1)
    weighted = np.exp(-spec.lam * t) * v
    if math.isinf(spec.p):
        return float(weighted.max())

    # scale by the max before the power to avoid under/overflow
    vmax = weighted.max()
    if vmax == 0.0:
        return 0.0
    return float(vmax * (spec.tau * np.sum((weighted / vmax) ** spec.p)) ** (1.0 / spec.p))


def reconstruction_error(
    q_star: np.ndarray,
    q_true: Callable[[np.ndarray], np.ndarray],
    grid,
    p: float = 2.0,
) -> float:
    """Discrete ``l^p`` distance between ``q_true(t_n)`` and ``q_star[n]``, n = 1..N."""
    q_star = np.asarray(q_star, dtype=float)
    if q_star.shape != (grid.N,):
        raise ValueError(f"expected {grid.N} values, got shape {q_star.shape}")

    exact = np.asarray(q_true(grid.t[1:]), dtype=float)
    return lp_seq_norm(exact - q_star, NormSpec(p=p, lam=0.0, tau=grid.tau))


def fit_rate(xs, ys) -> float:
    """Least-squares slope of ``log(ys)`` against ``log(xs)``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 2:
        raise ValueError("need at least two (x, y) pairs of equal length")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("rates are only defined for positive data")

    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)
