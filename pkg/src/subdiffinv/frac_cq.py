"""Backward Euler convolution quadrature for the Caputo derivative.

The weights are the Taylor coefficients of ``(1 - xi)**alpha`` and the
discrete operator acts on a sampled sequence ``phi[0..N]`` on a uniform
grid. A truncated Mittag-Leffler series is included as an independent
reference for the scalar relaxation equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CqWeights",
    "OutOfRangeError",
    "cq_caputo",
    "cq_weights",
    "mittag_leffler",
]

#: Largest |z| accepted by :func:`mittag_leffler`.
ML_MAX_ABS_Z = 50.0


class OutOfRangeError(ValueError):
    """Raised when an argument lies outside the reliable evaluation window."""


def _check_alpha(alpha: float, *, upper_inclusive: bool = False) -> None:
    ok = 0.0 < alpha <= 1.0 if upper_inclusive else 0.0 < alpha < 1.0
    if not ok:
        interval = "(0, 1]" if upper_inclusive else "(0, 1)"
        raise ValueError(f"alpha must lie in {interval}, got {alpha!r}")


@dataclass(frozen=True)
class CqWeights:
    """Convolution weights ``w[0..n]`` of order ``alpha``."""

    alpha: float
    w: np.ndarray

    def __len__(self) -> int:
        return self.w.size

    @property
    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.w)


def cq_weights(alpha: float, n: int) -> CqWeights:
    """Return the backward Euler CQ weights ``w[0..n]``.

    Uses the recurrence ``w[j] = w[j-1] * (j - 1 - alpha) / j`` which is
    algebraically the Gamma-ratio formula but never overflows.
    """
    _check_alpha(alpha)
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")

    w = np.empty(n + 1)
    w[0] = 1.0
    if n > 0:
        j = np.arange(1, n + 1, dtype=float)
        w[1:] = np.cumprod((j - 1.0 - alpha) / j)

    w.setflags(write=False)
    return CqWeights(alpha=alpha, w=w)


def cq_caputo(
    phi: np.ndarray,
    alpha: float,
    tau: float,
    weights: CqWeights | None = None,
) -> np.ndarray:
    r"""Discrete Caputo derivative of the samples ``phi[0..N]``.

    .. math::

        d_n = \tau^{-\alpha} \sum_{j=0}^{n} w_j (\phi_{n-j} - \phi_0),
        \qquad n = 1, \dots, N.

    :returns: an array of length ``N`` holding ``d[1..N]``.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 1 or phi.size < 2:
        raise ValueError("phi must be a 1d sequence with at least two samples")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")

    n = phi.size - 1
    if weights is None or weights.w.size < n + 1 or weights.alpha != alpha:
        weights = cq_weights(alpha, n)

    conv = np.convolve(weights.w[: n + 1], phi - phi[0])[: n + 1]
    return tau ** (-alpha) * conv[1:]


def mittag_leffler(alpha: float, z: float, *, rtol: float = 1.0e-14) -> float:
    r"""Evaluate :math:`E_\alpha(z) = \sum_k z^k / \Gamma(\alpha k + 1)`.

    Only the power series is implemented, so the argument is restricted to
    ``|z| <= 50`` and evaluation is refused when cancellation between the
    terms would destroy more than half of the available digits.
    """
    _check_alpha(alpha, upper_inclusive=True)
    z = float(z)
    if not math.isfinite(z) or abs(z) > ML_MAX_ABS_Z:
        raise OutOfRangeError(f"|z| must be at most {ML_MAX_ABS_Z}, got {z!r}")

    if z == 0.0:
        return 1.0

    log_abs_z = math.log(abs(z))
    terms = [1.0]
    running = 1.0
    prev_mag = 1.0
    k = 0
    while True:
        k += 1
        try:
            mag = math.exp(k * log_abs_z - math.lgamma(alpha * k + 1.0))
        except OverflowError:
            raise OutOfRangeError(f"series for E_{alpha}({z}) overflows") from None
        term = mag if z > 0 or k % 2 == 0 else -mag
        terms.append(term)
        running += term
        # only stop once the terms are decaying
        if mag < prev_mag and mag <= rtol * abs(running):
            break
        prev_mag = mag
        if k > 10_000:
            raise OutOfRangeError(f"series did not converge for z={z!r}")

    result = math.fsum(terms)
    condition = math.fsum(abs(t) for t in terms) / max(abs(result), 1.0e-300)
    if condition * np.finfo(float).eps > 1.0e-8:
        raise OutOfRangeError(
            f"series for E_{alpha}({z}) loses too many digits to cancellation"
        )

    return result
