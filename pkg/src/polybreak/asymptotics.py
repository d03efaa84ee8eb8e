"""Extreme-value critical values and p-values for the maximal statistic.

Under no change the recentred statistic ``T - g(n, p, gamma)`` is
asymptotically distributed as ``exp(-2 exp(-x/2))``, the law of the larger of
two independent Gumbel-type variables with cdf ``exp(-exp(-x/2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MIN_N = 8


def gamma_function(t: float) -> float:
    """Euler's Gamma function on the positive half-line."""
    if not t > 0:
        raise ValueError(f"Gamma is only evaluated for positive arguments, got {t}")
    return math.gamma(t)


def h_of_n(n: float, gamma: float) -> float:
    """``h(n) = n (log n)^gamma``."""
    return n * math.log(n) ** gamma


def _validate(n: float, gamma: float) -> float:
    if n < MIN_N:
        raise ValueError(f"n must be at least {MIN_N}, got {n}")
    h = h_of_n(n, gamma)
    if not h > math.e:
        raise ValueError(f"h(n) = {h:.4g} must exceed e for the iterated logarithms")
    return h


def log_constant(p: int) -> float:
    """``2 log(2^{(p+1)/2} Gamma((p+1)/2) / (p+1))``; exactly zero for ``p = 1``."""
    if p < 0:
        raise ValueError(f"polynomial order must be non-negative, got {p}")
    a = (p + 1) / 2
    return 2.0 * (a * math.log(2.0) + math.log(gamma_function(a)) - math.log(p + 1))


def correction_g(n: float, p: int, gamma: float = 0.0) -> float:
    """Centering sequence ``g(n, p, gamma)``.

    ``2 loglog h + (p+1) logloglog h - 2 log(2^{(p+1)/2} Gamma((p+1)/2) / (p+1))``
    with ``h = n (log n)^gamma`` and natural logarithms throughout.
    """
    h = _validate(n, gamma)
    ll = math.log(math.log(h))
    return 2.0 * ll + (p + 1) * math.log(ll) - log_constant(p)


def limit_cdf(x: float) -> float:
    """``exp(-2 exp(-x/2))``."""
    return math.exp(-2.0 * math.exp(-x / 2.0)) if x > -1400 else 0.0


def limit_quantile(prob: float) -> float:
    """Inverse of :func:`limit_cdf`."""
    if not 0.0 < prob < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {prob}")
    return -2.0 * math.log(-0.5 * math.log(prob))


@dataclass(frozen=True)
class CriticalValueSpec:
    n: int
    p: int
    gamma: float
    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.p < 0:
            raise ValueError(f"polynomial order must be non-negative, got {self.p}")
        _validate(self.n, self.gamma)


def critical_value(spec: CriticalValueSpec) -> float:
    """``c(n, alpha) = -2 log(-0.5 log(1 - alpha)) + g(n, p, gamma)``."""
    return limit_quantile(1.0 - spec.alpha) + correction_g(spec.n, spec.p, spec.gamma)


def p_value(statistic: float, n: float, p: int, gamma: float = 0.0) -> float:
    """Asymptotic p-value ``1 - exp(-2 exp(-(T - g)/2))`` clamped to ``[0, 1]``."""
    if not math.isfinite(statistic):
        raise ValueError("statistic must be finite")
    x = statistic - correction_g(n, p, gamma)
    # -expm1 keeps precision for small p-values
    z = -2.0 * math.exp(-x / 2.0) if x > -1400 else -math.inf
    return min(1.0, max(0.0, -math.expm1(z)))


def default_gamma(p: int) -> tuple[float, bool]:
    """Size-calibration exponent for order ``p`` and whether it is calibrated.

    ``gamma = 0`` for linear and ``gamma = 1`` for quadratic regression were
    tuned in simulation; other orders use an uncalibrated extrapolation.
    """
    if p == 1:
        return 0.0, True
    if p == 2:
        return 1.0, True
    if p == 0:
        return 0.0, False
    return float(p - 1), False
