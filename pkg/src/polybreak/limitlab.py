"""Simulation of the Gaussian limit objects behind the test.

Two families of processes are simulated from one primitive, the moment vector
``Gamma(t) = (int_0^t x^i dW(x))_{i=0..p}``:

* the normalised Legendre process ``qhat(t)`` whose squared norm, maximised
  over a growing range, gives the extreme-value limit;
* the tied-down process ``Delta(t) = Gamma(t) - C(t) C(1)^{-1} Gamma(1)`` whose
  weighted supremum over ``[delta, 1 - delta]`` is the limit of the trimmed
  statistic.

Increments of ``Gamma`` between grid points are drawn exactly: over
``[s, t]`` they are jointly Gaussian with covariance
``(t^{i+j+1} - s^{i+j+1}) / (i+j+1)``. The only discretisation is in the
supremum, which is taken over the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from polybreak.asymptotics import correction_g, limit_cdf, limit_quantile

P_MAX = 6
QUANTILES = (0.90, 0.95, 0.99)
MIN_GRID_POINTS = 100
_BATCH = 250


@lru_cache(maxsize=None)
def _legendre_exact(i: int) -> tuple[Fraction, ...]:
    """Monic orthogonal polynomial of degree ``i`` on ``[0, 1]``, ascending coefficients."""
    # Gram-Schmidt on monomials with <x^a, x^b> = 1/(a+b+1), in exact arithmetic
    def inner(u: tuple[Fraction, ...], v: tuple[Fraction, ...]) -> Fraction:
        return sum(
            (a * b / (r + s + 1) for r, a in enumerate(u) for s, b in enumerate(v)),
            Fraction(0),
        )

    coeffs = [Fraction(0)] * i + [Fraction(1)]
    for j in range(i):
        g = _legendre_exact(j)
        proj = inner(tuple(coeffs), g) / inner(g, g)
        for c, b in enumerate(g):
            coeffs[c] -= proj * b
    return tuple(coeffs)


def legendre_monic(i: int) -> NDArray[np.float64]:
    """Ascending coefficients of the monic Legendre polynomial of degree ``i`` on ``[0, 1]``.

    >>> legendre_monic(2)
    array([ 0.16666667, -1.        ,  1.        ])
    """
    if not 0 <= i <= P_MAX:
        raise ValueError(f"degree must lie in 0..{P_MAX}, got {i}")
    return np.array([float(c) for c in _legendre_exact(i)])


def legendre_norm2(i: int) -> float:
    """``int_0^1 g_i(x)^2 dx`` for the monic Legendre polynomial ``g_i``."""
    if not 0 <= i <= P_MAX:
        raise ValueError(f"degree must lie in 0..{P_MAX}, got {i}")
    return math.factorial(i) ** 4 / (math.factorial(2 * i) ** 2 * (2 * i + 1))


@dataclass(frozen=True)
class LimitBasis:
    """Monic Legendre polynomials ``g_{i,t}`` on ``[0, t]`` for ``i = 0..p``.

    ``g_{i,t}(x) = t^i g_{i,1}(x / t)`` and ``int_0^t g_{i,t}^2 = t^{2i+1} norm2(i, 1)``.
    """

    p: int

    def __post_init__(self) -> None:
        if not 0 <= self.p <= P_MAX:
            raise ValueError(f"order must lie in 0..{P_MAX}, got {self.p}")

    def coefficients(self, i: int, t: float = 1.0) -> NDArray[np.float64]:
        c = legendre_monic(i)
        return c * t ** (i - np.arange(i + 1))

    def norm2(self, i: int, t: float = 1.0) -> float:
        return t ** (2 * i + 1) * legendre_norm2(i)

    def evaluate(self, i: int, t: float, x: NDArray[np.float64] | float) -> NDArray[np.float64]:
        return np.polynomial.polynomial.polyval(x, self.coefficients(i, t))

    def projection(self, t: NDArray[np.float64]) -> NDArray[np.float64]:
        """Matrices ``L(t)`` with ``qhat(t) = L(t) Gamma(t)``, shape ``(len(t), p+1, p+1)``."""
        t = np.asarray(t, dtype=float)
        L = np.zeros((t.size, self.p + 1, self.p + 1))
        for i in range(self.p + 1):
            c = legendre_monic(i)
            scale = np.sqrt(legendre_norm2(i) * t ** (2 * i + 1))
            for j in range(i + 1):
                L[:, i, j] = c[j] * t ** (i - j) / scale
        return L


def limit_matrices(t: float, p: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """``C(t) = (int_0^t x^{i+j})`` and ``C~(t) = (int_t^1 x^{i+j})``."""
    e = np.add.outer(np.arange(p + 1), np.arange(p + 1)) + 1
    c = t**e / e
    return c, (1.0 - t**e) / e


@dataclass(frozen=True)
class PathConfig:
    """Grid and seed for path simulation.

    ``resolution`` is the number of grid steps per unit of time on ``[0, 1]``
    (trimmed limit) or per unit of ``log t`` (Legendre process over a
    logarithmically long range).
    """

    resolution: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.resolution < 1:
            raise ValueError("resolution must be positive")


def _increment_factors(grid: NDArray[np.float64], p: int) -> NDArray[np.float64]:
    """Factors ``A_g`` with ``Gamma(t_g) - Gamma(t_{g-1}) = A_g z_g``, ``z_g`` standard normal.

    Over ``[s, s + h]``, ``int x^i dW = sum_m binom(i, m) s^{i-m} int_0^h u^m dW(u)``
    and the local moments have covariance ``h^{m+l+1} / (m+l+1)``, i.e. a
    Hilbert matrix after scaling by ``h^{m+1/2}``. Factoring that instead of the
    raw increment covariance avoids cancellation on short steps.
    """
    e = np.add.outer(np.arange(p + 1), np.arange(p + 1)) + 1
    hilbert_chol = np.linalg.cholesky(1.0 / e)
    pts = np.concatenate([[0.0], grid])
    s, h = pts[:-1], np.diff(pts)
    i, m = np.arange(p + 1)[:, None], np.arange(p + 1)[None, :]
    binom = np.vectorize(math.comb)(np.maximum(i, m), m) * (m <= i)
    shift = binom[None] * s[:, None, None] ** np.maximum(i - m, 0)[None]
    local = h[:, None] ** (np.arange(p + 1) + 0.5)[None, :]
    return shift @ (local[:, :, None] * hilbert_chol[None])


def moment_paths(
    p: int, grid: NDArray[np.float64], reps: int, rng: np.random.Generator
) -> NDArray[np.float64]:
    """``reps`` draws of ``Gamma(t)`` at the increasing grid points, shape ``(reps, len(grid), p+1)``."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise ValueError("grid must be positive and strictly increasing")
    chol = _increment_factors(grid, p)
    z = rng.standard_normal((reps, grid.size, p + 1))
    inc = np.einsum("gij,rgj->rgi", chol, z)
    return np.cumsum(inc, axis=1)


def log_grid(t_lo: float, t_hi: float, resolution: int) -> NDArray[np.float64]:
    """Geometric grid from ``t_lo`` to ``t_hi`` with ``resolution`` steps per unit of ``log t``."""
    steps = max(1, math.ceil(resolution * math.log(t_hi / t_lo)))
    return np.geomspace(t_lo, t_hi, steps + 1)


def qhat_paths(p: int, grid: NDArray[np.float64], moments: NDArray[np.float64]) -> NDArray[np.float64]:
    """Normalised Legendre coordinates ``qhat(t)`` from moment paths."""
    L = LimitBasis(p).projection(grid)
    return np.einsum("gij,rgj->rgi", L, moments)


def _qhat_sup_batch(
    p: int, grid: NDArray[np.float64], reps: int, rng: np.random.Generator
) -> NDArray[np.float64]:
    out = np.empty(reps)
    for start in range(0, reps, _BATCH):
        m = min(_BATCH, reps - start)
        q = qhat_paths(p, grid, moment_paths(p, grid, m, rng))
        out[start : start + m] = np.einsum("rgi,rgi->rg", q, q).max(axis=1)
    return out


def _check_grid(grid: NDArray[np.float64]) -> None:
    if grid.size < MIN_GRID_POINTS:
        raise ValueError(f"grid has {grid.size} points; need at least {MIN_GRID_POINTS}")


def simulate_qhat_sup(
    p: int,
    t_lo: float,
    t_hi: float,
    path: PathConfig,
    reps: int = 1,
    grid: NDArray[np.float64] | None = None,
) -> NDArray[np.float64]:
    """Draws of ``sup_{t_lo <= t <= t_hi} |qhat(t)|^2``.

    The supremum is taken over a geometric grid (or the explicit ``grid``).
    Only the ratio ``t_hi / t_lo`` matters in distribution.
    """
    if not 0 < t_lo < t_hi:
        raise ValueError("need 0 < t_lo < t_hi")
    if grid is None:
        grid = log_grid(t_lo, t_hi, path.resolution)
    grid = np.asarray(grid, dtype=float)
    _check_grid(grid)
    rng = np.random.default_rng(path.seed)
    return _qhat_sup_batch(p, grid, reps, rng)


def contributing_range(n: float, alpha: float = 1.0, beta: float = 1.0) -> tuple[float, float]:
    """``(a(n), b(n)) = (log^alpha n, n / log^beta n)``."""
    ln = math.log(n)
    return ln**alpha, n / ln**beta


@dataclass(frozen=True)
class GumbelCheck:
    p: int
    n_effective: float
    reps: int
    location: float
    recentred: NDArray[np.float64]
    ks_distance: float
    median: float
    limit_median: float
    threshold: float
    p_max_below: float
    p_half_below_squared: float
    independence_se: float


def gumbel_check(
    p: int,
    n_effective: float,
    reps: int,
    path: PathConfig,
    alpha: float = 1.0,
    beta: float = 1.0,
) -> GumbelCheck:
    """Compare the simulated maximum of two independent half-sample suprema with its limit.

    Each half is ``sup |qhat(t)|^2`` over ``a(n) <= t <= b(n)``. The maximum is
    recentred by ``g(n, p, 0)`` and compared to ``exp(-2 exp(-x/2))`` by the
    Kolmogorov-Smirnov distance. The independence identity
    ``P(max <= c) = P(xi <= c)^2`` is evaluated at the fixed threshold
    ``c = g(n, p, 0) + median of the limit law``.
    """
    if reps < 1000:
        raise ValueError("gumbel_check needs at least 1000 replications")
    a, b = contributing_range(n_effective, alpha, beta)
    grid = log_grid(a / b, 1.0, path.resolution)
    _check_grid(grid)
    rng = np.random.default_rng(path.seed)
    xi = _qhat_sup_batch(p, grid, 2 * reps, rng).reshape(2, reps)
    mx = xi.max(axis=0)
    loc = correction_g(n_effective, p, 0.0)
    rec = mx - loc
    ks = stats.kstest(rec, np.vectorize(limit_cdf)).statistic
    # fixed threshold: the analytic limit median on the scale of the statistic
    c = loc + limit_quantile(0.5)
    p_half = float(np.mean(xi <= c))
    p_max = float(np.mean(mx <= c))
    # SE of p_max - p_half**2 ignoring their (positive) covariance, so conservative
    se = math.sqrt(p_max * (1 - p_max) / reps + 4 * p_half**3 * (1 - p_half) / (2 * reps))
    return GumbelCheck(
        p=p,
        n_effective=float(n_effective),
        reps=reps,
        location=loc,
        recentred=rec,
        ks_distance=float(ks),
        median=float(np.median(rec)),
        limit_median=limit_quantile(0.5),
        threshold=c,
        p_max_below=p_max,
        p_half_below_squared=p_half**2,
        independence_se=se,
    )


def quantile_with_se(sample: NDArray[np.float64], q: float) -> tuple[float, float]:
    """Empirical quantile and its binomial (order-statistic) standard error.

    The SE is half the distance between the order statistics at ranks
    ``N q -/+ sqrt(N q (1 - q))``.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    est = float(np.quantile(x, q))
    half = math.sqrt(n * q * (1 - q))
    lo = min(max(int(math.floor(n * q - half)), 0), n - 1)
    hi = min(max(int(math.ceil(n * q + half)) - 1, 0), n - 1)
    return est, float((x[hi] - x[lo]) / 2.0)


@dataclass(frozen=True)
class QuantileTable:
    p: int
    delta: float
    reps: int
    resolution: int
    seed: int
    quantiles: tuple[float, ...]
    values: tuple[float, ...]
    std_errors: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "delta": self.delta,
            "reps": self.reps,
            "resolution": self.resolution,
            "seed": self.seed,
            "quantiles": list(self.quantiles),
            "values": list(self.values),
            "std_errors": list(self.std_errors),
        }


def trimmed_limit_draws(
    p: int, delta: float, reps: int, path: PathConfig
) -> NDArray[np.float64]:
    """Draws of ``sup_{delta <= t <= 1-delta} Delta(t)' C(t)^{-1} C(1) C~(t)^{-1} Delta(t)``.

    ``C^{-1} C(1) C~^{-1}`` equals ``C^{-1} + C~^{-1}`` because ``C(1) = C + C~``.
    """
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    if not 0 <= p <= P_MAX:
        raise ValueError(f"order must lie in 0..{P_MAX}, got {p}")
    m = path.resolution
    grid = np.arange(1, m + 1) / m
    inside = np.flatnonzero((grid >= delta - 1e-12) & (grid <= 1 - delta + 1e-12))
    if inside.size < 1:
        raise ValueError("grid has no points inside the trimmed range")
    tt = grid[inside]
    c_t, ct_t = limit_matrices(tt[:, None, None], p)
    c_one, _ = limit_matrices(1.0, p)
    weight = np.linalg.inv(c_t) + np.linalg.inv(ct_t)
    tie = c_t @ np.linalg.inv(c_one)
    rng = np.random.default_rng(path.seed)
    out = np.empty(reps)
    for start in range(0, reps, _BATCH):
        r = min(_BATCH, reps - start)
        gam = moment_paths(p, grid, r, rng)
        d = gam[:, inside, :] - np.einsum("gij,rj->rgi", tie, gam[:, -1, :])
        out[start : start + r] = np.einsum("rgi,gij,rgj->rg", d, weight, d).max(axis=1)
    return out


def simulate_trimmed_limit(
    p: int,
    delta: float,
    reps: int,
    path: PathConfig,
    quantiles: tuple[float, ...] = QUANTILES,
) -> QuantileTable:
    """Quantiles (with binomial MC standard errors) of the trimmed-statistic limit."""
    draws = trimmed_limit_draws(p, delta, reps, path)
    vals, ses = zip(*(quantile_with_se(draws, q) for q in quantiles))
    return QuantileTable(p, float(delta), reps, path.resolution, path.seed, tuple(quantiles), vals, ses)


def bridge_sup_draws(delta: float, reps: int, resolution: int, seed: int) -> NDArray[np.float64]:
    """Draws of ``sup_{delta <= t <= 1-delta} B(t)^2 / (t (1 - t))`` for a Brownian bridge ``B``.

    Built from cumulative sums of Gaussian steps, independently of the moment
    machinery; serves as the ``p = 0`` cross-check of the trimmed limit.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(1, resolution + 1) / resolution
    keep = (t >= delta - 1e-12) & (t <= 1 - delta + 1e-12)
    out = np.empty(reps)
    for start in range(0, reps, _BATCH):
        r = min(_BATCH, reps - start)
        w = np.cumsum(rng.normal(0.0, math.sqrt(1.0 / resolution), (r, resolution)), axis=1)
        bridge = w - t[None, :] * w[:, -1:]
        out[start : start + r] = (bridge[:, keep] ** 2 / (t[keep] * (1 - t[keep]))).max(axis=1)
    return out


def discrete_sup_oracle(
    p: int, n: int, k_range: tuple[float, float], seed: int | np.random.Generator
) -> float:
    """``max_{a <= k <= b} s_k' D_k^{-1} s_k`` with ``s_{k,i} = sum_{j<=k} j^i e_j``.

    ``e_j`` are iid standard normal and ``D_k^{-1} = B_n C_k^{-1} B_n`` with
    ``B_n = diag(n^{-i})``, so the quadratic form equals ``v_k' C_k^{-1} v_k``
    for the scaled regressors.
    """
    if n < 100:
        raise ValueError("discrete oracle needs n >= 100")
    a, b = k_range
    lo = max(math.ceil(a), p + 1)
    hi = min(math.floor(b), n)
    if lo > hi:
        raise ValueError("empty range")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    e = rng.standard_normal(hi)
    j = np.arange(1, hi + 1, dtype=float)
    powers = np.arange(p + 1)
    raw = j[:, None] ** powers
    s = np.cumsum(raw * e[:, None], axis=0)
    bn = float(n) ** -powers
    x = raw * bn
    c = np.cumsum(x[:, :, None] * x[:, None, :], axis=0)
    ks = np.arange(lo, hi + 1)
    v = s[ks - 1] * bn
    z = np.linalg.solve(c[ks - 1], v[..., None])[..., 0]
    return float(np.einsum("ki,ki->k", v, z).max())
