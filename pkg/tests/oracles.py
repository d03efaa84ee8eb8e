"""Independent reference computations used by the test suite.

Everything here avoids the package's QR code path: least squares is solved
from normal equations in exact rational arithmetic, so the only rounding is
the final conversion to float.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def _solve_exact(a: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Gauss-Jordan elimination over the rationals."""
    m = len(b)
    aug = [row[:] + [rhs] for row, rhs in zip(a, b)]
    for col in range(m):
        piv = next(r for r in range(col, m) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [v * inv for v in aug[col]]
        for r in range(m):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [v - f * w for v, w in zip(aug[r], aug[col])]
    return [aug[r][m] for r in range(m)]


class ExactSegments:
    """Exact residual sums of polynomial fits on any segment of ``y``.

    Prefix sums of ``x x'``, ``x y`` and ``y^2`` are held as fractions, so
    ``rss(lo, hi) = y'y - b'X'y`` with ``b`` the exact normal-equation solution.
    """

    def __init__(self, y: np.ndarray, p: int, scaling: str = "scaled") -> None:
        n = len(y)
        self.n, self.p = n, p
        ys = [Fraction(float(v)) for v in y]
        q = p + 1
        self._xx = [[[Fraction(0)] * q for _ in range(q)]]
        self._xy = [[Fraction(0)] * q]
        self._yy = [Fraction(0)]
        for i in range(1, n + 1):
            u = Fraction(i, n) if scaling == "scaled" else Fraction(i)
            x = [u**j for j in range(q)]
            prev_xx, prev_xy = self._xx[-1], self._xy[-1]
            self._xx.append([[prev_xx[a][b] + x[a] * x[b] for b in range(q)] for a in range(q)])
            self._xy.append([prev_xy[a] + x[a] * ys[i - 1] for a in range(q)])
            self._yy.append(self._yy[-1] + ys[i - 1] ** 2)

    def rss_exact(self, lo: int, hi: int) -> Fraction:
        q = self.p + 1
        xx = [[self._xx[hi][a][b] - self._xx[lo - 1][a][b] for b in range(q)] for a in range(q)]
        xy = [self._xy[hi][a] - self._xy[lo - 1][a] for a in range(q)]
        beta = _solve_exact(xx, xy)
        return self._yy[hi] - self._yy[lo - 1] - sum(b * v for b, v in zip(beta, xy))

    def rss(self, lo: int, hi: int) -> float:
        return float(self.rss_exact(lo, hi))

    def beta(self, lo: int, hi: int) -> list[float]:
        q = self.p + 1
        xx = [[self._xx[hi][a][b] - self._xx[lo - 1][a][b] for b in range(q)] for a in range(q)]
        xy = [self._xy[hi][a] - self._xy[lo - 1][a] for a in range(q)]
        return [float(b) for b in _solve_exact(xx, xy)]

    def _gram(self, lo: int, hi: int) -> list[list[Fraction]]:
        q = self.p + 1
        return [[self._xx[hi][a][b] - self._xx[lo - 1][a][b] for b in range(q)] for a in range(q)]

    def score_exact(self, k: int) -> list[Fraction]:
        """``S_k = sum_{i<=k} x_i y_i - C_k C_n^{-1} sum_{i<=n} x_i y_i``."""
        q, n = self.p + 1, self.n
        beta = _solve_exact(self._gram(1, n), self._xy[n])
        c_k = self._gram(1, k)
        return [self._xy[k][a] - sum(c_k[a][b] * beta[b] for b in range(q)) for a in range(q)]

    def qform_literal_exact(self, k: int) -> Fraction:
        """``S_k' C_k^{-1} C_n C~_k^{-1} S_k`` with each factor applied as written."""
        n, q = self.n, self.p + 1
        s = self.score_exact(k)
        right = _solve_exact(self._gram(k + 1, n), s)
        c_n = self._gram(1, n)
        mid = [sum(c_n[a][b] * right[b] for b in range(q)) for a in range(q)]
        left = _solve_exact(self._gram(1, k), mid)
        return sum(u * v for u, v in zip(s, left))

    def qform_split_exact(self, k: int) -> Fraction:
        """``S_k' C_k^{-1} S_k + S_k' C~_k^{-1} S_k``."""
        s = self.score_exact(k)
        a = _solve_exact(self._gram(1, k), s)
        b = _solve_exact(self._gram(k + 1, self.n), s)
        return sum(u * (v + w) for u, v, w in zip(s, a, b))

    def lr_gap_exact(self, k: int) -> Fraction:
        n = self.n
        return self.rss_exact(1, n) - self.rss_exact(1, k) - self.rss_exact(k + 1, n)

    def lr_gap(self, k: int) -> float:
        """``RSS_full - RSS_1(k) - RSS_2(k)`` evaluated exactly, then rounded once."""
        n = self.n
        return float(self.rss_exact(1, n) - self.rss_exact(1, k) - self.rss_exact(k + 1, n))


def oracle_t_hat(y: np.ndarray, p: int, lo: int, hi: int) -> tuple[float, int]:
    """``n log(RSS_full / min_k (RSS_1 + RSS_2))`` and its smallest minimiser."""
    ex = ExactSegments(y, p)
    n = len(y)
    splits = {k: ex.rss_exact(1, k) + ex.rss_exact(k + 1, n) for k in range(lo, hi + 1)}
    best = min(splits.values())
    k_hat = min(k for k, v in splits.items() if v == best)
    return n * (math.log(ex.rss(1, n)) - math.log(float(best))), k_hat


def oracle_split_table(y: np.ndarray, p: int, lo: int, hi: int) -> dict[int, tuple[float, float, float]]:
    """Per-split ``(rss1, rss2, rss_full - rss1 - rss2)`` from exact fits."""
    ex = ExactSegments(y, p)
    n = len(y)
    full = ex.rss_exact(1, n)
    out = {}
    for k in range(lo, hi + 1):
        a, b = ex.rss_exact(1, k), ex.rss_exact(k + 1, n)
        out[k] = (float(a), float(b), float(full - a - b))
    return out


def normal_equations_fit(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Least squares through an explicitly inverted Gram matrix."""
    beta = np.linalg.inv(x.T @ x) @ (x.T @ y)
    r = y - x @ beta
    return beta, float(r @ r)
