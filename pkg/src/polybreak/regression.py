"""Polynomial designs, segment least squares and the split Gram matrices.

Observations are indexed ``1..n`` as in the usual change-point notation;
a split index ``k`` puts observations ``1..k`` in the first segment and
``k+1..n`` in the second.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import solve_triangular

Scaling = Literal["scaled", "raw"]

#: smallest |R_jj| / max |R_jj| accepted before a design counts as singular
RANK_TOL = 1e-12


class RankDeficientError(ValueError):
    """The segment design is numerically singular for this (n, p)."""


@dataclass(frozen=True)
class Sample:
    """An ordered series of responses to be fitted by a degree-``p`` polynomial.

    Parameters
    ----------
    y : array_like
        Responses in time order.
    p : int
        Polynomial order of the regression.
    """

    y: NDArray[np.float64]
    p: int

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1:
            raise ValueError("y must be one-dimensional")
        if int(self.p) != self.p or self.p < 0:
            raise ValueError(f"polynomial order must be a non-negative integer, got {self.p}")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite values")
        if y.size < 2 * self.p + 6:
            raise ValueError(
                f"need n >= 2p + 6 = {2 * self.p + 6} observations for p={self.p}, got {y.size}"
            )
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "p", int(self.p))

    @property
    def n(self) -> int:
        return int(self.y.size)


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit of one segment.

    ``rss`` is the plain residual sum of squares. ``var_n`` divides it by the
    full sample length (the likelihood-ratio convention) while ``var_df``
    divides by the residual degrees of freedom; the two are never mixed.
    """

    beta_hat: NDArray[np.float64]
    rss: float
    df: int
    n: int
    residuals: NDArray[np.float64] = field(repr=False)

    @property
    def var_n(self) -> float:
        return self.rss / self.n

    @property
    def var_df(self) -> float:
        if self.df < 1:
            raise ValueError("no residual degrees of freedom")
        return self.rss / self.df


@dataclass(frozen=True)
class GramTriple:
    c_k: NDArray[np.float64]
    c_tilde_k: NDArray[np.float64]
    c_n: NDArray[np.float64]


def _check_scaling(scaling: str) -> None:
    if scaling not in ("scaled", "raw"):
        raise ValueError(f"scaling must be 'scaled' or 'raw', got {scaling!r}")


def design_row(i: int, n: int, p: int, scaling: Scaling = "scaled") -> NDArray[np.float64]:
    """Regressor vector ``(1, u, ..., u^p)`` with ``u = i/n`` (scaled) or ``u = i`` (raw)."""
    _check_scaling(scaling)
    if not 1 <= i <= n:
        raise IndexError(f"index {i} outside 1..{n}")
    u = i / n if scaling == "scaled" else float(i)
    row = u ** np.arange(p + 1, dtype=float)
    row[0] = 1.0
    return row


def design_matrix(n: int, p: int, scaling: Scaling = "scaled") -> NDArray[np.float64]:
    """All ``n`` design rows stacked, shape ``(n, p + 1)``."""
    _check_scaling(scaling)
    idx = np.arange(1, n + 1, dtype=float)
    u = idx / n if scaling == "scaled" else idx
    return np.vander(u, p + 1, increasing=True)


def _unpack(y: ArrayLike | Sample, p: int | None) -> tuple[NDArray[np.float64], int]:
    if isinstance(y, Sample):
        return y.y, y.p if p is None else p
    if p is None:
        raise TypeError("p is required when y is not a Sample")
    return np.asarray(y, dtype=float), p


def check_rank(r: NDArray[np.float64]) -> None:
    """Raise :class:`RankDeficientError` if the triangular factor(s) ``r`` are singular.

    Works on a single ``(m, m)`` factor or a stack ``(..., m, m)``.
    """
    d = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
    ratio = d.min(axis=-1) / d.max(axis=-1)
    if np.any(~(ratio >= RANK_TOL)):
        raise RankDeficientError(
            "design is numerically rank deficient; the (n, p) combination is too extreme"
        )


def fit_segment(
    y: ArrayLike | Sample,
    lo: int,
    hi: int,
    p: int | None = None,
    scaling: Scaling = "scaled",
) -> FitResult:
    """Least-squares polynomial fit on observations ``lo..hi`` (1-based, inclusive).

    The design rows are those of the full series, i.e. they use ``i/n`` with
    ``n = len(y)``. The solve goes through a Householder QR of the segment
    design.

    Raises
    ------
    ValueError
        If the segment has fewer than ``p + 2`` points.
    RankDeficientError
        If the segment design is numerically singular.
    """
    yy, p = _unpack(y, p)
    n = yy.size
    if not 1 <= lo <= hi <= n:
        raise IndexError(f"segment {lo}..{hi} outside 1..{n}")
    m = hi - lo + 1
    if m < p + 2:
        raise ValueError(f"segment of length {m} too short for order {p} (need >= {p + 2})")
    X = design_matrix(n, p, scaling)[lo - 1 : hi]
    ys = yy[lo - 1 : hi]
    q, r = np.linalg.qr(X)
    check_rank(r)
    beta = solve_triangular(r, q.T @ ys)
    resid = ys - X @ beta
    # one refinement step so residual error scales with |resid|, not |y|
    corr = q.T @ resid
    beta = beta + solve_triangular(r, corr)
    resid = resid - q @ corr
    return FitResult(
        beta_hat=beta, rss=float(resid @ resid), df=m - (p + 1), n=n, residuals=resid
    )


def gram_triple(n: int, p: int, k: int, scaling: Scaling = "scaled") -> GramTriple:
    """Gram matrices of the first ``k`` rows, the last ``n - k`` rows, and all rows."""
    if not p + 1 <= k <= n - p - 1:
        raise ValueError(f"split {k} outside the positive-definite range {p + 1}..{n - p - 1}")
    X = design_matrix(n, p, scaling)
    c_k = X[:k].T @ X[:k]
    c_tilde = X[k:].T @ X[k:]
    return GramTriple(c_k=c_k, c_tilde_k=c_tilde, c_n=c_k + c_tilde)


def score_vector(
    y: ArrayLike | Sample,
    k: int,
    beta_hat_n: ArrayLike,
    p: int | None = None,
    scaling: Scaling = "scaled",
) -> NDArray[np.float64]:
    """Partial sum ``S_k`` of design-weighted full-sample residuals up to ``k``."""
    yy, p = _unpack(y, p)
    n = yy.size
    if not 1 <= k <= n:
        raise IndexError(f"split {k} outside 1..{n}")
    X = design_matrix(n, p, scaling)[:k]
    return X.T @ (yy[:k] - X @ np.asarray(beta_hat_n, dtype=float))


def quadratic_form(
    y: ArrayLike | Sample,
    k: int,
    p: int | None = None,
    scaling: Scaling = "scaled",
) -> float:
    """``S_k' (C_k^{-1} + C~_k^{-1}) S_k`` for a single split.

    This is the same number as ``S_k' C_k^{-1} C_n C~_k^{-1} S_k``. Each inverse is
    applied through the triangular factor of the corresponding segment design
    so the conditioning is that of the design, not of its Gram matrix. Since
    ``S_n = 0`` the score also equals minus the residual sum over ``i > k``;
    the second term uses that form, which avoids cancellation for late splits.
    """
    yy, p = _unpack(y, p)
    n = yy.size
    if not p + 1 <= k <= n - p - 1:
        raise ValueError(f"split {k} outside {p + 1}..{n - p - 1}")
    full = fit_segment(yy, 1, n, p, scaling)
    X = design_matrix(n, p, scaling)
    w = X * full.residuals[:, None]
    # S_k = -sum_{i>k} x_i r_i; each block uses the sum over its own rows
    total = 0.0
    for block, s in ((X[:k], w[:k].sum(axis=0)), (X[k:], -w[k:].sum(axis=0))):
        r = np.linalg.qr(block, mode="r")
        check_rank(r)
        z = solve_triangular(r, s, trans="T")
        total += float(z @ z)
    return total
