"""Split-point scans and the maximally selected likelihood-ratio statistics.

Every statistic here is built from three per-split quantities computed by
:func:`split_profile`:

* ``rss1[k]``, ``rss2[k]`` -- residual sums of the two segment fits,
* ``qform[k]`` -- ``S_k' (C_k^{-1} + C~_k^{-1}) S_k``, computed from the score
  vector and the triangular factors of the segment designs.

The log-likelihood-ratio statistic uses the residual sums; the ``t1``/``t2``/
``t3``/known-variance statistics use the quadratic form. Algebraically
``rss_full - rss1 - rss2 == qform``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from polybreak.regression import (
    Sample,
    Scaling,
    check_rank,
    design_matrix,
    fit_segment,
)

RangeMode = Literal["paper", "bare", "trim"]
Minimand = Literal["exact", "df"]
Variant = Literal["t_hat", "t_known_sigma", "t1", "t2", "t3", "t_delta"]

#: residual sums at or below this fraction of sum(y**2) count as exact fits
DEGENERATE_RTOL = 1e-24

# caps the padded (splits x n) workspace of one batched factorization
_CHUNK_ELEMENTS = 400_000


class DegenerateFit(ValueError):
    """A residual sum is zero, so the log-ratio statistic is undefined."""


@dataclass(frozen=True)
class ScanRange:
    """Inclusive range ``lo..hi`` of split indices to scan."""

    lo: int
    hi: int
    mode: RangeMode = "paper"
    delta: float | None = None

    @classmethod
    def for_sample(
        cls, n: int, p: int, mode: RangeMode = "paper", delta: float | None = None
    ) -> "ScanRange":
        if mode == "paper":
            rng = cls(p + 2, n - p - 2, mode)
        elif mode == "bare":
            rng = cls(p + 1, n - p - 1, mode)
        elif mode == "trim":
            if delta is None or not 0.0 < delta < 0.5:
                raise ValueError(f"trimming fraction must lie in (0, 1/2), got {delta}")
            cut = math.floor(n * delta)
            if cut < p + 2:
                raise ValueError(
                    f"floor(n*delta) = {cut} leaves segments too short for p={p} (need >= {p + 2})"
                )
            rng = cls(cut, n - cut, mode, float(delta))
        else:
            raise ValueError(f"unknown range mode {mode!r}")
        rng.validate(n, p)
        return rng

    def validate(self, n: int, p: int) -> None:
        if self.lo > self.hi:
            raise ValueError(f"empty scan range {self.lo}..{self.hi}")
        if self.lo < p + 1 or self.hi > n - p - 1:
            raise ValueError(
                f"scan range {self.lo}..{self.hi} exceeds admissible splits {p + 1}..{n - p - 1}"
            )

    @property
    def ks(self) -> NDArray[np.int64]:
        return np.arange(self.lo, self.hi + 1)


@dataclass(frozen=True)
class SplitProfile:
    ks: NDArray[np.int64]
    rss1: NDArray[np.float64]
    rss2: NDArray[np.float64]
    qform: NDArray[np.float64]
    rss_full: float
    n: int


@dataclass(frozen=True)
class ScanResult:
    """Outcome of one scan.

    ``criterion`` is the per-split quantity that is extremised: the minimand
    ``log(rss1 + rss2)`` for ``t_hat`` and the normalised quadratic form for
    the other variants.
    """

    variant: Variant
    statistic: float
    k_hat: int
    ks: NDArray[np.int64]
    rss1: NDArray[np.float64]
    rss2: NDArray[np.float64]
    criterion: NDArray[np.float64]

    def records(self) -> list[dict[str, float]]:
        return [
            {"k": int(k), "rss1": float(a), "rss2": float(b), "criterion": float(c)}
            for k, a, b, c in zip(self.ks, self.rss1, self.rss2, self.criterion)
        ]


def _batched_fits(
    X: NDArray[np.float64], y: NDArray[np.float64], masks: NDArray[np.bool_]
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Fit ``y`` on the rows selected by each mask; rows outside are zeroed.

    Returns residual sums, triangular factors and coefficient vectors.
    """
    A = X[None, :, :] * masks[:, :, None]
    Y = y[None, :] * masks
    q, r = np.linalg.qr(A)
    check_rank(r)
    qty = np.einsum("kni,kn->ki", q, Y)
    beta = np.linalg.solve(r, qty[..., None])[..., 0]
    resid = Y - np.einsum("kni,ki->kn", A, beta)
    return np.einsum("kn,kn->k", resid, resid), r, beta


def split_profile(
    sample: Sample, scan_range: ScanRange, scaling: Scaling = "scaled"
) -> SplitProfile:
    """Segment residual sums and quadratic forms for every split in ``scan_range``.

    Each split is refitted from scratch by Householder QR; splits are processed
    in batches so the padded workspace stays bounded.
    """
    y, p, n = sample.y, sample.p, sample.n
    scan_range.validate(n, p)
    X = design_matrix(n, p, scaling)
    full = fit_segment(y, 1, n, p, scaling)
    # S_k for all k at once, as a head sum and (equivalently, since S_n = 0) minus a tail sum
    w = X * full.residuals[:, None]
    scores = np.cumsum(w, axis=0)
    tails = np.zeros_like(w)
    tails[:-1] = -np.cumsum(w[::-1], axis=0)[::-1][1:]

    ks = scan_range.ks
    rss1 = np.empty(ks.size)
    rss2 = np.empty(ks.size)
    qform = np.empty(ks.size)
    step = max(1, _CHUNK_ELEMENTS // (n * (p + 1)))
    idx = np.arange(1, n + 1)
    for start in range(0, ks.size, step):
        kk = ks[start : start + step]
        head = idx[None, :] <= kk[:, None]
        a, r1, _ = _batched_fits(X, y, head)
        b, r2, _ = _batched_fits(X, y, ~head)
        z1 = np.linalg.solve(np.swapaxes(r1, -1, -2), scores[kk - 1][..., None])[..., 0]
        z2 = np.linalg.solve(np.swapaxes(r2, -1, -2), tails[kk - 1][..., None])[..., 0]
        sl = slice(start, start + kk.size)
        rss1[sl], rss2[sl] = a, b
        qform[sl] = np.einsum("ki,ki->k", z1, z1) + np.einsum("ki,ki->k", z2, z2)
    return SplitProfile(ks=ks, rss1=rss1, rss2=rss2, qform=qform, rss_full=full.rss, n=n)


def _degenerate_floor(sample: Sample) -> float:
    return DEGENERATE_RTOL * float(sample.y @ sample.y)


def _check_full(sample: Sample, prof: SplitProfile) -> None:
    if prof.rss_full <= _degenerate_floor(sample):
        raise DegenerateFit("series lies in the polynomial span; the statistic is undefined")


def _resolve_range(sample: Sample, scan_range: ScanRange | None) -> ScanRange:
    if scan_range is None:
        return ScanRange.for_sample(sample.n, sample.p)
    return scan_range


def t_hat(
    sample: Sample,
    scan_range: ScanRange | None = None,
    scaling: Scaling = "scaled",
    minimand: Minimand = "exact",
) -> ScanResult:
    """Maximally selected log-likelihood ratio with estimated variance.

    ``statistic = -n * (min_k log(rss1 + rss2) - log(rss_full))`` and ``k_hat``
    is the smallest minimiser.

    ``minimand="df"`` instead weights each residual sum by ``m / (m - 1)``
    where ``m`` is segment length minus ``p``, i.e. it evaluates
    ``(k-p) s1^2 + (n-k-p) s2^2`` and ``(n-p) s^2`` with degrees-of-freedom
    variances ``s^2``. This is not the likelihood ratio; it is kept only to
    reproduce reference values computed that way, and needs segments
    of at least ``p + 2`` points.
    """
    rng = _resolve_range(sample, scan_range)
    prof = split_profile(sample, rng, scaling)
    _check_full(sample, prof)
    n, p, ks = prof.n, sample.p, prof.ks
    if minimand == "exact":
        split = prof.rss1 + prof.rss2
        full = prof.rss_full
    elif minimand == "df":
        if rng.lo < p + 2 or rng.hi > n - p - 2:
            raise ValueError("the df-weighted minimand needs splits in p+2..n-p-2")
        split = (ks - p) * prof.rss1 / (ks - p - 1) + (n - ks - p) * prof.rss2 / (n - ks - p - 1)
        full = (n - p) * prof.rss_full / (n - p - 1)
    else:
        raise ValueError(f"unknown minimand {minimand!r}")
    if np.any(split <= _degenerate_floor(sample)):
        raise DegenerateFit("a split fit reproduces the data exactly")
    crit = np.log(split)
    j = int(np.argmin(crit))
    stat = -n * (crit[j] - math.log(full))
    return ScanResult("t_hat", float(stat), int(ks[j]), ks, prof.rss1, prof.rss2, crit)


def t_known_sigma(
    sample: Sample,
    sigma2: float,
    scan_range: ScanRange | None = None,
    scaling: Scaling = "scaled",
) -> ScanResult:
    """Maximised quadratic form divided by a known error variance."""
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    rng = _resolve_range(sample, scan_range)
    prof = split_profile(sample, rng, scaling)
    crit = prof.qform / sigma2
    j = int(np.argmax(crit))
    return ScanResult(
        "t_known_sigma", float(crit[j]), int(prof.ks[j]), prof.ks, prof.rss1, prof.rss2, crit
    )


def t_variants(
    sample: Sample, scan_range: ScanRange | None = None, scaling: Scaling = "scaled"
) -> tuple[ScanResult, ScanResult, ScanResult]:
    """The three plug-in variance versions ``(t1, t2, t3)`` of the quadratic-form statistic.

    All variance estimates divide residual sums by ``n``:

    * ``t1``: max quadratic form over the full-sample variance,
    * ``t2``: max over ``k`` of quadratic form over the split variance at ``k``,
    * ``t3``: max quadratic form over the smallest split variance.
    """
    rng = _resolve_range(sample, scan_range)
    prof = split_profile(sample, rng, scaling)
    _check_full(sample, prof)
    n = prof.n
    split_var = (prof.rss1 + prof.rss2) / n
    if np.any(split_var * n <= _degenerate_floor(sample)):
        raise DegenerateFit("a split fit reproduces the data exactly")

    c1 = prof.qform / (prof.rss_full / n)
    j1 = int(np.argmax(c1))
    r1 = ScanResult("t1", float(c1[j1]), int(prof.ks[j1]), prof.ks, prof.rss1, prof.rss2, c1)

    c2 = prof.qform / split_var
    j2 = int(np.argmax(c2))
    r2 = ScanResult("t2", float(c2[j2]), int(prof.ks[j2]), prof.ks, prof.rss1, prof.rss2, c2)

    j3 = int(np.argmax(prof.qform))
    c3 = prof.qform / split_var.min()
    r3 = ScanResult("t3", float(c3[j3]), int(prof.ks[j3]), prof.ks, prof.rss1, prof.rss2, c3)
    return r1, r2, r3


def t_trimmed(sample: Sample, delta: float, scaling: Scaling = "scaled") -> ScanResult:
    """Quadratic-form statistic over ``floor(n*delta) .. n - floor(n*delta)``.

    The variance is the full-sample estimate with divisor ``n``.
    """
    rng = ScanRange.for_sample(sample.n, sample.p, "trim", delta)
    prof = split_profile(sample, rng, scaling)
    _check_full(sample, prof)
    crit = prof.qform / (prof.rss_full / prof.n)
    j = int(np.argmax(crit))
    return ScanResult(
        "t_delta", float(crit[j]), int(prof.ks[j]), prof.ks, prof.rss1, prof.rss2, crit
    )
