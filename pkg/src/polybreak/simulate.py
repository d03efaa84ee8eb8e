"""Data generation under no-change / one-change models and the size/power harness."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Literal

import numpy as np
from numpy.typing import NDArray

from polybreak.asymptotics import CriticalValueSpec, critical_value
from polybreak.regression import Sample, design_matrix
from polybreak.scan import DegenerateFit, Minimand, RangeMode, ScanRange, t_hat

SCHEMA_VERSION = 1

ErrorKind = Literal["iid_normal", "iid_student_t", "ar1", "garch11"]

_GARCH_BURN_IN = 500


@dataclass(frozen=True)
class ChangeModel:
    """Regression coefficients before and (optionally) after a single break.

    The break position is either an absolute index ``k_star`` or a fraction
    ``k_star_fraction`` of the sample length, resolved by :meth:`break_index`.
    """

    beta0: tuple[float, ...]
    beta_a: tuple[float, ...] | None = None
    k_star: int | None = None
    k_star_fraction: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta0", tuple(float(b) for b in self.beta0))
        if not self.beta0:
            raise ValueError("beta0 must have at least one coefficient")
        if self.beta_a is None:
            if self.k_star is not None or self.k_star_fraction is not None:
                raise ValueError("a break position needs post-break coefficients")
            return
        object.__setattr__(self, "beta_a", tuple(float(b) for b in self.beta_a))
        if len(self.beta_a) != len(self.beta0):
            raise ValueError("beta0 and beta_a must have the same length")
        if self.beta_a == self.beta0:
            raise ValueError("post-break coefficients must differ from beta0")
        if (self.k_star is None) == (self.k_star_fraction is None):
            raise ValueError("give exactly one of k_star and k_star_fraction")
        if self.k_star_fraction is not None and not 0.0 < self.k_star_fraction < 1.0:
            raise ValueError("k_star_fraction must lie in (0, 1)")

    @property
    def p(self) -> int:
        return len(self.beta0) - 1

    @property
    def has_change(self) -> bool:
        return self.beta_a is not None

    def break_index(self, n: int) -> int | None:
        if self.beta_a is None:
            return None
        if self.k_star is not None:
            k = self.k_star
        else:
            k = int(round(n * self.k_star_fraction))
        if not 1 <= k < n:
            raise ValueError(f"break index {k} outside 1..{n - 1}")
        return k


@dataclass(frozen=True)
class ErrorModel:
    """Error sequence generator.

    ``iid_normal`` and ``iid_student_t`` have variance ``sigma**2``. ``ar1`` uses
    innovations with standard deviation ``sigma``; ``garch11`` uses
    ``h_t = omega + a e_{t-1}^2 + b h_{t-1}``. With ``standardize=True`` every
    kind is rescaled to unit marginal variance.
    """

    kind: ErrorKind = "iid_normal"
    sigma: float = 1.0
    nu: float = 5.0
    phi: float = 0.0
    omega: float = 0.1
    a: float = 0.1
    b: float = 0.8
    standardize: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("iid_normal", "iid_student_t", "ar1", "garch11"):
            raise ValueError(f"unknown error kind {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.kind == "iid_student_t" and not self.nu > 2:
            raise ValueError("Student t errors need nu > 2 for a finite variance")
        if self.kind == "ar1" and not abs(self.phi) < 1:
            raise ValueError("ar1 errors need |phi| < 1")
        if self.kind == "garch11":
            if not (self.omega > 0 and self.a >= 0 and self.b >= 0):
                raise ValueError("garch11 needs omega > 0 and a, b >= 0")
            if not self.a + self.b < 1:
                raise ValueError("garch11 needs a + b < 1")

    @property
    def marginal_variance(self) -> float:
        if self.kind == "ar1":
            return self.sigma**2 / (1.0 - self.phi**2)
        if self.kind == "garch11":
            return self.omega / (1.0 - self.a - self.b)
        return self.sigma**2

    def draw(self, n: int, rng: np.random.Generator) -> NDArray[np.float64]:
        if self.kind == "iid_normal":
            e = self.sigma * rng.standard_normal(n)
        elif self.kind == "iid_student_t":
            e = self.sigma * rng.standard_t(self.nu, n) / math.sqrt(self.nu / (self.nu - 2.0))
        elif self.kind == "ar1":
            z = self.sigma * rng.standard_normal(n)
            e = np.empty(n)
            # stationary start
            e[0] = z[0] / math.sqrt(1.0 - self.phi**2)
            for i in range(1, n):
                e[i] = self.phi * e[i - 1] + z[i]
        else:
            z = rng.standard_normal(n + _GARCH_BURN_IN)
            e_all = np.empty_like(z)
            h = self.marginal_variance
            prev = 0.0
            for i in range(z.size):
                h = self.omega + self.a * prev * prev + self.b * h
                prev = math.sqrt(h) * z[i]
                e_all[i] = prev
            e = e_all[_GARCH_BURN_IN:]
        if self.standardize:
            e = e / math.sqrt(self.marginal_variance)
        return e


def _as_rng(seed: int | np.random.Generator | np.random.SeedSequence) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def mean_function(n: int, model: ChangeModel) -> NDArray[np.float64]:
    """Noise-free regression function ``x_i' beta(i)`` for ``i = 1..n``."""
    X = design_matrix(n, model.p)
    mu = X @ np.asarray(model.beta0)
    k = model.break_index(n)
    if k is not None:
        mu[k:] = X[k:] @ np.asarray(model.beta_a)
    return mu


def generate(
    n: int,
    model: ChangeModel,
    errors: ErrorModel | None = None,
    seed: int | np.random.Generator | np.random.SeedSequence = 0,
) -> Sample:
    """One series ``y_i = x_i' beta(i) + e_i`` with ``x_i = (1, i/n, ..., (i/n)^p)``."""
    errors = errors or ErrorModel()
    rng = _as_rng(seed)
    y = mean_function(n, model) + errors.draw(n, rng)
    return Sample(y, model.p)


def scatter_dump(sample: Sample, model: ChangeModel) -> dict[str, Any]:
    """Plot-ready ``(i/n, y_i, regime)`` rows; regime switches from 0 to 1 after the break."""
    n = sample.n
    k = model.break_index(n)
    regime = np.zeros(n, dtype=int)
    if k is not None:
        regime[k:] = 1
    u = np.arange(1, n + 1) / n
    return {
        "schema_version": SCHEMA_VERSION,
        "n": n,
        "p": sample.p,
        "k_star": k,
        "columns": ["u", "y", "regime"],
        "rows": [[float(a), float(b), int(c)] for a, b, c in zip(u, sample.y, regime)],
    }


@dataclass(frozen=True)
class SimConfig:
    reps: int
    n_list: tuple[int, ...]
    change: ChangeModel
    gamma: float
    errors: ErrorModel = field(default_factory=ErrorModel)
    alphas: tuple[float, ...] = (0.10, 0.05)
    range_mode: RangeMode = "paper"
    delta: float | None = None
    seed: int = 0
    minimand: Minimand = "exact"
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if self.reps < 1:
            raise ValueError("reps must be positive")
        if not self.n_list:
            raise ValueError("n_list is empty")
        if not self.alphas or not all(0.0 < a < 1.0 for a in self.alphas):
            raise ValueError("every alpha must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        for n in self.n_list:
            ScanRange.for_sample(n, self.p, self.range_mode, self.delta)
            CriticalValueSpec(n, self.p, self.gamma, self.alphas[0])
            self.change.break_index(n)

    @property
    def p(self) -> int:
        return self.change.p

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("workers")  # execution detail; must not affect the report
        return d


@dataclass(frozen=True)
class Cell:
    n: int
    alpha: float
    critical_value: float
    reps: int
    valid: int
    degenerate: int
    rejections: int
    rate_pct: float
    se_pct: float
    k_star: int | None
    k_hat_mean: float | None
    k_hat_median: float | None


@dataclass(frozen=True)
class SimReport:
    kind: Literal["size", "power"]
    cells: tuple[Cell, ...]
    config: dict[str, Any]
    seed: int

    def cell(self, n: int, alpha: float) -> Cell:
        for c in self.cells:
            if c.n == n and math.isclose(c.alpha, alpha):
                return c
        raise KeyError((n, alpha))

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "seed": self.seed,
            "config": self.config,
            "cells": [asdict(c) for c in self.cells],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        cols = ["n", "alpha", "critical_value", "rate_pct", "se_pct", "rejections", "valid",
                "degenerate", "k_star", "k_hat_mean", "k_hat_median"]
        lines = ["\t".join(cols)]
        for c in self.cells:
            d = asdict(c)
            lines.append("\t".join("" if d[k] is None else repr(d[k]) for k in cols))
        return "\n".join(lines) + "\n"


def _replicate(config: SimConfig, n: int, rep: int) -> tuple[float, int] | None:
    ss = np.random.SeedSequence([config.seed, n, rep])
    sample = generate(n, config.change, config.errors, ss)
    rng = ScanRange.for_sample(n, config.p, config.range_mode, config.delta)
    try:
        res = t_hat(sample, rng, minimand=config.minimand)
    except DegenerateFit:
        return None
    return res.statistic, res.k_hat


def _run_n(config: SimConfig, n: int) -> list[tuple[float, int] | None]:
    reps = range(config.reps)
    if config.workers == 1:
        return [_replicate(config, n, r) for r in reps]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        # map preserves replication order, so the fold below is order independent
        return list(pool.map(lambda r: _replicate(config, n, r), reps))


def _run(config: SimConfig, kind: Literal["size", "power"]) -> SimReport:
    cells = []
    for n in config.n_list:
        outcomes = _run_n(config, n)
        ok = [o for o in outcomes if o is not None]
        stats = np.array([o[0] for o in ok])
        khat = np.array([o[1] for o in ok], dtype=float)
        k_star = config.change.break_index(n)
        for alpha in config.alphas:
            c = critical_value(CriticalValueSpec(n, config.p, config.gamma, alpha))
            rej = int(np.sum(stats > c))
            valid = len(ok)
            rate = rej / valid if valid else float("nan")
            cells.append(
                Cell(
                    n=n,
                    alpha=alpha,
                    critical_value=c,
                    reps=config.reps,
                    valid=valid,
                    degenerate=config.reps - valid,
                    rejections=rej,
                    rate_pct=100.0 * rate,
                    se_pct=100.0 * math.sqrt(rate * (1.0 - rate) / valid) if valid else float("nan"),
                    k_star=k_star,
                    k_hat_mean=float(khat.mean()) if kind == "power" and valid else None,
                    k_hat_median=float(np.median(khat)) if kind == "power" and valid else None,
                )
            )
    return SimReport(kind=kind, cells=tuple(cells), config=config.to_dict(), seed=config.seed)


def run_size(config: SimConfig) -> SimReport:
    """Empirical rejection rates (percent) when there is no change."""
    if config.change.has_change:
        raise ValueError("size runs need a change model without post-break coefficients")
    return _run(config, "size")


def run_power(config: SimConfig) -> SimReport:
    """Empirical rejection rates (percent) and break-date summaries under a change."""
    if not config.change.has_change:
        raise ValueError("power runs need post-break coefficients and a break position")
    return _run(config, "power")
