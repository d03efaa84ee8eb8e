"""Command-line interface.

Every command writes one JSON document (``schema_version`` first-level key).
Exit codes: 0 success (whatever the test decision), 2 input error,
3 degenerate fit, 4 invalid configuration.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np

from polybreak import asymptotics, limitlab, simulate
from polybreak.regression import RankDeficientError, Sample
from polybreak.scan import DegenerateFit, ScanRange, t_hat, t_known_sigma, t_trimmed

SCHEMA_VERSION = 1

EXIT_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_CONFIG = 4


class InputError(Exception):
    pass


class ConfigError(Exception):
    pass


def read_series(path: str | Path) -> np.ndarray:
    """Read a single numeric column; an optional ``y`` header and blank lines are skipped."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    values = []
    first = True
    for lineno, row in enumerate(rows, start=1):
        cells = [c.strip() for c in row]
        if not any(cells):
            continue
        if len(cells) != 1:
            raise InputError(f"line {lineno}: expected one column, got {len(cells)}")
        cell = cells[0]
        if first:
            first = False
            if cell.lower() == "y":
                continue
        try:
            v = float(cell)
        except ValueError:
            raise InputError(f"line {lineno}: not a number: {cell!r}") from None
        if not math.isfinite(v):
            raise InputError(f"line {lineno}: non-finite value {cell!r}")
        values.append(v)
    return np.array(values)


def parse_range(text: str) -> tuple[str, float | None]:
    if text in ("paper", "bare"):
        return text, None
    if text.startswith("trim:"):
        try:
            delta = float(text[5:])
        except ValueError:
            raise ConfigError(f"bad trimming fraction in {text!r}") from None
        if not 0.0 < delta < 0.5:
            raise ConfigError(f"trimming fraction must lie in (0, 1/2), got {delta}")
        return "trim", delta
    raise ConfigError(f"range must be paper, bare or trim:<delta>, got {text!r}")


def resolve_gamma(text: str, p: int) -> tuple[float, bool]:
    """``auto`` maps to the default policy; explicit values count as user-calibrated."""
    if text == "auto":
        return asymptotics.default_gamma(p)
    try:
        return float(text), True
    except ValueError:
        raise ConfigError(f"gamma must be a number or 'auto', got {text!r}") from None


def _emit(doc: dict[str, Any], output: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")


def cmd_detect(args: argparse.Namespace) -> dict[str, Any]:
    _check_alpha(args.alpha)
    if args.order < 0:
        raise ConfigError("order must be non-negative")
    mode, delta = parse_range(args.range)
    gamma, calibrated = resolve_gamma(args.gamma, args.order)
    y = read_series(args.input)
    try:
        sample = Sample(y, args.order)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    n, p = sample.n, sample.p
    try:
        asymptotics.CriticalValueSpec(n, p, gamma, args.alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    if mode == "trim":
        if args.sigma2 is not None:
            raise ConfigError("--sigma2 cannot be combined with a trimmed range")
        try:
            res = t_trimmed(sample, delta)
        except ValueError as exc:
            if isinstance(exc, DegenerateFit):
                raise
            raise ConfigError(str(exc)) from exc
        draws = limitlab.trimmed_limit_draws(
            p, delta, args.reps, limitlab.PathConfig(args.resolution, args.seed)
        )
        crit = float(np.quantile(draws, 1.0 - args.alpha))
        pval = float(np.mean(draws >= res.statistic))
        reference = {"kind": "simulated_trimmed_limit", "reps": args.reps, "seed": args.seed,
                     "resolution": args.resolution}
    else:
        try:
            rng = ScanRange.for_sample(n, p, mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if args.sigma2 is not None:
            if not args.sigma2 > 0:
                raise ConfigError("sigma2 must be positive")
            res = t_known_sigma(sample, args.sigma2, rng)
        else:
            res = t_hat(sample, rng)
        crit = asymptotics.critical_value(asymptotics.CriticalValueSpec(n, p, gamma, args.alpha))
        pval = asymptotics.p_value(res.statistic, n, p, gamma)
        reference = {"kind": "extreme_value", "correction_g": asymptotics.correction_g(n, p, gamma)}

    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "command": "detect",
        "statistic": res.statistic,
        "variant": res.variant,
        "k_hat": res.k_hat,
        "critical_value": crit,
        "p_value": pval,
        "alpha": args.alpha,
        "decision": "reject" if res.statistic > crit else "accept",
        "n": n,
        "p": p,
        "gamma": gamma,
        "gamma_calibrated": calibrated,
        "range": {"mode": mode, "lo": int(res.ks[0]), "hi": int(res.ks[-1]), "delta": delta},
        "reference": reference,
    }
    if args.profile:
        doc["profile"] = res.records()
    return doc


def cmd_critval(args: argparse.Namespace) -> dict[str, Any]:
    gamma, calibrated = resolve_gamma(args.gamma, args.order)
    try:
        spec = asymptotics.CriticalValueSpec(args.n, args.order, gamma, args.alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "critval",
        "n": args.n,
        "p": args.order,
        "gamma": gamma,
        "gamma_calibrated": calibrated,
        "alpha": args.alpha,
        "critical_value": asymptotics.critical_value(spec),
        "correction_g": asymptotics.correction_g(args.n, args.order, gamma),
    }


def cmd_pvalue(args: argparse.Namespace) -> dict[str, Any]:
    gamma, calibrated = resolve_gamma(args.gamma, args.order)
    if args.order < 0:
        raise ConfigError("order must be non-negative")
    try:
        pv = asymptotics.p_value(args.statistic, args.n, args.order, gamma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "pvalue",
        "n": args.n,
        "p": args.order,
        "gamma": gamma,
        "gamma_calibrated": calibrated,
        "statistic": args.statistic,
        "p_value": pv,
    }


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def load_sim_config(path: str | Path, workers: int | None = None) -> tuple[str, simulate.SimConfig]:
    """Parse a flat ``key = value`` file into a simulation kind and :class:`SimConfig`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        parser.read_string("[sim]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    raw = dict(parser["sim"])
    known = {
        "kind", "reps", "n_list", "beta0", "beta_a", "k_star", "k_star_fraction", "gamma",
        "alphas", "range", "seed", "errors", "sigma", "nu", "phi", "omega", "a", "b",
        "standardize", "minimand", "workers",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        kind = raw.get("kind", "size")
        if kind not in ("size", "power"):
            raise ConfigError(f"kind must be size or power, got {kind!r}")
        beta0 = _floats(raw["beta0"])
        beta_a = _floats(raw["beta_a"]) if "beta_a" in raw else None
        change = simulate.ChangeModel(
            beta0,
            beta_a,
            k_star=int(raw["k_star"]) if "k_star" in raw else None,
            k_star_fraction=float(raw["k_star_fraction"]) if "k_star_fraction" in raw else None,
        )
        err_keys = {"sigma": float, "nu": float, "phi": float, "omega": float, "a": float, "b": float}
        err_kwargs: dict[str, Any] = {k: f(raw[k]) for k, f in err_keys.items() if k in raw}
        if "standardize" in raw:
            err_kwargs["standardize"] = parser.getboolean("sim", "standardize")
        errors = simulate.ErrorModel(raw.get("errors", "iid_normal"), **err_kwargs)
        gamma, _ = resolve_gamma(raw.get("gamma", "auto"), change.p)
        mode, delta = parse_range(raw.get("range", "paper"))
        config = simulate.SimConfig(
            reps=int(raw["reps"]),
            n_list=tuple(int(v) for v in _floats(raw["n_list"])),
            change=change,
            gamma=gamma,
            errors=errors,
            alphas=_floats(raw.get("alphas", "0.10,0.05")),
            range_mode=mode,
            delta=delta,
            seed=int(raw.get("seed", "0")),
            minimand=raw.get("minimand", "exact"),
            workers=workers if workers is not None else int(raw.get("workers", "1")),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if config.minimand not in ("exact", "df"):
        raise ConfigError(f"minimand must be exact or df, got {config.minimand!r}")
    return kind, config


def cmd_simulate(args: argparse.Namespace) -> dict[str, Any]:
    kind, config = load_sim_config(args.config, args.workers)
    try:
        report = simulate.run_size(config) if kind == "size" else simulate.run_power(config)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.tsv:
        Path(args.tsv).write_text(report.to_tsv())
    doc = report.to_dict()
    doc["command"] = "simulate"
    return doc


def cmd_limit_table(args: argparse.Namespace) -> dict[str, Any]:
    deltas = _floats(args.delta)
    if not deltas or not all(0.0 < d < 0.5 for d in deltas):
        raise ConfigError(f"every delta must lie in (0, 1/2), got {args.delta}")
    if not 0 <= args.order <= limitlab.P_MAX:
        raise ConfigError(f"order must lie in 0..{limitlab.P_MAX}")
    if args.reps < 1:
        raise ConfigError("reps must be positive")
    tables = [
        limitlab.simulate_trimmed_limit(
            args.order, d, args.reps, limitlab.PathConfig(args.resolution, args.seed)
        )
        for d in deltas
    ]
    if args.tsv:
        lines = ["p\tdelta\tquantile\tvalue\tstd_error"]
        for t in tables:
            for q, v, s in zip(t.quantiles, t.values, t.std_errors):
                lines.append(f"{t.p}\t{t.delta!r}\t{q!r}\t{v!r}\t{s!r}")
        Path(args.tsv).write_text("\n".join(lines) + "\n")
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "limit-table",
        "tables": [t.to_dict() for t in tables],
    }


def cmd_scatter(args: argparse.Namespace) -> dict[str, Any]:
    try:
        beta_a = _floats(args.beta_a) if args.beta_a else None
        model = simulate.ChangeModel(
            _floats(args.beta0),
            beta_a,
            k_star=args.k_star if beta_a is not None else None,
        )
        sample = simulate.generate(args.n, model, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    doc = simulate.scatter_dump(sample, model)
    doc["command"] = "scatter"
    doc["seed"] = args.seed
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polybreak",
        description="Tests for a change in polynomial regression at an unknown time.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--output", help="write the JSON report here instead of stdout")

    d = sub.add_parser("detect", help="run the test on a series read from CSV")
    d.add_argument("--input", required=True)
    d.add_argument("--order", "-p", type=int, default=1)
    d.add_argument("--alpha", type=float, default=0.05)
    d.add_argument("--gamma", default="auto")
    d.add_argument("--sigma2", type=float, default=None, help="known error variance")
    d.add_argument("--range", default="paper", help="paper | bare | trim:<delta>")
    d.add_argument("--profile", action="store_true", help="include the per-split criterion")
    d.add_argument("--reps", type=int, default=5000, help="limit draws for trimmed ranges")
    d.add_argument("--resolution", type=int, default=1000)
    d.add_argument("--seed", type=int, default=0)
    common(d)
    d.set_defaults(func=cmd_detect)

    c = sub.add_parser("critval", help="asymptotic critical value")
    c.add_argument("-n", type=int, required=True)
    c.add_argument("--order", "-p", type=int, default=1)
    c.add_argument("--gamma", default="auto")
    c.add_argument("--alpha", type=float, default=0.05)
    common(c)
    c.set_defaults(func=cmd_critval)

    pv = sub.add_parser("pvalue", help="asymptotic p-value of a statistic")
    pv.add_argument("-n", type=int, required=True)
    pv.add_argument("--order", "-p", type=int, default=1)
    pv.add_argument("--gamma", default="auto")
    pv.add_argument("--statistic", type=float, required=True)
    common(pv)
    pv.set_defaults(func=cmd_pvalue)

    s = sub.add_parser("simulate", help="Monte Carlo size or power study")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--tsv", help="also write the cell table as TSV")
    common(s)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("limit-table", help="quantiles of the trimmed-statistic limit")
    t.add_argument("--order", "-p", type=int, default=1)
    t.add_argument("--delta", required=True, help="comma-separated trimming fractions")
    t.add_argument("--reps", type=int, default=5000)
    t.add_argument("--resolution", type=int, default=1000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--tsv")
    common(t)
    t.set_defaults(func=cmd_limit_table)

    sc = sub.add_parser("scatter", help="simulate a series and dump (u, y, regime) rows")
    sc.add_argument("-n", type=int, default=200)
    sc.add_argument("--beta0", default="1,1")
    sc.add_argument("--beta-a", default=None)
    sc.add_argument("--k-star", type=int, default=None)
    sc.add_argument("--seed", type=int, default=0)
    common(sc)
    sc.set_defaults(func=cmd_scatter)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DegenerateFit, RankDeficientError) as exc:
        print(f"degenerate fit: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(doc, args.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
