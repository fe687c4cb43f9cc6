"""Command-line interface: simulate, fit, cv, bench, lrsc.

Every subcommand prints its fully resolved configuration (defaults and
derived values included) before any results, writes machine-readable output
at full precision, and rounds stdout numbers to 6 significant digits.
Exit codes: 0 success, 1 I/O or data error, 2 usage or config error,
3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import importlib.resources
import math
import os
import sys
import time

import numpy as np
import yaml

from . import bench as bench_mod
from .bench import ConfigError, cross_validate, load_config, lrsc_probe, run_experiment
from .datagen import (
    BETA_PATTERNS,
    CorruptionSpec,
    FeatureDist,
    flip_labels,
    gen_features,
    gen_linear,
    gen_logistic,
    load_dataset,
    make_beta,
    save_dataset,
    substream,
)
from .glm import get_family
from .optimize import DivergenceError, SolverOpts, default_lambda, fit_l1, fit_mle
from .shrink import ShrinkSpec, apply_shrink, default_tau

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_NO_CONVERGENCE = 3


class CliError(Exception):
    """Terminates a subcommand with a specific exit code and message."""

    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _fmt(value):
    """stdout formatting: 6 significant digits for floats."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _fmt_full(value):
    """Record-file formatting: full round-trip precision."""
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _print_config(pairs):
    print("resolved configuration:")
    for key, value in pairs:
        print(f"  {key} = {_fmt(value) if value is not None else 'none'}")


def _load(path):
    try:
        return load_dataset(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_IO, f"{path}: {exc}") from None


def _usage(message):
    return CliError(EXIT_USAGE, message)


def _positive_int(name, value, minimum=1):
    if value < minimum:
        raise _usage(f"{name} must be at least {minimum}, got {value}")
    return value


# --- flag grammars ---------------------------------------------------------

_SHRINK_MODE_BY_PREFIX = {
    "l4": "norm_shrink_l4",
    "l2": "norm_shrink_l2",
    "clip": "elementwise_clip",
}


def _parse_threshold(text, flag):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise _usage(f"{flag}: expected a number or 'auto', got {text!r}") from None
    if math.isnan(value) or value <= 0:
        raise _usage(f"{flag}: threshold must be positive, got {text}")
    return value


def _parse_shrink_flag(text):
    """`none` or `l4:TAU` / `l2:TAU` / `clip:TAU` with TAU a number or `auto`."""
    if text == "none":
        return "none", None
    head, sep, tail = text.partition(":")
    if not sep or head not in _SHRINK_MODE_BY_PREFIX:
        raise _usage(
            f"--shrink: expected none|l4:TAU|l2:TAU|clip:TAU, got {text!r}"
        )
    return _SHRINK_MODE_BY_PREFIX[head], _parse_threshold(tail, "--shrink")


def _parse_clip_response_flag(text):
    """`none` or `TAU[:nosign]` with TAU a number or `auto`."""
    if text == "none":
        return "none", None, True
    head, sep, tail = text.partition(":")
    preserve = True
    if sep:
        if tail != "nosign":
            raise _usage(f"--clip-response: expected TAU[:nosign], got {text!r}")
        preserve = False
    return "clip", _parse_threshold(head, "--clip-response"), preserve


def _parse_estimator_flag(text, allow_lambda=True):
    """`mle`, `weighted:P`, or `l1:LAMBDA` (LAMBDA a number or `auto`)."""
    if text == "mle":
        return "mle", None, None
    head, sep, tail = text.partition(":")
    if head == "weighted" and sep:
        try:
            p = float(tail)
        except ValueError:
            raise _usage(f"--estimator: weighted:P needs a number, got {text!r}") from None
        if not 0.0 <= p < 0.5:
            raise _usage(f"--estimator: flip probability must lie in [0, 0.5), got {p}")
        return "weighted", p, None
    if head == "l1":
        if allow_lambda:
            if not sep:
                raise _usage("--estimator: l1 needs a penalty, use l1:LAMBDA or l1:auto")
            return "l1", None, _parse_threshold(tail, "--estimator")
        if sep:
            raise _usage("--estimator: give the penalty via --lambda-grid, use plain l1")
        return "l1", None, None
    raise _usage(f"--estimator: expected mle|weighted:P|l1:LAMBDA, got {text!r}")


def _parse_grid(text, flag, n, d, scale):
    """Comma-separated thresholds; entries are numbers, `auto`, or `inf`."""
    values = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise _usage(f"{flag}: empty grid entry in {text!r}")
        if part in ("inf", "infinity"):
            values.append(math.inf)
        elif part == "auto":
            values.append(default_tau(n, scale, d=d))
        else:
            try:
                value = float(part)
            except ValueError:
                raise _usage(
                    f"{flag}: expected numbers, 'auto', or 'inf', got {part!r}"
                ) from None
            if math.isnan(value) or value <= 0:
                raise _usage(f"{flag}: grid entries must be positive, got {part}")
            values.append(value)
    return tuple(values)


def _parse_lambda_grid(text, n, d):
    """Comma-separated penalties; entries are positive numbers or `auto`."""
    values = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise _usage(f"--lambda-grid: empty grid entry in {text!r}")
        if part == "auto":
            values.append(default_lambda(n, d))
            continue
        try:
            value = float(part)
        except ValueError:
            raise _usage(
                f"--lambda-grid: expected numbers or 'auto', got {part!r}"
            ) from None
        if not math.isfinite(value) or value <= 0:
            raise _usage(f"--lambda-grid: entries must be positive and finite, got {part}")
        values.append(value)
    return tuple(values)


def _resolve_tau(setting, n, d, scale):
    if setting == "auto":
        try:
            return default_tau(n, scale, d=d)
        except ValueError as exc:
            raise _usage(str(exc)) from None
    return setting


def _tau_scales(feature_mode):
    # clipping uses the (n / log d) schedule, the norm caps use (n / log n)
    feature_scale = "log_d" if feature_mode == "elementwise_clip" else "log_n"
    return feature_scale, feature_scale if feature_mode == "elementwise_clip" else "log_n"


# --- simulate --------------------------------------------------------------

def cmd_simulate(args):
    n = _positive_int("--n", args.n)
    d = _positive_int("--d", args.d)
    if args.model == "linear":
        if args.flip_p is not None:
            raise _usage("--flip-p applies to the logistic model only")
        noise_label = args.noise_dist or "gaussian"
        noise_sd = 1.0 if args.noise_sd is None else args.noise_sd
        if noise_sd < 0:
            raise _usage(f"--noise-sd must be nonnegative, got {noise_sd}")
        try:
            noise = CorruptionSpec(
                kind="additive_noise",
                noise_dist=FeatureDist.parse(noise_label),
                target_sd=noise_sd,
            )
        except ValueError as exc:
            raise _usage(str(exc)) from None
        flip_p = None
    else:
        if args.noise_dist is not None or args.noise_sd is not None:
            raise _usage("--noise-dist/--noise-sd apply to the linear model only")
        noise = None
        flip_p = args.flip_p if args.flip_p is not None else 0.0
        if not 0.0 <= flip_p < 0.5:
            raise _usage(f"--flip-p must lie in [0, 0.5), got {flip_p}")
    try:
        feature_dist = FeatureDist.parse(args.feature_dist)
        beta_star = make_beta(d, args.beta)
    except ValueError as exc:
        raise _usage(str(exc)) from None

    _print_config([
        ("model", args.model),
        ("n", n),
        ("d", d),
        ("beta", args.beta),
        ("feature_dist", feature_dist.label()),
        ("noise_dist", noise.noise_dist.label() if noise else None),
        ("noise_sd", noise.target_sd if noise else None),
        ("flip_p", flip_p),
        ("seed", args.seed),
        ("out", args.out),
    ])

    rng = substream(args.seed, "simulate")
    X = gen_features(n, d, feature_dist, rng)
    if args.model == "linear":
        data = gen_linear(X, beta_star, noise, rng)
        summary = f"additive {noise.noise_dist.label()} noise, sd {_fmt(noise.target_sd)}"
    else:
        data = gen_logistic(X, beta_star, rng)
        if flip_p > 0:
            data = flip_labels(data, flip_p, rng)
            summary = (
                f"label flips at p={_fmt(flip_p)}"
                f" ({int(np.sum(data.flip_mask))} rows flipped)"
            )
        else:
            summary = "no corruption"
    try:
        save_dataset(args.out, data)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}") from None
    print(f"wrote {args.out}: n={data.n} d={data.d}, {summary}")
    return EXIT_OK


# --- fit -------------------------------------------------------------------

def _write_fit_record(path, record, beta):
    lines = [f"{key}={_fmt_full(value)}" for key, value in record]
    lines.append("beta=" + ",".join(f"{v:.17g}" for v in beta))
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from None


def cmd_fit(args):
    data = _load(args.data)
    family = get_family(args.family)
    feature_mode, tau1_setting = _parse_shrink_flag(args.shrink)
    response_mode, tau2_setting, preserve_sign = _parse_clip_response_flag(args.clip_response)
    estimator, weighted_p, lam_setting = _parse_estimator_flag(args.estimator)
    if estimator == "weighted" and args.family != "logistic":
        raise _usage("--estimator weighted:P requires --family logistic")
    if args.tol <= 0:
        raise _usage(f"--tol must be positive, got {args.tol}")
    _positive_int("--max-iters", args.max_iters)

    feature_scale, response_scale = _tau_scales(feature_mode)
    tau1 = _resolve_tau(tau1_setting, data.n, data.d, feature_scale) if tau1_setting else None
    tau2 = _resolve_tau(tau2_setting, data.n, data.d, response_scale) if tau2_setting else None
    lam = None
    if estimator == "l1":
        lam = (
            default_lambda(data.n, data.d) if lam_setting == "auto" else lam_setting
        )
    spec = ShrinkSpec(
        feature_mode=feature_mode, tau1=tau1,
        response_mode=response_mode, tau2=tau2,
        preserve_response_sign=preserve_sign,
    )

    _print_config([
        ("family", args.family),
        ("data", args.data),
        ("n", data.n),
        ("d", data.d),
        ("feature_mode", feature_mode),
        ("tau1", tau1),
        ("response_mode", response_mode),
        ("tau2", tau2),
        ("preserve_sign", preserve_sign),
        ("estimator", estimator),
        ("weighted_p", weighted_p),
        ("lambda", lam),
        ("tol", args.tol),
        ("max_iters", args.max_iters),
        ("out", args.out),
    ])

    try:
        shrunk = apply_shrink(data, spec)
    except ValueError as exc:
        raise CliError(EXIT_IO, f"{args.data}: {exc}") from None
    opts = SolverOpts(max_iters=args.max_iters, grad_tol=args.tol)
    diverged = False
    try:
        if estimator == "l1":
            result = fit_l1(family, shrunk, lam, opts)
        else:
            result = fit_mle(family, shrunk, opts, weighted_p=weighted_p)
        beta = result.beta_hat
        converged = result.converged
        iterations = result.iterations
        residual = result.final_residual
        objective = result.objective
    except DivergenceError as exc:
        diverged = True
        beta = exc.last_beta
        converged = False
        iterations = args.max_iters
        residual = math.inf
        objective = math.inf

    record = [
        ("family", args.family),
        ("n", data.n),
        ("d", data.d),
        ("feature_mode", feature_mode),
        ("tau1", tau1),
        ("response_mode", response_mode),
        ("tau2", tau2),
        ("preserve_sign", preserve_sign),
        ("estimator", estimator),
        ("weighted_p", weighted_p),
        ("lambda", lam),
        ("tol", args.tol),
        ("max_iters", args.max_iters),
        ("converged", converged),
        ("diverged", diverged),
        ("iterations", iterations),
        ("final_residual", residual),
        ("objective", objective),
        ("beta_l2", float(np.linalg.norm(beta))),
    ]
    _write_fit_record(args.out, record, beta)

    print(f"beta_l2 = {_fmt(float(np.linalg.norm(beta)))}")
    print(f"iterations = {iterations}")
    print(f"residual = {_fmt(float(residual))}")
    print(f"converged = {_fmt(converged)}")
    return EXIT_OK if converged else EXIT_NO_CONVERGENCE


# --- cv --------------------------------------------------------------------

def cmd_cv(args):
    data = _load(args.data)
    family = get_family(args.family)
    estimator, weighted_p, _ = _parse_estimator_flag(args.estimator, allow_lambda=False)
    if estimator == "weighted" and args.family != "logistic":
        raise _usage("--estimator weighted:P requires --family logistic")
    folds = _positive_int("--folds", args.folds, minimum=2)

    if args.shrink == "none":
        feature_mode = "none"
        if args.tau_grid is not None:
            raise _usage("--tau-grid needs --shrink l4|l2|clip")
        tau1_grid = (math.inf,)
    else:
        feature_mode = _SHRINK_MODE_BY_PREFIX.get(args.shrink)
        if feature_mode is None:
            raise _usage(f"--shrink: expected none|l4|l2|clip, got {args.shrink!r}")
        if args.tau_grid is None:
            raise _usage("--tau-grid is required when --shrink is not none")
    feature_scale, response_scale = _tau_scales(feature_mode)
    if feature_mode != "none":
        tau1_grid = _parse_grid(args.tau_grid, "--tau-grid", data.n, data.d, feature_scale)
    if args.tau2_grid is None:
        response_mode = "none"
        tau2_grid = (math.inf,)
    else:
        response_mode = "clip"
        tau2_grid = _parse_grid(args.tau2_grid, "--tau2-grid", data.n, data.d, response_scale)
    if estimator == "l1":
        if args.lambda_grid is None:
            raise _usage("--lambda-grid is required with --estimator l1")
        lambda_grid = _parse_lambda_grid(args.lambda_grid, data.n, data.d)
    else:
        if args.lambda_grid is not None:
            raise _usage("--lambda-grid needs --estimator l1")
        lambda_grid = (0.0,)

    _print_config([
        ("family", args.family),
        ("data", args.data),
        ("n", data.n),
        ("d", data.d),
        ("estimator", estimator),
        ("weighted_p", weighted_p),
        ("feature_mode", feature_mode),
        ("tau1_grid", ",".join(_fmt(v) for v in tau1_grid)),
        ("response_mode", response_mode),
        ("tau2_grid", ",".join(_fmt(v) for v in tau2_grid)),
        ("lambda_grid", ",".join(_fmt(v) for v in lambda_grid)),
        ("folds", folds),
        ("seed", args.seed),
        ("out", args.out),
    ])

    try:
        result = cross_validate(
            data, family, "weighted_mle" if estimator == "weighted" else estimator,
            tau1_grid, tau2_grid, lambda_grid,
            folds=folds, seed=substream(args.seed, "cv_folds"),
            feature_mode=feature_mode, response_mode=response_mode,
            flip_p=weighted_p,
        )
    except ValueError as exc:
        raise _usage(str(exc)) from None

    grid_lines = ["tau1,tau2,lambda,loss"]
    grid_lines += [
        f"{p.tau1:.17g},{p.tau2:.17g},{p.lam:.17g},{p.loss:.17g}"
        for p in result.points
    ]
    record = [
        f"selected_tau1={_fmt_full(result.tau1)}",
        f"selected_tau2={_fmt_full(result.tau2)}",
        f"selected_lambda={_fmt_full(result.lam)}",
        f"folds={folds}",
        f"seed={args.seed}",
        "",
    ] + grid_lines
    try:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(record) + "\n")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}") from None

    print(f"selected tau1 = {_fmt(result.tau1)}")
    print(f"selected tau2 = {_fmt(result.tau2)}")
    print(f"selected lambda = {_fmt(result.lam)}")
    print("\n".join(grid_lines))
    return EXIT_OK


# --- bench -----------------------------------------------------------------

def _resolve_config_path(name):
    if os.path.exists(name):
        return name
    bare = name if name.endswith(".yaml") else f"{name}.yaml"
    if os.sep not in name and "/" not in name:
        packaged = importlib.resources.files("shrinkglm") / "configs" / bare
        if packaged.is_file():
            return str(packaged)
    raise CliError(EXIT_IO, f"config not found: {name}")


def cmd_bench(args):
    path = _resolve_config_path(args.config)
    try:
        config = load_config(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from None
    except ConfigError as exc:
        raise CliError(EXIT_USAGE, f"invalid config: {exc}") from None
    if args.trials is not None:
        _positive_int("--trials", args.trials)
        try:
            config = dataclasses.replace(config, trials=args.trials)
        except ValueError as exc:
            raise CliError(EXIT_USAGE, f"invalid config: {exc}") from None
    workers = _positive_int("--workers", args.workers)

    print("resolved configuration:")
    print(yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=None), end="")
    print(f"  workers = {workers}")
    print(f"  out = {args.out}")

    start = time.monotonic()
    table = run_experiment(config, workers=workers)
    elapsed = time.monotonic() - start
    try:
        table.write_csv(args.out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}") from None

    cells = len(table.rows)
    failures = sum(row.failures for row in table.rows)
    total = config.trials * cells
    print(f"wrote {args.out}: {cells} cells, {total} trials, "
          f"{failures} failures, {elapsed:.2f}s")
    return EXIT_OK


# --- lrsc ------------------------------------------------------------------

def _resolve_beta_star(text, d):
    if text in BETA_PATTERNS:
        try:
            return make_beta(d, text)
        except ValueError as exc:
            raise _usage(str(exc)) from None
    try:
        beta = np.loadtxt(text, dtype=np.float64, ndmin=1)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read beta-star file {text}: {exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_IO, f"{text}: not a numeric vector file: {exc}") from None
    beta = np.atleast_1d(np.asarray(beta, dtype=np.float64)).ravel()
    if beta.shape[0] != d:
        raise CliError(
            EXIT_IO, f"{text}: beta-star has {beta.shape[0]} entries, data has d={d}"
        )
    return beta


def cmd_lrsc(args):
    data = _load(args.data)
    family = get_family(args.family)
    if args.dirs < 1:
        raise _usage(f"--dirs must be at least 1, got {args.dirs}")
    if args.radius <= 0:
        raise _usage(f"--radius must be positive, got {args.radius}")
    beta_star = _resolve_beta_star(args.beta_star, data.d)
    support = None
    if args.support is not None:
        try:
            support = [int(part) for part in args.support.split(",") if part.strip() != ""]
        except ValueError:
            raise _usage(f"--support: expected comma-separated integers, got {args.support!r}") from None
        if not support:
            raise _usage("--support: empty index list")

    _print_config([
        ("family", args.family),
        ("data", args.data),
        ("n", data.n),
        ("d", data.d),
        ("beta_star", args.beta_star),
        ("radius", args.radius),
        ("dirs", args.dirs),
        ("support", args.support),
        ("seed", args.seed),
        ("kappa_floor", args.kappa_floor),
    ])

    try:
        result = lrsc_probe(
            family, data, beta_star, args.radius, args.dirs,
            substream(args.seed, "lrsc"), support=support,
        )
    except ValueError as exc:
        raise _usage(str(exc)) from None

    direction = result.min_direction
    print(f"min_ratio = {_fmt(result.min_ratio)}")
    print(
        "min_direction norms: "
        f"l2 = {_fmt(float(np.linalg.norm(direction)))}, "
        f"l1 = {_fmt(float(np.sum(np.abs(direction))))}, "
        f"linf = {_fmt(float(np.max(np.abs(direction))))}, "
        f"nonzeros = {int(np.count_nonzero(direction))}"
    )
    if args.kappa_floor is not None:
        passed = result.min_ratio > args.kappa_floor
        print(f"kappa_floor {_fmt(args.kappa_floor)}: {'PASS' if passed else 'FAIL'}")
        return EXIT_OK if passed else EXIT_IO
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="shrinkglm",
        description="Robust GLM estimation on shrunk heavy-tailed data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a corrupted synthetic dataset")
    p.add_argument("--model", required=True, choices=("linear", "logistic"))
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--d", required=True, type=int)
    p.add_argument("--beta", required=True,
                   choices=tuple(b for b in BETA_PATTERNS if b != "custom"))
    p.add_argument("--feature-dist", default="gaussian", metavar="gaussian|t:NU")
    p.add_argument("--noise-dist", default=None, metavar="gaussian|t:NU")
    p.add_argument("--noise-sd", default=None, type=float)
    p.add_argument("--flip-p", default=None, type=float)
    p.add_argument("--seed", default=0, type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one estimator to a dataset file")
    p.add_argument("--family", required=True, choices=("linear", "logistic"))
    p.add_argument("--data", required=True)
    p.add_argument("--shrink", default="none", metavar="none|l4:TAU|l2:TAU|clip:TAU")
    p.add_argument("--clip-response", default="none", metavar="none|TAU[:nosign]")
    p.add_argument("--estimator", default="mle", metavar="mle|weighted:P|l1:LAMBDA")
    p.add_argument("--tol", default=1e-8, type=float)
    p.add_argument("--max-iters", default=10000, type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", help="cross-validate thresholds and penalty")
    p.add_argument("--family", required=True, choices=("linear", "logistic"))
    p.add_argument("--data", required=True)
    p.add_argument("--estimator", default="mle", metavar="mle|weighted:P|l1")
    p.add_argument("--shrink", default="l4", metavar="none|l4|l2|clip")
    p.add_argument("--tau-grid", default=None, metavar="T1,T2,...")
    p.add_argument("--tau2-grid", default=None, metavar="T1,T2,...")
    p.add_argument("--lambda-grid", default=None, metavar="L1,L2,...")
    p.add_argument("--folds", default=5, type=int)
    p.add_argument("--seed", default=0, type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("bench", help="run a configured Monte Carlo benchmark")
    p.add_argument("--config", required=True,
                   help="config file path or shipped config name")
    p.add_argument("--trials", default=None, type=int,
                   help="override the config's trial count")
    p.add_argument("--workers", default=1, type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("lrsc", help="probe restricted strong convexity empirically")
    p.add_argument("--family", required=True, choices=("linear", "logistic"))
    p.add_argument("--data", required=True)
    p.add_argument("--beta-star", required=True, metavar="PATH|PATTERN")
    p.add_argument("--radius", default=0.5, type=float)
    p.add_argument("--dirs", default=500, type=int)
    p.add_argument("--support", default=None, metavar="I1,I2,...")
    p.add_argument("--seed", default=0, type=int)
    p.add_argument("--kappa-floor", default=None, type=float)
    p.set_defaults(func=cmd_lrsc)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run():
    sys.exit(main())
