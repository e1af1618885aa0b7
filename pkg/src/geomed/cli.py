"""Command-line surface: estimate medians, run experiments, emit results.

Commands
--------
median     streaming averaged estimate over resampling passes of a dataset
weiszfeld  offline solver on a dataset
simulate   one checkpointed estimator stream from a configured source
rates      replicated moment curves + rate fits (+ envelope checks)
diagnose   exact decomposition diagnostics on a dataset stream
compare    averaged-estimator distances to the offline solution

Exit codes: 0 success, 2 validation/config error, 3 I/O or parse error,
4 assertion failure (``rates --assert``).  Errors are one line on stderr.
The environment variable GEOMED_SEED provides the default master seed.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import c1_hat, diagnostics_report, hessian_empirical, phi_empirical
from .estimators import StepSchedule, objective_empirical, run_stream, weiszfeld
from .experiments import (
    ExperimentConfig,
    as_envelope,
    averaged_as_check,
    compare_to_oracle,
    fit_rate,
    log_checkpoints,
    run_replications,
    simulate_distances,
)
from .reporting import curves_to_csv, results_document, to_json
from .sources import (
    Contaminated,
    DatasetError,
    EllipticalStudent,
    Empirical,
    FunctionalBridge,
    SphericalGaussian,
    load_dataset,
)

_CONFIG_KEYS = {
    "kind",
    "dimension",
    "center",
    "sigma",
    "sigma_core",
    "sigma_outlier",
    "outlier_fraction",
    "scale_diag",
    "dof",
    "grid_size",
    "dataset",
    "dataset_format",
    "with_replacement",
    "c_gamma",
    "alpha",
    "n_max",
    "replicates",
    "p_list",
    "master_seed",
    "checkpoints_per_decade",
    "fit_lo",
    "fit_hi",
    "init_radius",
    "beta",
    "delta",
    "early_lo",
    "early_hi",
    "late_lo",
    "late_hi",
    "envelope_min_fraction",
    "rm_slope_tol",
    "avg_slope_tol",
    "min_r_squared",
}


class ConfigError(ValueError):
    """Bad experiment config file."""


def _parse_config_file(path: str) -> dict:
    """Flat ``key = value`` format; '#' starts a comment; unknown keys rejected."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read config {path}: {exc}") from exc
    cfg: dict[str, str] = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {i}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}: line {i}: unknown key {key!r}")
        if key in cfg:
            raise ConfigError(f"{path}: line {i}: duplicate key {key!r}")
        cfg[key] = value
    return cfg


def _cfg_float(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"config key {key!r} is not a number: {cfg[key]!r}") from None


def _cfg_int(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        return int(cfg[key])
    except ValueError:
        raise ConfigError(f"config key {key!r} is not an integer: {cfg[key]!r}") from None


def _parse_center(cfg, dimension: int) -> np.ndarray:
    spec = cfg.get("center", "zero")
    if spec == "zero":
        return np.zeros(dimension)
    if spec == "unit":
        return np.ones(dimension) / math.sqrt(dimension)
    try:
        vals = np.asarray([float(v) for v in spec.split(",")])
    except ValueError:
        raise ConfigError(f"cannot parse center {spec!r}") from None
    if vals.size != dimension:
        raise ConfigError(f"center has {vals.size} coordinates, dimension is {dimension}")
    return vals


def _build_source(cfg: dict, master_seed: int):
    kind = cfg.get("kind")
    if kind is None:
        raise ConfigError("missing required config key 'kind'")
    if kind == "spherical_gaussian":
        d = _cfg_int(cfg, "dimension")
        return SphericalGaussian(
            center=tuple(_parse_center(cfg, d)), sigma=_cfg_float(cfg, "sigma"), seed=master_seed
        )
    if kind == "contaminated":
        d = _cfg_int(cfg, "dimension")
        return Contaminated(
            center=tuple(_parse_center(cfg, d)),
            sigma_core=_cfg_float(cfg, "sigma_core"),
            sigma_outlier=_cfg_float(cfg, "sigma_outlier"),
            outlier_fraction=_cfg_float(cfg, "outlier_fraction"),
            seed=master_seed,
        )
    if kind == "elliptical_student":
        d = _cfg_int(cfg, "dimension")
        scale_spec = cfg.get("scale_diag", "1")
        parts = scale_spec.split(",")
        try:
            scale = [float(v) for v in parts]
        except ValueError:
            raise ConfigError(f"cannot parse scale_diag {scale_spec!r}") from None
        if len(scale) == 1:
            scale = scale * d
        return EllipticalStudent(
            center=tuple(_parse_center(cfg, d)),
            scale_diag=tuple(scale),
            dof=_cfg_float(cfg, "dof"),
            seed=master_seed,
        )
    if kind == "empirical":
        if "dataset" not in cfg:
            raise ConfigError("empirical kind needs a 'dataset' path")
        points, _ = load_dataset(cfg["dataset"], cfg.get("dataset_format", "csv"))
        with_repl = cfg.get("with_replacement", "true").lower() in ("true", "1", "yes")
        return Empirical(points, with_replacement=with_repl, seed=master_seed)
    if kind == "functional_bridge":
        return FunctionalBridge(grid_size=_cfg_int(cfg, "grid_size"), seed=master_seed)
    raise ConfigError(f"unknown source kind {kind!r}")


def _build_experiment(cfg: dict, seed_override: int | None) -> ExperimentConfig:
    master_seed = seed_override if seed_override is not None else _cfg_int(cfg, "master_seed", 0)
    source = _build_source(cfg, master_seed)
    schedule = StepSchedule(_cfg_float(cfg, "c_gamma", 1.0), _cfg_float(cfg, "alpha", 2.0 / 3.0))
    n_max = _cfg_int(cfg, "n_max")
    per_decade = _cfg_int(cfg, "checkpoints_per_decade", 20)
    fit_window = None
    if "fit_lo" in cfg or "fit_hi" in cfg:
        fit_window = (_cfg_float(cfg, "fit_lo"), _cfg_float(cfg, "fit_hi"))
    p_list = (1,)
    if "p_list" in cfg:
        try:
            p_list = tuple(int(v) for v in cfg["p_list"].split(","))
        except ValueError:
            raise ConfigError(f"cannot parse p_list {cfg['p_list']!r}") from None
    return ExperimentConfig(
        source=source,
        schedule=schedule,
        n_max=n_max,
        replicates=_cfg_int(cfg, "replicates"),
        master_seed=master_seed,
        checkpoints=log_checkpoints(n_max, per_decade),
        p_list=p_list,
        fit_window=fit_window,
        init_radius=_cfg_float(cfg, "init_radius", math.inf),
    )


def _default_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("GEOMED_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"GEOMED_SEED is not an integer: {env!r}") from None
    return 0


def _write_out(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _cmd_median(args) -> int:
    points, space = load_dataset(args.input, args.input_format)
    seed = _default_seed(args)
    source = Empirical(points, seed=seed)
    schedule = StepSchedule(args.c_gamma, args.alpha)
    n_max = args.passes * points.shape[0]
    traj = run_stream(source, n_max, schedule, checkpoints=[n_max])
    final = traj.states[-1]
    phi, excluded = phi_empirical(final.z_bar, points, space, return_excluded=True)
    doc = {
        "median": final.z_bar,
        "n": final.n,
        "skipped": final.skipped,
        "phi_norm": float(np.sqrt((phi * phi * (space.weights if space.weights is not None else 1.0)).sum())),
        "phi_excluded_terms": excluded,
        "objective": objective_empirical(final.z_bar, points, space),
        "seed": seed,
    }
    _write_out(to_json(doc), args.out)
    return 0


def _cmd_weiszfeld(args) -> int:
    points, space = load_dataset(args.input, args.input_format)
    res = weiszfeld(points, space=space, tol=args.tol)
    doc = {
        "point": res.point,
        "iterations": res.iterations,
        "final_step": res.final_step,
        "converged": res.converged,
        "objective": objective_empirical(res.point, points, space),
    }
    _write_out(to_json(doc), args.out)
    return 0


def _cmd_simulate(args) -> int:
    cfg = _parse_config_file(args.config)
    config = _build_experiment(cfg, args.seed)
    source = config.source.with_seed(config.master_seed)
    traj = run_stream(
        source,
        config.n_max,
        config.schedule,
        checkpoints=config.checkpoints,
        init_radius=config.init_radius,
    )
    doc = {
        "config": dict(cfg),
        "snapshots": [
            {"n": st.n, "z": st.z, "z_bar": st.z_bar, "skipped": st.skipped}
            for st in traj.states
        ],
    }
    _write_out(to_json(doc), args.out)
    return 0


def _run_rates(config: ExperimentConfig, cfg: dict) -> tuple[dict, bool]:
    table = simulate_distances(config)
    curves = run_replications(config, table=table)
    window = config.fit_window
    if window is None:
        window = (float(config.checkpoints[0]), float(config.checkpoints[-1]))
    fits = {}
    for curve in curves:
        fits[f"{curve.estimator}_p{curve.p}"] = fit_rate(curve, window)

    extras: dict = {}
    checks: list[dict] = []
    rm_tol = _cfg_float(cfg, "rm_slope_tol", 0.12)
    avg_tol = _cfg_float(cfg, "avg_slope_tol", 0.12)
    min_r2 = _cfg_float(cfg, "min_r_squared", 0.98)
    for curve in curves:
        fit = fits[f"{curve.estimator}_p{curve.p}"]
        if curve.estimator == "rm":
            expected = -curve.p * config.schedule.alpha
            tol = rm_tol + 0.08 * (curve.p - 1)
        else:
            expected = -float(curve.p)
            tol = avg_tol + 0.08 * (curve.p - 1)
        checks.append(
            {
                "name": f"{curve.estimator}_p{curve.p}_slope",
                "value": fit.slope,
                "expected": expected,
                "tolerance": tol,
                "ok": bool(abs(fit.slope - expected) <= tol),
            }
        )
        checks.append(
            {
                "name": f"{curve.estimator}_p{curve.p}_r_squared",
                "value": fit.r_squared,
                "expected": min_r2,
                "tolerance": 0.0,
                "ok": bool(fit.r_squared >= min_r2),
            }
        )
    if "beta" in cfg:
        windows = (
            (_cfg_float(cfg, "early_lo"), _cfg_float(cfg, "early_hi")),
            (_cfg_float(cfg, "late_lo"), _cfg_float(cfg, "late_hi")),
        )
        min_frac = _cfg_float(cfg, "envelope_min_fraction", 0.8)
        env = as_envelope(config, _cfg_float(cfg, "beta"), windows[0], windows[1], table=table)
        extras["envelope_fraction"] = env.fraction
        checks.append(
            {
                "name": "envelope_fraction",
                "value": env.fraction,
                "expected": min_frac,
                "tolerance": 0.0,
                "ok": bool(env.fraction >= min_frac),
            }
        )
        if "delta" in cfg:
            avg_env = averaged_as_check(
                config, _cfg_float(cfg, "delta"), windows[0], windows[1], table=table
            )
            extras["averaged_envelope_fraction"] = avg_env.fraction
            checks.append(
                {
                    "name": "averaged_envelope_fraction",
                    "value": avg_env.fraction,
                    "expected": min_frac,
                    "tolerance": 0.0,
                    "ok": bool(avg_env.fraction >= min_frac),
                }
            )
    extras["checks"] = checks
    doc = results_document(dict(cfg), curves, fits, extras)
    return doc, all(c["ok"] for c in checks)


def _cmd_rates(args) -> int:
    cfg = _parse_config_file(args.config)
    config = _build_experiment(cfg, args.seed)
    doc, ok = _run_rates(config, cfg)
    _write_out(to_json(doc), args.out)
    if args.csv is not None:
        curves = doc["curves"]
        from .experiments import MomentCurve

        rebuilt = [
            MomentCurve(
                p=c["p"],
                estimator=c["estimator"],
                ns=tuple(pt["n"] for pt in c["points"]),
                moments=tuple(pt["moment"] for pt in c["points"]),
                stderrs=tuple(pt["stderr"] for pt in c["points"]),
            )
            for c in curves
        ]
        Path(args.csv).write_text(curves_to_csv(rebuilt))
    if args.assert_checks and not ok:
        print("error: rate assertions failed", file=sys.stderr)
        return 4
    return 0


def _cmd_diagnose(args) -> int:
    points, space = load_dataset(args.input, args.input_format)
    seed = _default_seed(args)
    source = Empirical(points, seed=seed)
    schedule = StepSchedule(args.c_gamma, args.alpha)
    traj = run_stream(source, args.n, schedule)
    m = source.true_median()
    gamma_m = hessian_empirical(m, points, space)
    doc = diagnostics_report(traj, points, space, m, gamma_m)
    doc["seed"] = seed
    _write_out(to_json(doc), args.out)
    return 0


def _cmd_compare(args) -> int:
    points, space = load_dataset(args.input, args.input_format)
    seed = _default_seed(args)
    config = ExperimentConfig(
        source=Empirical(points, seed=seed),
        schedule=StepSchedule(args.c_gamma, args.alpha),
        n_max=args.n,
        replicates=args.seeds,
        master_seed=seed,
    )
    comp = compare_to_oracle(points, config)
    doc = {
        "oracle_point": comp.oracle_point,
        "checkpoints": list(comp.checkpoints),
        "median_distance": np.median(comp.distances, axis=0),
        "distances": comp.distances,
        "seed": seed,
    }
    _write_out(to_json(doc), args.out)
    return 0


def _add_schedule_flags(sub) -> None:
    sub.add_argument("--alpha", type=float, default=2.0 / 3.0, help="step exponent in (0.5, 1)")
    sub.add_argument("--c-gamma", type=float, default=1.0, help="step prefactor")


def _add_io_flags(sub) -> None:
    sub.add_argument("--input", required=True, help="dataset path")
    sub.add_argument(
        "--input-format", choices=("csv", "binary_f64"), default="csv", help="dataset format"
    )
    sub.add_argument("--out", default=None, help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geomed", description="Streaming geometric-median estimation toolkit."
    )
    parser.add_argument("--version", action="version", version=f"geomed {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("median", help="streaming averaged estimate from a dataset")
    _add_io_flags(p)
    _add_schedule_flags(p)
    p.add_argument("--passes", type=int, default=1, help="resampling passes over the dataset")
    p.add_argument("--seed", type=int, default=None, help="stream seed (default GEOMED_SEED or 0)")
    p.set_defaults(func=_cmd_median)

    p = subs.add_parser("weiszfeld", help="offline solver on a dataset")
    _add_io_flags(p)
    p.add_argument("--tol", type=float, default=1e-10, help="relative convergence tolerance")
    p.set_defaults(func=_cmd_weiszfeld)

    p = subs.add_parser("simulate", help="one checkpointed estimator stream")
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.set_defaults(func=_cmd_simulate)

    p = subs.add_parser("rates", help="replicated moment curves and rate fits")
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out", default=None, help="JSON results path (default stdout)")
    p.add_argument("--csv", default=None, help="also write the flat CSV export here")
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument(
        "--assert",
        dest="assert_checks",
        action="store_true",
        help="exit 4 unless all slope/envelope checks pass",
    )
    p.set_defaults(func=_cmd_rates)

    p = subs.add_parser("diagnose", help="decomposition diagnostics on a dataset stream")
    _add_io_flags(p)
    _add_schedule_flags(p)
    p.add_argument("--n", type=int, required=True, help="stream length")
    p.add_argument("--seed", type=int, default=None, help="stream seed (default GEOMED_SEED or 0)")
    p.set_defaults(func=_cmd_diagnose)

    p = subs.add_parser("compare", help="averaged estimator vs offline solution")
    _add_io_flags(p)
    _add_schedule_flags(p)
    p.add_argument("--n", type=int, required=True, help="resampled draws per seed")
    p.add_argument("--seeds", type=int, default=20, help="number of replicate seeds")
    p.add_argument("--seed", type=int, default=None, help="master seed (default GEOMED_SEED or 0)")
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
