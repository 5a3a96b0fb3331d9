"""Batch front door: analytic | simulate | compare | green0.

Exit codes: 0 success (and, for compare, all comparisons passed),
1 a comparison failed, 2 configuration error, 3 numeric failure,
4 jump-kernel validation failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import cpp_green, kernels, mc
from .config import ConfigError, Experiment, load_config, resolved_config_dict, validate_config
from .cpp_green import KernelValidationError
from .functional import resolve_horizon
from .paths import BmSpec, CppSpec, FbmSpec, replicate_rng, sample_path
from .reporting import (
    ESTIMATE_CSV_HEADER,
    estimate_csv_row,
    estimate_to_dict,
    fmt17,
    json17,
    write_csv,
    write_json,
)

EXIT_OK = 0
EXIT_COMPARE_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_KERNEL = 4


def _config_comment(exp: Experiment) -> str:
    return "config: " + json17(resolved_config_dict(exp)).replace("\n", " ").strip()


def _analytic_payload(exp: Experiment) -> dict:
    spec, f = exp.spec, exp.function
    x = np.asarray(spec.x, dtype=float)
    qrng = replicate_rng(exp.seed, 0, tag=2)
    if isinstance(spec, BmSpec):
        m = kernels.bm_moments(f, x, rng=qrng)
        extra = {}
    elif isinstance(spec, FbmSpec):
        m = kernels.fbm_moments(f, x, spec.hurst, rng=qrng)
        extra = {}
    else:
        e = cpp_green.cpp_expectation(f, x, spec.kernel, grid=exp.grid)
        v = cpp_green.cpp_variance(f, x, spec.kernel, rng=qrng, grid=exp.grid)
        m = kernels.AnalyticMoments(e.value, v.value, e.error + e.tail_bound, v.error)
        extra = {"expectation_flags": list(e.flags), "variance_flags": list(v.flags)}
    return {
        "mean": m.mean,
        "mean_error": m.mean_error,
        "variance": m.variance,
        "variance_error": m.variance_error,
        **extra,
    }


def _run_estimate(exp: Experiment) -> mc.EstimateReport:
    policy = resolve_horizon(
        exp.spec, exp.function, exp.horizon_mode, exp.horizon_T, exp.horizon_eps
    )
    return mc.run_experiment(
        exp.spec,
        exp.function,
        exp.n,
        policy,
        dt=exp.dt,
        seed=exp.seed,
        threads=exp.threads,
    )


def _apply_fault_injection(exp: Experiment, report: mc.EstimateReport) -> None:
    # test hook: deliberately corrupt the analytic reference, then re-judge
    if exp.fault_mean_scale != 1.0 or exp.fault_mean_offset != 0.0:
        if report.analytic_mean is not None:
            report.analytic_mean = (
                report.analytic_mean * exp.fault_mean_scale + exp.fault_mean_offset
            )
        mc.compare(report)


def _dump_paths(exp: Experiment, outdir: Path) -> None:
    pdir = outdir / "paths"
    pdir.mkdir(parents=True, exist_ok=True)
    policy = resolve_horizon(
        exp.spec, exp.function, exp.horizon_mode, exp.horizon_T, exp.horizon_eps
    )
    d = exp.spec.d
    for i in range(exp.n):
        path = sample_path(exp.spec, policy.resolved_T, exp.dt, exp.seed, i)
        rows = [[t] + list(state) for t, state in zip(path.times, path.states)]
        write_csv(
            pdir / f"path_{i:06d}.csv",
            ["t"] + [f"x{j + 1}" for j in range(d)],
            rows,
            _config_comment(exp),
        )


def cmd_analytic(exp: Experiment, outdir: Path) -> int:
    payload = _analytic_payload(exp)
    write_json(outdir / "analytic.json", {"config": resolved_config_dict(exp), "results": payload})
    return EXIT_OK


def cmd_simulate(exp: Experiment, outdir: Path, dump_paths: bool = False) -> int:
    report = _run_estimate(exp)
    _apply_fault_injection(exp, report)
    write_json(
        outdir / "report.json",
        {"config": resolved_config_dict(exp), "results": estimate_to_dict(report)},
    )
    write_csv(
        outdir / "report.csv",
        ESTIMATE_CSV_HEADER,
        [estimate_csv_row(report)],
        _config_comment(exp),
    )
    write_json(outdir / "run_meta.json", {"wall_time_s": report.wall_time_s, "n_done": report.n})
    if dump_paths:
        _dump_paths(exp, outdir)
    return EXIT_OK


def cmd_compare(exp: Experiment, outdir: Path) -> int:
    t0 = time.perf_counter()
    analytic = _analytic_payload(exp)
    report = _run_estimate(exp)
    _apply_fault_injection(exp, report)
    rows = []
    for name in ("mean", "variance"):
        ref = report.analytic_mean if name == "mean" else report.analytic_variance
        est = report.mean + report.truncation_correction if name == "mean" else report.variance
        z = report.z_mean if name == "mean" else report.z_variance
        rows.append([name, est, ref, z, report.verdicts.get(name, "n/a")])
    write_json(
        outdir / "report.json",
        {
            "config": resolved_config_dict(exp),
            "analytic": analytic,
            "results": estimate_to_dict(report),
        },
    )
    write_csv(
        outdir / "report.csv", ESTIMATE_CSV_HEADER, [estimate_csv_row(report)], _config_comment(exp)
    )
    write_csv(
        outdir / "compare.csv",
        ["comparison", "estimate", "reference", "z", "verdict"],
        rows,
        _config_comment(exp),
    )
    write_json(outdir / "run_meta.json", {"wall_time_s": time.perf_counter() - t0, "n_done": report.n})
    failed = any(v == "fail" for v in report.verdicts.values())
    return EXIT_COMPARE_FAIL if failed else EXIT_OK


def _loglinear_fit(r: np.ndarray, g: np.ndarray) -> dict:
    """Least-squares fit of log g = log A - B r; returns A, B and R^2."""
    y = np.log(g)
    design = np.vstack([np.ones_like(r), -r]).T
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    pred = design @ coef
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return {
        "amplitude": math.exp(coef[0]),
        "decay_rate": float(coef[1]),
        "r_squared": 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0,
        "nodes": int(r.size),
    }


def cmd_green0(exp: Experiment, outdir: Path) -> int:
    kernel = exp.spec.kernel
    validation = cpp_green.validate_kernel(kernel)
    if not validation.passed:
        failed = validation.failed_names()
        print("kernel validation failed: " + ", ".join(failed), file=sys.stderr)
        write_json(
            outdir / "green0_summary.json",
            {
                "config": resolved_config_dict(exp),
                "validation": {
                    name: {"passed": c.passed, "value": c.value, "detail": c.detail}
                    for name, c in validation.checks.items()
                },
            },
        )
        return EXIT_KERNEL
    field = cpp_green.g0_spectral(kernel, exp.grid, validate=False)
    terms = exp.series_terms or (
        100_000 if isinstance(kernel, cpp_green.GaussianJumps) else 12
    )
    terms = (
        min(terms, cpp_green._exp_series_max_terms(kernel, exp.grid))
        if isinstance(kernel, cpp_green.ExponentialJumps)
        else terms
    )
    series = cpp_green.g0_series_field(kernel, exp.grid, terms)
    radius = min(4.0, exp.grid.extent / 4.0)
    mask = field.interior_mask(radius)
    sup_diff = float(np.abs(field.values[mask] - series.values[mask]).max())
    budget = max(1e-3, series.error_estimate + field.error_estimate)
    summary = {
        "config": resolved_config_dict(exp),
        "validation": {
            name: {"passed": c.passed, "value": c.value, "detail": c.detail}
            for name, c in validation.checks.items()
        },
        "field": field.summary(),
        "series_comparison": {
            "terms": terms,
            "comparison_radius": radius,
            "sup_difference": sup_diff,
            "series_truncation_bound": series.error_estimate,
            "budget": budget,
            "within_budget": bool(sup_diff <= budget),
        },
    }
    if isinstance(kernel, cpp_green.ExponentialJumps):
        r = np.sqrt(exp.grid.node_r2(kernel.d))
        hi = min(exp.fit_hi, exp.grid.extent / 2.0 - 2.0 * exp.grid.h)
        sel = (r >= exp.fit_lo) & (r <= hi) & (field.values > 0)
        summary["tail_fit"] = _loglinear_fit(r[sel], field.values[sel])
        summary["tail_fit"]["fit_window"] = [exp.fit_lo, hi]
    field.to_csv(outdir / "g0_field.csv", _config_comment(exp))
    write_json(outdir / "green0_summary.json", summary)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perpetual",
        description="Simulate and verify perpetual integral functionals of transient processes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("analytic", "evaluate closed-form moments"),
        ("simulate", "Monte Carlo estimate over seeded replicate paths"),
        ("compare", "analytic + simulate + verdicts; non-zero exit on failure"),
        ("green0", "build the jump-process potential field and its cross-checks"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="worker process cap")
        p.add_argument("--out", default=".", help="output directory")
        if name == "simulate":
            p.add_argument(
                "--dump-paths", action="store_true", help="write every replicate path as CSV"
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_config(args.config)
        exp = validate_config(raw, args.command)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be a non-negative integer")
            exp.seed = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            exp.threads = args.threads
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "analytic":
            return cmd_analytic(exp, outdir)
        if args.command == "simulate":
            return cmd_simulate(exp, outdir, dump_paths=getattr(args, "dump_paths", False))
        if args.command == "compare":
            return cmd_compare(exp, outdir)
        return cmd_green0(exp, outdir)
    except KernelValidationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_KERNEL
    except (ArithmeticError, FloatingPointError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
