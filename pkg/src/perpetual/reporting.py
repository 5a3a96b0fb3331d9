"""Report emission: UTF-8 JSON and CSV with 17-significant-digit floats.

Every file is self-describing (it embeds the resolved config and seed);
float formatting uses '%.17g' so values round-trip exactly and repeated
runs with the same seed are byte-identical.  Wall-clock metadata goes to
a separate file so result files stay reproducible.
"""

from __future__ import annotations

import json
import math

import numpy as np


def fmt17(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value in report: {x}")
    return format(x, ".17g")


def _emit(obj, out: list, indent: int) -> None:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}  {json.dumps(str(k))}: ")
            _emit(v, out, indent + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            out.append("[]")
            return
        out.append("[")
        for i, v in enumerate(obj):
            _emit(v, out, indent + 1)
            if i < len(obj) - 1:
                out.append(", ")
        out.append("]")
    elif isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt17(obj))
    else:
        out.append(json.dumps(str(obj)))


def json17(obj) -> str:
    out: list[str] = []
    _emit(obj, out, 0)
    return "".join(out) + "\n"


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json17(obj))


def write_csv(path, header: list[str], rows: list[list], config_comment: str = "") -> None:
    def cell(v) -> str:
        if v is None:
            return ""
        if isinstance(v, (float, np.floating)):
            return fmt17(v)
        return str(v)

    with open(path, "w", encoding="utf-8") as fh:
        if config_comment:
            for line in config_comment.splitlines():
                fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(cell(v) for v in row) + "\n")


def estimate_to_dict(report) -> dict:
    """The reproducible numeric content of an estimate (no wall time)."""
    return {
        "family": report.family,
        "function": report.function_label,
        "n": report.n,
        "n_requested": report.n_requested,
        "horizon": report.horizon,
        "dt": report.dt,
        "seed": report.seed,
        "mean": report.mean,
        "se": report.se,
        "ci99": list(report.ci99),
        "variance": report.variance,
        "truncation_correction": report.truncation_correction,
        "tail_allowance": report.tail_allowance,
        "analytic_mean": report.analytic_mean,
        "analytic_mean_error": report.analytic_mean_error,
        "analytic_variance": report.analytic_variance,
        "analytic_variance_error": report.analytic_variance_error,
        "variance_se_bootstrap": report.variance_se_bootstrap,
        "z_mean": report.z_mean,
        "z_variance": report.z_variance,
        "verdicts": dict(report.verdicts),
        "partial": report.partial,
    }


ESTIMATE_CSV_HEADER = [
    "family", "function", "n", "horizon", "dt", "seed",
    "mean", "se", "ci_lo", "ci_hi", "variance",
    "truncation_correction", "tail_allowance",
    "analytic_mean", "analytic_mean_error", "z_mean", "verdict_mean",
    "analytic_variance", "analytic_variance_error", "variance_se_bootstrap",
    "z_variance", "verdict_variance",
]


def estimate_csv_row(report) -> list:
    return [
        report.family, report.function_label, report.n, report.horizon,
        report.dt, report.seed,
        report.mean, report.se, report.ci99[0], report.ci99[1], report.variance,
        report.truncation_correction, report.tail_allowance,
        report.analytic_mean, report.analytic_mean_error, report.z_mean,
        report.verdicts.get("mean", "n/a"),
        report.analytic_variance, report.analytic_variance_error,
        report.variance_se_bootstrap, report.z_variance,
        report.verdicts.get("variance", "n/a"),
    ]
