"""Report serialization: report.json plus a flat curves.csv per run.

Writes are atomic (temp file then rename) and key order is fixed, so the
same experiment produces byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path

from .analysis import ExperimentReport


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def report_to_dict(report: ExperimentReport) -> dict:
    return {
        "config": report.config,
        "aggregates": report.aggregates,
        "rows": [asdict(r) for r in report.rows],
    }


def write_report(report: ExperimentReport, out_dir: str | Path) -> tuple[Path, Path]:
    """Write report.json and curves.csv under out_dir; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    atomic_write_text(report_path,
                      json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n")

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["method", "fraction", "runs", "mean_kappa", "std_kappa",
                     "mean_accuracy", "kappa_undefined_runs"])
    for agg in report.aggregates:
        writer.writerow([
            agg["method"], f"{agg['fraction']:.10g}", agg["runs"],
            "" if agg["mean_kappa"] is None else f"{agg['mean_kappa']:.10g}",
            "" if agg["std_kappa"] is None else f"{agg['std_kappa']:.10g}",
            f"{agg['mean_accuracy']:.10g}", agg["kappa_undefined_runs"],
        ])
    curves_path = out_dir / "curves.csv"
    atomic_write_text(curves_path, buf.getvalue())
    return report_path, curves_path


def format_summary(report: ExperimentReport) -> str:
    """Human-oriented table of the aggregate cells."""
    lines = [f"{'method':<12} {'fraction':>8} {'mean kappa':>11} {'std':>8} "
             f"{'mean acc':>9} {'runs':>5}"]
    for agg in report.aggregates:
        mk = "undef" if agg["mean_kappa"] is None else f"{agg['mean_kappa']:.4f}"
        sk = "" if agg["std_kappa"] is None else f"{agg['std_kappa']:.4f}"
        lines.append(f"{agg['method']:<12} {agg['fraction']:>8.3g} {mk:>11} "
                     f"{sk:>8} {agg['mean_accuracy']:>9.4f} {agg['runs']:>5}")
    return "\n".join(lines)
