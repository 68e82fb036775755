"""Structured JSON run report: per-generator metrics, the KD ablation
pair, the bench table with labeled full-scale reference rows, and the
effective config for provenance."""

from __future__ import annotations

import dataclasses
import json

from .flops import REFERENCE_TABLE

REPORT_VERSION = 1

REQUIRED_SECTIONS = ("metrics", "ablation", "bench")


class ReportError(ValueError):
    pass


def make_report(metrics=None, ablation=None, bench=None, config=None,
                seed=None, run_id=None, code_version="dfdet-0.1.0"):
    """Assemble the report dict; every section must be supplied."""
    sections = {"metrics": metrics, "ablation": ablation, "bench": bench}
    missing = [k for k, v in sections.items() if v is None]
    if missing:
        raise ReportError(f"missing report sections: {missing}")
    bench_rows = [
        dataclasses.asdict(r) if dataclasses.is_dataclass(r) else dict(r)
        for r in bench
    ]
    for row in bench_rows:
        row.setdefault("provenance", "measured")
    return {
        "report_version": REPORT_VERSION,
        "run_id": run_id,
        "seed": seed,
        "code_version": code_version,
        "config": config,
        "metrics": metrics,
        "ablation": ablation,
        "bench": {
            "measured": bench_rows,
            "reference": [dict(r) for r in REFERENCE_TABLE],
        },
    }


def save_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        report = json.load(fh)
    if report.get("report_version") != REPORT_VERSION:
        raise ReportError(
            f"report version {report.get('report_version')} unsupported "
            f"(expected {REPORT_VERSION})"
        )
    missing = [k for k in REQUIRED_SECTIONS if k not in report]
    if missing:
        raise ReportError(f"missing report sections: {missing}")
    return report
