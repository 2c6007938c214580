"""Round-series CSV and run-summary JSON, written atomically.

The CSV column set is fixed (``round,participants,mta,asr,benign_count,
poisoned_count,wall_ms``) and numbers are serialized at full precision, so
re-running with the same config reproduces the file byte for byte apart from
the wall-clock column. Files are staged to a temporary sibling and renamed
into place, so an unwritable target never leaves a partial summary behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

__all__ = ["CSV_HEADER", "emit_reports"]

CSV_HEADER = ("round", "participants", "mta", "asr", "benign_count", "poisoned_count", "wall_ms")


def _mean_verdict_counts(report) -> tuple[float, float]:
    """Benign/poisoned counts for the CSV row.

    Layer verdicts can differ, so for the layered aggregator these are the
    mean set sizes across layers; other aggregators keep every participant.
    """
    if report.verdicts is None:
        return float(len(report.participants)), 0.0
    benign = sum(len(v.benign) for v in report.verdicts) / len(report.verdicts)
    poisoned = sum(len(v.poisoned) for v in report.verdicts) / len(report.verdicts)
    return float(benign), float(poisoned)


def _write_atomic(path: Path, text: str) -> None:
    staging = path.with_name(path.name + ".tmp")
    staging.write_text(text)
    os.replace(staging, path)


def emit_reports(reports, summary: dict, out_dir) -> tuple[Path, Path]:
    """Write ``rounds.csv`` and ``summary.json`` under ``out_dir``.

    Returns the two paths. Raises ``OSError`` before writing anything when
    the directory cannot be created or written into.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for report in reports:
        benign, poisoned = _mean_verdict_counts(report)
        writer.writerow(
            [
                report.round_index,
                len(report.participants),
                float(report.mta),
                float(report.asr),
                benign,
                poisoned,
                float(report.wall_ms),
            ]
        )
    csv_path = out / "rounds.csv"
    _write_atomic(csv_path, buffer.getvalue())

    summary_path = out / "summary.json"
    _write_atomic(summary_path, json.dumps(summary, indent=2) + "\n")
    return csv_path, summary_path
