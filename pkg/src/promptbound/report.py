"""Rendering of run results as a fixed-width comparison table.

The text table is byte-stable for a given run log: fixed float formats, no
timestamps, columns computed only from the logged rows. The n-adjusted
column is recomputed at render time from the logged bound inputs at the
largest sample size any row was measured on.
"""

from __future__ import annotations

import json

from .bounds import BoundFamily, n_adjusted_bound
from .optimizer import RunLog, bound_inputs_from_dict

__all__ = ["REPORT_COLUMNS", "rows_with_adjusted", "render_report", "report_json"]

REPORT_COLUMNS = (
    "Prompting Method",
    "Prior",
    "Train Error",
    "Log-lik.",
    "Test Error",
    "Bound",
    "Bound (n-adj)",
)


def _row_sample_size(bound_entry: dict) -> int:
    family = BoundFamily(bound_entry["family"])
    if family is BoundFamily.DATA_DEPENDENT:
        return bound_entry["n"]
    return bound_entry["m"]


def rows_with_adjusted(rows: list[dict]) -> list[dict]:
    """Attach a ``bound_n_adj`` value to every row that carries a bound.

    Adjustment target is the maximum sample size across the rows, so prompts
    that the bandit evaluated on fewer examples are compared on level ground.
    """
    sizes = [_row_sample_size(r["bound"]) for r in rows if r.get("bound")]
    n_max = max(sizes) if sizes else 0
    out = []
    for row in rows:
        row = dict(row)
        entry = row.get("bound")
        if entry:
            adjusted = n_adjusted_bound(
                bound_inputs_from_dict(entry), n_max, BoundFamily(entry["family"])
            )
            row["bound_n_adj"] = adjusted.bound
            row["n_max"] = n_max
        else:
            row["bound_n_adj"] = None
        out.append(row)
    return out


def _fmt(value, spec: str = "{:.3f}") -> str:
    if value is None:
        return "-"
    return spec.format(value)


def render_report(rows: list[dict]) -> str:
    """Fixed-width text table over the standard report columns."""
    rows = rows_with_adjusted(rows)
    cells = [list(REPORT_COLUMNS)]
    for row in rows:
        entry = row.get("bound")
        cells.append(
            [
                row["method"],
                row["prior"],
                _fmt(row["train_error"]),
                _fmt(row["loglik"]),
                _fmt(row["test_error"]),
                _fmt(entry["bound"] if entry else None),
                _fmt(row["bound_n_adj"]),
            ]
        )
    widths = [max(len(r[i]) for r in cells) for i in range(len(REPORT_COLUMNS))]
    lines = []
    for j, row in enumerate(cells):
        lines.append(" | ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if j == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def report_json(runlog: RunLog) -> dict:
    """Machine-readable report mirroring the text table."""
    return {
        "run_id": runlog.run_id,
        "failed": runlog.failed,
        "rows": rows_with_adjusted(runlog.final_report.get("rows", [])),
    }


def render_runlog_report(runlog: RunLog) -> str:
    return render_report(runlog.final_report.get("rows", []))


def report_json_text(runlog: RunLog) -> str:
    return json.dumps(report_json(runlog), indent=2, sort_keys=True) + "\n"
