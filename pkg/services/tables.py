"""Renderings of a ReplicationSummary: Table 1 (beta_hat), Table 2 (R_hat) and Table 3 (coverage)."""
import csv
import json
import logging
import math
from io import BytesIO, StringIO
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from openpyxl import Workbook
from reportlab.lib.pagesizes import A4, landscape
from reportlab.pdfgen import canvas

from services.experiment_engine import R_HAT_COLUMN, ReplicationSummary, SummaryRow
from utils.errors import InvalidInputError

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json", "txt", "xlsx", "pdf")
DEFAULT_FORMATS = ("csv", "json", "txt")
FAILURE_HEADERS = ["model", "L", "replication", "column", "message"]

Table = Tuple[List[str], List[list]]


def _number(value) -> str:
    """Shortest round-trip decimal; blank for missing values."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    return repr(float(value)) if isinstance(value, float) else str(value)


def _groups(summary: ReplicationSummary) -> Dict[Tuple[str, float], Dict[str, SummaryRow]]:
    groups: Dict[Tuple[str, float], Dict[str, SummaryRow]] = {}
    for row in summary.rows:
        groups.setdefault((row.model, row.L), {})[row.column] = row
    return groups


def _multiplier_columns(summary: ReplicationSummary) -> List[str]:
    seen: List[str] = []
    for row in summary.rows:
        if row.column != R_HAT_COLUMN and row.column not in seen:
            seen.append(row.column)
    return seen


def _has_range_column(summary: ReplicationSummary) -> bool:
    return any(row.column == R_HAT_COLUMN for row in summary.rows)


def table1(summary: ReplicationSummary) -> Table:
    columns = _multiplier_columns(summary)
    headers = ["model", "L", "n_bar"]
    for c in columns:
        headers += [f"mean[{c}]", f"sd[{c}]", f"failures[{c}]"]
    rows = []
    for (model, L), by_column in _groups(summary).items():
        first = next(iter(by_column.values()))
        line = [model, L, first.mean_count]
        for c in columns:
            r = by_column.get(c)
            line += [r.mean_beta, r.sd_beta, r.failure_count] if r else [None, None, None]
        rows.append(line)
    return headers, rows


def table2(summary: ReplicationSummary) -> Table:
    headers = ["model", "L", "mean_r_hat", "sd_r_hat", "mean_beta", "sd_beta", "failures"]
    rows = []
    for (model, L), by_column in _groups(summary).items():
        r = by_column.get(R_HAT_COLUMN)
        if r is not None:
            rows.append([model, L, r.mean_r_hat, r.sd_r_hat, r.mean_beta, r.sd_beta, r.failure_count])
    return headers, rows


def table3(summary: ReplicationSummary) -> Table:
    columns = _multiplier_columns(summary) + ([R_HAT_COLUMN] if _has_range_column(summary) else [])
    headers = ["model", "L"] + [f"coverage[{c}]" for c in columns]
    rows = []
    for (model, L), by_column in _groups(summary).items():
        rows.append([model, L] + [by_column[c].coverage_rate if c in by_column else None for c in columns])
    return headers, rows


def diagnostics_table(summary: ReplicationSummary) -> Table:
    """Per-column balance of N against beta_star * V, and the mean variance estimate."""
    headers = ["model", "L", "column", "n_valid", "mean_n_isolated", "mean_empty_volume",
               "gap_mean", "gap_se", "mean_sigma2", "sigma2_se"]
    rows = [[r.model, r.L, r.column, r.n_valid, r.mean_n_isolated, r.mean_empty_volume,
             r.gap_mean, r.gap_se, r.mean_sigma2, r.sigma2_se] for r in summary.rows]
    return headers, rows


def failures_table(summary: ReplicationSummary) -> Table:
    return FAILURE_HEADERS, [[f.model, f.L, f.replication, f.column, f.message] for f in summary.failures]


def all_tables(summary: ReplicationSummary) -> Dict[str, Table]:
    tables = {"table1": table1(summary), "table3": table3(summary), "diagnostics": diagnostics_table(summary)}
    if _has_range_column(summary):
        tables["table2"] = table2(summary)
    return dict(sorted(tables.items()))


def to_csv(table: Table) -> str:
    headers, rows = table
    out = StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(headers)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else _number(v) for v in row])
    return out.getvalue()


def summary_to_json(summary: ReplicationSummary) -> str:
    return json.dumps(summary.to_dict(), indent=2, allow_nan=False)


def summary_from_json(text: str) -> ReplicationSummary:
    try:
        return ReplicationSummary.from_dict(json.loads(text))
    except (ValueError, TypeError) as exc:
        raise InvalidInputError(f"Not a replication summary: {exc}") from exc


def _display(value, percent: bool = False) -> str:
    if value is None:
        return "-"
    if isinstance(value, str):
        return value
    if isinstance(value, float):
        return f"{100 * value:.1f}" if percent else f"{value:.1f}"
    return str(value)


def to_text(table: Table, title: str = "", percent: bool = False) -> str:
    """Aligned plain text, numbers rounded to one decimal (coverage shown in percent)."""
    headers, rows = table
    cells = [headers] + [[_display(v, percent and isinstance(v, float) and j >= 2) if j != 1 else f"{v:g}"
                          for j, v in enumerate(row)] for row in rows]
    widths = [max(len(line[j]) for line in cells) for j in range(len(headers))]
    lines = [title] if title else []
    for k, line in enumerate(cells):
        lines.append("  ".join(cell.rjust(w) if j >= 2 else cell.ljust(w) for j, (cell, w) in enumerate(zip(line, widths))))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def summary_text(summary: ReplicationSummary) -> str:
    parts = [to_text(table1(summary), "Table 1: beta_hat mean (sd) by r_tilde = p * R")]
    if _has_range_column(summary):
        parts.append(to_text(table2(summary), "Table 2: estimated range and beta_hat at r_tilde = R_hat"))
    parts.append(to_text(table3(summary), "Table 3: CI coverage (%)", percent=True))
    return "\n".join(parts)


def to_xlsx(summary: ReplicationSummary) -> bytes:
    wb = Workbook()
    for name, (headers, rows) in all_tables(summary).items():
        ws = wb.create_sheet(title=name[:31])
        ws.append(headers)
        for row in rows:
            ws.append(list(row))
    headers, rows = failures_table(summary)
    ws = wb.create_sheet(title="failures")
    ws.append(headers)
    for row in rows:
        ws.append(row)
    if "Sheet" in wb.sheetnames and len(wb.sheetnames) > 1:
        wb.remove(wb["Sheet"])
    output = BytesIO()
    wb.save(output)
    return output.getvalue()


def to_pdf(summary: ReplicationSummary, title: str = "Replication summary") -> bytes:
    output = BytesIO()
    p = canvas.Canvas(output, pagesize=landscape(A4))
    p.setFont("Helvetica-Bold", 12)
    p.drawString(30, 570, title)
    y = 545
    for block in summary_text(summary).split("\n\n"):
        for k, line in enumerate(block.splitlines()):
            p.setFont("Courier-Bold" if k == 0 else "Courier", 8)
            p.drawString(30, y, line)
            y -= 12
            if y < 40:
                p.showPage()
                y = 570
        y -= 10
    if summary.failures:
        p.setFont("Helvetica", 9)
        p.drawString(30, max(y, 40), f"{len(summary.failures)} replication failures, see failures.csv")
    p.save()
    return output.getvalue()


def emit_tables(summary: ReplicationSummary, out_dir, formats: Optional[Sequence[str]] = None) -> List[Path]:
    """Write the tables in each requested format to ``out_dir``; failures.csv is always written."""
    formats = tuple(formats or DEFAULT_FORMATS)
    unknown = [f for f in formats if f not in FORMATS]
    if unknown:
        raise InvalidInputError(f"Unknown table format(s) {unknown}; choose from {list(FORMATS)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written: List[Path] = []

    def write(name: str, content, binary: bool = False) -> None:
        path = out_dir / name
        if binary:
            path.write_bytes(content)
        else:
            path.write_text(content, encoding="utf-8", newline="")
        written.append(path)

    if "csv" in formats:
        for name, table in all_tables(summary).items():
            write(f"{name}.csv", to_csv(table))
    if "json" in formats:
        write("summary.json", summary_to_json(summary))
    if "txt" in formats:
        write("tables.txt", summary_text(summary))
    if "xlsx" in formats:
        write("tables.xlsx", to_xlsx(summary), binary=True)
    if "pdf" in formats:
        write("tables.pdf", to_pdf(summary), binary=True)
    write("failures.csv", to_csv(failures_table(summary)))
    logger.info("Wrote %d files to %s", len(written), out_dir)
    return written
