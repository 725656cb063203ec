import csv
import io

import pytest
from openpyxl import load_workbook

from services.experiment_engine import FailureRecord, R_HAT_COLUMN, ReplicationSummary, SummaryRow
from services.tables import (
    emit_tables,
    summary_from_json,
    summary_text,
    summary_to_json,
    table1,
    table3,
    to_csv,
    to_xlsx,
)
from utils.errors import InvalidInputError


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def make_row(model="s1", L=1.0, column="p=1", mean_beta=203.6, sd_beta=34.2, coverage=0.948, **extra):
    values = dict(
        model=model, L=L, column=column, replications=200, n_valid=200, failure_count=0, mean_count=99.0,
        mean_beta=mean_beta, sd_beta=sd_beta, coverage_rate=coverage, mean_sigma2=1400.0,
        mean_n_isolated=30.0, mean_empty_volume=0.15, gap_mean=0.1, gap_se=0.4,
    )
    values.update(extra)
    return SummaryRow(**values)


@pytest.fixture
def summary():
    rows = []
    for model, L in [("s1", 1.0), ("s1", 2.0), ("g2", 1.0)]:
        rows.append(make_row(model, L, "p=0.9", mean_beta=174.0, sd_beta=30.0, coverage=0.774))
        rows.append(make_row(model, L, "p=1"))
    rows.append(make_row("s1", 1.0, R_HAT_COLUMN, mean_beta=197.7, sd_beta=38.8, coverage=0.892,
                         mean_r_hat=0.052, sd_r_hat=0.004))
    failures = (FailureRecord("g2", 1.0, 17, "p=0.9", "Degenerate estimate: N=0, V=0.0"),)
    return ReplicationSummary(tuple(rows), failures)


def test_one_row_summary_gives_header_and_one_line():
    text = to_csv(table1(ReplicationSummary((make_row(),))))
    lines = text.splitlines()
    assert len(lines) == 2
    assert lines[0] == "model,L,n_bar,mean[p=1],sd[p=1],failures[p=1]"
    assert lines[1] == "s1,1.0,99.0,203.6,34.2,0"


def test_table1_has_one_row_per_model_and_side(summary):
    headers, rows = table1(summary)
    assert [(r[0], r[1]) for r in rows] == [("s1", 1.0), ("s1", 2.0), ("g2", 1.0)]
    assert headers[3:6] == ["mean[p=0.9]", "sd[p=0.9]", "failures[p=0.9]"]


def test_table3_includes_range_column(summary):
    headers, rows = table3(summary)
    assert headers[-1] == f"coverage[{R_HAT_COLUMN}]"
    assert rows[0][-1] == 0.892
    assert rows[1][-1] is None


def test_json_round_trip(summary):
    assert summary_from_json(summary_to_json(summary)) == summary


def test_json_rejects_garbage():
    with pytest.raises(InvalidInputError):
        summary_from_json('{"rows": [{"model": "x"}]}')


def test_text_rounds_to_one_decimal(summary):
    text = summary_text(summary)
    assert "203.6" in text and "174.0" in text
    assert "94.8" in text  # coverage in percent
    assert "0.052" not in text


def test_emit_tables_writes_requested_formats(summary, tmp_path):
    written = emit_tables(summary, tmp_path, ["csv", "json", "txt", "xlsx", "pdf"])
    names = {p.name for p in written}
    assert {"table1.csv", "table2.csv", "table3.csv", "diagnostics.csv", "summary.json", "tables.txt",
            "tables.xlsx", "tables.pdf", "failures.csv"} <= names
    failures = read_csv(tmp_path / "failures.csv")
    assert failures == [{"model": "g2", "L": "1.0", "replication": "17", "column": "p=0.9",
                         "message": "Degenerate estimate: N=0, V=0.0"}]
    assert (tmp_path / "tables.pdf").read_bytes().startswith(b"%PDF")


def test_failures_file_is_written_even_when_empty(tmp_path):
    emit_tables(ReplicationSummary((make_row(),)), tmp_path, ["json"])
    assert (tmp_path / "failures.csv").read_text() == "model,L,replication,column,message\n"
    assert not (tmp_path / "table1.csv").exists()


def test_unknown_format(summary, tmp_path):
    with pytest.raises(InvalidInputError):
        emit_tables(summary, tmp_path, ["docx"])


def test_csv_numbers_round_trip(summary):
    rows = list(csv.DictReader(io.StringIO(to_csv(table1(summary)))))
    assert float(rows[0]["mean[p=1]"]) == 203.6


def test_workbook_sheets(summary):
    wb = load_workbook(io.BytesIO(to_xlsx(summary)))
    assert {"table1", "table2", "table3", "diagnostics", "failures"} <= set(wb.sheetnames)
    assert wb["table1"]["A1"].value == "model"
