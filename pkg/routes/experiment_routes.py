import json
from datetime import datetime
from io import BytesIO

from flask import Blueprint, current_app, jsonify, request, send_file

from models import ExperimentRun, FailureLog, SummaryRecord, db
from services.experiment_engine import (
    FailureRecord,
    ReplicationSummary,
    SummaryRow,
    experiments_from_dict,
    run_study,
)
from services.tables import all_tables, failures_table, to_csv, to_pdf, to_xlsx
from utils.errors import GibbsBetaError, InvalidInputError, api_errors

experiment_bp = Blueprint("experiments", __name__, url_prefix="/api/experiments")


def _store(run: ExperimentRun, summary: ReplicationSummary) -> None:
    for row in summary.rows:
        db.session.add(SummaryRecord(run_id=run.id, **{f: getattr(row, f) for f in SummaryRecord.FIELDS}))
    for f in summary.failures:
        db.session.add(FailureLog(run_id=run.id, model=f.model, L=f.L, replication=f.replication,
                                  column=f.column, message=f.message))
    run.failure_count = len(summary.failures)


def _summary_of(run: ExperimentRun) -> ReplicationSummary:
    rows = tuple(SummaryRow(**s.to_dict()) for s in sorted(run.summaries, key=lambda s: s.id))
    failures = tuple(FailureRecord(**f.to_dict()) for f in sorted(run.failures, key=lambda f: f.id))
    return ReplicationSummary(rows, failures)


def _get_run(run_id: int) -> ExperimentRun:
    run = db.session.get(ExperimentRun, run_id)
    if run is None:
        raise LookupError(run_id)
    return run


@experiment_bp.post("")
@api_errors
def create_experiment():
    data = request.get_json(silent=True) or {}
    threads = int(data.pop("threads", current_app.config["DEFAULT_THREADS"]))
    name = str(data.pop("name", "") or f"experiment-{datetime.utcnow():%Y%m%d-%H%M%S}")
    configs = experiments_from_dict(data)

    run = ExperimentRun(name=name, master_seed=int(data.get("master_seed", 0)),
                        config_json=json.dumps([c.to_dict() for c in configs]))
    db.session.add(run)
    db.session.commit()
    try:
        summary = run_study(configs, threads)
    except GibbsBetaError:
        run.status = "failed"
        run.finished_at = datetime.utcnow()
        db.session.commit()
        raise
    _store(run, summary)
    run.status = "completed"
    run.finished_at = datetime.utcnow()
    db.session.commit()
    return jsonify(run.to_dict(with_rows=True)), 201


@experiment_bp.get("")
def list_experiments():
    runs = ExperimentRun.query.order_by(ExperimentRun.created_at.desc()).all()
    return jsonify([r.to_dict() for r in runs])


@experiment_bp.get("/<int:run_id>")
def get_experiment(run_id):
    run = db.session.get(ExperimentRun, run_id)
    if run is None:
        return jsonify({"error": "Experiment not found"}), 404
    data = run.to_dict(with_rows=True)
    data["config"] = json.loads(run.config_json)
    return jsonify(data)


@experiment_bp.get("/<int:run_id>/export/<fmt>")
@api_errors
def export_experiment(run_id, fmt):
    try:
        run = _get_run(run_id)
    except LookupError:
        return jsonify({"error": "Experiment not found"}), 404
    summary = _summary_of(run)
    if fmt == "excel":
        output, name = BytesIO(to_xlsx(summary)), f"experiment_{run_id}.xlsx"
    elif fmt == "pdf":
        output, name = BytesIO(to_pdf(summary, title=f"Experiment {run.name}")), f"experiment_{run_id}.pdf"
    elif fmt == "csv":
        table = request.args.get("table", "table1")
        tables = all_tables(summary)
        tables["failures"] = failures_table(summary)
        if table not in tables:
            raise InvalidInputError(f"Unknown table '{table}'. Available: {', '.join(tables)}")
        output, name = BytesIO(to_csv(tables[table]).encode("utf-8")), f"experiment_{run_id}_{table}.csv"
    else:
        raise InvalidInputError(f"Unknown export format '{fmt}'. Use excel, pdf or csv")
    output.seek(0)
    return send_file(output, as_attachment=True, download_name=name)
