from datetime import datetime
from flask_sqlalchemy import SQLAlchemy

db = SQLAlchemy()


class ExperimentRun(db.Model):
    __tablename__ = "experiment_runs"

    id = db.Column(db.Integer, primary_key=True)
    name = db.Column(db.String(120), nullable=False)
    master_seed = db.Column(db.BigInteger, nullable=False, default=0)
    config_json = db.Column(db.Text, nullable=False)
    status = db.Column(db.String(20), nullable=False, default="running")  # running, completed, failed
    failure_count = db.Column(db.Integer, nullable=False, default=0)
    created_at = db.Column(db.DateTime, default=datetime.utcnow)
    finished_at = db.Column(db.DateTime, nullable=True)

    summaries = db.relationship("SummaryRecord", backref="run", cascade="all, delete-orphan", lazy=True,
                                order_by="SummaryRecord.id")
    failures = db.relationship("FailureLog", backref="run", cascade="all, delete-orphan", lazy=True,
                               order_by="FailureLog.id")

    def to_dict(self, with_rows: bool = False) -> dict:
        data = {
            "id": self.id,
            "name": self.name,
            "master_seed": self.master_seed,
            "status": self.status,
            "failure_count": self.failure_count,
            "created_at": self.created_at.isoformat() if self.created_at else None,
            "finished_at": self.finished_at.isoformat() if self.finished_at else None,
        }
        if with_rows:
            data["rows"] = [s.to_dict() for s in self.summaries]
            data["failures"] = [f.to_dict() for f in self.failures]
        return data


class SummaryRecord(db.Model):
    __tablename__ = "summary_records"

    id = db.Column(db.Integer, primary_key=True)
    run_id = db.Column(db.Integer, db.ForeignKey("experiment_runs.id"), nullable=False)
    model = db.Column(db.String(60), nullable=False)
    L = db.Column(db.Float, nullable=False)
    column = db.Column(db.String(20), nullable=False)  # "p=0.9" ... or "R_hat"
    replications = db.Column(db.Integer, nullable=False)
    n_valid = db.Column(db.Integer, nullable=False)
    failure_count = db.Column(db.Integer, nullable=False, default=0)
    mean_count = db.Column(db.Float)
    mean_beta = db.Column(db.Float)
    sd_beta = db.Column(db.Float)
    coverage_rate = db.Column(db.Float)
    mean_sigma2 = db.Column(db.Float)
    mean_n_isolated = db.Column(db.Float)
    mean_empty_volume = db.Column(db.Float)
    gap_mean = db.Column(db.Float)
    gap_se = db.Column(db.Float)
    mean_r_hat = db.Column(db.Float)
    sd_r_hat = db.Column(db.Float)
    sigma2_se = db.Column(db.Float)
    single_replication = db.Column(db.Boolean, default=False)

    FIELDS = (
        "model", "L", "column", "replications", "n_valid", "failure_count", "mean_count", "mean_beta",
        "sd_beta", "coverage_rate", "mean_sigma2", "mean_n_isolated", "mean_empty_volume", "gap_mean",
        "gap_se", "mean_r_hat", "sd_r_hat", "sigma2_se", "single_replication",
    )

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.FIELDS}


class FailureLog(db.Model):
    __tablename__ = "failure_logs"

    id = db.Column(db.Integer, primary_key=True)
    run_id = db.Column(db.Integer, db.ForeignKey("experiment_runs.id"), nullable=False)
    model = db.Column(db.String(60), nullable=False)
    L = db.Column(db.Float, nullable=False)
    replication = db.Column(db.Integer, nullable=False)
    column = db.Column(db.String(20), nullable=False)
    message = db.Column(db.Text, nullable=False)

    def to_dict(self) -> dict:
        return {"model": self.model, "L": self.L, "replication": self.replication,
                "column": self.column, "message": self.message}
