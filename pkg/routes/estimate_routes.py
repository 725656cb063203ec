from flask import Blueprint, jsonify, request
from openpyxl import load_workbook

from services.estimator import estimate_beta
from services.geometry import PointPattern, Window
from services.gibbs_models import model_from_dict, preset
from services.range_select import beta_profile, default_grid, estimate_with_range, parse_grid
from services.sampler import SamplerConfig, sample
from utils.errors import InvalidInputError, api_errors

estimate_bp = Blueprint("estimate", __name__, url_prefix="/api")


def _payload() -> dict:
    if request.is_json:
        return request.get_json(silent=True) or {}
    return request.form.to_dict()


def _to_float(data: dict, key: str, default=None):
    value = data.get(key, default)
    if value is None:
        raise InvalidInputError(f"'{key}' is required")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise InvalidInputError(f"'{key}' must be a number, got {value!r}") from None


def _window(data: dict) -> Window:
    value = data.get("window", 1.0)
    if isinstance(value, dict):
        return Window(tuple(value.get("lower", ())), tuple(value.get("upper", ())))
    return Window.square(_to_float(data, "window", 1.0), int(data.get("dim", 2)))


def _read_upload(file_storage) -> PointPattern:
    filename = (file_storage.filename or "").lower()
    if filename.endswith(".csv"):
        return PointPattern.from_csv(file_storage.read().decode("utf-8-sig"))
    if filename.endswith(".xlsx"):
        ws = load_workbook(file_storage, read_only=True).active
        rows = list(ws.iter_rows(values_only=True))
        if not rows:
            return PointPattern.empty()
        headers = [str(h).strip().lower() for h in rows[0] if h is not None]
        if headers not in (["x", "y"], ["x", "y", "z"]):
            raise InvalidInputError(f"Pattern sheet header must be x,y[,z], got {rows[0]}")
        return PointPattern([r[: len(headers)] for r in rows[1:] if r and r[0] is not None], len(headers))
    raise InvalidInputError("Unsupported file type. Use .csv or .xlsx")


def _pattern(data: dict) -> PointPattern:
    if "pattern" in request.files:
        return _read_upload(request.files["pattern"])
    if "points" not in data:
        raise InvalidInputError("Send a 'pattern' file or a 'points' list")
    points = data["points"]
    dim = len(points[0]) if points else int(data.get("dim", 2))
    return PointPattern(points, dim)


def _model(data: dict):
    description = data.get("model")
    if isinstance(description, str):
        return preset(description)
    if isinstance(description, dict):
        return model_from_dict(description)
    raise InvalidInputError("'model' must be a preset name or a parameter object")


@estimate_bp.post("/simulate")
@api_errors
def simulate():
    data = _payload()
    model = _model(data)
    window = _window(data)
    overrides = {k: int(data[k]) for k in ("steps", "burn_in") if k in data}
    if "steps" in overrides and "burn_in" not in overrides:
        overrides["burn_in"] = overrides["steps"] // 2
    cfg = SamplerConfig.for_window(window, seed=int(data.get("seed", 0)), **overrides)
    pattern, diagnostics = sample(model, window, cfg)
    return jsonify({
        "model": model.to_dict(),
        "window": window.to_dict(),
        "sampler": cfg.to_dict(),
        "count": len(pattern),
        "points": pattern.coords.tolist(),
        "acceptance_rate_birth": diagnostics.acceptance_rate_birth,
        "acceptance_rate_death": diagnostics.acceptance_rate_death,
    })


@estimate_bp.post("/estimate")
@api_errors
def estimate():
    data = _payload()
    report = estimate_beta(
        _pattern(data),
        _window(data),
        _to_float(data, "r_tilde"),
        grid=float(data["grid_h"]) if data.get("grid_h") else None,
        alpha=_to_float(data, "alpha", 0.05),
    )
    return jsonify(report.to_dict())


@estimate_bp.post("/range")
@api_errors
def select_range():
    data = _payload()
    grid = data.get("grid")
    if grid is None:
        grid = default_grid()
    elif isinstance(grid, str):
        grid = parse_grid(grid)
    pattern, window = _pattern(data), _window(data)
    profile = beta_profile(pattern, window, grid)
    fit, report = estimate_with_range(pattern, window, alpha=_to_float(data, "alpha", 0.05), profile=profile)
    return jsonify({
        "profile": profile.to_dict(),
        "fit": fit.to_dict(),
        "estimate": report.to_dict(),
    })
