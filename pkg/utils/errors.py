from functools import wraps
from flask import jsonify


class GibbsBetaError(Exception):
    """Base class for every error raised by the estimation engine."""


class InvalidInputError(GibbsBetaError, ValueError):
    pass


class DomainTooSmallError(GibbsBetaError, ValueError):
    pass


class InvalidModelError(GibbsBetaError, ValueError):
    pass


class InvalidResolutionError(GibbsBetaError, ValueError):
    pass


class SamplerFailureError(GibbsBetaError, RuntimeError):
    pass


class InsufficientDataError(GibbsBetaError, ValueError):
    pass


class DegenerateEstimateError(GibbsBetaError, ArithmeticError):
    """No empty space left in the eroded window, so N/V is undefined."""

    def __init__(self, n_isolated: int, empty_volume: float):
        super().__init__(f"Degenerate estimate: N={n_isolated}, V={empty_volume}")
        self.n_isolated = n_isolated
        self.empty_volume = empty_volume


def api_errors(fn):
    """Turn engine errors raised inside a route into a 400 JSON response."""

    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DegenerateEstimateError as exc:
            return jsonify({"error": str(exc), "n_isolated": exc.n_isolated, "empty_volume": exc.empty_volume}), 400
        except GibbsBetaError as exc:
            return jsonify({"error": str(exc)}), 400

    return wrapper
