"""Finite-range selection: profile beta_hat over r_tilde and locate the slope breakpoint."""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import f as f_dist

from config import Config
from services.estimator import EstimateReport, estimate_beta, isolated_and_empty
from services.geometry import PointPattern, Window
from utils.errors import InsufficientDataError, InvalidInputError

logger = logging.getLogger(__name__)

MIN_PROFILE_POINTS = 5
FLATNESS_LEVEL = 0.05
R_GUESS = 0.05


@dataclass(frozen=True)
class BetaProfile:
    grid: Tuple[float, ...]
    beta_hats: Tuple[float, ...]
    degenerate: Tuple[bool, ...]

    def valid_points(self) -> Tuple[np.ndarray, np.ndarray]:
        ok = ~np.asarray(self.degenerate, dtype=bool)
        return np.asarray(self.grid)[ok], np.asarray(self.beta_hats)[ok]

    def to_dict(self) -> dict:
        return {"grid": list(self.grid), "beta_hats": [None if math.isnan(b) else b for b in self.beta_hats],
                "degenerate": list(self.degenerate)}


@dataclass(frozen=True)
class BreakpointFit:
    r_hat: float
    left_slope: float
    right_slope: float
    left_intercept: float
    right_intercept: float
    sse: float
    sse_single_line: float
    p_value: float
    flat: bool
    n_points: int

    def predict(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.r_hat, self.left_intercept + self.left_slope * r,
                        self.right_intercept + self.right_slope * r)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def parse_grid(text: str) -> np.ndarray:
    """'lo:hi:n' -> n equally spaced values from lo to hi inclusive."""
    try:
        lo, hi, n = text.split(":")
        values = np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise InvalidInputError(f"Grid must look like 'lo:hi:n', got '{text}'") from None
    return values


def default_grid(r_guess: float = R_GUESS, n: int = 13) -> np.ndarray:
    return np.linspace(0.4 * r_guess, 1.6 * r_guess, n)


def _check_grid(grid: np.ndarray, window: Window) -> None:
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidInputError("r_tilde grid must be a non-empty list")
    if np.any(np.diff(grid) <= 0):
        raise InvalidInputError("r_tilde grid must be strictly increasing")
    limit = float(np.min(window.sides)) / 4
    if grid[0] <= 0 or grid[-1] >= limit:
        raise InvalidInputError(f"r_tilde grid must lie in (0, {limit:g})")


def beta_profile(
    full_x: PointPattern,
    window: Window,
    grid_of_rtilde: Sequence[float],
    quad: Optional[float] = None,
) -> BetaProfile:
    """beta_hat(r_tilde) for each grid value, each on its own eroded window."""
    grid = np.asarray(grid_of_rtilde, dtype=float)
    _check_grid(grid, window)
    betas, flags = [], []
    for r in grid:
        n_isolated, empty_volume, _ = isolated_and_empty(full_x, window, float(r), quad)
        if empty_volume > 0:
            betas.append(n_isolated / empty_volume)
            flags.append(False)
        else:
            betas.append(math.nan)
            flags.append(True)
    return BetaProfile(tuple(grid.tolist()), tuple(betas), tuple(flags))


def _broken_stick(x: np.ndarray, y: np.ndarray, c: float):
    design = np.column_stack([np.ones_like(x), np.minimum(x - c, 0.0), np.maximum(x - c, 0.0)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return float(resid @ resid), coef


def segmented_breakpoint(profile: BetaProfile, n_candidates: int = Config.BREAKPOINT_CANDIDATES) -> BreakpointFit:
    """Continuous two-segment least-squares fit; the breakpoint minimises the SSE."""
    x, y = profile.valid_points()
    if x.size < MIN_PROFILE_POINTS:
        raise InsufficientDataError(f"Breakpoint fit needs >= {MIN_PROFILE_POINTS} valid points, got {x.size}")
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]

    candidates = np.linspace(x[1], x[-2], n_candidates)
    sses = np.array([_broken_stick(x, y, c)[0] for c in candidates])
    k = int(np.argmin(sses))
    lo, hi = candidates[max(k - 1, 0)], candidates[min(k + 1, n_candidates - 1)]
    best_c, best_sse = float(candidates[k]), float(sses[k])
    if hi > lo:
        refined = minimize_scalar(lambda c: _broken_stick(x, y, c)[0], bounds=(lo, hi), method="bounded",
                                  options={"xatol": (x[-2] - x[1]) * 1e-7})
        if refined.fun < best_sse:
            best_c, best_sse = float(refined.x), float(refined.fun)
    sse, (at_break, left, right) = _broken_stick(x, y, best_c)

    slope, intercept = np.polyfit(x, y, 1)
    line_resid = y - (intercept + slope * x)
    sse_line = float(line_resid @ line_resid)
    p_value = _improvement_p_value(sse_line, sse, x.size, float(np.sum((y - y.mean()) ** 2)))
    fit = BreakpointFit(
        r_hat=best_c,
        left_slope=float(left),
        right_slope=float(right),
        left_intercept=float(at_break - left * best_c),
        right_intercept=float(at_break - right * best_c),
        sse=sse,
        sse_single_line=sse_line,
        p_value=p_value,
        flat=p_value > FLATNESS_LEVEL,
        n_points=int(x.size),
    )
    if fit.flat:
        logger.info("Breakpoint fit is flat (p=%.3g); r_hat=%.4g is not informative", p_value, best_c)
    return fit


def _improvement_p_value(sse_line: float, sse: float, n: int, tss: float) -> float:
    """F test of the broken stick (kink slope + location) against a single line."""
    gain = sse_line - sse
    if gain <= 1e-12 * max(tss, np.finfo(float).tiny):
        return 1.0
    if sse <= 0:
        return 0.0
    stat = (gain / 2) / (sse / (n - 4)) if n > 4 else math.inf
    return float(f_dist.sf(stat, 2, max(n - 4, 1)))


def estimate_with_range(
    full_x: PointPattern,
    window: Window,
    grid: Optional[Sequence[float]] = None,
    quad: Optional[float] = None,
    alpha: float = Config.DEFAULT_ALPHA,
    profile: Optional[BetaProfile] = None,
) -> Tuple[BreakpointFit, EstimateReport]:
    """Profile, fit the breakpoint, then re-estimate beta, sigma2 and the CI at r_tilde = r_hat.

    A ``profile`` already computed for ``full_x`` on ``window`` is fitted as is and ``grid`` is ignored.
    """
    if profile is None:
        profile = beta_profile(full_x, window, default_grid() if grid is None else grid, quad)
    fit = segmented_breakpoint(profile)
    return fit, estimate_beta(full_x, window, fit.r_hat, quad, alpha)
