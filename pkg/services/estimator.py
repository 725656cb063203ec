"""Border-method ratio estimator of the Poisson intensity parameter beta.

N counts points of the eroded window with no other point within r_tilde,
V is the eroded-window volume at distance > r_tilde from the pattern, and
beta_hat = N / V. W is the pair integral entering the variance estimate

    sigma2_hat = |window_eroded| * (beta_hat / V + beta_hat**2 * W / V**2)

and the confidence interval is beta_hat ± z * sigma_hat / sqrt(|window_eroded|).
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.stats import norm

from config import Config
from services.geometry import PointPattern, SpatialIndex, Window, build_index, erode
from services.gibbs_models import GibbsModel
from services.quadrature import QuadratureGrid, ball_stencil, coverage_mask
from utils.errors import DegenerateEstimateError, InvalidInputError

logger = logging.getLogger(__name__)

GridLike = Union[QuadratureGrid, float, None]


@dataclass(frozen=True)
class EstimateReport:
    beta_hat: float
    n_isolated: int
    empty_volume: float
    pair_volume: float
    sigma2_hat: float
    ci: Tuple[float, float]
    alpha: float
    window_used: Window
    r_tilde: float

    @property
    def half_width(self) -> float:
        return (self.ci[1] - self.ci[0]) / 2

    def covers(self, beta: float) -> bool:
        return self.ci[0] <= beta <= self.ci[1]

    def to_dict(self) -> dict:
        return {
            "beta_hat": self.beta_hat,
            "n_isolated": self.n_isolated,
            "empty_volume": self.empty_volume,
            "pair_volume": self.pair_volume,
            "sigma2_hat": self.sigma2_hat,
            "ci": list(self.ci),
            "alpha": self.alpha,
            "window_used": self.window_used.to_dict(),
            "r_tilde": self.r_tilde,
        }


def resolve_grid(grid: GridLike, window: Window, r_tilde: float, divisor: float) -> QuadratureGrid:
    """Quadrature grid over ``window``: explicit grid, explicit spacing, or r_tilde / divisor."""
    if isinstance(grid, QuadratureGrid):
        return grid if grid.window == window else QuadratureGrid(window, grid.spacing)
    return QuadratureGrid(window, float(grid) if grid else r_tilde / divisor)


def _check_radius(r_tilde: float) -> None:
    if not (r_tilde > 0 and math.isfinite(r_tilde)):
        raise InvalidInputError(f"r_tilde must be positive, got {r_tilde}")


def count_isolated(
    x: PointPattern,
    full_x: PointPattern,
    window_eroded: Window,
    r_tilde: float,
    index: Optional[SpatialIndex] = None,
) -> int:
    """Points of x in the eroded window with no other point of full_x at distance <= r_tilde."""
    _check_radius(r_tilde)
    inside = x.restrict(window_eroded)
    if len(inside) == 0:
        return 0
    index = index or build_index(full_x, r_tilde)
    isolated = 0
    for u in inside.coords:
        # u itself belongs to full_x and sits at distance 0
        if index.distances_within(u, r_tilde).size <= 1:
            isolated += 1
    return isolated


def empty_mask(full_x: PointPattern, r_tilde: float, grid: QuadratureGrid) -> np.ndarray:
    """True on cells u with d(u, full_x) > r_tilde."""
    return ~coverage_mask(full_x.coords, r_tilde, grid)


def empty_space_volume(full_x: PointPattern, window_eroded: Window, r_tilde: float, grid: GridLike = None) -> float:
    _check_radius(r_tilde)
    grid = resolve_grid(grid, window_eroded, r_tilde, Config.V_SPACING_DIVISOR)
    if grid.spacing > r_tilde / 10:
        logger.warning("Coarse quadrature: h=%g exceeds r_tilde/10=%g", grid.spacing, r_tilde / 10)
    return float(np.sum(grid.weights[empty_mask(full_x, r_tilde, grid)]))


def pair_empty_volume(full_x: PointPattern, window_eroded: Window, r_tilde: float, grid: GridLike = None) -> float:
    """Double integral over u in the eroded window and v in B(u, r_tilde) ∩ eroded window of e(u) e(v)."""
    _check_radius(r_tilde)
    grid = resolve_grid(grid, window_eroded, r_tilde, Config.W_SPACING_DIVISOR)
    f = grid.weights * empty_mask(full_x, r_tilde, grid)
    if not f.any():
        return 0.0
    # zero padding outside the grid clips the inner domain to the eroded window
    inner = ndimage.correlate(f, ball_stencil(r_tilde, grid.spacing, grid.window.dim), mode="constant", cval=0.0)
    return float(np.sum(f * inner))


def normal_quantile(alpha: float) -> float:
    if not (0.0 < alpha < 1.0):
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    return float(norm.ppf(1.0 - alpha / 2.0))


def isolated_and_empty(
    full_x: PointPattern,
    window: Window,
    r_tilde: float,
    grid: GridLike = None,
    index: Optional[SpatialIndex] = None,
) -> Tuple[int, float, Window]:
    """N and V on the erosion of ``window`` by r_tilde, plus that eroded window."""
    _check_radius(r_tilde)
    eroded = erode(window, r_tilde)
    index = index or build_index(full_x, r_tilde)
    n_isolated = count_isolated(full_x.restrict(eroded), full_x, eroded, r_tilde, index)
    return n_isolated, empty_space_volume(full_x, eroded, r_tilde, grid), eroded


def estimate_beta(
    full_x: PointPattern,
    window: Window,
    r_tilde: float,
    grid: GridLike = None,
    alpha: float = Config.DEFAULT_ALPHA,
    pair_grid: GridLike = None,
) -> EstimateReport:
    z = normal_quantile(alpha)
    n_isolated, empty_volume, eroded = isolated_and_empty(full_x, window, r_tilde, grid)
    if empty_volume <= 0:
        raise DegenerateEstimateError(n_isolated, empty_volume)
    if pair_grid is None and grid is not None:
        pair_grid = 2 * (grid.spacing if isinstance(grid, QuadratureGrid) else float(grid))
    pair_volume = pair_empty_volume(full_x, eroded, r_tilde, pair_grid)

    area = eroded.volume
    beta_hat = n_isolated / empty_volume
    sigma2_hat = area * (beta_hat / empty_volume + beta_hat**2 * pair_volume / empty_volume**2)
    half = z * math.sqrt(sigma2_hat / area)
    return EstimateReport(
        beta_hat=beta_hat,
        n_isolated=n_isolated,
        empty_volume=empty_volume,
        pair_volume=pair_volume,
        sigma2_hat=sigma2_hat,
        ci=(beta_hat - half, beta_hat + half),
        alpha=alpha,
        window_used=eroded,
        r_tilde=r_tilde,
    )


def innovation(
    full_x: PointPattern,
    model: GibbsModel,
    window_eroded: Window,
    r_tilde: float,
    grid: GridLike = None,
) -> float:
    """Sum of h(u, X minus u) over the eroded window minus the compensator integral of h * lambda."""
    _check_radius(r_tilde)
    grid = resolve_grid(grid, window_eroded, r_tilde, Config.V_SPACING_DIVISOR)
    index = build_index(full_x, max(r_tilde, model.R))
    n_isolated = count_isolated(full_x.restrict(window_eroded), full_x, window_eroded, r_tilde, index)

    empty = empty_mask(full_x, r_tilde, grid)
    weights = grid.weights[empty]
    dim = window_eroded.dim
    if model.R <= r_tilde or len(full_x) == 0:
        # no point of X within R of an empty cell: lambda_tilde(u, X) = lambda_tilde(u, empty)
        compensator = math.exp(model.empty_log_interaction(dim)) * float(np.sum(weights))
    else:
        cells = grid.points()[empty.ravel()]
        lam = np.empty(len(cells))
        for k, u in enumerate(cells):
            ids = index.query_ball(u, model.R)
            lam[k] = math.exp(model.local_log_interaction(u, full_x.coords[ids])) if ids else \
                math.exp(model.empty_log_interaction(dim))
        compensator = float(np.sum(weights * lam))
    return n_isolated - model.beta * compensator
