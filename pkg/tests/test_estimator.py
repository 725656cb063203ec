import math

import numpy as np
import pytest

from services.estimator import (
    count_isolated,
    empty_space_volume,
    estimate_beta,
    innovation,
    isolated_and_empty,
    normal_quantile,
    pair_empty_volume,
)
from services.geometry import PointPattern, Window, erode
from services.gibbs_models import GibbsModel, Variant
from services.quadrature import QuadratureGrid, coverage_mask
from services.sampler import SamplerConfig, sample
from utils.errors import DegenerateEstimateError, DomainTooSmallError, InvalidInputError


def poisson_pattern(rng, beta, side):
    n = rng.poisson(beta * side * side)
    return PointPattern(side * rng.random((n, 2)))


def test_count_isolated_matches_brute_force(rng):
    window = Window.square(1.0)
    for _ in range(100):
        x = PointPattern(rng.random((int(rng.integers(0, 120)), 2)))
        r = float(rng.uniform(0.01, 0.1))
        eroded = erode(window, r)
        expected = 0
        for i, u in enumerate(x.coords):
            if not eroded.contains(u[None, :])[0]:
                continue
            others = np.delete(x.coords, i, axis=0)
            if others.size == 0 or np.min(np.linalg.norm(others - u, axis=1)) > r:
                expected += 1
        assert count_isolated(x, x, eroded, r) == expected


def test_neighbour_at_exactly_r_tilde_is_not_isolated():
    x = PointPattern([[0.5, 0.5], [0.5625, 0.5]])
    eroded = erode(Window.square(1.0), 0.0625)
    assert count_isolated(x, x, eroded, 0.0625) == 0
    assert count_isolated(x, x, eroded, 0.0624) == 2


def test_points_outside_eroded_window_still_block():
    # the neighbour lies in the border strip but still removes the inner point
    x = PointPattern([[0.1, 0.5], [0.03, 0.5]])
    eroded = erode(Window.square(1.0), 0.08)
    assert count_isolated(x.restrict(eroded), x, eroded, 0.08) == 0


def test_single_point_estimate():
    window = Window.square(1.0)
    report = estimate_beta(PointPattern([[0.5, 0.5]]), window, 0.05)
    area = 0.81
    assert report.n_isolated == 1
    assert report.empty_volume == pytest.approx(area - math.pi * 0.0025, abs=1e-3)
    assert report.beta_hat == pytest.approx(1 / report.empty_volume)
    assert report.window_used.lower == pytest.approx((0.05, 0.05))
    assert report.window_used.upper == pytest.approx((0.95, 0.95))
    expected = area * (report.beta_hat / report.empty_volume
                       + report.beta_hat**2 * report.pair_volume / report.empty_volume**2)
    assert report.sigma2_hat == pytest.approx(expected)
    assert report.half_width == pytest.approx(1.959963984540054 * math.sqrt(report.sigma2_hat / area))
    assert report.covers(report.beta_hat)


def test_empty_pattern_gives_zero():
    report = estimate_beta(PointPattern.empty(), Window.square(1.0), 0.05)
    assert report.beta_hat == 0.0
    assert report.sigma2_hat == 0.0
    assert report.ci == (0.0, 0.0)


def test_fully_covered_window_is_degenerate():
    axis = np.arange(0.0, 1.0001, 0.02)
    lattice = PointPattern(np.array([[a, b] for a in axis for b in axis]))
    with pytest.raises(DegenerateEstimateError) as err:
        estimate_beta(lattice, Window.square(1.0), 0.05)
    assert err.value.n_isolated == 0
    assert err.value.empty_volume == 0.0


def test_radius_must_fit_the_window():
    with pytest.raises(DomainTooSmallError):
        estimate_beta(PointPattern([[0.5, 0.5]]), Window.square(1.0), 0.5)
    with pytest.raises(InvalidInputError):
        estimate_beta(PointPattern([[0.5, 0.5]]), Window.square(1.0), -0.1)


def test_normal_quantile():
    assert normal_quantile(0.05) == pytest.approx(1.959963984540054)
    with pytest.raises(InvalidInputError):
        normal_quantile(1.5)


def test_pair_volume_of_empty_pattern_matches_set_covariance():
    a, r = 0.9, 0.05
    eroded = Window((0.05, 0.05), (0.95, 0.95))
    exact = a * a * math.pi * r**2 - 2 * a * (4 / 3) * r**3 + r**4 / 2
    assert pair_empty_volume(PointPattern.empty(), eroded, r) == pytest.approx(exact, rel=0.03)


def test_isolated_and_empty_agree_with_estimate(rng):
    x = poisson_pattern(rng, 100, 1.0)
    n, v, eroded = isolated_and_empty(x, Window.square(1.0), 0.04)
    report = estimate_beta(x, Window.square(1.0), 0.04)
    assert report.beta_hat == pytest.approx(n / v)
    assert eroded == report.window_used


def test_innovation_inside_range_matches_direct_sum():
    model = GibbsModel(Variant.STRAUSS, beta=50.0, R=0.1, gamma=0.5)
    x = PointPattern([[0.3, 0.3], [0.36, 0.3], [0.7, 0.7], [0.45, 0.62]])
    eroded = Window((0.2, 0.2), (0.8, 0.8))
    r_tilde, h = 0.05, 0.01
    grid = QuadratureGrid(eroded, h)

    empty = ~coverage_mask(x.coords, r_tilde, grid).ravel()
    compensator = sum(w * model.papangelou(u, x) for u, w in zip(grid.points()[empty], grid.weights.ravel()[empty]))
    n = count_isolated(x.restrict(eroded), x, eroded, r_tilde)
    assert innovation(x, model, eroded, r_tilde, h) == pytest.approx(n - compensator)


def test_innovation_beyond_range_is_isolated_count_balance(rng):
    model = GibbsModel(Variant.STRAUSS, beta=80.0, R=0.04, gamma=0.3)
    x = poisson_pattern(rng, 80, 1.0)
    eroded = erode(Window.square(1.0), 0.05)
    n, v, _ = isolated_and_empty(x, Window.square(1.0), 0.05)
    assert innovation(x, model, eroded, 0.05) == pytest.approx(n - 80.0 * v)


def test_poisson_estimates_are_centered(rng):
    betas = []
    for _ in range(100):
        betas.append(estimate_beta(poisson_pattern(rng, 100, 1.0), Window.square(1.0), 0.05, grid=0.005).beta_hat)
    se = np.std(betas, ddof=1) / math.sqrt(len(betas))
    assert abs(np.mean(betas) - 100.0) < 4 * se


@pytest.mark.slow
def test_poisson_confidence_interval_coverage(rng):
    window, hits, reps = Window.square(2.0), 0, 500
    for _ in range(reps):
        hits += estimate_beta(poisson_pattern(rng, 200, 2.0), window, 0.05).covers(200.0)
    assert hits / reps == pytest.approx(0.95, abs=0.03)


@pytest.mark.slow
def test_strauss_chain_innovation_is_centered():
    model = GibbsModel(Variant.STRAUSS, beta=200.0, R=0.05, gamma=0.5)
    window = Window.square(0.5)
    r_tilde = 0.03
    eroded = erode(window, r_tilde)
    chain = SamplerConfig(steps=20_000, burn_in=10_000)
    values = []
    for seed in range(500):
        x, _ = sample(model, window, chain.with_seed(seed))
        values.append(innovation(x, model, eroded, r_tilde, grid=0.005))
    se = np.std(values, ddof=1) / math.sqrt(len(values))
    assert abs(np.mean(values)) < 3 * se


def test_doubling_everything_divides_beta_hat_by_four(random_pattern):
    small = estimate_beta(random_pattern, Window.square(1.0), 0.05, grid=0.0025)
    large = estimate_beta(random_pattern.scale(2.0), Window.square(2.0), 0.1, grid=0.005)
    assert large.n_isolated == small.n_isolated
    assert large.empty_volume == pytest.approx(4 * small.empty_volume, rel=1e-12)
    assert large.beta_hat == pytest.approx(small.beta_hat / 4, rel=1e-12)


def test_shifting_pattern_and_window_leaves_estimate_unchanged(random_pattern):
    shift = np.array([3.0, -2.0])
    base = estimate_beta(random_pattern, Window.square(1.0), 0.05, grid=0.0025)
    moved = estimate_beta(random_pattern.translate(shift), Window((3.0, -2.0), (4.0, -1.0)), 0.05, grid=0.0025)
    assert moved.n_isolated == base.n_isolated
    assert moved.beta_hat == pytest.approx(base.beta_hat, rel=1e-9)


def test_estimate_uses_the_hand_eroded_window(random_pattern):
    side, r, h = 1.0, 0.05, 0.0025
    by_hand = Window((r, r), (side - r, side - r))
    report = estimate_beta(random_pattern, Window.square(side), r, grid=h)
    assert report.window_used == by_hand
    assert report.n_isolated == count_isolated(random_pattern.restrict(by_hand), random_pattern, by_hand, r)
    assert report.empty_volume == empty_space_volume(random_pattern, by_hand, r, h)


def test_halving_the_spacing_moves_empty_volume_within_boundary_bound(random_pattern):
    r, h = 0.05, 0.0025
    eroded = erode(Window.square(1.0), r)
    coarse = empty_space_volume(random_pattern, eroded, r, h)
    fine = empty_space_volume(random_pattern, eroded, r, h / 2)
    perimeter = len(random_pattern) * 2 * math.pi * r
    assert abs(coarse - fine) < h * perimeter / 4
