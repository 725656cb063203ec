import itertools
import math

import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from services.geometry import PointPattern, Window, count_in_annulus
from services.gibbs_models import (
    PRESETS,
    GibbsModel,
    Variant,
    ball_union_volume,
    load_model,
    log_interaction,
    model_from_dict,
    papangelou,
    preset,
    triplet_count,
)
from utils.errors import InvalidModelError

U = [0.5, 0.5]


def strauss(gamma=0.5, R=0.0625, beta=100.0):
    return GibbsModel(Variant.STRAUSS, beta=beta, R=R, gamma=gamma)


def test_strauss_counts_closed_range():
    x = PointPattern([[0.5625, 0.5], [0.5, 0.4375], [0.75, 0.75]])
    assert papangelou(strauss(), U, x) == pytest.approx(100.0 * 0.25)


def test_every_variant_is_beta_on_empty_configuration():
    for name in PRESETS:
        model = preset(name)
        if model.variant is Variant.AREA_INTERACTION:
            continue
        assert papangelou(model, U, PointPattern.empty()) == pytest.approx(model.beta)


def test_area_interaction_is_not_normalised_on_empty():
    model = preset("area1")
    expected = model.beta * 0.5 ** (math.pi * (model.R / 2) ** 2)
    assert papangelou(model, U, PointPattern.empty()) == pytest.approx(expected)
    assert not model.satisfies_identifiability


def test_area2_halves_the_isolated_point_intensity():
    model = preset("area2")
    assert papangelou(model, U, PointPattern.empty()) == pytest.approx(0.5 * model.beta, rel=1e-9)
    assert papangelou(model, U, PointPattern([[0.9, 0.9]])) == pytest.approx(0.5 * model.beta, rel=1e-9)
    assert papangelou(model, U, PointPattern([[0.51, 0.5]])) > 0.5 * model.beta


def test_strauss_gamma_zero_is_hard_core():
    x = PointPattern([[0.55, 0.5]])
    assert papangelou(strauss(gamma=0.0), U, x) == 0.0
    assert papangelou(strauss(gamma=0.0), U, PointPattern([[0.7, 0.5]])) == 100.0


def test_poisson_limit():
    x = PointPattern(np.random.default_rng(3).random((40, 2)))
    assert papangelou(strauss(gamma=1.0), U, x) == pytest.approx(100.0)
    assert strauss(gamma=1.0).is_poisson


def test_hard_core_strauss():
    model = GibbsModel(Variant.STRAUSS_HARD_CORE, beta=10.0, R=0.125, gamma=0.5, delta=0.0625)
    assert papangelou(model, U, PointPattern([[0.5625, 0.5]])) == 0.0
    assert papangelou(model, U, PointPattern([[0.625, 0.5]])) == pytest.approx(5.0)
    assert papangelou(model, U, PointPattern([[0.75, 0.5]])) == pytest.approx(10.0)


def test_piecewise_strauss_bins_are_closed():
    model = GibbsModel(Variant.PIECEWISE_STRAUSS, beta=1.0, R=0.25, gammas=(0.5, 0.25), radii=(0.125, 0.25))
    x = PointPattern([[0.5625, 0.5], [0.625, 0.5], [0.75, 0.5]])
    # 0.125 sits on the shared edge and counts in both bins
    expected = 0.5 ** 2 * 0.25 ** 2
    assert papangelou(model, U, x) == pytest.approx(expected)


def test_triplets_counts_close_neighbour_pairs():
    model = GibbsModel(Variant.TRIPLETS, beta=1.0, R=0.125, gamma=0.5)
    x = PointPattern([[0.5625, 0.5], [0.5, 0.5625], [0.375, 0.375]])
    assert papangelou(model, U, x) == pytest.approx(0.5)


def test_geyer_single_neighbour():
    model = GibbsModel(Variant.GEYER, beta=1.0, R=0.125, gamma=1.5, sat=1.0)
    x = PointPattern([[0.5625, 0.5]])
    assert papangelou(model, U, x) == pytest.approx(1.5 ** 2)


def test_geyer_saturated_neighbour_adds_nothing():
    model = GibbsModel(Variant.GEYER, beta=1.0, R=0.125, gamma=1.5, sat=1.0)
    x = PointPattern([[0.5625, 0.5], [0.625, 0.5]])
    # u gains one close neighbour; that neighbour is already saturated
    assert papangelou(model, U, x) == pytest.approx(1.5)


def test_lennard_jones_finite_range():
    model = GibbsModel(Variant.LENNARD_JONES, beta=1.0, R=0.1, theta=0.05)
    r = 0.08
    q = (0.05 / r) ** 6
    assert papangelou(model, U, PointPattern([[0.5 + r, 0.5]])) == pytest.approx(math.exp(q - q * q))
    assert papangelou(model, U, PointPattern([[0.7, 0.5]])) == pytest.approx(1.0)


def test_triplet_count_matches_brute_force(rng):
    for _ in range(100):
        x = PointPattern(rng.random((int(rng.integers(0, 25)), 2)))
        R = float(rng.uniform(0.05, 0.4))
        brute = sum(
            1 for a, b, c in itertools.combinations(x.coords, 3)
            if np.linalg.norm(a - b) <= R and np.linalg.norm(a - c) <= R and np.linalg.norm(b - c) <= R
        )
        assert triplet_count(x, R) == brute


@pytest.mark.parametrize("fields", [
    dict(variant=Variant.STRAUSS, beta=0.0, R=0.05, gamma=0.5),
    dict(variant=Variant.STRAUSS, beta=1.0, R=0.0, gamma=0.5),
    dict(variant=Variant.STRAUSS, beta=1.0, R=0.05, gamma=1.5),
    dict(variant=Variant.STRAUSS_HARD_CORE, beta=1.0, R=0.05, gamma=0.5, delta=0.05),
    dict(variant=Variant.PIECEWISE_STRAUSS, beta=1.0, R=0.05, gammas=(0.5,), radii=(0.04,)),
    dict(variant=Variant.GEYER, beta=1.0, R=0.05, gamma=0.0),
])
def test_invalid_parameters(fields):
    with pytest.raises(InvalidModelError):
        GibbsModel(**fields)


def test_presets():
    assert preset("g2").beta == 50.0
    assert preset("shc1").delta == pytest.approx(0.025)
    assert preset("ps2").gammas == (0.2, 0.8, 0.2)
    with pytest.raises(InvalidModelError):
        preset("nope")


def test_model_from_dict_accepts_aliases_and_presets():
    m = model_from_dict({"model": "strauss", "beta": 200, "gamma": 0.2, "R": 0.05})
    assert m == GibbsModel(Variant.STRAUSS, beta=200.0, R=0.05, gamma=0.2)
    assert model_from_dict({"preset": "s1"}).label == "s1"
    assert model_from_dict({"preset": "s1", "beta": 150}).beta == 150
    assert model_from_dict({"model": "poisson", "beta": 5, "R": 0.1}).is_poisson


def test_model_from_dict_requires_range():
    with pytest.raises(InvalidModelError):
        model_from_dict({"model": "strauss", "beta": 1.0})


def test_load_model_from_toml(tmp_path):
    path = tmp_path / "m.toml"
    path.write_text('model = "geyer"\nbeta = 50\ngamma = 1.5\nR = 0.05\nsat = 1\n')
    model = load_model(path)
    assert model.variant is Variant.GEYER and model.gamma == 1.5


def test_ball_union_volume_of_disjoint_discs():
    x = PointPattern([[0.25, 0.25], [0.75, 0.75]])
    area = ball_union_volume(x, 0.1, Window.square(1.0), spacing=0.001)
    assert area == pytest.approx(2 * math.pi * 0.01, rel=0.01)


# property checks over random local configurations around u

PAIRWISE_PRESETS = [name for name in PRESETS if PRESETS[name]["variant"] is not Variant.AREA_INTERACTION]
REPULSIVE_PRESETS = ["poisson", "s1", "s2", "shc1", "shc2", "ps1", "ps2"]


def local_configuration(rng, spread=0.1, max_points=30):
    u = rng.uniform(0.3, 0.7, 2)
    x = PointPattern(u + rng.uniform(-spread, spread, (int(rng.integers(0, max_points)), 2)))
    return u, x


def same_log(a, b, tol=1e-12):
    if a == -math.inf or b == -math.inf:
        return a == b
    return a == pytest.approx(b, rel=tol, abs=tol)


def geyer_statistic(x: PointPattern, half: float, sat: float) -> float:
    if len(x) == 0:
        return 0.0
    d = squareform(pdist(x.coords)) if len(x) > 1 else np.zeros((1, 1))
    np.fill_diagonal(d, np.inf)
    return float(np.sum(np.minimum(sat, np.count_nonzero(d <= half, axis=1))))


@pytest.mark.parametrize("name", PAIRWISE_PRESETS)
def test_interaction_only_sees_the_range_ball(name, rng):
    model = preset(name)
    for _ in range(60):
        u, x = local_configuration(rng, spread=3 * model.R)
        assert same_log(log_interaction(model, u, x), log_interaction(model, u, x.within(u, model.R)))


@pytest.mark.parametrize("sat", [1.0, 2.0, 3.0])
def test_geyer_matches_statistic_difference(sat, rng):
    model = GibbsModel(Variant.GEYER, beta=1.0, R=0.1, gamma=1.5, sat=sat)
    for _ in range(100):
        # points well beyond R still enter t(x), but cancel in the difference
        u, x = local_configuration(rng, spread=0.2, max_points=40)
        change = geyer_statistic(x.add(u), 0.05, sat) - geyer_statistic(x, 0.05, sat)
        assert log_interaction(model, u, x) == pytest.approx(change * math.log(1.5), abs=1e-12)


def test_triplets_match_triplet_count_difference(rng):
    model = GibbsModel(Variant.TRIPLETS, beta=1.0, R=0.08, gamma=0.8)
    for _ in range(100):
        u, x = local_configuration(rng, spread=0.15, max_points=40)
        change = triplet_count(x.add(u), model.R) - triplet_count(x, model.R)
        assert log_interaction(model, u, x) == pytest.approx(change * math.log(0.8), abs=1e-12)


@pytest.mark.parametrize("name", PAIRWISE_PRESETS)
def test_interaction_is_translation_invariant(name, rng):
    model = preset(name)
    for _ in range(40):
        u, x = local_configuration(rng)
        y = rng.uniform(-5.0, 5.0, 2)
        assert same_log(log_interaction(model, u + y, x.translate(y)), log_interaction(model, u, x), tol=1e-9)


def test_integer_statistics_are_translation_invariant(rng):
    for _ in range(40):
        u, x = local_configuration(rng, max_points=40)
        y = rng.uniform(-5.0, 5.0, 2)
        shifted = x.translate(y)
        assert count_in_annulus(u + y, shifted, 0.0, 0.05) == count_in_annulus(u, x, 0.0, 0.05)
        assert count_in_annulus(u + y, shifted, 0.025, 0.05, left_open=True) == \
            count_in_annulus(u, x, 0.025, 0.05, left_open=True)
        assert triplet_count(shifted, 0.08) == triplet_count(x, 0.08)


@pytest.mark.parametrize("name", REPULSIVE_PRESETS)
def test_neighbours_never_raise_repulsive_intensity(name, rng):
    model = preset(name)
    for _ in range(60):
        u, x = local_configuration(rng)
        angle, r = rng.uniform(0, 2 * math.pi), rng.uniform(0, model.R)
        v = u + r * np.array([math.cos(angle), math.sin(angle)])
        assert log_interaction(model, u, x.add(v)) <= log_interaction(model, u, x)


@pytest.mark.parametrize("name", PAIRWISE_PRESETS)
def test_second_order_intensity_is_symmetric(name, rng):
    model = preset(name)
    for _ in range(60):
        u, x = local_configuration(rng)
        v = u + rng.uniform(-model.R, model.R, 2)
        uv = log_interaction(model, u, x) + log_interaction(model, v, x.add(u))
        vu = log_interaction(model, v, x) + log_interaction(model, u, x.add(v))
        assert same_log(uv, vu)


def test_ball_union_volume_of_overlapping_discs_matches_lens_formula():
    r, s = 0.1, 0.12
    x = PointPattern([[0.4, 0.5], [0.4 + s, 0.5]])
    lens = 2 * r**2 * math.acos(s / (2 * r)) - (s / 2) * math.sqrt(4 * r**2 - s**2)
    area = ball_union_volume(x, r, Window.square(1.0), spacing=0.001)
    assert area == pytest.approx(2 * math.pi * r**2 - lens, rel=0.01)


def test_ball_union_volume_of_empty_pattern():
    assert ball_union_volume(PointPattern.empty(), 0.1, Window.square(1.0)) == 0.0
