"""Papangelou conditional intensities lambda(u, x) = beta * lambda_tilde(u, x)."""
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from config import Config
from services.geometry import PointPattern, Window, as_point, build_index
from services.quadrature import QuadratureGrid, ball_offsets, coverage_mask, unit_ball_volume
from utils.config_files import read_config_file
from utils.errors import InvalidModelError


class Variant(str, Enum):
    STRAUSS = "strauss"
    STRAUSS_HARD_CORE = "strauss_hard_core"
    PIECEWISE_STRAUSS = "piecewise_strauss"
    TRIPLETS = "triplets"
    GEYER = "geyer"
    LENNARD_JONES = "lennard_jones"
    AREA_INTERACTION = "area_interaction"


VARIANT_ALIASES = {
    "poisson": Variant.STRAUSS,
    "hardcore": Variant.STRAUSS_HARD_CORE,
    "strauss_hardcore": Variant.STRAUSS_HARD_CORE,
    "piecewise": Variant.PIECEWISE_STRAUSS,
    "triplet": Variant.TRIPLETS,
    "geyer_saturation": Variant.GEYER,
    "lj": Variant.LENNARD_JONES,
    "area": Variant.AREA_INTERACTION,
}


@dataclass(frozen=True)
class GibbsModel:
    variant: Variant
    beta: float
    R: float
    gamma: float = 1.0
    gammas: Tuple[float, ...] = ()
    radii: Tuple[float, ...] = ()  # R_1 < ... < R_p = R; R_0 = 0 is implicit
    delta: float = 0.0
    sat: float = 1.0
    theta: float = 1.0
    name: str = ""
    area_spacing: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        _validate(self)

    @property
    def satisfies_identifiability(self) -> bool:
        return self.variant is not Variant.AREA_INTERACTION

    @property
    def is_poisson(self) -> bool:
        return self.variant is Variant.STRAUSS and self.gamma == 1.0

    @property
    def label(self) -> str:
        return self.name or self.variant.value

    def log_interaction(self, u, x: PointPattern) -> float:
        u = as_point(u)
        local = x.within(u, self.R).coords if len(x) else np.empty((0, u.size))
        return self.local_log_interaction(u, local)

    def local_log_interaction(self, u: np.ndarray, local: np.ndarray) -> float:
        """log lambda_tilde(u, x) given ``local`` = x restricted to B(u, R), u not in x."""
        if local.shape[0] == 0:
            return self.empty_log_interaction(u.size)
        d = np.linalg.norm(local - u, axis=1)
        return _EVALUATORS[self.variant](self, u, local, d)

    def empty_log_interaction(self, dim: int = 2) -> float:
        """log lambda_tilde(u, empty); zero for every variant except area-interaction."""
        if self.variant is Variant.AREA_INTERACTION:
            return _log_power(self.gamma, unit_ball_volume(dim) * (self.R / 2) ** dim)
        return 0.0

    def papangelou(self, u, x: PointPattern) -> float:
        return _exp_or_zero(math.log(self.beta) + self.log_interaction(u, x))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["variant"] = self.variant.value
        out["gammas"] = list(self.gammas)
        out["radii"] = list(self.radii)
        out.pop("area_spacing")
        return out


def _validate(m: GibbsModel) -> None:
    def need(cond, msg):
        if not cond:
            raise InvalidModelError(f"{m.variant.value}: {msg}")

    need(m.beta > 0 and math.isfinite(m.beta), f"beta must be > 0, got {m.beta}")
    need(m.R > 0 and math.isfinite(m.R), f"range R must be > 0, got {m.R}")
    if m.variant in (Variant.STRAUSS, Variant.STRAUSS_HARD_CORE, Variant.TRIPLETS):
        need(0.0 <= m.gamma <= 1.0, f"gamma must lie in [0, 1], got {m.gamma}")
    if m.variant is Variant.STRAUSS_HARD_CORE:
        need(0.0 < m.delta < m.R, f"hard core must satisfy 0 < delta < R, got delta={m.delta}")
    if m.variant is Variant.PIECEWISE_STRAUSS:
        need(len(m.gammas) >= 1 and len(m.gammas) == len(m.radii), "gammas and radii must have the same length p >= 1")
        need(all(0.0 <= g <= 1.0 for g in m.gammas), f"gammas must lie in [0, 1], got {m.gammas}")
        edges = (0.0,) + m.radii
        need(all(a < b for a, b in zip(edges, edges[1:])), f"radii must increase from 0, got {m.radii}")
        need(m.radii[-1] == m.R, f"last radius must equal R={m.R}, got {m.radii[-1]}")
    if m.variant is Variant.GEYER:
        need(m.gamma > 0, f"gamma must be > 0, got {m.gamma}")
        need(m.sat >= 1, f"saturation must be >= 1, got {m.sat}")
    if m.variant is Variant.LENNARD_JONES:
        need(m.theta > 0, f"theta must be > 0, got {m.theta}")
    if m.variant is Variant.AREA_INTERACTION:
        need(m.gamma > 0, f"gamma must be > 0, got {m.gamma}")


def _log_power(base: float, exponent: float) -> float:
    if exponent == 0:
        return 0.0
    if base == 0:
        return -math.inf
    return exponent * math.log(base)


def _exp_or_zero(value: float) -> float:
    return 0.0 if value == -math.inf else math.exp(value)


def _strauss(m, u, local, d):
    return _log_power(m.gamma, int(np.count_nonzero(d <= m.R)))


def _strauss_hard_core(m, u, local, d):
    if np.any(d <= m.delta):
        return -math.inf
    return _log_power(m.gamma, int(np.count_nonzero((d > m.delta) & (d <= m.R))))


def _piecewise_strauss(m, u, local, d):
    edges = (0.0,) + m.radii
    total = 0.0
    for lo, hi, g in zip(edges, edges[1:], m.gammas):
        total += _log_power(g, int(np.count_nonzero((d >= lo) & (d <= hi))))
    return total


def _triplets(m, u, local, d):
    near = local[d <= m.R]
    if near.shape[0] < 2:
        return 0.0
    return _log_power(m.gamma, int(np.count_nonzero(pdist(near) <= m.R)))


def _geyer(m, u, local, d):
    half = m.R / 2
    own = min(m.sat, int(np.count_nonzero(d <= half)))
    close = d <= half
    if not np.any(close):
        return _log_power(m.gamma, own)
    pair = squareform(pdist(local)) <= half
    np.fill_diagonal(pair, False)
    n_v = pair[close].sum(axis=1)
    change = own + float(np.sum(np.minimum(m.sat, n_v + 1) - np.minimum(m.sat, n_v)))
    return _log_power(m.gamma, change)


def _lennard_jones(m, u, local, d):
    r = d[(d > 0) & (d <= m.R)]
    if r.size == 0:
        return 0.0
    q = (m.theta / r) ** 6
    return float(np.sum(q - q * q))


@lru_cache(maxsize=32)
def _area_offsets(radius: float, h: float, dim: int) -> np.ndarray:
    return ball_offsets(radius, h, dim)


def _area_interaction(m, u, local, d):
    half = m.R / 2
    dim = u.size
    h = m.area_spacing or m.R / Config.AREA_GRID_DIVISOR
    nodes = _area_offsets(half, h, dim) + u
    covered = np.any(cdist(nodes, local) <= half, axis=1)
    added = unit_ball_volume(dim) * half ** dim * float(np.mean(~covered))
    return _log_power(m.gamma, added)


_EVALUATORS = {
    Variant.STRAUSS: _strauss,
    Variant.STRAUSS_HARD_CORE: _strauss_hard_core,
    Variant.PIECEWISE_STRAUSS: _piecewise_strauss,
    Variant.TRIPLETS: _triplets,
    Variant.GEYER: _geyer,
    Variant.LENNARD_JONES: _lennard_jones,
    Variant.AREA_INTERACTION: _area_interaction,
}


def log_interaction(model: GibbsModel, u, x: PointPattern) -> float:
    return model.log_interaction(u, x)


def papangelou(model: GibbsModel, u, x: PointPattern) -> float:
    return model.papangelou(u, x)


def triplet_count(x: PointPattern, R: float) -> int:
    """Unordered triples whose three pairwise distances are all <= R."""
    if len(x) < 3:
        return 0
    index = build_index(x, R)
    total = 0
    for i, u in enumerate(x.coords):
        later = [j for j in index.query_ball(u, R) if j > i]
        if len(later) >= 2:
            total += int(np.count_nonzero(pdist(x.coords[later]) <= R))
    return total


def ball_union_volume(x: PointPattern, r: float, region: Window, spacing: float = None) -> float:
    """|region ∩ union of B(v, r)| by midpoint quadrature (default spacing r / 32)."""
    if len(x) == 0:
        return 0.0
    grid = QuadratureGrid(region, spacing or r / 32)
    mask = coverage_mask(x.coords, r, grid)
    return float(np.sum(grid.weights[mask]))


R_DEFAULT = 0.05

PRESETS = {
    "poisson": dict(variant=Variant.STRAUSS, beta=200.0, R=R_DEFAULT, gamma=1.0),
    "s1": dict(variant=Variant.STRAUSS, beta=200.0, R=R_DEFAULT, gamma=0.2),
    "s2": dict(variant=Variant.STRAUSS, beta=200.0, R=R_DEFAULT, gamma=0.8),
    "shc1": dict(variant=Variant.STRAUSS_HARD_CORE, beta=200.0, R=R_DEFAULT, gamma=0.2, delta=R_DEFAULT / 2),
    "shc2": dict(variant=Variant.STRAUSS_HARD_CORE, beta=200.0, R=R_DEFAULT, gamma=0.8, delta=R_DEFAULT / 2),
    "ps1": dict(variant=Variant.PIECEWISE_STRAUSS, beta=200.0, R=R_DEFAULT, gammas=(0.8, 0.5, 0.2),
                radii=(R_DEFAULT / 3, 2 * R_DEFAULT / 3, R_DEFAULT)),
    "ps2": dict(variant=Variant.PIECEWISE_STRAUSS, beta=200.0, R=R_DEFAULT, gammas=(0.2, 0.8, 0.2),
                radii=(R_DEFAULT / 3, 2 * R_DEFAULT / 3, R_DEFAULT)),
    "t1": dict(variant=Variant.TRIPLETS, beta=200.0, R=R_DEFAULT, gamma=0.2),
    "t2": dict(variant=Variant.TRIPLETS, beta=200.0, R=R_DEFAULT, gamma=0.8),
    "g1": dict(variant=Variant.GEYER, beta=200.0, R=R_DEFAULT, gamma=0.5, sat=1.0),
    "g2": dict(variant=Variant.GEYER, beta=50.0, R=R_DEFAULT, gamma=1.5, sat=1.0),
    "lj1": dict(variant=Variant.LENNARD_JONES, beta=200.0, R=R_DEFAULT, theta=0.02),
    "area1": dict(variant=Variant.AREA_INTERACTION, beta=200.0, R=R_DEFAULT, gamma=0.5),
    # lambda_tilde(u, empty) = 1/2: an isolated point is half as likely as under Poisson(beta)
    "area2": dict(variant=Variant.AREA_INTERACTION, beta=200.0, R=R_DEFAULT,
                  gamma=0.5 ** (1.0 / (math.pi * (R_DEFAULT / 2) ** 2))),
}


def preset(name: str) -> GibbsModel:
    if name not in PRESETS:
        raise InvalidModelError(f"Unknown model preset '{name}'. Known: {', '.join(PRESETS)}")
    return GibbsModel(name=name, **PRESETS[name])


def model_from_dict(data: dict) -> GibbsModel:
    """Build a model from config keys model, beta, gamma/gammas, R, radii, delta, sat, theta."""
    data = dict(data)
    fields = {}
    if "preset" in data:
        name = data.pop("preset")
        fields = {**preset(name).to_dict(), "name": name}
    kind = data.pop("model", data.pop("variant", None))
    if kind is not None:
        kind = str(kind).strip().lower()
        try:
            fields["variant"] = Variant(VARIANT_ALIASES.get(kind, kind))
        except ValueError:
            raise InvalidModelError(f"Unknown model '{kind}'") from None
        if kind == "poisson":
            fields["gamma"] = 1.0
    elif not fields:
        raise InvalidModelError("Model description needs 'model' or 'preset'")
    keymap = {"beta": "beta", "R": "R", "r": "R", "gamma": "gamma", "gammas": "gammas", "radii": "radii",
              "delta": "delta", "sat": "sat", "theta": "theta", "name": "name", "area_spacing": "area_spacing"}
    for key, target in keymap.items():
        if key in data:
            fields[target] = data[key]
    if "R" not in fields:
        raise InvalidModelError("Model description needs a range 'R'")
    if "beta" not in fields:
        raise InvalidModelError("Model description needs 'beta'")
    try:
        return GibbsModel(**fields)
    except TypeError as exc:
        raise InvalidModelError(str(exc)) from exc


def load_model(path) -> GibbsModel:
    return model_from_dict(read_config_file(path))
