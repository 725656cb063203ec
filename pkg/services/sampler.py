"""Birth-death Metropolis-Hastings simulation of Gibbs point processes on a box."""
import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from config import Config
from services.geometry import PointPattern, Window, as_point
from services.gibbs_models import GibbsModel
from utils.errors import InvalidInputError, SamplerFailureError
from utils.rng import stream_rng

logger = logging.getLogger(__name__)

INIT_EMPTY = "empty"
INIT_POISSON = "poisson"


@dataclass(frozen=True)
class SamplerConfig:
    steps: int
    burn_in: int
    p_birth: float = 0.5
    seed: int = 0
    init: str = INIT_POISSON
    trace_every: int = 0  # record n(x) every k steps after burn-in; 0 disables the trace

    def __post_init__(self):
        if not (self.steps > self.burn_in >= 0):
            raise InvalidInputError(f"Sampler needs steps > burn_in >= 0, got steps={self.steps}, burn_in={self.burn_in}")
        if not (0.0 < self.p_birth < 1.0):
            raise InvalidInputError(f"p_birth must lie in (0, 1), got {self.p_birth}")
        if self.init not in (INIT_EMPTY, INIT_POISSON):
            raise InvalidInputError(f"init must be '{INIT_EMPTY}' or '{INIT_POISSON}', got {self.init}")
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidInputError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @classmethod
    def for_window(cls, window: Window, seed: int = 0, **overrides) -> "SamplerConfig":
        """Default chain length: SAMPLER_STEPS_PER_VOLUME * |window| proposals, half burned in."""
        steps = max(2, int(round(Config.SAMPLER_STEPS_PER_VOLUME * window.volume)))
        values = dict(steps=steps, burn_in=steps // 2, p_birth=Config.SAMPLER_P_BIRTH, seed=seed)
        values.update(overrides)
        return cls(**values)

    def with_seed(self, seed: int) -> "SamplerConfig":
        return SamplerConfig(self.steps, self.burn_in, self.p_birth, seed, self.init, self.trace_every)

    def to_dict(self) -> dict:
        return {"steps": self.steps, "burn_in": self.burn_in, "p_birth": self.p_birth, "seed": self.seed,
                "init": self.init, "trace_every": self.trace_every}


@dataclass
class ChainDiagnostics:
    acceptance_rate_birth: float
    acceptance_rate_death: float
    final_count: int
    statistic_trace: Optional[List[int]] = field(default=None)


class ChainState:
    """Mutable configuration with a grid hash sized to the interaction range."""

    def __init__(self, dim: int, cell_size: float, capacity: int = 256):
        self.dim = dim
        self.cell_size = cell_size
        self.coords = np.empty((capacity, dim))
        self.n = 0
        self.cells: List[Tuple[int, ...]] = []
        self.buckets = defaultdict(list)
        self._offsets = list(itertools.product((-1, 0, 1), repeat=dim))

    def _cell(self, u: np.ndarray) -> Tuple[int, ...]:
        return tuple(int(c) for c in np.floor(u / self.cell_size))

    def add(self, u: np.ndarray) -> None:
        if self.n == self.coords.shape[0]:
            self.coords = np.vstack([self.coords, np.empty_like(self.coords)])
        self.coords[self.n] = u
        cell = self._cell(u)
        self.cells.append(cell)
        self.buckets[cell].append(self.n)
        self.n += 1

    def remove(self, i: int) -> None:
        """Delete point i by moving the last point into its slot."""
        last = self.n - 1
        self.buckets[self.cells[i]].remove(i)
        if i != last:
            moved_cell = self.cells[last]
            bucket = self.buckets[moved_cell]
            bucket[bucket.index(last)] = i
            self.coords[i] = self.coords[last]
            self.cells[i] = moved_cell
        self.cells.pop()
        self.n = last

    def neighbours(self, u: np.ndarray, r: float, exclude: int = -1) -> np.ndarray:
        """Coordinates of stored points within distance <= r of u (r <= cell_size)."""
        base = self._cell(u)
        ids = []
        for off in self._offsets:
            bucket = self.buckets.get(tuple(b + o for b, o in zip(base, off)))
            if bucket:
                ids.extend(bucket)
        if exclude >= 0 and ids:
            ids = [i for i in ids if i != exclude]
        if not ids:
            return np.empty((0, self.dim))
        pts = self.coords[ids]
        return pts[np.linalg.norm(pts - u, axis=1) <= r]

    def pattern(self) -> PointPattern:
        return PointPattern(self.coords[: self.n].copy(), self.dim)


def _log_lambda(model: GibbsModel, state: ChainState, u: np.ndarray, exclude: int = -1) -> float:
    local = state.neighbours(u, model.R, exclude)
    return math.log(model.beta) + model.local_log_interaction(u, local)


def _initial_state(model: GibbsModel, window: Window, cfg: SamplerConfig, rng: np.random.Generator) -> ChainState:
    state = ChainState(window.dim, model.R)
    if cfg.init == INIT_POISSON:
        n0 = rng.poisson(model.beta * window.volume)
        lower, sides = np.asarray(window.lower), window.sides
        for u in lower + sides * rng.random((n0, window.dim)):
            # keep the start inside the model's support (hard cores)
            if _log_lambda(model, state, u) > -math.inf:
                state.add(u)
    return state


def sample(model: GibbsModel, window: Window, cfg: SamplerConfig) -> Tuple[PointPattern, ChainDiagnostics]:
    """Run ``cfg.steps`` birth-death proposals and return the final state."""
    rng = stream_rng(cfg.seed)
    state = _initial_state(model, window, cfg, rng)
    log_volume = math.log(window.volume)
    lower, sides = np.asarray(window.lower), window.sides

    births = rng.random(cfg.steps) < cfg.p_birth
    log_accept = np.log(rng.random(cfg.steps))
    picks = rng.random(cfg.steps)
    n_births = int(births.sum())
    sites = iter(lower + sides * rng.random((n_births, window.dim)))

    proposed = [0, 0]
    accepted = [0, 0]
    trace = [] if cfg.trace_every else None

    for step in range(cfg.steps):
        if births[step]:
            u = next(sites)
            proposed[0] += 1
            ratio = _log_lambda(model, state, u) + log_volume - math.log(state.n + 1)
            if math.isnan(ratio):
                raise SamplerFailureError(f"Non-finite birth ratio at step {step} for {model.label}")
            if log_accept[step] < ratio:
                state.add(u)
                accepted[0] += 1
        else:
            proposed[1] += 1
            if state.n > 0:
                i = min(int(picks[step] * state.n), state.n - 1)
                v = state.coords[i].copy()
                ratio = math.log(state.n) - _log_lambda(model, state, v, exclude=i) - log_volume
                if math.isnan(ratio):
                    raise SamplerFailureError(f"Non-finite death ratio at step {step} for {model.label}")
                if log_accept[step] < ratio:
                    state.remove(i)
                    accepted[1] += 1
        if trace is not None and step >= cfg.burn_in and (step - cfg.burn_in) % cfg.trace_every == 0:
            trace.append(state.n)

    diagnostics = ChainDiagnostics(
        acceptance_rate_birth=accepted[0] / proposed[0] if proposed[0] else 0.0,
        acceptance_rate_death=accepted[1] / proposed[1] if proposed[1] else 0.0,
        final_count=state.n,
        statistic_trace=trace,
    )
    logger.debug("Chain %s seed=%d: n=%d, birth acc=%.3f, death acc=%.3f", model.label, cfg.seed,
                 state.n, diagnostics.acceptance_rate_birth, diagnostics.acceptance_rate_death)
    return state.pattern(), diagnostics


def detailed_balance_check(model: GibbsModel, window: Window, x: PointPattern, u) -> Tuple[float, float]:
    """Birth ratio at (x, u) and death ratio at (x ∪ u, u); their product is 1 wherever both are finite."""
    u = as_point(u)
    log_volume = math.log(window.volume)
    log_birth = math.log(model.beta) + model.log_interaction(u, x) + log_volume - math.log(len(x) + 1)

    grown = x.add(u)
    last = len(grown) - 1
    log_death = math.log(len(grown)) - (math.log(model.beta) + model.log_interaction(u, grown.remove(last))) - log_volume
    return _exp_or_inf(log_birth), _exp_or_inf(log_death)


def _exp_or_inf(value: float) -> float:
    if value == -math.inf:
        return 0.0
    if value == math.inf:
        return math.inf
    return math.exp(value)
