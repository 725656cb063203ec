"""Monte-Carlo replication studies of the ratio estimator."""
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate
from scipy.spatial import cKDTree

from config import Config
from services.estimator import estimate_beta
from services.geometry import Window, erode
from services.gibbs_models import GibbsModel, model_from_dict
from services.quadrature import ball_offsets, unit_ball_volume
from services.range_select import estimate_with_range, parse_grid
from services.sampler import SamplerConfig, sample
from utils.errors import DegenerateEstimateError, GibbsBetaError, InvalidInputError
from utils.rng import stream_seed

logger = logging.getLogger(__name__)

R_HAT_COLUMN = "R_hat"


def column_label(multiplier: float) -> str:
    return f"p={multiplier:g}"


def replication_seed(master_seed: int, index: int, stream: int = 0) -> int:
    """64-bit chain seed of replication ``index`` of experiment ``stream``, a hash of all three."""
    return int(stream_seed(master_seed, stream, index).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    model: GibbsModel
    L: float
    replications: int = Config.DEFAULT_REPLICATIONS
    r_tilde_multipliers: Tuple[float, ...] = (0.9, 1.0, 1.1, 1.2)
    alpha: float = Config.DEFAULT_ALPHA
    master_seed: int = 0
    sampler: Optional[SamplerConfig] = None
    grid_h: Optional[float] = None
    range_grid: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "r_tilde_multipliers", tuple(float(p) for p in self.r_tilde_multipliers))
        if self.range_grid is not None:
            object.__setattr__(self, "range_grid", tuple(float(r) for r in self.range_grid))
        if self.replications < 1:
            raise InvalidInputError(f"replications must be >= 1, got {self.replications}")
        if not self.r_tilde_multipliers or any(p <= 0 for p in self.r_tilde_multipliers):
            raise InvalidInputError(f"multipliers must be positive, got {self.r_tilde_multipliers}")
        if not (self.L > 0):
            raise InvalidInputError(f"window side L must be positive, got {self.L}")

    @property
    def window(self) -> Window:
        return Window.square(self.L)

    @property
    def beta_star(self) -> float:
        return self.model.beta

    @property
    def chain(self) -> SamplerConfig:
        return self.sampler or SamplerConfig.for_window(self.window)

    @property
    def columns(self) -> List[str]:
        cols = [column_label(p) for p in self.r_tilde_multipliers]
        return cols + [R_HAT_COLUMN] if self.range_grid else cols

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "L": self.L,
            "replications": self.replications,
            "r_tilde_multipliers": list(self.r_tilde_multipliers),
            "alpha": self.alpha,
            "master_seed": self.master_seed,
            "sampler": self.chain.to_dict(),
            "grid_h": self.grid_h,
            "range_grid": list(self.range_grid) if self.range_grid else None,
        }


@dataclass
class ColumnOutcome:
    beta_hat: Optional[float] = None
    covers: Optional[bool] = None
    n_isolated: Optional[int] = None
    empty_volume: Optional[float] = None
    sigma2_hat: Optional[float] = None
    r_hat: Optional[float] = None
    error: Optional[str] = None


@dataclass
class ReplicationRecord:
    index: int
    count: Optional[int]
    outcomes: Dict[str, ColumnOutcome]


@dataclass(frozen=True)
class SummaryRow:
    model: str
    L: float
    column: str
    replications: int
    n_valid: int
    failure_count: int
    mean_count: Optional[float]
    mean_beta: Optional[float]
    sd_beta: Optional[float]
    coverage_rate: Optional[float]
    mean_sigma2: Optional[float]
    mean_n_isolated: Optional[float]
    mean_empty_volume: Optional[float]
    gap_mean: Optional[float]
    gap_se: Optional[float]
    mean_r_hat: Optional[float] = None
    sd_r_hat: Optional[float] = None
    sigma2_se: Optional[float] = None
    single_replication: bool = False


@dataclass(frozen=True)
class FailureRecord:
    model: str
    L: float
    replication: int
    column: str
    message: str


@dataclass(frozen=True)
class ReplicationSummary:
    rows: Tuple[SummaryRow, ...]
    failures: Tuple[FailureRecord, ...] = ()

    def row(self, model: str, L: float, column: str) -> SummaryRow:
        for r in self.rows:
            if r.model == model and r.L == L and r.column == column:
                return r
        raise KeyError((model, L, column))

    def coverage_table(self) -> Dict[Tuple[str, float, str], Optional[float]]:
        return {(r.model, r.L, r.column): r.coverage_rate for r in self.rows}

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "failures": [asdict(f) for f in self.failures]}

    @classmethod
    def from_dict(cls, data: dict) -> "ReplicationSummary":
        return cls(
            rows=tuple(SummaryRow(**r) for r in data.get("rows", [])),
            failures=tuple(FailureRecord(**f) for f in data.get("failures", [])),
        )


def _run_replication(task: Tuple[ExperimentConfig, int, int]) -> ReplicationRecord:
    cfg, stream, index = task
    window = cfg.window
    seed = replication_seed(cfg.master_seed, index, stream)
    try:
        pattern, _ = sample(cfg.model, window, cfg.chain.with_seed(seed))
    except GibbsBetaError as exc:
        return ReplicationRecord(index, None, {c: ColumnOutcome(error=f"sampler: {exc}") for c in cfg.columns})

    outcomes = {}
    for p in cfg.r_tilde_multipliers:
        try:
            report = estimate_beta(pattern, window, p * cfg.model.R, cfg.grid_h, cfg.alpha)
        except GibbsBetaError as exc:
            outcomes[column_label(p)] = ColumnOutcome(error=str(exc))
            continue
        outcomes[column_label(p)] = ColumnOutcome(
            beta_hat=report.beta_hat,
            covers=report.covers(cfg.beta_star),
            n_isolated=report.n_isolated,
            empty_volume=report.empty_volume,
            sigma2_hat=report.sigma2_hat,
        )
    if cfg.range_grid:
        try:
            fit, report = estimate_with_range(pattern, window, cfg.range_grid, cfg.grid_h, cfg.alpha)
            outcomes[R_HAT_COLUMN] = ColumnOutcome(
                beta_hat=report.beta_hat,
                covers=report.covers(cfg.beta_star),
                n_isolated=report.n_isolated,
                empty_volume=report.empty_volume,
                sigma2_hat=report.sigma2_hat,
                r_hat=fit.r_hat,
            )
        except GibbsBetaError as exc:
            outcomes[R_HAT_COLUMN] = ColumnOutcome(error=str(exc))
    return ReplicationRecord(index, len(pattern), outcomes)


def _mean(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if len(values) else None


def _sd(values: Sequence[float]) -> Optional[float]:
    if not len(values):
        return None
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def _aggregate(cfg: ExperimentConfig, records: List[ReplicationRecord]) -> Tuple[List[SummaryRow], List[FailureRecord]]:
    label = cfg.model.label
    counts = [r.count for r in records if r.count is not None]
    rows, failures = [], []
    for column in cfg.columns:
        valid = []
        for rec in records:
            outcome = rec.outcomes[column]
            if outcome.error is None:
                valid.append(outcome)
            else:
                failures.append(FailureRecord(label, cfg.L, rec.index, column, outcome.error))
        betas = [o.beta_hat for o in valid]
        gaps = [o.n_isolated - cfg.beta_star * o.empty_volume for o in valid]
        r_hats = [o.r_hat for o in valid if o.r_hat is not None]
        sigma2s = [o.sigma2_hat for o in valid]
        rows.append(SummaryRow(
            model=label,
            L=cfg.L,
            column=column,
            replications=len(records),
            n_valid=len(valid),
            failure_count=len(records) - len(valid),
            mean_count=_mean(counts),
            mean_beta=_mean(betas),
            sd_beta=_sd(betas),
            coverage_rate=_mean([1.0 if o.covers else 0.0 for o in valid]),
            mean_sigma2=_mean(sigma2s),
            mean_n_isolated=_mean([o.n_isolated for o in valid]),
            mean_empty_volume=_mean([o.empty_volume for o in valid]),
            gap_mean=_mean(gaps),
            gap_se=_sd(gaps) / math.sqrt(len(gaps)) if gaps else None,
            mean_r_hat=_mean(r_hats),
            sd_r_hat=_sd(r_hats),
            sigma2_se=_sd(sigma2s) / math.sqrt(len(sigma2s)) if sigma2s else None,
            single_replication=len(valid) == 1,
        ))
    return rows, failures


def _parallel_map(fn, tasks: list, threads: Optional[int]) -> list:
    threads = Config.DEFAULT_THREADS if threads is None else threads
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with Pool(processes=min(threads, len(tasks))) as pool:
        # map keeps task order, so aggregation never depends on the worker count
        return pool.map(fn, tasks, chunksize=1)


def run_study(configs: Sequence[ExperimentConfig], threads: Optional[int] = None) -> ReplicationSummary:
    # experiment k of the study draws its chains from stream k
    tasks = [(cfg, k, i) for k, cfg in enumerate(configs) for i in range(cfg.replications)]
    logger.info("Starting study: %d experiments, %d replications", len(configs), len(tasks))
    records = _parallel_map(_run_replication, tasks, threads)

    rows, failures, start = [], [], 0
    for cfg in configs:
        chunk = records[start:start + cfg.replications]
        start += cfg.replications
        cfg_rows, cfg_failures = _aggregate(cfg, chunk)
        rows.extend(cfg_rows)
        failures.extend(cfg_failures)
    if failures:
        logger.warning("Replication failures: %d", len(failures))
    return ReplicationSummary(tuple(rows), tuple(failures))


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> ReplicationSummary:
    return run_study([cfg], threads)


def run_coverage_study(cfg: ExperimentConfig, threads: Optional[int] = None) -> Dict[Tuple[str, float, str], Optional[float]]:
    """Fraction of CIs covering beta_star per (model, L, column); failures are left out of the denominator."""
    return run_experiment(cfg, threads).coverage_table()


# -- empty space functions and the asymptotic variance ---------------------------


@dataclass(frozen=True)
class EmptySpaceEstimates:
    radii: Tuple[float, ...]
    F_hat: Tuple[float, ...]
    r_tilde: float
    displacements: np.ndarray = field(repr=False)
    displacement_weights: Optional[np.ndarray] = field(repr=False)
    Fuv_hat: Tuple[float, ...] = field(repr=False)
    n_samples: int = 0

    def F_at(self, r: float) -> float:
        return float(np.interp(r, self.radii, self.F_hat))


def displacement_lattice(r_tilde: float, dim: int = 2, per_radius: int = 16) -> Tuple[np.ndarray, np.ndarray]:
    """Cell-centered offsets covering B(0, r_tilde); weights sum to the exact ball volume."""
    offsets = ball_offsets(r_tilde, r_tilde / per_radius, dim)
    weights = np.full(len(offsets), unit_ball_volume(dim) * r_tilde**dim / len(offsets))
    return offsets, weights


def _empty_space_chain(task) -> Tuple[np.ndarray, np.ndarray, int]:
    model, window, sampler_cfg, seed, radii, r_tilde, displacements, margin, ref_spacing = task
    pattern, _ = sample(model, window, sampler_cfg.with_seed(seed))
    inner = erode(window, margin)
    axes = [np.arange(lo + ref_spacing / 2, hi, ref_spacing) for lo, hi in zip(inner.lower, inner.upper)]
    refs = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    if len(pattern) == 0:
        return np.zeros(len(radii), dtype=np.int64), np.zeros(len(displacements), dtype=np.int64), len(refs)
    tree = cKDTree(pattern.coords)
    d0, _ = tree.query(refs)
    hits = np.array([np.count_nonzero(d0 <= r) for r in radii], dtype=np.int64)
    near0 = d0 <= r_tilde
    pair_hits = np.empty(len(displacements), dtype=np.int64)
    for k, v in enumerate(displacements):
        dv, _ = tree.query(refs + v)
        pair_hits[k] = np.count_nonzero(near0 | (dv <= r_tilde))
    return hits, pair_hits, len(refs)


def estimate_empty_space(
    model: GibbsModel,
    window: Window,
    sampler: SamplerConfig,
    n_chains: int,
    radii: Sequence[float],
    displacements: Optional[np.ndarray] = None,
    r_tilde: Optional[float] = None,
    master_seed: int = 0,
    threads: Optional[int] = 1,
    ref_spacing: Optional[float] = None,
) -> EmptySpaceEstimates:
    """Monte-Carlo F(r) and F_{0,v}(r_tilde) from interior reference points of independent chains."""
    radii = np.sort(np.asarray(radii, dtype=float))
    r_tilde = float(r_tilde if r_tilde is not None else radii[-1])
    weights = None
    if displacements is None:
        displacements, weights = displacement_lattice(r_tilde, window.dim)
    displacements = np.asarray(displacements, dtype=float).reshape(-1, window.dim)
    reach = float(np.max(np.linalg.norm(displacements, axis=1))) if len(displacements) else 0.0
    margin = max(float(radii[-1]), r_tilde + reach)
    ref_spacing = ref_spacing or max(r_tilde, float(radii[-1])) / 2

    tasks = [(model, window, sampler, replication_seed(master_seed, c), tuple(radii), r_tilde, displacements,
              margin, ref_spacing) for c in range(n_chains)]
    results = _parallel_map(_empty_space_chain, tasks, threads)
    hits = sum(r[0] for r in results)
    pair_hits = sum(r[1] for r in results)
    total = sum(r[2] for r in results)
    if total == 0:
        raise InvalidInputError("Window too small for the requested radii: no interior reference points")
    return EmptySpaceEstimates(
        radii=tuple(radii.tolist()),
        F_hat=tuple((hits / total).tolist()),
        r_tilde=r_tilde,
        displacements=displacements,
        displacement_weights=weights,
        Fuv_hat=tuple((pair_hits / total).tolist()),
        n_samples=total,
    )


def sigma2_theoretical(beta_star: float, r_tilde: float, ese: EmptySpaceEstimates) -> float:
    """Asymptotic variance beta/(1-F) + beta^2/(1-F)^2 * integral over B(0, r_tilde) of (1 - F_{0,v})."""
    if beta_star == 0:
        return 0.0
    if not math.isclose(r_tilde, ese.r_tilde):
        raise InvalidInputError(f"F_{{0,v}} was estimated at r_tilde={ese.r_tilde}, not {r_tilde}")
    if ese.displacement_weights is None:
        raise InvalidInputError("Empty-space estimates carry no displacement weights to integrate with")
    empty = 1.0 - ese.F_at(r_tilde)
    if empty <= 0:
        raise DegenerateEstimateError(0, 0.0)
    integral = float(np.sum(ese.displacement_weights * (1.0 - np.asarray(ese.Fuv_hat))))
    return beta_star / empty + beta_star**2 / empty**2 * integral


def _disk_union_area(r: float, s: np.ndarray) -> np.ndarray:
    """|B(0, r) ∪ B(v, r)| in the plane for |v| = s."""
    s = np.minimum(np.asarray(s, dtype=float), 2 * r)
    lens = 2 * r**2 * np.arccos(s / (2 * r)) - (s / 2) * np.sqrt(4 * r**2 - s**2)
    return 2 * math.pi * r**2 - lens


def poisson_empty_space(beta: float, radii: Sequence[float], r_tilde: float, per_radius: int = 16) -> EmptySpaceEstimates:
    """Exact F and F_{0,v} of a planar Poisson process, on the default displacement lattice."""
    radii = np.sort(np.asarray(radii, dtype=float))
    offsets, weights = displacement_lattice(r_tilde, 2, per_radius)
    union = _disk_union_area(r_tilde, np.linalg.norm(offsets, axis=1))
    return EmptySpaceEstimates(
        radii=tuple(radii.tolist()),
        F_hat=tuple((1.0 - np.exp(-beta * math.pi * radii**2)).tolist()),
        r_tilde=float(r_tilde),
        displacements=offsets,
        displacement_weights=weights,
        Fuv_hat=tuple((1.0 - np.exp(-beta * union)).tolist()),
    )


def poisson_sigma2(beta: float, r_tilde: float) -> float:
    """Closed-form planar Poisson plug-in of the asymptotic variance (radial integral by quadrature)."""
    if beta == 0:
        return 0.0
    empty = math.exp(-beta * math.pi * r_tilde**2)
    radial, _ = integrate.quad(lambda s: 2 * math.pi * s * math.exp(-beta * float(_disk_union_area(r_tilde, s))),
                               0.0, r_tilde)
    return beta / empty + beta**2 / empty**2 * radial


# -- configuration files ------------------------------------------------------------


def experiments_from_dict(data: dict) -> List[ExperimentConfig]:
    """Expand an experiment description into one ExperimentConfig per (model block, L)."""
    models = data.get("models") or []
    if not models:
        raise InvalidInputError("Experiment config needs at least one [[models]] block")
    sides = data.get("L", [1.0])
    sides = sides if isinstance(sides, list) else [sides]
    range_grid = data.get("range_grid")
    if isinstance(range_grid, str):
        range_grid = tuple(parse_grid(range_grid).tolist())
    known = {f.name for f in fields(SamplerConfig)} - {"seed"}
    sampler_block = {k: v for k, v in (data.get("sampler") or {}).items() if k in known}
    if "steps" in sampler_block and "burn_in" not in sampler_block:
        sampler_block["burn_in"] = int(sampler_block["steps"]) // 2

    configs = []
    for block in models:
        model = model_from_dict(block)
        for L in sides:
            window = Window.square(float(L))
            sampler_cfg = SamplerConfig.for_window(window, **sampler_block)
            configs.append(ExperimentConfig(
                model=model,
                L=float(L),
                replications=int(data.get("replications", Config.DEFAULT_REPLICATIONS)),
                r_tilde_multipliers=tuple(data.get("multipliers", (0.9, 1.0, 1.1, 1.2))),
                alpha=float(data.get("alpha", Config.DEFAULT_ALPHA)),
                master_seed=int(data.get("master_seed", 0)),
                sampler=sampler_cfg,
                grid_h=data.get("grid_h"),
                range_grid=range_grid,
            ))
    return configs
