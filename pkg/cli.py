"""Command-line entry points: ``python cli.py <command>`` or ``flask --app app <command>``."""
import json
import logging
from functools import wraps
from pathlib import Path

import click
import numpy as np

from config import Config
from services.estimator import estimate_beta
from services.experiment_engine import (
    estimate_empty_space,
    experiments_from_dict,
    run_study,
    sigma2_theoretical,
)
from services.geometry import PointPattern, Window
from services.gibbs_models import PRESETS, load_model, preset
from services.range_select import beta_profile, default_grid, estimate_with_range, parse_grid
from services.sampler import SamplerConfig, sample
from services.tables import DEFAULT_FORMATS, FORMATS, emit_tables
from utils.config_files import read_config_file
from utils.errors import GibbsBetaError, InvalidInputError

logger = logging.getLogger(__name__)


def _engine_errors(fn):
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GibbsBetaError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _load_model(value: str):
    return preset(value) if value in PRESETS else load_model(value)


def _read_pattern(path: str) -> PointPattern:
    return PointPattern.from_csv(Path(path).read_text(encoding="utf-8"))


def _write(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="")
        click.echo(f"Wrote {out}")
    else:
        click.echo(text, nl=False)


def _dump(data: dict) -> str:
    return json.dumps(data, indent=2) + "\n"


@click.group(name="gibbs-beta")
@click.option("--log-level", default=Config.LOG_LEVEL, show_default=True)
def cli(log_level):
    """Estimate the intensity parameter beta of finite-range Gibbs point processes."""
    logging.basicConfig(level=log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--model", "model_ref", required=True, help="Preset name or model file (.toml/.json).")
@click.option("--window", "side", type=float, default=1.0, show_default=True, help="Side L of [0, L]^d.")
@click.option("--dim", type=click.Choice(["2", "3"]), default="2", show_default=True)
@click.option("--steps", type=int, default=None, help="Proposals (default 1e5 * |window|).")
@click.option("--burn-in", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_engine_errors
def simulate(model_ref, side, dim, steps, burn_in, seed, out):
    """Draw one realisation with the birth-death sampler and write it as CSV."""
    model = _load_model(model_ref)
    window = Window.square(side, int(dim))
    overrides = {}
    if steps is not None:
        overrides["steps"] = steps
        overrides["burn_in"] = steps // 2 if burn_in is None else burn_in
    elif burn_in is not None:
        overrides["burn_in"] = burn_in
    pattern, diagnostics = sample(model, window, SamplerConfig.for_window(window, seed=seed, **overrides))
    logger.info("Simulated %s: n=%d (birth acc %.3f, death acc %.3f)", model.label, len(pattern),
                diagnostics.acceptance_rate_birth, diagnostics.acceptance_rate_death)
    _write(pattern.to_csv(), out)


@cli.command()
@click.option("--pattern", "pattern_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--window", "side", type=float, default=1.0, show_default=True)
@click.option("--rtilde", type=float, required=True)
@click.option("--alpha", type=float, default=Config.DEFAULT_ALPHA, show_default=True)
@click.option("--grid-h", type=float, default=None, help="Quadrature spacing (default r_tilde/20).")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_engine_errors
def estimate(pattern_path, side, rtilde, alpha, grid_h, out):
    """beta_hat, sigma2_hat and the confidence interval at one r_tilde."""
    pattern = _read_pattern(pattern_path)
    report = estimate_beta(pattern, Window.square(side, pattern.dim), rtilde, grid_h, alpha)
    _write(_dump(report.to_dict()), out)


@cli.command(name="range")
@click.option("--pattern", "pattern_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--window", "side", type=float, default=1.0, show_default=True)
@click.option("--grid", "grid_spec", default=None, help="r_tilde grid 'lo:hi:n' (default 0.02:0.08:13).")
@click.option("--alpha", type=float, default=Config.DEFAULT_ALPHA, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_engine_errors
def select_range(pattern_path, side, grid_spec, alpha, out):
    """Profile beta_hat over r_tilde, locate R_hat and re-estimate there."""
    pattern = _read_pattern(pattern_path)
    window = Window.square(side, pattern.dim)
    grid = parse_grid(grid_spec) if grid_spec else default_grid()
    profile = beta_profile(pattern, window, grid)
    fit, report = estimate_with_range(pattern, window, alpha=alpha, profile=profile)
    _write(_dump({"profile": profile.to_dict(), "fit": fit.to_dict(),
                  "estimate": report.to_dict()}), out)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), default="results", show_default=True)
@click.option("--threads", type=int, default=None, help="Worker processes (default: CPU count).")
@click.option("--formats", default=",".join(DEFAULT_FORMATS), show_default=True,
              help=f"Comma-separated subset of {','.join(FORMATS)}.")
@_engine_errors
def experiment(config_path, out_dir, threads, formats):
    """Run the replication study described by a TOML/JSON file and write Tables 1-3."""
    configs = experiments_from_dict(read_config_file(config_path))
    summary = run_study(configs, threads)
    emit_tables(summary, out_dir, [f.strip() for f in formats.split(",") if f.strip()])
    if summary.failures:
        click.echo(f"{len(summary.failures)} replication failures listed in {Path(out_dir) / 'failures.csv'}")
    click.echo(f"Tables written to {out_dir}")


@cli.command(name="empty-space")
@click.option("--model", "model_ref", required=True)
@click.option("--window", "side", type=float, default=1.0, show_default=True)
@click.option("--chains", type=int, default=20, show_default=True)
@click.option("--radii", "radii_spec", default="0.005:0.1:20", show_default=True, help="'lo:hi:n'")
@click.option("--rtilde", type=float, default=None, help="Radius of F_{0,v} (default: model range R).")
@click.option("--steps", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_engine_errors
def empty_space(model_ref, side, chains, radii_spec, rtilde, steps, seed, threads, out):
    """Monte-Carlo empty space function and the asymptotic variance sigma^2(r_tilde)."""
    model = _load_model(model_ref)
    window = Window.square(side)
    if chains < 1:
        raise InvalidInputError("--chains must be >= 1")
    overrides = {"steps": steps, "burn_in": steps // 2} if steps else {}
    rtilde = rtilde or model.R
    radii = np.union1d(parse_grid(radii_spec), [rtilde])
    ese = estimate_empty_space(model, window, SamplerConfig.for_window(window, **overrides), chains, radii,
                               r_tilde=rtilde, master_seed=seed, threads=threads)
    _write(_dump({
        "model": model.to_dict(),
        "radii": list(ese.radii),
        "F_hat": list(ese.F_hat),
        "r_tilde": ese.r_tilde,
        "n_samples": ese.n_samples,
        "sigma2": sigma2_theoretical(model.beta, rtilde, ese),
    }), out)


if __name__ == "__main__":
    cli()
