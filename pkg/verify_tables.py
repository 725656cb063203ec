"""Desk-scale reproduction of the simulation tables, printing PASS/FAIL per check.

    python verify_tables.py [replications] [threads]
"""
import math
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from services.experiment_engine import ExperimentConfig, R_HAT_COLUMN, column_label, run_study
from services.gibbs_models import preset
from services.range_select import parse_grid
from services.tables import emit_tables

MULTIPLIERS = (0.9, 1.0, 1.1, 1.2)
TABLE1_MODELS = ("s1", "s2", "g1", "g2")
BALANCED_MODELS = ("s1", "s2", "shc1", "shc2", "ps1", "ps2", "t1", "t2", "g1", "g2", "lj1")
# area2 has lambda_tilde(u, empty) = 1/2, so its gap is about -beta * E V / 2.
# area1 misses balance by about beta * E V * 0.0014, far below Monte-Carlo noise: reported only.
UNBALANCED_MODELS = ("area2",)
REPORTED_MODELS = ("area1",)

results = []


def check(name: str, ok: bool, detail: str) -> None:
    results.append(ok)
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def _se(row):
    return row.sd_beta / math.sqrt(row.n_valid)


def verify_table1(summary):
    for name in TABLE1_MODELS:
        beta_star = preset(name).beta
        for L in (1.0, 2.0):
            for p in MULTIPLIERS[1:]:
                row = summary.row(name, L, column_label(p))
                ok = abs(row.mean_beta - beta_star) <= 3 * _se(row)
                check(f"table1 {name} L={L:g} p={p:g}", ok, f"mean={row.mean_beta:.1f} sd={row.sd_beta:.1f}")
        low = summary.row(name, 1.0, column_label(0.9)).mean_beta
        if name == "s1":
            check("table1 s1 under-range bias", low < 185, f"mean at p=0.9 is {low:.1f}")
        if name == "g2":
            check("table1 g2 under-range bias", low > 52, f"mean at p=0.9 is {low:.1f}")
        ratio = summary.row(name, 2.0, "p=1").sd_beta / summary.row(name, 1.0, "p=1").sd_beta
        check(f"variance scaling {name}", 0.4 <= ratio <= 0.6, f"sd(L=2)/sd(L=1)={ratio:.2f}")


def verify_table2_and_3(summary):
    row = summary.row("s1", 1.0, R_HAT_COLUMN)
    check("table2 s1 R_hat", 0.046 <= row.mean_r_hat <= 0.058, f"mean R_hat={row.mean_r_hat:.4f}")
    check("table2 s1 beta(R_hat)", abs(row.mean_beta - 200) <= 3 * _se(row), f"mean={row.mean_beta:.1f}")
    check("table3 s1 R_hat coverage", row.coverage_rate >= 0.85, f"{100 * row.coverage_rate:.1f}%")
    for name in ("s1", "s2"):
        rate = summary.row(name, 1.0, "p=1").coverage_rate
        check(f"table3 {name} coverage p=1", 0.91 <= rate <= 0.97, f"{100 * rate:.1f}%")
    rate = summary.row("s1", 2.0, "p=0.9").coverage_rate
    check("table3 s1 L=2 under-range coverage", rate < 0.60, f"{100 * rate:.1f}%")


def verify_balance(summary):
    for name in BALANCED_MODELS + UNBALANCED_MODELS + REPORTED_MODELS:
        for column in ("p=1", "p=1.1"):
            row = summary.row(name, 1.0, column)
            balanced = abs(row.gap_mean) <= 3 * row.gap_se
            if name in REPORTED_MODELS:
                print(f"[INFO] balance {name} {column}: gap={row.gap_mean:.2f} se={row.gap_se:.2f}")
            elif name in UNBALANCED_MODELS:
                check(f"balance fails for {name} {column}", row.gap_mean < 0 and not balanced,
                      f"gap={row.gap_mean:.2f} se={row.gap_se:.2f}")
            else:
                check(f"balance {name} {column}", balanced, f"gap={row.gap_mean:.2f} se={row.gap_se:.2f}")


def main():
    replications = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    threads = int(sys.argv[2]) if len(sys.argv) > 2 else None
    grid = tuple(parse_grid("0.02:0.08:13").tolist())

    configs = [ExperimentConfig(preset(name), L, replications, MULTIPLIERS, master_seed=2024)
               for name in TABLE1_MODELS for L in (1.0, 2.0)]
    configs = [replace(c, range_grid=grid) if c.model.name in ("s1", "s2") else c for c in configs]
    configs += [ExperimentConfig(preset(name), 1.0, replications, (1.0, 1.1), master_seed=2025)
                for name in BALANCED_MODELS + UNBALANCED_MODELS + REPORTED_MODELS if name not in TABLE1_MODELS]

    print(f"Running {len(configs)} experiments x {replications} replications...")
    summary = run_study(configs, threads)
    verify_table1(summary)
    verify_table2_and_3(summary)

    verify_balance(summary)

    out_dir = Path(tempfile.mkdtemp(prefix="gibbs_beta_tables_"))
    emit_tables(summary, out_dir, ["csv", "txt"])
    print((out_dir / "tables.txt").read_text())
    print(f"{sum(results)}/{len(results)} checks passed; tables in {out_dir}")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
