#!/usr/bin/env python3
"""
Compare NCNES against the NCS-C baseline on equal budgets.

Runs both optimizers over a range of seeds and prints the per-seed best
fitness plus medians. Tracked benchmark, not a pass/fail gate.

Usage:
    python scripts/compare_baseline.py                      # 10-D Rastrigin, 20 seeds
    python scripts/compare_baseline.py --objective ackley --dimension 5 --seeds 10
    python scripts/compare_baseline.py --budget 10000 --csv results/compare.csv
"""

import os
import sys
import logging
import argparse

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pandas as pd

from ncnes import settings
from ncnes.domain.baseline_ncs import run_ncs_c
from ncnes.domain.optimizer import RunConfig, run
from ncnes.objectives import get_objective

logger = logging.getLogger("compare_baseline")


def compare(objective, base_cfg, seeds):
    rows = []
    for seed in seeds:
        cfg = base_cfg.with_overrides(seed=seed)
        ncnes = run(cfg, objective)
        ncs = run_ncs_c(cfg, objective)
        rows.append({"seed": seed, "ncnes": ncnes.best_fitness, "ncs_c": ncs.best_fitness})
        logger.info(f"seed {seed}: ncnes={ncnes.best_fitness:.6g} ncs-c={ncs.best_fitness:.6g}")
    return pd.DataFrame(rows)


def main():
    parser = argparse.ArgumentParser(description="NCNES vs NCS-C on equal budgets")
    parser.add_argument("--objective", default="rastrigin")
    parser.add_argument("--dimension", type=int, default=10)
    parser.add_argument("--seeds", type=int, default=20, help="Seeds 1..N")
    parser.add_argument("--budget", type=int, default=settings.DEFAULT_BUDGET)
    parser.add_argument("--phi", default="0.0001")
    parser.add_argument("--csv", help="Also write the per-seed table here")
    args = parser.parse_args()

    settings.configure_logging()
    objective = get_objective(args.objective, args.dimension)
    phi = args.phi if args.phi == "auto" else float(args.phi)
    cfg = RunConfig(budget_evals=args.budget, phi=phi)
    df = compare(objective, cfg, range(1, args.seeds + 1))

    med_ncnes, med_ncs = df["ncnes"].median(), df["ncs_c"].median()
    print(df.to_string(index=False))
    print(f"\nmedian best fitness ({objective.sense}): ncnes={med_ncnes:.6g} ncs-c={med_ncs:.6g}")
    better = med_ncnes < med_ncs if objective.sense == "minimize" else med_ncnes > med_ncs
    print("NCNES median is better" if better else "NCS-C median is better or equal")
    if args.csv:
        os.makedirs(os.path.dirname(os.path.abspath(args.csv)), exist_ok=True)
        df.to_csv(args.csv, index=False, float_format="%.17g", lineterminator="\n")


if __name__ == "__main__":
    main()
