"""Experiment runner — runs every seed of an ExperimentConfig and writes results.

For each seed: one run (NCNES through the configured engine, or NCS-C), one
curve CSV. Then a summary table over all seeds. Tracks status for callers
polling from another thread.
"""

import os
import logging
import threading
from datetime import datetime

import reports
from ncnes.background.engines import SERIAL, execute
from ncnes.domain.baseline_ncs import run_ncs_c

logger = logging.getLogger(__name__)

NCS_C = "ncs-c"
SUMMARY_FILE = "summary.csv"
SUMMARY_EXCEL_FILE = "summary.xlsx"

# ── Status tracking (thread-safe) ──────────────────────────────────────────
experiment_status = {"running": False, "current_seed": None, "completed": 0,
                     "last_result": None, "last_time": None, "errors": [], "runs": []}
_experiment_lock = threading.Lock()


def curve_filename(algo, seed):
    return f"curve_{algo}_seed{seed}.csv"


def run_seed(exp, seed):
    """One run of `exp` with `seed`. Returns the RunReport."""
    cfg = exp.run_config(seed)
    if exp.algo == NCS_C:
        if exp.plan.mode != SERIAL:
            logger.warning(f"NCS-C selection is sequential; exec mode {exp.plan.mode!r} ignored")
        return run_ncs_c(cfg, exp.objective)
    report, timing = execute(cfg, exp.plan, exp.objective)
    logger.info(f"Seed {seed}: {timing.mode} engine, {report.wall_clock:.3f}s")
    return report


def run_experiment(exp):
    """Run all seeds and write curves + summary. Returns 0 on success, 1 if any run failed."""
    with _experiment_lock:
        if experiment_status["running"]:
            raise RuntimeError("An experiment is already running")
        experiment_status.update(running=True, completed=0, current_seed=None, errors=[], runs=[])

    results = []
    try:
        os.makedirs(exp.out_dir, exist_ok=True)
        for seed in exp.seeds:
            experiment_status["current_seed"] = seed
            try:
                report = run_seed(exp, seed)
            except Exception as e:
                logger.error(f"Seed {seed} failed: {e}", exc_info=True)
                experiment_status["errors"].append(f"seed {seed}: {e}")
                continue
            reports.emit_curves(report, os.path.join(exp.out_dir, curve_filename(exp.algo, seed)))
            results.append(report)
            experiment_status["runs"].append(report.to_dict(include_timing=True))
            if not report.valid:
                experiment_status["errors"].append(f"seed {seed}: {report.error}")
            logger.info(f"Seed {seed}: best={report.best_fitness} evals={report.evals} "
                        f"iterations={len(report.curve)} valid={report.valid}")
            experiment_status["completed"] += 1

        reports.write_summary(results, os.path.join(exp.out_dir, SUMMARY_FILE))
        if exp.excel:
            reports.export_summary_excel(results, os.path.join(exp.out_dir, SUMMARY_EXCEL_FILE))
    finally:
        experiment_status["running"] = False
        experiment_status["current_seed"] = None
        experiment_status["last_time"] = datetime.now().isoformat()
        experiment_status["last_result"] = "error" if experiment_status["errors"] else "success"

    return 1 if experiment_status["errors"] else 0
