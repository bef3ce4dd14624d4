import os
import logging

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

CURVE_FIXED_COLUMNS = ["iteration", "evals", "best_fitness", "mean_pairwise_db"]
SUMMARY_COLUMNS = ["seed", "algo", "objective", "valid", "iterations", "evals",
                   "best_fitness", "final_mean_pairwise_db", "phi_used"]
MEDIAN_ROW = "median"
FLOAT_FORMAT = "%.17g"


def curve_columns(lam):
    return CURVE_FIXED_COLUMNS + [f"process_mean_fitness_{i}" for i in range(1, lam + 1)]


def curves_frame(report):
    """One row per generation of `report`."""
    rows = []
    for rec in report.curve:
        row = {
            "iteration": rec.iteration,
            "evals": rec.evals,
            "best_fitness": rec.best_fitness,
            "mean_pairwise_db": rec.mean_pairwise_db,
        }
        for i, value in enumerate(rec.process_mean_fitness, start=1):
            row[f"process_mean_fitness_{i}"] = value
        rows.append(row)
    return pd.DataFrame(rows, columns=curve_columns(report.lam))


def emit_curves(report, path):
    """
    Writes the per-generation curve of a run as CSV.
    Floats carry 17 significant digits and lines end with '\\n'.
    """
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    curves_frame(report).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Curve written: {path} ({len(report.curve)} rows)")
    return path


def read_curves(path):
    return pd.read_csv(path, float_precision="round_trip")


def summary_frame(reports):
    """
    One row per run plus a 'median' row over the numeric columns.
    Wall-clock time is left out so the table is reproducible.
    """
    rows = []
    for r in reports:
        rows.append({
            "seed": r.seed,
            "algo": r.algo,
            "objective": r.objective_id,
            "valid": r.valid,
            "iterations": len(r.curve),
            "evals": r.evals,
            "best_fitness": r.best_fitness,
            "final_mean_pairwise_db": r.curve[-1].mean_pairwise_db if r.curve else np.nan,
            "phi_used": r.phi_used,
        })
    df = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    if df.empty:
        return df
    median = {"seed": MEDIAN_ROW}
    for col in ("iterations", "evals", "best_fitness", "final_mean_pairwise_db"):
        median[col] = float(pd.to_numeric(df[col], errors="coerce").median())
    return pd.concat([df, pd.DataFrame([median], columns=SUMMARY_COLUMNS)], ignore_index=True)


def write_summary(reports, path):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    df = summary_frame(reports)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Summary written: {path} ({len(reports)} runs)")
    return path


def read_summary(path):
    return pd.read_csv(path, float_precision="round_trip", dtype={"seed": str})


def export_summary_excel(reports, path):
    """
    Same table as write_summary, as an Excel sheet for sharing.
    Not byte-reproducible (the workbook embeds timestamps).
    """
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    summary_frame(reports).to_excel(path, index=False, sheet_name="summary")
    return path
