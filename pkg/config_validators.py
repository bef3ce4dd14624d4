"""
config_validators.py — Experiment file parsing and validation.

Experiment files are INI-style with sections [run], [objective], [exec] and
[experiment]. Every key is parsed and checked; all violations are collected
and raised together as one ConfigError (fields named "section.key").
See config/example.ini for an annotated file.
"""

import os
import re
import math
import logging
import configparser
from dataclasses import dataclass, field
from typing import Optional

from ncnes import settings
from ncnes.background.engines import ExecPlan, validate_exec_plan
from ncnes.domain.optimizer import AUTO, RunConfig, validate_run_config
from ncnes.errors import ConfigError
from ncnes.objectives import BALANCE_ID, available_objectives, get_objective
from ncnes.objectives.balance import DEFAULT_CODEC

logger = logging.getLogger(__name__)

NCNES = "ncnes"
NCS_C = "ncs-c"
ALGOS = (NCNES, NCS_C)

REEVALS_PATTERN = re.compile(r'^\s*(\d+)\s*(?:-\s*(\d+)\s*)?$')


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig
    plan: ExecPlan
    objective: object
    seeds: tuple = (1,)
    out_dir: str = settings.OUT_DIR
    algo: str = NCNES
    excel: bool = False
    source: Optional[str] = field(default=None, compare=False)

    def run_config(self, seed):
        return self.run.with_overrides(seed=seed)


# ── Value parsers (raise ValueError with a readable message) ────────────────

def _parse_int(raw):
    try:
        return int(raw.strip())
    except ValueError:
        raise ValueError(f"expected an integer, got {raw!r}")


def _parse_float(raw):
    try:
        return float(raw.strip())
    except ValueError:
        raise ValueError(f"expected a number, got {raw!r}")


def _parse_phi(raw):
    if raw.strip().lower() == AUTO:
        return AUTO
    return _parse_float(raw)


def _parse_reevals(raw):
    m = REEVALS_PATTERN.match(raw)
    if not m:
        raise ValueError(f"expected an integer or a range like 1-5, got {raw!r}")
    lo = int(m.group(1))
    hi = int(m.group(2)) if m.group(2) is not None else lo
    return (lo, hi)


def _parse_bounds(raw):
    try:
        values = tuple(float(v) for v in raw.split(","))
    except ValueError:
        raise ValueError(f"expected a number or a comma-separated list, got {raw!r}")
    return values[0] if len(values) == 1 else values


def _parse_seeds(raw):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("at least one seed is required")
    seeds = tuple(_parse_int(p) for p in parts)
    for s in seeds:
        if not 0 <= s < 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {s}")
    return seeds


def _parse_bool(raw):
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {raw!r}")


def _parse_text(raw):
    return raw.strip()


def _parse_optional_int(raw):
    return None if raw.strip() == "" else _parse_int(raw)


SCHEMA = {
    "run": {
        "lambda": _parse_int,
        "mu": _parse_int,
        "phi": _parse_phi,
        "eta_m_init": _parse_float,
        "eta_v_init": _parse_float,
        "budget_evals": _parse_int,
        "sense": _parse_text,
        "update_rule": _parse_text,
        "reevals": _parse_reevals,
        "init_lower": _parse_bounds,
        "init_upper": _parse_bounds,
        "algo": _parse_text,
        "ncs_sigma": _parse_float,
        "ncs_epoch": _parse_int,
        "ncs_factor": _parse_float,
    },
    "objective": {
        "id": _parse_text,
        "dimension": _parse_int,
        "noise_sd": _parse_float,
    },
    "exec": {
        "mode": _parse_text,
        "workers": _parse_optional_int,
        "exchange": _parse_text,
        "slow_eval_ms": _parse_float,
        "slow_process": _parse_optional_int,
        "slow_factor": _parse_float,
    },
    "experiment": {
        "seeds": _parse_seeds,
        "out_dir": _parse_text,
        "excel": _parse_bool,
    },
}

# INI key → RunConfig field
RUN_FIELDS = {"lambda": "lam"}


# ── Structural checks ────────────────────────────────────────────────────────

def _read(path, overrides):
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as e:
        raise ConfigError([{"field": "config", "msg": f"cannot read {path}: {e}"}])
    except configparser.Error as e:
        raise ConfigError([{"field": "config", "msg": f"malformed config file: {e}"}])
    for section, values in (overrides or {}).items():
        if not parser.has_section(section):
            parser.add_section(section)
        for key, raw in values.items():
            if raw is not None:
                parser.set(section, key, str(raw))
    return parser


def _parse_sections(parser):
    """Typed values per section plus every unknown-name / bad-value violation."""
    errors = []
    values = {name: {} for name in SCHEMA}
    for section in parser.sections():
        if section not in SCHEMA:
            errors.append({"field": section, "msg": f"unknown section [{section}] (known: {', '.join(SCHEMA)})"})
            continue
        for key, raw in parser.items(section):
            parse = SCHEMA[section].get(key)
            if parse is None:
                errors.append({"field": f"{section}.{key}", "msg": f"unknown key {key!r} in [{section}]"})
                continue
            try:
                values[section][key] = parse(raw)
            except ValueError as e:
                errors.append({"field": f"{section}.{key}", "msg": str(e)})
    return values, errors


def _validate_out_dir(out_dir):
    if not out_dir:
        return {"field": "experiment.out_dir", "msg": "out_dir must not be empty"}
    if os.path.exists(out_dir):
        if not os.path.isdir(out_dir):
            return {"field": "experiment.out_dir", "msg": f"{out_dir} exists and is not a directory"}
        if not os.access(out_dir, os.W_OK):
            return {"field": "experiment.out_dir", "msg": f"{out_dir} is not writable"}
        return None
    parent = os.path.dirname(os.path.abspath(out_dir))
    while not os.path.exists(parent):
        parent = os.path.dirname(parent)
    if not os.access(parent, os.W_OK):
        return {"field": "experiment.out_dir", "msg": f"cannot create {out_dir}: {parent} is not writable"}
    return None


# ── Public entry ─────────────────────────────────────────────────────────────

def parse_config(path, overrides=None):
    """Parse and fully validate an experiment file.

    `overrides` maps section → {key: raw string}; entries replace the file's
    values before validation (the CLI passes its flags this way).
    Raises ConfigError listing every violation.
    """
    parser = _read(path, overrides)
    values, errors = _parse_sections(parser)

    objective = None
    obj = values["objective"]
    if "id" not in obj:
        errors.append({"field": "objective.id", "msg": "objective.id is required"})
    elif obj["id"] not in available_objectives():
        errors.append({"field": "objective.id",
                       "msg": f"unknown objective {obj['id']!r} (known: {', '.join(available_objectives())})"})
    else:
        dimension = obj.get("dimension", 2)
        noise_sd = obj.get("noise_sd", 0.0)
        if dimension < 1:
            errors.append({"field": "objective.dimension", "msg": f"dimension must be >= 1, got {dimension}"})
        elif not math.isfinite(noise_sd) or noise_sd < 0:
            errors.append({"field": "objective.noise_sd", "msg": f"noise_sd must be finite and >= 0, got {noise_sd!r}"})
        else:
            objective = get_objective(obj["id"], dimension, noise_sd)
        if (objective is not None and obj["id"] == BALANCE_ID and "dimension" in obj
                and obj["dimension"] != DEFAULT_CODEC.weight_count):
            errors.append({"field": "objective.dimension",
                           "msg": f"balance has a fixed dimension of {DEFAULT_CODEC.weight_count}"})

    run_values = dict(values["run"])
    algo = run_values.pop("algo", NCNES)
    if algo not in ALGOS:
        errors.append({"field": "run.algo", "msg": f"algo must be one of {ALGOS}, got {algo!r}"})
    run_kwargs = {RUN_FIELDS.get(k, k): v for k, v in run_values.items()}
    run_kwargs.setdefault("budget_evals", settings.DEFAULT_BUDGET)
    run_cfg = RunConfig(**run_kwargs)
    for e in validate_run_config(run_cfg, objective):
        errors.append({"field": f"run.{e['field']}", "msg": e["msg"]})

    plan = ExecPlan(**values["exec"])
    for e in validate_exec_plan(plan, run_cfg):
        errors.append({"field": f"exec.{e['field']}", "msg": e["msg"]})

    exp = values["experiment"]
    out_dir = exp.get("out_dir", settings.OUT_DIR)
    problem = _validate_out_dir(out_dir)
    if problem:
        errors.append(problem)

    if errors:
        logger.warning(f"Config {path} rejected with {len(errors)} error(s)")
        raise ConfigError(errors)

    return ExperimentConfig(
        run=run_cfg,
        plan=plan,
        objective=objective,
        seeds=exp.get("seeds", (1,)),
        out_dir=out_dir,
        algo=algo,
        excel=exp.get("excel", False),
        source=str(path),
    )
