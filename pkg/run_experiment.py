"""
run_experiment.py — command-line entry point.

    python run_experiment.py --config config/example.ini --seed 1 --seed 2 --mode island

Exit codes: 0 success, 1 a run failed, 2 the configuration was rejected.
"""

import sys
import logging
import argparse

from config_validators import ALGOS, parse_config
from ncnes import settings
from ncnes.background.engines import MODES
from ncnes.background.experiment_runner import run_experiment
from ncnes.errors import ConfigError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_CONFIG = 2


def build_parser():
    parser = argparse.ArgumentParser(
        description="Run multi-process natural evolution strategy experiments.")
    parser.add_argument("--config", required=True, help="Experiment file (INI)")
    parser.add_argument("--seed", type=int, action="append",
                        help="Seed to run; repeat for several (overrides [experiment] seeds)")
    parser.add_argument("--mode", choices=MODES, help="Execution engine")
    parser.add_argument("--algo", choices=ALGOS, help="Optimizer")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--phi", help="Diversity trade-off (number or 'auto')")
    parser.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    return parser


def overrides_from_args(args):
    return {
        "run": {"algo": args.algo, "phi": args.phi},
        "exec": {"mode": args.mode},
        "experiment": {
            "seeds": ",".join(str(s) for s in args.seed) if args.seed else None,
            "out_dir": args.out,
        },
    }


def main(argv=None):
    args = build_parser().parse_args(argv)
    settings.configure_logging(quiet=args.quiet)
    try:
        exp = parse_config(args.config, overrides_from_args(args))
    except ConfigError as e:
        for err in e.errors:
            print(f"config error: {err['field']}: {err['msg']}", file=sys.stderr)
        return EXIT_CONFIG
    logger.info(f"Experiment: algo={exp.algo} objective={exp.objective.id} seeds={list(exp.seeds)} "
                f"mode={exp.plan.mode} out={exp.out_dir}")
    status = run_experiment(exp)
    if status != EXIT_OK:
        print(f"experiment finished with failures, see the log and {exp.out_dir}", file=sys.stderr)
        return EXIT_RUN_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
