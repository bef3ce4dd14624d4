"""Runtime settings — environment-driven defaults.

All modules read configuration defaults from here so `.env` is loaded once,
before any os.getenv() call.
"""

import os
import logging

from dotenv import load_dotenv

# ── Load environment BEFORE any os.getenv() ─────────────────────────────────
load_dotenv()

logger = logging.getLogger(__name__)

OUT_DIR = os.getenv("NCNES_OUT_DIR", "results")
LOG_LEVEL = os.getenv("NCNES_LOG_LEVEL", "INFO").upper()
DEFAULT_BUDGET = int(os.getenv("NCNES_DEFAULT_BUDGET", "30000"))

_pool = os.getenv("NCNES_EVAL_POOL_SIZE", "").strip()
EVAL_POOL_SIZE = int(_pool) if _pool.isdigit() and int(_pool) > 0 else None

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


def configure_logging(quiet=False):
    """Install the root handler. Entry points only; library code never calls this."""
    level = logging.WARNING if quiet else getattr(logging, LOG_LEVEL, logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)
