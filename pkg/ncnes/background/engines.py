"""Execution engines — serial, island and hybrid master-slave.

All three drive the same per-generation building blocks from
ncnes.domain.optimizer. Island mode gives every search process its own worker
thread; workers swap distribution snapshots through a SnapshotBoard. Hybrid
mode keeps the island layout and additionally fans each process's fitness
evaluations out to a shared evaluation pool.

Blocking exchange waits for every peer's snapshot of the current generation,
so serial, island-blocking and hybrid-blocking produce identical reports.
Nonblocking exchange never waits: it reads each peer's previous-generation
snapshot if already published, else the newest one.
"""

import time
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ncnes import settings
from ncnes.domain.gradients import diversity_grad
from ncnes.domain.optimizer import (
    AUTO,
    BLOCKING,
    EXCHANGES,
    Evaluator,
    build_report,
    evaluate_process,
    initialize,
    peer_view,
    plan_run,
    record_generation,
    resolve_phi,
    run,
    update_process,
    validate_run_config,
)
from ncnes.errors import EvaluationError

logger = logging.getLogger(__name__)

SERIAL = "serial"
ISLAND = "island"
HYBRID = "hybrid"
MODES = (SERIAL, ISLAND, HYBRID)


# ── Plans & timing ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ExecPlan:
    mode: str = SERIAL
    workers: Optional[int] = None       # None → 1 / lambda / pool default
    exchange: str = BLOCKING
    slow_eval_ms: float = 0.0
    slow_process: Optional[int] = None  # straggler injection
    slow_factor: float = 1.0


def validate_exec_plan(plan, cfg):
    """Return every violation as {"field", "msg"}; empty list when valid."""
    errors = []

    def err(name, msg):
        errors.append({"field": name, "msg": msg})

    if plan.mode not in MODES:
        err("mode", f"mode must be one of {MODES}, got {plan.mode!r}")
    if plan.exchange not in EXCHANGES:
        err("exchange", f"exchange must be one of {EXCHANGES}, got {plan.exchange!r}")
    # lambda-dependent checks are skipped when lambda itself is invalid
    lam_ok = isinstance(cfg.lam, int) and cfg.lam >= 1
    if plan.workers is not None:
        if not isinstance(plan.workers, int) or plan.workers < 1:
            err("workers", f"workers must be a positive integer, got {plan.workers!r}")
        elif plan.mode == SERIAL and plan.workers != 1:
            err("workers", f"serial mode runs on exactly 1 worker, got {plan.workers}")
        elif lam_ok and plan.mode == ISLAND and plan.workers != cfg.lam:
            err("workers", f"island mode needs workers == lambda ({cfg.lam}), got {plan.workers}")
    if not np.isfinite(plan.slow_eval_ms) or plan.slow_eval_ms < 0:
        err("slow_eval_ms", f"slow_eval_ms must be >= 0, got {plan.slow_eval_ms!r}")
    if lam_ok and plan.slow_process is not None and not (
            isinstance(plan.slow_process, int) and 0 <= plan.slow_process < cfg.lam):
        err("slow_process", f"slow_process must index a process in 0..{cfg.lam - 1}, got {plan.slow_process!r}")
    if not np.isfinite(plan.slow_factor) or plan.slow_factor <= 0:
        err("slow_factor", f"slow_factor must be positive, got {plan.slow_factor!r}")
    return errors


def resolve_workers(plan, cfg):
    """Computing units m: 1 (serial), lambda (island) or the evaluation pool size (hybrid)."""
    if plan.mode == SERIAL:
        return 1
    if plan.mode == ISLAND:
        return cfg.lam
    return plan.workers or settings.EVAL_POOL_SIZE or cfg.lam * cfg.mu


@dataclass(frozen=True)
class TimingReport:
    mode: str
    exchange: str
    units: int
    wall_clock_per_mode: dict = field(default_factory=dict)
    speedup_ratio: Optional[float] = None
    per_process_iteration_seconds: tuple = ()
    wait_seconds: tuple = ()


def speedup_ratio(runtime_serial, runtime_parallel, m):
    """runtime_serial / (runtime_parallel * m); 1.0 is linear speedup."""
    if runtime_serial <= 0 or runtime_parallel <= 0:
        raise ValueError(f"runtimes must be positive: {runtime_serial!r}, {runtime_parallel!r}")
    if m < 1:
        raise ValueError(f"m must be a positive integer: {m!r}")
    return runtime_serial / (runtime_parallel * m)


# ── Snapshot exchange ────────────────────────────────────────────────────────

class RunAborted(RuntimeError):
    """Raised inside waiting workers once any worker has failed."""


class SnapshotBoard:
    """Per-process append-only list of published distributions.

    Version g of process i is its distribution at the start of generation g
    (version 0 is the initial distribution). Entries are immutable, so readers
    never see a torn value.
    """

    def __init__(self, initial):
        self._versions = [[d] for d in initial]
        self._cond = threading.Condition()
        self._failure = None
        self._calibration = {}
        self.phi = None

    def publish(self, process, dist):
        with self._cond:
            self._versions[process].append(dist)
            self._cond.notify_all()

    def wait_for(self, version):
        """Block until every process has published `version`; return that snapshot."""
        with self._cond:
            self._cond.wait_for(
                lambda: self._failure is not None or all(len(v) > version for v in self._versions))
            if self._failure is not None:
                raise RunAborted(str(self._failure))
            return [v[version] for v in self._versions]

    def latest_up_to(self, version):
        """Per process: `version` if published, else the newest one. Never waits."""
        with self._cond:
            return [v[min(version, len(v) - 1)] for v in self._versions]

    def calibrate(self, process, fit_grad, div_grad, resolve):
        """Collect first-generation gradients from every process, then resolve phi once."""
        with self._cond:
            self._calibration[process] = (fit_grad, div_grad)
            if len(self._calibration) == len(self._versions):
                order = sorted(self._calibration)
                self.phi = resolve([self._calibration[i][0] for i in order],
                                   [self._calibration[i][1] for i in order])
                self._cond.notify_all()
            self._cond.wait_for(lambda: self._failure is not None or self.phi is not None)
            if self._failure is not None:
                raise RunAborted(str(self._failure))
            return self.phi

    def abort(self, failure):
        with self._cond:
            if self._failure is None:
                self._failure = failure
            self._cond.notify_all()

    @property
    def aborted(self):
        with self._cond:
            return self._failure is not None


# ── Workers ──────────────────────────────────────────────────────────────────

class PooledEvaluator:
    """Evaluator whose batches run on a shared thread pool, results kept in sample order."""

    def __init__(self, base, pool):
        self.base = base
        self.pool = pool

    def one(self, process, iteration, sample_index, x, reevals):
        return self.base.one(process, iteration, sample_index, x, reevals)

    def batch(self, process, iteration, solutions, reevals):
        futures = [self.pool.submit(self.base.one, process, iteration, k, x, int(reevals[k]))
                   for k, x in enumerate(solutions)]
        return np.array([f.result() for f in futures])


class IslandWorker:
    """Owns one search process for the whole run."""

    def __init__(self, process, cfg, sense, plans, initial, board, evaluator, exchange, fixed_phi):
        self.process = process
        self.cfg = cfg
        self.sense = sense
        self.plans = plans
        self.dist = initial
        self.board = board
        self.evaluator = evaluator
        self.exchange = exchange
        self.phi = fixed_phi
        self.results = []            # (ProcessEvaluation, new distribution) per generation
        self.iteration_seconds = []
        self.wait_seconds = 0.0
        self.failure = None

    def _snapshot(self, iteration):
        if self.exchange == BLOCKING:
            return self.board.wait_for(iteration)
        return self.board.latest_up_to(max(iteration - 1, 0))

    def run(self):
        i = self.process
        try:
            for plan in self.plans:
                if self.board.aborted:
                    return
                started = time.perf_counter()
                evaluation = evaluate_process(self.cfg, self.sense, i, plan, self.dist, self.evaluator)
                waited = time.perf_counter()
                snapshot = self._snapshot(plan.iteration)
                self.wait_seconds += time.perf_counter() - waited
                div = diversity_grad(i, peer_view(i, self.dist, snapshot))
                if self.phi is None:
                    self.phi = self.board.calibrate(
                        i, evaluation.fit_grad, div,
                        lambda fits, divs: resolve_phi(self.cfg, fits, divs))
                new_dist = update_process(self.cfg, self.dist, evaluation, div, plan, self.phi)
                self.board.publish(i, new_dist)
                self.results.append((evaluation, new_dist))
                self.dist = new_dist
                self.iteration_seconds.append(time.perf_counter() - started)
                logger.debug(f"process {i} generation {plan.iteration} done in "
                             f"{self.iteration_seconds[-1]:.4f}s")
        except RunAborted:
            return
        except Exception as e:
            self.failure = e
            self.board.abort(e)
            if isinstance(e, EvaluationError):
                logger.error(f"Worker for process {i} failed at {e.location()}: {e}", exc_info=True)
            else:
                logger.error(f"Worker for process {i} failed: {e}", exc_info=True)


# ── Engines ──────────────────────────────────────────────────────────────────

def _make_evaluator(cfg, plan, objective):
    return Evaluator(objective, cfg.seed,
                     delay_s=plan.slow_eval_ms / 1000.0,
                     slow_process=plan.slow_process,
                     slow_factor=plan.slow_factor)


def _run_islands(cfg, plan, objective, evaluator):
    state = initialize(cfg, objective)
    plans = plan_run(cfg, objective)
    board = SnapshotBoard(state.dists)
    units = resolve_workers(plan, cfg)
    fixed_phi = None if cfg.phi == AUTO else float(cfg.phi)
    logger.info(f"{plan.mode} engine: objective={objective.id} lambda={cfg.lam} mu={cfg.mu} "
                f"units={units} exchange={plan.exchange} generations={len(plans)}")

    pool = None
    if plan.mode == HYBRID:
        pool = ThreadPoolExecutor(max_workers=units, thread_name_prefix="ncnes-eval")
        evaluator = PooledEvaluator(evaluator, pool)
    workers = [IslandWorker(i, cfg, state.sense, plans, state.dists[i], board, evaluator,
                            plan.exchange, fixed_phi)
               for i in range(cfg.lam)]

    start = time.perf_counter()
    try:
        with ThreadPoolExecutor(max_workers=cfg.lam, thread_name_prefix="ncnes-island") as islands:
            futures = [islands.submit(w.run) for w in workers]
            for fut in futures:
                fut.result()
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
    wall = time.perf_counter() - start

    failures = [w.failure for w in workers if w.failure is not None]
    for failure in failures:
        if not isinstance(failure, EvaluationError):
            raise RuntimeError(f"{plan.mode} worker failed: {failure}") from failure

    # Replay finished generations in order so bookkeeping matches the serial loop.
    done = min(len(w.results) for w in workers)
    for g in range(done):
        record_generation(state, plans[g],
                          [w.results[g][0] for w in workers],
                          [w.results[g][1] for w in workers])
    state.phi = board.phi if fixed_phi is None else fixed_phi

    # Workers stop as soon as any peer fails, so only the earliest failure
    # observed is reported; later generations may never have been evaluated.
    error = None
    if failures:
        first = min(failures, key=lambda e: (e.iteration, e.process, e.sample))
        error = f"{first} ({first.location()})"
    report = build_report(state, wall_clock=wall, error=error)
    timing = TimingReport(
        mode=plan.mode,
        exchange=plan.exchange,
        units=units,
        wall_clock_per_mode={plan.mode: wall},
        per_process_iteration_seconds=tuple(
            float(np.mean(w.iteration_seconds)) if w.iteration_seconds else 0.0 for w in workers),
        wait_seconds=tuple(w.wait_seconds for w in workers),
    )
    logger.info(f"{plan.mode} engine finished: {done} generations in {wall:.3f}s, "
                f"best={report.best_fitness}")
    return report, timing


def execute(cfg, plan, objective):
    """Run `cfg` on `objective` under `plan`. Returns (RunReport, TimingReport)."""
    errors = validate_run_config(cfg, objective) + validate_exec_plan(plan, cfg)
    if errors:
        raise ValueError("; ".join(f"{e['field']}: {e['msg']}" for e in errors))
    evaluator = _make_evaluator(cfg, plan, objective)
    if plan.mode == SERIAL:
        report = run(cfg, objective, exchange=plan.exchange, evaluator=evaluator)
        timing = TimingReport(mode=SERIAL, exchange=plan.exchange, units=1,
                              wall_clock_per_mode={SERIAL: report.wall_clock})
        return report, timing
    return _run_islands(cfg, plan, objective, evaluator)


def compare_modes(cfg, plans, objective):
    """Serial reference plus every plan; fills wall clocks and speedup ratios.

    Returns (serial_report, [(report, timing), ...]). The serial reference
    uses the first plan's delay settings.
    """
    if not plans:
        raise ValueError("compare_modes needs at least one plan")
    reference = replace(plans[0], mode=SERIAL, workers=None, exchange=BLOCKING)
    serial_report, serial_timing = execute(cfg, reference, objective)
    serial_wall = serial_timing.wall_clock_per_mode[SERIAL]
    results = []
    for plan in plans:
        report, timing = execute(cfg, plan, objective)
        wall = timing.wall_clock_per_mode[plan.mode]
        timing = replace(timing,
                         wall_clock_per_mode={SERIAL: serial_wall, plan.mode: wall},
                         speedup_ratio=speedup_ratio(serial_wall, wall, timing.units))
        logger.info(f"{plan.mode}/{plan.exchange}: {wall:.3f}s vs serial {serial_wall:.3f}s, "
                    f"m={timing.units}, speedup ratio {timing.speedup_ratio:.3f}")
        results.append((report, timing))
    return serial_report, results
