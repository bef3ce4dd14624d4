"""Multi-process natural evolution strategy — the outer optimization loop.

Flow per generation g (serial form; the engines in ncnes.background split the
same steps across workers):
  1. plan_iteration()   → step sizes from the schedule + re-evaluation counts
  2. evaluate_process() → sample mu solutions, evaluate, utilities,
                          fitness gradient and Fisher diagonals (per process)
  3. diversity_grad()   → from the peer snapshots of this (or the previous) generation
  4. update_process()   → natural or plain step
  5. record_generation()→ budget, best-so-far, curve record

Every random draw uses the stream scheme of ncnes.domain.streams, so the
result depends on (config, objective) only, never on the execution layout.
"""

import time
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from ncnes.domain import streams
from ncnes.domain.gaussian import (
    SampleBatch,
    initial_distribution,
    mean_pairwise_distance,
    sample,
)
from ncnes.domain.gradients import (
    FisherDiagonals,
    MAXIMIZE,
    MINIMIZE,
    SENSES,
    auto_phi,
    diversity_grad,
    fisher,
    fitness_grad,
    natural_step,
    plain_step,
    schedule,
    shape_utilities,
)
from ncnes.errors import BudgetExhausted, EvaluationError
from ncnes.objectives import noisy_evaluate

logger = logging.getLogger(__name__)

NATURAL = "natural"
PLAIN = "plain"
UPDATE_RULES = (NATURAL, PLAIN)
BLOCKING = "blocking"
NONBLOCKING = "nonblocking"
EXCHANGES = (BLOCKING, NONBLOCKING)
AUTO = "auto"
DEFAULT_PHI = 0.0001
MAX_REEVALS = 5


# ── Configuration ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class RunConfig:
    """Hyperparameters of one run. Defaults follow the published settings."""

    lam: int = 5
    mu: int = 15
    phi: object = DEFAULT_PHI          # float >= 0, or "auto"
    eta_m_init: float = 0.5
    eta_v_init: float = 0.1
    budget_evals: int = 30000
    seed: int = 1
    sense: Optional[str] = None        # None → the objective's own sense
    update_rule: str = NATURAL
    reevals: tuple = (1, MAX_REEVALS)  # inclusive range; (n, n) for a fixed count
    init_lower: Optional[tuple] = None
    init_upper: Optional[tuple] = None
    ncs_sigma: Optional[float] = None
    ncs_epoch: int = 10
    ncs_factor: float = 1.1

    def with_overrides(self, **fields):
        return replace(self, **fields)


def validate_run_config(cfg, objective=None):
    """Return every violation as {"field", "msg"}; empty list when valid."""
    errors = []

    def err(name, msg):
        errors.append({"field": name, "msg": msg})

    if not isinstance(cfg.lam, int) or cfg.lam < 1:
        err("lambda", f"lambda must be a positive integer, got {cfg.lam!r}")
    if not isinstance(cfg.mu, int) or cfg.mu < 1:
        err("mu", f"mu must be a positive integer, got {cfg.mu!r}")
    if cfg.phi != AUTO:
        try:
            phi = float(cfg.phi)
            if not np.isfinite(phi) or phi < 0:
                err("phi", f"phi must be a finite number >= 0 or 'auto', got {cfg.phi!r}")
        except (TypeError, ValueError):
            err("phi", f"phi must be a finite number >= 0 or 'auto', got {cfg.phi!r}")
    for name in ("eta_m_init", "eta_v_init"):
        value = getattr(cfg, name)
        if not isinstance(value, (int, float)) or not np.isfinite(value) or value <= 0:
            err(name, f"{name} must be a positive number, got {value!r}")
    if not isinstance(cfg.budget_evals, int) or cfg.budget_evals < 1:
        err("budget_evals", f"budget_evals must be a positive integer, got {cfg.budget_evals!r}")
    elif isinstance(cfg.lam, int) and isinstance(cfg.mu, int) and cfg.budget_evals < cfg.lam * cfg.mu:
        err("budget_evals", f"budget_evals ({cfg.budget_evals}) must be >= lambda*mu ({cfg.lam * cfg.mu})")
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2 ** 64:
        err("seed", f"seed must be an unsigned 64-bit integer, got {cfg.seed!r}")
    if cfg.sense is not None and cfg.sense not in SENSES:
        err("sense", f"sense must be one of {SENSES}, got {cfg.sense!r}")
    if cfg.update_rule not in UPDATE_RULES:
        err("update_rule", f"update_rule must be one of {UPDATE_RULES}, got {cfg.update_rule!r}")
    lo, hi = (cfg.reevals if isinstance(cfg.reevals, tuple) and len(cfg.reevals) == 2 else (None, None))
    if not (isinstance(lo, int) and isinstance(hi, int) and 1 <= lo <= hi):
        err("reevals", f"reevals must be an integer >= 1 or a range lo-hi with 1 <= lo <= hi, got {cfg.reevals!r}")
    if cfg.ncs_sigma is not None and (not np.isfinite(cfg.ncs_sigma) or cfg.ncs_sigma <= 0):
        err("ncs_sigma", f"ncs_sigma must be positive, got {cfg.ncs_sigma!r}")
    if not isinstance(cfg.ncs_epoch, int) or cfg.ncs_epoch < 1:
        err("ncs_epoch", f"ncs_epoch must be a positive integer, got {cfg.ncs_epoch!r}")
    if not np.isfinite(cfg.ncs_factor) or cfg.ncs_factor <= 1:
        err("ncs_factor", f"ncs_factor must be > 1, got {cfg.ncs_factor!r}")

    if objective is not None:
        try:
            lower, upper = resolve_box(cfg, objective)
            if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
                err("init_box", "init box bounds must be finite")
            elif np.any(lower >= upper):
                bad = int(np.flatnonzero(lower >= upper)[0])
                err("init_box", f"init_lower must be < init_upper (coordinate {bad})")
        except ValueError as e:
            err("init_box", str(e))
    return errors


def resolve_box(cfg, objective):
    """Initialization box: config bounds (scalar or per-dimension) else the objective domain."""
    d = objective.dimension

    def expand(values, fallback, name):
        if values is None:
            return np.array(fallback, dtype=float)
        arr = np.array(values, dtype=float).reshape(-1)
        if arr.size == 1:
            return np.full(d, float(arr[0]))
        if arr.size != d:
            raise ValueError(f"{name} has {arr.size} entries, objective dimension is {d}")
        return arr

    return (expand(cfg.init_lower, objective.lower, "init_lower"),
            expand(cfg.init_upper, objective.upper, "init_upper"))


def resolve_sense(cfg, objective):
    return cfg.sense or objective.sense


# ── Reports ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class CurveRecord:
    iteration: int
    evals: int
    best_fitness: float
    mean_pairwise_db: float
    process_mean_fitness: tuple


@dataclass
class RunReport:
    algo: str
    objective_id: str
    seed: int
    sense: str
    lam: int
    best_solution: tuple = ()
    best_fitness: Optional[float] = None
    curve: List[CurveRecord] = field(default_factory=list)
    evals: int = 0
    phi_used: Optional[float] = None
    final_distributions: tuple = ()
    valid: bool = True
    error: Optional[str] = None
    wall_clock: float = field(default=0.0, compare=False)

    def to_dict(self, include_timing=False):
        out = {
            "algo": self.algo,
            "objective": self.objective_id,
            "seed": self.seed,
            "sense": self.sense,
            "lambda": self.lam,
            "best_solution": list(self.best_solution),
            "best_fitness": self.best_fitness,
            "evals": self.evals,
            "phi_used": self.phi_used,
            "iterations": len(self.curve),
            "valid": self.valid,
            "error": self.error,
        }
        if include_timing:
            out["wall_clock"] = self.wall_clock
        return out


def is_better(candidate, incumbent, sense):
    if incumbent is None:
        return True
    return candidate > incumbent if sense == MAXIMIZE else candidate < incumbent


# ── Evaluation ───────────────────────────────────────────────────────────────

class Evaluator:
    """Evaluates one solution; pure given (process, iteration, sample).

    `delay_s` injects an artificial per-evaluation cost (multiplied by the
    re-evaluation count) so parallel speedup is measurable on cheap objectives.
    """

    def __init__(self, objective, seed, delay_s=0.0, slow_process=None, slow_factor=1.0):
        self.objective = objective
        self.seed = seed
        self.delay_s = float(delay_s)
        self.slow_process = slow_process
        self.slow_factor = float(slow_factor)

    def delay_for(self, process):
        if process == self.slow_process:
            return self.delay_s * self.slow_factor
        return self.delay_s

    def one(self, process, iteration, sample_index, x, reevals):
        delay = self.delay_for(process)
        if delay > 0:
            time.sleep(delay * reevals)
        stream = streams.Stream(self.seed, streams.NOISE, process, iteration, sample_index)
        try:
            value = noisy_evaluate(self.objective, x, reevals, stream)
        except Exception as e:
            raise EvaluationError(
                f"evaluation of {self.objective.id} failed: {e}",
                process=process, iteration=iteration, sample=sample_index) from e
        if not np.isfinite(value):
            raise EvaluationError(
                f"evaluation of {self.objective.id} returned {value!r}",
                process=process, iteration=iteration, sample=sample_index)
        return float(value)

    def batch(self, process, iteration, solutions, reevals):
        return np.array([self.one(process, iteration, k, x, int(reevals[k]))
                         for k, x in enumerate(solutions)])


# ── Per-generation building blocks ───────────────────────────────────────────

@dataclass(frozen=True)
class IterationPlan:
    """Everything about generation g that does not depend on fitness values."""

    iteration: int
    t_cur: int
    eta_m: float
    eta_v: float
    reevals: np.ndarray   # shape (lambda, mu)

    @property
    def cost(self):
        return int(self.reevals.sum())


def trim_reevals(counts, remaining):
    """Lower counts in place, last solution first and never below 1, until
    their sum fits in `remaining`. Returns True when anything was cut."""
    excess = int(counts.sum()) - remaining
    if excess <= 0:
        return False
    flat = counts.reshape(-1)
    for idx in range(flat.size - 1, -1, -1):
        cut = min(excess, int(flat[idx]) - 1)
        flat[idx] -= cut
        excess -= cut
        if excess == 0:
            break
    return True


def plan_iteration(cfg, objective, iteration, t_cur):
    """Step sizes and re-evaluation counts for one generation, or None when over budget."""
    remaining = cfg.budget_evals - t_cur
    if remaining < cfg.lam * cfg.mu:
        return None
    lo, hi = cfg.reevals
    if objective.deterministic or hi == 1:
        counts = np.ones((cfg.lam, cfg.mu), dtype=int)
    else:
        rng = streams.Stream(cfg.seed, streams.REEVALS, 0, iteration).rng()
        counts = rng.integers(lo, hi + 1, size=(cfg.lam, cfg.mu))
    if trim_reevals(counts, remaining):
        logger.warning(f"Generation {iteration}: re-evaluation counts trimmed to fit the budget")
    counts.setflags(write=False)
    return IterationPlan(
        iteration=iteration,
        t_cur=t_cur,
        eta_m=schedule(cfg.eta_m_init, t_cur, cfg.budget_evals),
        eta_v=schedule(cfg.eta_v_init, t_cur, cfg.budget_evals),
        reevals=counts,
    )


def plan_run(cfg, objective):
    """All generation plans of a run, in order. Independent of fitness values."""
    plans, t_cur = [], 0
    while True:
        plan = plan_iteration(cfg, objective, len(plans), t_cur)
        if plan is None:
            return plans
        plans.append(plan)
        t_cur += plan.cost


@dataclass(frozen=True)
class ProcessEvaluation:
    process: int
    batch: SampleBatch
    fit_grad: object
    fisher: FisherDiagonals
    evals: int


def evaluate_process(cfg, sense, process, plan, dist, evaluator):
    """Sample, evaluate and compute the fitness-side quantities for one process."""
    solutions = sample(dist, cfg.mu, streams.Stream(cfg.seed, streams.SAMPLE, process, plan.iteration))
    counts = plan.reevals[process]
    fitnesses = evaluator.batch(process, plan.iteration, solutions, counts)
    batch = SampleBatch(solutions, fitnesses, process)
    weights = shape_utilities(batch.fitnesses, sense)
    return ProcessEvaluation(
        process=process,
        batch=batch,
        fit_grad=fitness_grad(dist, batch, weights),
        fisher=fisher(dist, batch),
        evals=int(counts.sum()),
    )


def update_process(cfg, dist, evaluation, div, plan, phi):
    if cfg.update_rule == PLAIN:
        return plain_step(dist, evaluation.fit_grad, div, plan.eta_m, phi, eta_v=plan.eta_v)
    return natural_step(dist, evaluation.fit_grad, div, evaluation.fisher,
                        plan.eta_m, plan.eta_v, phi)


def peer_view(process, own, snapshot):
    """Peer snapshot list with the owner's current distribution in its own slot."""
    view = list(snapshot)
    view[process] = own
    return view


def resolve_phi(cfg, fit_grads, div_grads):
    """Configured phi, or the measured gradient-scale ratio when phi = 'auto'."""
    if cfg.phi != AUTO:
        return float(cfg.phi)
    measured = auto_phi(fit_grads, div_grads)
    if measured is None:
        logger.info(f"auto phi: no diversity signal, keeping {DEFAULT_PHI}")
        return DEFAULT_PHI
    logger.info(f"auto phi measured at the first generation: {measured:.6g}")
    return measured


# ── Optimizer state ──────────────────────────────────────────────────────────

@dataclass
class OptimizerState:
    cfg: RunConfig
    objective: object
    sense: str
    dists: list
    previous: list
    iteration: int = 0
    evals: int = 0
    phi: Optional[float] = None
    best_solution: Optional[np.ndarray] = None
    best_fitness: Optional[float] = None
    curve: list = field(default_factory=list)


def initialize(cfg, objective):
    errors = validate_run_config(cfg, objective)
    if errors:
        raise ValueError("; ".join(f"{e['field']}: {e['msg']}" for e in errors))
    lower, upper = resolve_box(cfg, objective)
    dists = [initial_distribution(lower, upper, streams.Stream(cfg.seed, streams.INIT, i))
             for i in range(cfg.lam)]
    return OptimizerState(
        cfg=cfg,
        objective=objective,
        sense=resolve_sense(cfg, objective),
        dists=dists,
        previous=list(dists),
    )


def record_generation(state, plan, evaluations, new_dists):
    """Fold one finished generation into the state (shared by every engine)."""
    for ev in evaluations:
        for x, f in zip(ev.batch.solutions, ev.batch.fitnesses):
            if is_better(f, state.best_fitness, state.sense):
                state.best_fitness = float(f)
                state.best_solution = np.array(x)
    state.evals += sum(ev.evals for ev in evaluations)
    state.previous = state.dists
    state.dists = list(new_dists)
    state.iteration = plan.iteration + 1
    state.curve.append(CurveRecord(
        iteration=state.iteration,
        evals=state.evals,
        best_fitness=state.best_fitness,
        mean_pairwise_db=mean_pairwise_distance(state.dists),
        process_mean_fitness=tuple(float(np.mean(ev.batch.fitnesses)) for ev in evaluations),
    ))
    logger.debug(f"generation {state.iteration}: evals={state.evals} best={state.best_fitness:.6g}")
    return state


def iterate(state, exchange=BLOCKING, evaluator=None):
    """Run one full generation on `state` (mutated and returned).

    Raises BudgetExhausted when not even one evaluation per solution fits.
    """
    cfg = state.cfg
    plan = plan_iteration(cfg, state.objective, state.iteration, state.evals)
    if plan is None:
        raise BudgetExhausted(f"budget {cfg.budget_evals} exhausted after {state.evals} evaluations")
    evaluator = evaluator or Evaluator(state.objective, cfg.seed)
    snapshot = state.dists if exchange == BLOCKING else state.previous

    evaluations = [evaluate_process(cfg, state.sense, i, plan, state.dists[i], evaluator)
                   for i in range(cfg.lam)]
    divs = [diversity_grad(i, peer_view(i, state.dists[i], snapshot)) for i in range(cfg.lam)]
    if state.phi is None:
        state.phi = resolve_phi(cfg, [ev.fit_grad for ev in evaluations], divs)
    new_dists = [update_process(cfg, state.dists[i], evaluations[i], divs[i], plan, state.phi)
                 for i in range(cfg.lam)]
    return record_generation(state, plan, evaluations, new_dists)


def build_report(state, algo="ncnes", wall_clock=0.0, error=None):
    return RunReport(
        algo=algo,
        objective_id=state.objective.id,
        seed=state.cfg.seed,
        sense=state.sense,
        lam=state.cfg.lam,
        best_solution=tuple(float(v) for v in state.best_solution) if state.best_solution is not None else (),
        best_fitness=state.best_fitness,
        curve=list(state.curve),
        evals=state.evals,
        phi_used=state.phi,
        final_distributions=tuple(
            (tuple(d.mean.tolist()), tuple(d.variance.tolist())) for d in state.dists),
        valid=error is None,
        error=error,
        wall_clock=wall_clock,
    )


def run(cfg, objective, exchange=BLOCKING, evaluator=None):
    """Optimize `objective` until the evaluation budget is spent."""
    state = initialize(cfg, objective)
    evaluator = evaluator or Evaluator(objective, cfg.seed)
    logger.info(f"NCNES run: objective={objective.id} D={objective.dimension} "
                f"lambda={cfg.lam} mu={cfg.mu} budget={cfg.budget_evals} seed={cfg.seed}")
    start = time.perf_counter()
    error = None
    try:
        while True:
            iterate(state, exchange=exchange, evaluator=evaluator)
    except BudgetExhausted:
        pass
    except EvaluationError as e:
        logger.error(f"Run aborted at {e.location()}: {e}", exc_info=True)
        error = f"{e} ({e.location()})"
    report = build_report(state, wall_clock=time.perf_counter() - start, error=error)
    logger.info(f"NCNES run finished: {len(report.curve)} generations, evals={report.evals}, "
                f"best={report.best_fitness}")
    return report
