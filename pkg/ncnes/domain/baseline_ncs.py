"""NCS-C (simplified) — the classic negatively correlated search baseline.

Each process keeps one parent and an isotropic mutation scale sigma. Per
generation every process draws one offspring; processes then decide, one after
another, whether the offspring replaces the parent using fitness plus phi times
the distance to the nearest peer distribution. Because later processes see the
choices of earlier ones, the sweep is sequential on purpose.

sigma follows the 1/5 success rule: every `ncs_epoch` generations it is
multiplied by `ncs_factor` if more than a fifth of the offspring were kept,
divided by it if fewer were.
"""

import math
import time
import logging
from dataclasses import dataclass, replace

import numpy as np

from ncnes.domain import streams
from ncnes.domain.gaussian import VAR_FLOOR, SearchDistribution, bhattacharyya, mean_pairwise_distance
from ncnes.domain.gradients import MAXIMIZE, SENSES
from ncnes.domain.optimizer import (
    AUTO,
    DEFAULT_PHI,
    CurveRecord,
    Evaluator,
    RunReport,
    is_better,
    resolve_box,
    resolve_sense,
    trim_reevals,
    validate_run_config,
)
from ncnes.errors import EvaluationError

logger = logging.getLogger(__name__)

ALGO = "ncs-c"
SUCCESS_TARGET = 0.2
SIGMA_FLOOR = math.sqrt(VAR_FLOOR)


@dataclass(frozen=True, eq=False)
class NcsProcess:
    parent: np.ndarray
    parent_fitness: float
    sigma: float

    def __post_init__(self):
        parent = np.array(self.parent, dtype=float, copy=True).reshape(-1)
        if parent.size == 0 or not np.all(np.isfinite(parent)):
            raise ValueError(f"parent must be a non-empty finite vector: {self.parent!r}")
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ValueError(f"sigma must be positive: {self.sigma!r}")
        parent.setflags(write=False)
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "parent_fitness", float(self.parent_fitness))
        object.__setattr__(self, "sigma", float(self.sigma))

    def distribution(self):
        """N(parent, sigma^2 I) as a diagonal search distribution."""
        return SearchDistribution(self.parent, np.full(self.parent.size, max(self.sigma ** 2, VAR_FLOOR)))


# ── Diversity & selection ────────────────────────────────────────────────────

def nearest_peer_distance(proc, peers):
    """Smallest Bhattacharyya distance from `proc` to any of `peers`; +inf with none."""
    if not peers:
        return math.inf
    own = proc.distribution()
    return min(bhattacharyya(own, p.distribution()) for p in peers)


def decentralized_diversity(i, procs):
    """Distance from process i to its nearest peer (zero-based i)."""
    if not 0 <= i < len(procs):
        raise ValueError(f"process index {i} out of range for {len(procs)} processes")
    return nearest_peer_distance(procs[i], [p for j, p in enumerate(procs) if j != i])


def combined_score(fitness, diversity, phi, sense=MAXIMIZE):
    """Higher is better. Minimized fitness enters negated; no peers means fitness only."""
    if sense not in SENSES:
        raise ValueError(f"Invalid sense: {sense!r}")
    oriented = fitness if sense == MAXIMIZE else -fitness
    if math.isinf(diversity):
        return oriented
    return oriented + phi * diversity


def heuristic_select(parent, offspring, peers, phi, sense=MAXIMIZE):
    """Offspring if the parent's combined score is strictly lower, else the parent."""
    parent_score = combined_score(parent.parent_fitness, nearest_peer_distance(parent, peers), phi, sense)
    offspring_score = combined_score(offspring.parent_fitness, nearest_peer_distance(offspring, peers), phi, sense)
    return offspring if parent_score < offspring_score else parent


def selection_sweep(procs, offspring, phi, sense=MAXIMIZE, order=None):
    """Sequential selection over processes in `order` (default 0..lambda-1).

    Returns (survivors, accepted) where accepted[i] is True when process i
    kept its offspring. Each decision sees the survivors chosen before it.
    """
    if len(offspring) != len(procs):
        raise ValueError(f"offspring count {len(offspring)} != process count {len(procs)}")
    order = list(range(len(procs))) if order is None else list(order)
    if sorted(order) != list(range(len(procs))):
        raise ValueError(f"order must be a permutation of 0..{len(procs) - 1}: {order!r}")
    current = list(procs)
    accepted = [False] * len(procs)
    for i in order:
        peers = [p for j, p in enumerate(current) if j != i]
        chosen = heuristic_select(current[i], offspring[i], peers, phi, sense)
        accepted[i] = chosen is offspring[i]
        current[i] = chosen
    return current, accepted


def adapt_sigma(sigma, successes, epoch, factor):
    rate = successes / epoch
    if rate > SUCCESS_TARGET:
        return sigma * factor
    if rate < SUCCESS_TARGET:
        return max(sigma / factor, SIGMA_FLOOR)
    return sigma


# ── Run loop ─────────────────────────────────────────────────────────────────

def _reeval_counts(cfg, objective, generation, size, remaining):
    lo, hi = cfg.reevals
    if objective.deterministic or hi == 1:
        counts = np.ones(size, dtype=int)
    else:
        counts = streams.Stream(cfg.seed, streams.REEVALS, 1, generation).rng().integers(lo, hi + 1, size=size)
    if trim_reevals(counts, remaining):
        logger.warning(f"NCS-C generation {generation}: re-evaluation counts trimmed to fit the budget")
    return counts


def _report(cfg, objective, sense, procs, phi, curve, evals, best, wall_clock, error):
    best_x, best_f = best
    return RunReport(
        algo=ALGO,
        objective_id=objective.id,
        seed=cfg.seed,
        sense=sense,
        lam=cfg.lam,
        best_solution=tuple(float(v) for v in best_x) if best_x is not None else (),
        best_fitness=best_f,
        curve=curve,
        evals=evals,
        phi_used=phi,
        final_distributions=tuple(
            (tuple(d.mean.tolist()), tuple(d.variance.tolist()))
            for d in (p.distribution() for p in procs)),
        valid=error is None,
        error=error,
        wall_clock=wall_clock,
    )


def run_ncs_c(cfg, objective, evaluator=None, order=None):
    """Run the baseline until the budget no longer fits one offspring per process.

    Parents are drawn uniformly in the init box and their evaluations count
    against the budget. Generation g evaluates its offspring under iteration
    index g + 1; index 0 belongs to the initial parents.
    """
    errors = validate_run_config(cfg, objective)
    if errors:
        raise ValueError("; ".join(f"{e['field']}: {e['msg']}" for e in errors))
    sense = resolve_sense(cfg, objective)
    lower, upper = resolve_box(cfg, objective)
    sigma0 = cfg.ncs_sigma if cfg.ncs_sigma is not None else float(np.mean(upper - lower)) / 4.0
    phi = DEFAULT_PHI if cfg.phi == AUTO else float(cfg.phi)
    if cfg.phi == AUTO:
        logger.info(f"NCS-C has no gradient scale to measure; phi=auto uses {DEFAULT_PHI}")
    evaluator = evaluator or Evaluator(objective, cfg.seed)
    logger.info(f"NCS-C run: objective={objective.id} D={objective.dimension} lambda={cfg.lam} "
                f"sigma0={sigma0:.6g} phi={phi} budget={cfg.budget_evals} seed={cfg.seed}")

    start = time.perf_counter()
    procs, curve = [], []
    evals = 0
    best_x, best_f = None, None
    successes = [0] * cfg.lam
    error = None

    def track(x, f):
        nonlocal best_x, best_f
        if is_better(f, best_f, sense):
            best_x, best_f = np.array(x), float(f)

    try:
        counts = _reeval_counts(cfg, objective, 0, cfg.lam, cfg.budget_evals)
        for i in range(cfg.lam):
            x = streams.Stream(cfg.seed, streams.INIT, i).rng().uniform(lower, upper)
            f = evaluator.one(i, 0, 0, x, int(counts[i]))
            track(x, f)
            procs.append(NcsProcess(x, f, sigma0))
        evals += int(counts.sum())

        generation = 0
        while cfg.budget_evals - evals >= cfg.lam:
            counts = _reeval_counts(cfg, objective, generation + 1, cfg.lam, cfg.budget_evals - evals)
            offspring = []
            for i, proc in enumerate(procs):
                z = streams.Stream(cfg.seed, streams.MUTATE, i, generation).rng().standard_normal(proc.parent.size)
                child = proc.parent + proc.sigma * z
                f = evaluator.one(i, generation + 1, 0, child, int(counts[i]))
                track(child, f)
                offspring.append(NcsProcess(child, f, proc.sigma))
            evals += int(counts.sum())

            procs, accepted = selection_sweep(procs, offspring, phi, sense, order)
            for i, ok in enumerate(accepted):
                successes[i] += int(ok)
            generation += 1
            if generation % cfg.ncs_epoch == 0:
                procs = [replace(p, sigma=adapt_sigma(p.sigma, successes[i], cfg.ncs_epoch, cfg.ncs_factor))
                         for i, p in enumerate(procs)]
                successes = [0] * cfg.lam

            curve.append(CurveRecord(
                iteration=generation,
                evals=evals,
                best_fitness=best_f,
                mean_pairwise_db=mean_pairwise_distance([p.distribution() for p in procs]),
                process_mean_fitness=tuple(p.parent_fitness for p in procs),
            ))
            logger.debug(f"NCS-C generation {generation}: evals={evals} best={best_f:.6g}")
    except EvaluationError as e:
        logger.error(f"NCS-C run aborted at {e.location()}: {e}", exc_info=True)
        error = f"{e} ({e.location()})"

    report = _report(cfg, objective, sense, procs, phi, curve, evals, (best_x, best_f),
                     time.perf_counter() - start, error)
    logger.info(f"NCS-C run finished: {len(curve)} generations, evals={evals}, best={best_f}")
    return report
