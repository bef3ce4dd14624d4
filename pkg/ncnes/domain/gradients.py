"""Per-iteration numerics of the multi-process natural evolution strategy.

Utility shaping, fitness and diversity gradients, diagonal Fisher estimates,
the step-size schedule, and the natural / plain update steps. Everything here
is diagonal, so every operation is O(D) per solution.

All functions are pure: inputs are immutable value objects, outputs are new
objects.
"""

import math
import logging
from dataclasses import dataclass

import numpy as np

from ncnes.domain.gaussian import VAR_FLOOR, SearchDistribution

logger = logging.getLogger(__name__)

FISHER_FLOOR = 1e-10

MAXIMIZE = "maximize"
MINIMIZE = "minimize"
SENSES = (MAXIMIZE, MINIMIZE)


def _readonly(values):
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GradientPair:
    wrt_mean: np.ndarray
    wrt_variance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "wrt_mean", _readonly(self.wrt_mean))
        object.__setattr__(self, "wrt_variance", _readonly(self.wrt_variance))
        if self.wrt_mean.shape != self.wrt_variance.shape:
            raise ValueError("gradient components have different lengths")

    @classmethod
    def zeros(cls, dimension):
        return cls(np.zeros(dimension), np.zeros(dimension))

    def magnitudes(self):
        return np.abs(np.concatenate([self.wrt_mean, self.wrt_variance]))


@dataclass(frozen=True, eq=False)
class FisherDiagonals:
    for_mean: np.ndarray
    for_variance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "for_mean", _readonly(self.for_mean))
        object.__setattr__(self, "for_variance", _readonly(self.for_variance))

    @classmethod
    def identity(cls, dimension):
        return cls(np.ones(dimension), np.ones(dimension))


# ── Utility shaping ──────────────────────────────────────────────────────────

def rank_order(fitnesses, sense=MAXIMIZE):
    """Indices from best to worst. Stable: ties keep the lower sample index first."""
    if sense not in SENSES:
        raise ValueError(f"Invalid sense: {sense!r}")
    f = np.asarray(fitnesses, dtype=float)
    keys = -f if sense == MAXIMIZE else f
    return np.argsort(keys, kind="stable")


def shape_utilities(fitnesses, sense=MAXIMIZE):
    """Rank-based utilities aligned to input order. They sum to zero.

    The solution ranked r (1 = best) gets
        max(0, ln(mu/2 + 1) - ln r) / sum_j max(0, ln(mu/2 + 1) - ln j) - 1/mu
    """
    f = np.asarray(fitnesses, dtype=float).reshape(-1)
    mu = f.size
    if mu < 1:
        raise ValueError("shape_utilities needs at least one fitness value")
    if not np.all(np.isfinite(f)):
        raise ValueError("fitness values must be finite")
    ranks = np.arange(1, mu + 1)
    raw = np.maximum(0.0, math.log(mu / 2.0 + 1.0) - np.log(ranks))
    by_rank = raw / raw.sum() - 1.0 / mu
    utilities = np.empty(mu)
    utilities[rank_order(f, sense)] = by_rank
    return utilities


# ── Gradients ────────────────────────────────────────────────────────────────

def fitness_grad(dist, batch, weights):
    """Search gradient of expected (shaped) fitness w.r.t. mean and variance."""
    x = np.asarray(batch.solutions, dtype=float)
    u = np.asarray(weights, dtype=float).reshape(-1)
    if x.shape[1] != dist.dimension:
        raise ValueError(f"dimension mismatch: batch {x.shape[1]} != distribution {dist.dimension}")
    if u.size != x.shape[0]:
        raise ValueError(f"weights/batch size mismatch: {u.size} != {x.shape[0]}")
    mu = x.shape[0]
    v = dist.variance
    delta = x - dist.mean
    wrt_mean = (u @ (delta / v)) / mu
    wrt_variance = (u @ (delta * delta / (2.0 * v * v) - 1.0 / (2.0 * v))) / mu
    return GradientPair(wrt_mean, wrt_variance)


def diversity_grad(i, dists):
    """Gradient of process i's diversity value w.r.t. its own mean and variance."""
    own = dists[i]
    wrt_mean = np.zeros(own.dimension)
    wrt_variance = np.zeros(own.dimension)
    for j, other in enumerate(dists):
        if j == i:
            continue
        if other.dimension != own.dimension:
            raise ValueError(f"dimension mismatch: {other.dimension} != {own.dimension}")
        s = 0.5 * (own.variance + other.variance)
        delta = own.mean - other.mean
        wrt_mean += 0.25 * delta / s
        wrt_variance += 0.25 * (1.0 / s - 0.25 * delta * delta / (s * s) - 1.0 / own.variance)
    return GradientPair(wrt_mean, wrt_variance)


def fisher(dist, batch):
    """Diagonal sample estimate of the Fisher information, floored at FISHER_FLOOR."""
    x = np.asarray(batch.solutions, dtype=float)
    v = dist.variance
    sq = (x - dist.mean) ** 2 / (v * v)
    for_mean = sq.mean(axis=0)
    for_variance = ((sq - 1.0 / v) ** 2).mean(axis=0) / 4.0
    return FisherDiagonals(np.maximum(for_mean, FISHER_FLOOR),
                           np.maximum(for_variance, FISHER_FLOOR))


# ── Step sizes & updates ─────────────────────────────────────────────────────

def schedule(eta_init, t_cur, t_max):
    """Step size decayed from eta_init (t_cur = 0) to 0 (t_cur = t_max)."""
    if t_max <= 0:
        raise ValueError(f"t_max must be positive: {t_max!r}")
    if t_cur >= t_max:
        return 0.0
    factor = (math.e - math.exp(t_cur / t_max)) / (math.e - 1.0)
    return eta_init * max(0.0, factor)


def _finite_or_raise(values, what):
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise ValueError(f"non-finite {what} at coordinate {bad}: {values[bad]!r}")


def _apply(dist, step_mean, step_variance):
    _finite_or_raise(step_mean, "mean step")
    _finite_or_raise(step_variance, "variance step")
    mean = dist.mean + step_mean
    variance = dist.variance + step_variance
    _finite_or_raise(mean, "mean")
    _finite_or_raise(variance, "variance")
    return SearchDistribution(mean, np.maximum(variance, VAR_FLOOR))


def natural_step(dist, fit, div, fish, eta_m, eta_v, phi):
    """Fisher-preconditioned ascent on fitness + phi * diversity."""
    grad_mean = fit.wrt_mean + phi * div.wrt_mean
    grad_variance = fit.wrt_variance + phi * div.wrt_variance
    return _apply(dist,
                  eta_m * grad_mean / fish.for_mean,
                  eta_v * grad_variance / fish.for_variance)


def plain_step(dist, fit, div, eta, phi, eta_v=None):
    """Unpreconditioned gradient ascent; `eta_v` defaults to `eta`."""
    eta_v = eta if eta_v is None else eta_v
    return _apply(dist,
                  eta * (fit.wrt_mean + phi * div.wrt_mean),
                  eta_v * (fit.wrt_variance + phi * div.wrt_variance))


def auto_phi(fit_grads, div_grads):
    """Trade-off that equalises the median gradient magnitudes of both models.

    Returns None when the diversity gradients are all zero (no peers, or
    identical distributions) so the caller can keep its configured value.
    """
    fit_mag = np.concatenate([g.magnitudes() for g in fit_grads])
    div_mag = np.concatenate([g.magnitudes() for g in div_grads])
    div_median = float(np.median(div_mag)) if div_mag.size else 0.0
    if div_median <= 0.0:
        return None
    return float(np.median(fit_mag)) / div_median
