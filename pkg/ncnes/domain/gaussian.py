"""Diagonal-Gaussian search distributions.

Sampling, the closed-form Bhattacharyya distance between two diagonal
Gaussians, and the per-process diversity value (sum of distances to peers).

Value objects are immutable once constructed: their arrays are flagged
read-only, so snapshots can be handed to other threads without copying.
"""

import math
import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np

logger = logging.getLogger(__name__)

# Lower bound for every variance component (squared decision units).
VAR_FLOOR = 1e-8


def _frozen(values, name):
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} must have at least one component")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SearchDistribution:
    """One process's N(mean, diag(variance))."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean, "mean")
        variance = _frozen(self.variance, "variance")
        if mean.shape != variance.shape:
            raise ValueError(
                f"mean and variance lengths differ: {mean.size} != {variance.size}")
        if not np.all(np.isfinite(mean)):
            bad = int(np.flatnonzero(~np.isfinite(mean))[0])
            raise ValueError(f"mean[{bad}] is not finite: {mean[bad]!r}")
        if not np.all(np.isfinite(variance)):
            bad = int(np.flatnonzero(~np.isfinite(variance))[0])
            raise ValueError(f"variance[{bad}] is not finite: {variance[bad]!r}")
        if np.any(variance < VAR_FLOOR):
            bad = int(np.flatnonzero(variance < VAR_FLOOR)[0])
            raise ValueError(f"variance[{bad}]={variance[bad]!r} below VAR_FLOOR={VAR_FLOOR}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", variance)

    @property
    def dimension(self):
        return self.mean.size

    @property
    def std(self):
        return np.sqrt(self.variance)

    def __eq__(self, other):
        if not isinstance(other, SearchDistribution):
            return NotImplemented
        return (np.array_equal(self.mean, other.mean)
                and np.array_equal(self.variance, other.variance))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """μ solutions drawn from one process plus their (averaged) fitness values."""

    solutions: np.ndarray
    fitnesses: np.ndarray
    source: int

    def __post_init__(self):
        solutions = np.array(self.solutions, dtype=float, copy=True)
        if solutions.ndim == 1:
            solutions = solutions.reshape(1, -1)
        fitnesses = np.array(self.fitnesses, dtype=float, copy=True).reshape(-1)
        if solutions.shape[0] < 1:
            raise ValueError("a sample batch needs at least one solution")
        if solutions.shape[0] != fitnesses.size:
            raise ValueError(
                f"solutions/fitnesses count mismatch: {solutions.shape[0]} != {fitnesses.size}")
        solutions.setflags(write=False)
        fitnesses.setflags(write=False)
        object.__setattr__(self, "solutions", solutions)
        object.__setattr__(self, "fitnesses", fitnesses)

    @property
    def size(self):
        return self.fitnesses.size


def _check_same_dimension(a, b):
    if a.dimension != b.dimension:
        raise ValueError(f"dimension mismatch: {a.dimension} != {b.dimension}")


# ── Sampling ─────────────────────────────────────────────────────────────────

def sample(dist, count, stream):
    """Draw `count` solutions from `dist` using the generator keyed by `stream`.

    Returns a (count, D) array; row k is mean + sqrt(variance) * z_k.
    """
    if not isinstance(dist, SearchDistribution):
        raise ValueError(f"expected a SearchDistribution, got {type(dist).__name__}")
    if count < 1:
        raise ValueError(f"count must be >= 1: {count!r}")
    z = stream.rng().standard_normal((int(count), dist.dimension))
    return dist.mean + dist.std * z


# ── Bhattacharyya distance ───────────────────────────────────────────────────

def bhattacharyya(a, b):
    """Closed-form Bhattacharyya distance between two diagonal Gaussians.

    Uses the mid covariance s = (va + vb) / 2:
        sum_d  (ma - mb)^2 / (8 s) + 0.5 * ln(s / sqrt(va * vb))
    """
    _check_same_dimension(a, b)
    s = 0.5 * (a.variance + b.variance)
    delta = a.mean - b.mean
    quad = 0.125 * np.sum(delta * delta / s)
    logdet = 0.5 * np.sum(np.log(s) - 0.5 * (np.log(a.variance) + np.log(b.variance)))
    # Rounding can leave -1e-17 for identical inputs.
    return max(0.0, float(quad + logdet))


def diversity_value(i, dists):
    """Sum of Bhattacharyya distances from process i to every peer (self excluded).

    `i` is a zero-based index into `dists`.
    """
    if not 0 <= i < len(dists):
        raise ValueError(f"process index {i} out of range for {len(dists)} distributions")
    total = 0.0
    for j, other in enumerate(dists):
        if j != i:
            total += bhattacharyya(dists[i], other)
    return total


def diversity_model(dists):
    """Total diversity: sum of diversity_value over all processes."""
    return sum(diversity_value(i, dists) for i in range(len(dists)))


def mean_pairwise_distance(dists):
    """Mean Bhattacharyya distance over unordered pairs; 0 with fewer than two."""
    pairs = list(combinations(range(len(dists)), 2))
    if not pairs:
        return 0.0
    return math.fsum(bhattacharyya(dists[i], dists[j]) for i, j in pairs) / len(pairs)


def initial_distribution(lower, upper, stream):
    """Mean uniform in the box, variance ((upper - lower) / 4)^2 per coordinate."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    mean = stream.rng().uniform(lower, upper)
    variance = np.maximum(((upper - lower) / 4.0) ** 2, VAR_FLOOR)
    return SearchDistribution(mean, variance)
