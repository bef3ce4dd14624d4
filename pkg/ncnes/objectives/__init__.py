"""Objective registry — benchmarks, noise wrapper, and the balance task.

Objectives are addressed by string id from config files:

    spec = get_objective("rastrigin", dimension=10, noise_sd=0.5)
    value = noisy_evaluate(spec, x, reevals=3, stream=Stream(seed, NOISE, i, g, k))

Benchmarks are minimization problems; the balance task is maximized.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ncnes.domain.gradients import MAXIMIZE, MINIMIZE, SENSES
from ncnes.domain.streams import EPISODE, NOISE
from ncnes.objectives.balance import DEFAULT_CODEC, policy_rollout
from ncnes.objectives.benchmarks import BENCHMARKS

logger = logging.getLogger(__name__)

BALANCE_ID = "balance"
BALANCE_WEIGHT_BOUND = 1.0


@dataclass(frozen=True)
class ObjectiveSpec:
    id: str
    dimension: int
    sense: str
    noise_sd: float = 0.0
    domain_box: tuple = ()
    known_optimum: Optional[tuple] = None
    episodic: bool = False
    fn: Callable = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1: {self.dimension!r}")
        if self.sense not in SENSES:
            raise ValueError(f"Invalid sense: {self.sense!r}")
        if not np.isfinite(self.noise_sd) or self.noise_sd < 0:
            raise ValueError(f"noise_sd must be finite and >= 0: {self.noise_sd!r}")

    @property
    def deterministic(self):
        """True when repeated evaluation of the same point always agrees."""
        return self.noise_sd == 0 and not self.episodic

    @property
    def lower(self):
        return np.array([lo for lo, _ in self.domain_box], dtype=float)

    @property
    def upper(self):
        return np.array([hi for _, hi in self.domain_box], dtype=float)


def available_objectives():
    return sorted(list(BENCHMARKS) + [BALANCE_ID])


def get_objective(objective_id, dimension=2, noise_sd=0.0):
    """Build the ObjectiveSpec registered under `objective_id`."""
    if objective_id in BENCHMARKS:
        fn, bound = BENCHMARKS[objective_id]
        dimension = int(dimension)
        return ObjectiveSpec(
            id=objective_id,
            dimension=dimension,
            sense=MINIMIZE,
            noise_sd=float(noise_sd),
            domain_box=tuple((-bound, bound) for _ in range(dimension)),
            known_optimum=(tuple(0.0 for _ in range(dimension)), 0.0),
            fn=fn,
        )
    if objective_id == BALANCE_ID:
        w = DEFAULT_CODEC.weight_count
        return ObjectiveSpec(
            id=BALANCE_ID,
            dimension=w,
            sense=MAXIMIZE,
            noise_sd=float(noise_sd),
            domain_box=tuple((-BALANCE_WEIGHT_BOUND, BALANCE_WEIGHT_BOUND) for _ in range(w)),
            episodic=True,
        )
    raise ValueError(f"Unknown objective: {objective_id!r} (known: {', '.join(available_objectives())})")


def _check_point(spec, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != spec.dimension:
        raise ValueError(f"dimension mismatch for {spec.id}: expected {spec.dimension}, got {x.size}")
    return x


def evaluate(spec, x, stream=None):
    """Noise-free value of `x`. The balance task needs a stream for its episode."""
    x = _check_point(spec, x)
    if spec.episodic:
        if stream is None:
            raise ValueError(f"{spec.id} is episodic: an episode stream is required")
        return policy_rollout(x, 1, stream.child(purpose=EPISODE))
    return spec.fn(x)


def noisy_evaluate(spec, x, reevals, stream):
    """Mean of `reevals` independent draws of evaluate(x) + N(0, noise_sd^2).

    Episodic objectives run one fresh episode per draw; the additive noise
    terms are averaged separately so noise_sd = 0 returns evaluate(x) exactly.
    """
    if reevals < 1:
        raise ValueError(f"reevals must be >= 1: {reevals!r}")
    x = _check_point(spec, x)
    reevals = int(reevals)
    if spec.episodic:
        value = float(np.mean([evaluate(spec, x, stream.child(repeat=r)) for r in range(reevals)]))
    else:
        value = spec.fn(x)
    if spec.noise_sd > 0:
        draws = [stream.child(purpose=NOISE, repeat=r).rng().standard_normal() for r in range(reevals)]
        value += spec.noise_sd * float(np.mean(draws))
    return value
