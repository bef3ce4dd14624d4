"""Analytic benchmark functions (all minimization, optimum 0 at the origin).

    sphere(x)    = sum x_d^2
    rastrigin(x) = 10 D + sum (x_d^2 - 10 cos(2 pi x_d))
    ackley(x)    = -20 exp(-0.2 sqrt(mean x_d^2)) - exp(mean cos(2 pi x_d)) + 20 + e
    griewank(x)  = 1 + sum x_d^2 / 4000 - prod cos(x_d / sqrt(d)),  d = 1..D

Advisory domains: sphere/rastrigin [-5.12, 5.12], ackley [-32.768, 32.768],
griewank [-600, 600].
"""

import math

import numpy as np


def sphere(x):
    x = np.asarray(x, dtype=float)
    return float(np.dot(x, x))


def rastrigin(x):
    x = np.asarray(x, dtype=float)
    return float(10.0 * x.size + np.sum(x * x - 10.0 * np.cos(2.0 * math.pi * x)))


def ackley(x):
    x = np.asarray(x, dtype=float)
    term1 = -20.0 * math.exp(-0.2 * math.sqrt(np.mean(x * x)))
    term2 = -math.exp(np.mean(np.cos(2.0 * math.pi * x)))
    return float(term1 + term2 + 20.0 + math.e)


def griewank(x):
    x = np.asarray(x, dtype=float)
    idx = np.sqrt(np.arange(1, x.size + 1))
    return float(1.0 + np.dot(x, x) / 4000.0 - np.prod(np.cos(x / idx)))


BENCHMARKS = {
    "sphere": (sphere, 5.12),
    "rastrigin": (rastrigin, 5.12),
    "ackley": (ackley, 32.768),
    "griewank": (griewank, 600.0),
}
