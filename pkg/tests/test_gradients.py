"""Tests for ncnes/domain/gradients.py — utilities, gradients, Fisher, steps."""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import math

import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss

from ncnes.domain.gaussian import VAR_FLOOR, SampleBatch, SearchDistribution, diversity_value, sample
from ncnes.domain.gradients import (
    FISHER_FLOOR,
    MAXIMIZE,
    MINIMIZE,
    FisherDiagonals,
    GradientPair,
    auto_phi,
    diversity_grad,
    fisher,
    fitness_grad,
    natural_step,
    plain_step,
    rank_order,
    schedule,
    shape_utilities,
)
from ncnes.domain.optimizer import RunConfig, initialize, iterate
from ncnes.domain.streams import SAMPLE, Stream
from ncnes.objectives import get_objective


def _dist(mean, variance):
    return SearchDistribution(np.atleast_1d(np.asarray(mean, dtype=float)),
                              np.atleast_1d(np.asarray(variance, dtype=float)))


def _pair(m, v):
    return GradientPair(np.atleast_1d(m), np.atleast_1d(v))


# ── Utility shaping ────────────────────────────────────────────────

class TestShapeUtilities:
    def test_single_sample(self):
        assert shape_utilities([3.7]).tolist() == [0.0]

    def test_three_samples_in_rank_order(self):
        u = shape_utilities([10.0, 5.0, 1.0], MAXIMIZE)
        assert u == pytest.approx([0.4709, -0.1375, -1 / 3], abs=1e-4)

    def test_aligned_to_input_order(self):
        u = shape_utilities([1.0, 10.0, 5.0], MAXIMIZE)
        assert u == pytest.approx([-1 / 3, 0.4709, -0.1375], abs=1e-4)

    def test_minimize_reverses_ranks(self):
        up = shape_utilities([1.0, 2.0, 3.0, 4.0], MAXIMIZE)
        down = shape_utilities([1.0, 2.0, 3.0, 4.0], MINIMIZE)
        assert np.array_equal(up, down[::-1])

    def test_ties_prefer_lower_index(self):
        u = shape_utilities([2.0, 2.0, 1.0], MAXIMIZE)
        assert u[0] > u[1] > u[2]
        assert rank_order([2.0, 2.0, 1.0], MAXIMIZE).tolist() == [0, 1, 2]

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            shape_utilities([1.0, np.inf])

    def test_rejects_unknown_sense(self):
        with pytest.raises(ValueError, match="sense"):
            shape_utilities([1.0, 2.0], "up")

    def test_sum_range_and_rank_invariance(self):
        rng = np.random.default_rng(123)
        for _ in range(1000):
            mu = int(rng.integers(1, 51))
            f = rng.normal(size=mu)
            u = shape_utilities(f)
            assert abs(u.sum()) < 1e-12
            assert np.all(u >= -1.0 / mu - 1e-15) and np.all(u <= 1.0)
            assert np.array_equal(u, shape_utilities(3.0 * f + 7.0))
            assert np.array_equal(u, shape_utilities(np.exp(f)))


# ── Fitness gradient ───────────────────────────────────────────────

class TestFitnessGrad:
    def test_zero_weights(self):
        d = _dist([0.0, 1.0], [1.0, 2.0])
        batch = SampleBatch(sample(d, 5, Stream(1, SAMPLE)), np.zeros(5), 0)
        g = fitness_grad(d, batch, np.zeros(5))
        assert np.all(g.wrt_mean == 0) and np.all(g.wrt_variance == 0)

    def test_single_sample_at_mean(self):
        d = _dist([1.0, -1.0], [0.5, 2.0])
        batch = SampleBatch(d.mean.reshape(1, -1), [0.0], 0)
        g = fitness_grad(d, batch, [0.8])
        assert np.allclose(g.wrt_mean, 0.0)
        assert np.allclose(g.wrt_variance, [-0.8 / 1.0, -0.8 / 4.0])

    def test_dimension_mismatch(self):
        d = _dist([0.0], [1.0])
        batch = SampleBatch(np.zeros((2, 2)), np.zeros(2), 0)
        with pytest.raises(ValueError, match="dimension"):
            fitness_grad(d, batch, np.zeros(2))

    @pytest.mark.slow
    def test_monte_carlo_against_quadrature(self):
        m, v = 0.4, 0.3
        nodes, weights = hermegauss(60)

        def expected(mean):
            x = mean + math.sqrt(v) * nodes
            return float(np.sum(weights * (np.sin(x) + x * x)) / math.sqrt(2 * math.pi))

        h = 1e-4
        oracle = (expected(m + h) - expected(m - h)) / (2 * h)

        d = _dist([m], [v])
        x = sample(d, 10 ** 6, Stream(77, SAMPLE))
        f = np.sin(x[:, 0]) + x[:, 0] ** 2
        g = fitness_grad(d, SampleBatch(x, f, 0), f)
        assert g.wrt_mean[0] == pytest.approx(oracle, rel=1e-2)

        g_linear = fitness_grad(d, SampleBatch(x, x[:, 0], 0), x[:, 0])
        assert g_linear.wrt_mean[0] == pytest.approx(1.0, rel=1e-2)


# ── Diversity gradient ─────────────────────────────────────────────

class TestDiversityGrad:
    def test_identical_distributions(self):
        d = _dist([1.0, 2.0], [0.5, 3.0])
        g = diversity_grad(0, [d, d, d])
        assert np.allclose(g.wrt_mean, 0.0) and np.allclose(g.wrt_variance, 0.0)

    def test_two_processes(self):
        g = diversity_grad(0, [_dist([0.0], [1.0]), _dist([2.0], [1.0])])
        assert g.wrt_mean[0] == pytest.approx(-0.5)

    def test_single_process(self):
        g = diversity_grad(0, [_dist([0.0, 0.0], [1.0, 1.0])])
        assert np.all(g.wrt_mean == 0) and np.all(g.wrt_variance == 0)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2718)
        for trial in range(100):
            d = (1, 2, 5)[trial % 3]
            lam = (2, 3, 5)[(trial // 3) % 3]
            dists = [_dist(rng.uniform(-2, 2, size=d), rng.uniform(0.3, 3.0, size=d)) for _ in range(lam)]
            i = int(rng.integers(lam))
            g = diversity_grad(i, dists)
            own = dists[i]
            for k in range(d):
                h = 1e-5 * max(1.0, abs(own.mean[k]))
                step = np.zeros(d)
                step[k] = h
                up = diversity_value(i, dists[:i] + [_dist(own.mean + step, own.variance)] + dists[i + 1:])
                down = diversity_value(i, dists[:i] + [_dist(own.mean - step, own.variance)] + dists[i + 1:])
                assert g.wrt_mean[k] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-7)

                h = 1e-5 * own.variance[k]
                step = np.zeros(d)
                step[k] = h
                up = diversity_value(i, dists[:i] + [_dist(own.mean, own.variance + step)] + dists[i + 1:])
                down = diversity_value(i, dists[:i] + [_dist(own.mean, own.variance - step)] + dists[i + 1:])
                assert g.wrt_variance[k] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-7)


# ── Fisher ─────────────────────────────────────────────────────────

class TestFisher:
    def test_degenerate_batch_is_floored(self):
        d = _dist([1.0], [0.5])
        f = fisher(d, SampleBatch(d.mean.reshape(1, -1), [0.0], 0))
        assert f.for_mean[0] == FISHER_FLOOR
        assert f.for_variance[0] == pytest.approx(1.0 / (4 * 0.25))

    @pytest.mark.slow
    def test_monte_carlo_consistency(self):
        rng = np.random.default_rng(99)
        for n in range(5):
            v = rng.uniform(0.2, 4.0, size=3)
            d = _dist(rng.normal(size=3), v)
            x = sample(d, 10 ** 6, Stream(500 + n, SAMPLE))
            f = fisher(d, SampleBatch(x, np.zeros(len(x)), 0))
            assert np.allclose(f.for_mean, 1.0 / v, rtol=0.01, atol=0)
            assert np.allclose(f.for_variance, 1.0 / (2 * v * v), rtol=0.02, atol=0)


# ── Schedule & steps ───────────────────────────────────────────────

class TestSchedule:
    def test_endpoints(self):
        assert schedule(0.5, 0, 100) == pytest.approx(0.5)
        assert schedule(0.5, 100, 100) == 0.0
        assert schedule(0.5, 150, 100) == 0.0

    def test_half_way(self):
        assert schedule(1.0, 50, 100) == pytest.approx(0.62246, abs=1e-5)

    def test_nonincreasing(self):
        values = [schedule(0.1, t, 1000) for t in range(0, 1001, 10)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_rejects_non_positive_t_max(self):
        with pytest.raises(ValueError, match="t_max"):
            schedule(0.1, 0, 0)


class TestNaturalStep:
    def test_zero_gradients_unchanged(self):
        d = _dist([1.0, 2.0], [0.5, 0.5])
        zero = GradientPair.zeros(2)
        assert natural_step(d, zero, zero, FisherDiagonals.identity(2), 0.5, 0.1, 1.0) == d

    def test_worked_example(self):
        d = _dist([0.0], [1.0])
        out = natural_step(d, _pair(0.5, 0.0), _pair(1.0, 0.0),
                           FisherDiagonals(np.array([2.0]), np.array([1.0])), 0.5, 0.1, 0.0001)
        assert out.mean[0] == pytest.approx(0.125025)
        assert out.variance[0] == 1.0

    def test_phi_zero_ignores_diversity(self):
        d = _dist([0.3], [0.7])
        fit, fish = _pair(0.2, -0.1), FisherDiagonals(np.array([1.5]), np.array([2.0]))
        a = natural_step(d, fit, _pair(5.0, 5.0), fish, 0.5, 0.1, 0.0)
        b = natural_step(d, fit, _pair(-3.0, 1.0), fish, 0.5, 0.1, 0.0)
        assert a == b

    def test_variance_floor(self):
        d = _dist([0.0], [1e-6])
        out = natural_step(d, _pair(0.0, -100.0), GradientPair.zeros(1), FisherDiagonals.identity(1), 0.5, 1.0, 0.0)
        assert out.variance[0] == VAR_FLOOR

    def test_non_finite_names_coordinate(self):
        d = _dist([0.0, 0.0], [1.0, 1.0])
        fit = GradientPair(np.array([0.0, np.inf]), np.zeros(2))
        with pytest.raises(ValueError, match="coordinate 1"):
            natural_step(d, fit, GradientPair.zeros(2), FisherDiagonals.identity(2), 0.5, 0.1, 0.0)

    def test_mean_step_scales_with_standard_deviation(self):
        z = Stream(8, SAMPLE).rng().standard_normal((15, 2))
        utilities = shape_utilities(np.arange(15.0))
        steps = {}
        for c in (1.0, 0.01, 100.0):
            v = c * np.array([0.5, 2.0])
            d = _dist([1.0, -1.0], v)
            batch = SampleBatch(d.mean + np.sqrt(v) * z, np.arange(15.0), 0)
            out = natural_step(d, fitness_grad(d, batch, utilities), GradientPair.zeros(2),
                               fisher(d, batch), 1.0, 0.0, 0.0)
            steps[c] = out.mean - d.mean
        for c in (0.01, 100.0):
            assert np.allclose(steps[c], math.sqrt(c) * steps[1.0], rtol=1e-9)


class TestPlainStep:
    def test_zero_gradients_unchanged(self):
        d = _dist([1.0], [0.5])
        assert plain_step(d, GradientPair.zeros(1), GradientPair.zeros(1), 0.1, 1.0) == d

    def test_worked_example(self):
        out = plain_step(_dist([0.0], [1.0]), _pair(0.6, 0.0), _pair(4.0, 0.0), 0.1, 0.1)
        assert out.mean[0] == pytest.approx(0.1)

    def test_equals_natural_step_with_identity_fisher(self):
        d = _dist([0.2, -0.4], [0.9, 1.1])
        fit, div = _pair([0.3, -0.2], [0.05, 0.1]), _pair([1.0, 2.0], [-0.5, 0.5])
        a = plain_step(d, fit, div, 0.3, 0.01, eta_v=0.05)
        b = natural_step(d, fit, div, FisherDiagonals.identity(2), 0.3, 0.05, 0.01)
        assert a == b


class TestAutoPhi:
    def test_ratio_of_medians(self):
        fits = [_pair([1.0, 3.0], [2.0, 4.0])]
        divs = [_pair([10.0, 30.0], [20.0, 40.0])]
        assert auto_phi(fits, divs) == pytest.approx(0.1)

    def test_no_diversity_signal(self):
        assert auto_phi([_pair(1.0, 1.0)], [GradientPair.zeros(1)]) is None


# ── Single-process degeneration to separable NES ───────────────────

def _separable_nes_reference(mean, var, seed, mu, iterations, t_max, eta_m0, eta_v0):
    """Minimal separable NES on the sphere, written independently of the package."""
    d = mean.size
    ranks = np.arange(1, mu + 1)
    raw = np.maximum(0.0, math.log(mu / 2.0 + 1.0) - np.log(ranks))
    by_rank = raw / raw.sum() - 1.0 / mu
    for g in range(iterations):
        decay = (math.e - math.exp(g * mu / t_max)) / (math.e - 1.0)
        z = Stream(seed, SAMPLE, 0, g).rng().standard_normal((mu, d))
        x = mean + np.sqrt(var) * z
        f = np.array([float(np.dot(row, row)) for row in x])
        u = np.empty(mu)
        u[np.argsort(f, kind="stable")] = by_rank
        delta = x - mean
        g_m = (u @ (delta / var)) / mu
        g_v = (u @ (delta * delta / (2.0 * var * var) - 1.0 / (2.0 * var))) / mu
        sq = delta * delta / (var * var)
        f_m = np.maximum(sq.mean(axis=0), 1e-10)
        f_v = np.maximum(((sq - 1.0 / var) ** 2).mean(axis=0) / 4.0, 1e-10)
        mean = mean + eta_m0 * decay * g_m / f_m
        var = np.maximum(var + eta_v0 * decay * g_v / f_v, 1e-8)
    return mean, var


class TestSeparableNesDegeneration:
    def test_single_process_without_diversity_matches_reference(self):
        objective = get_objective("sphere", dimension=2)
        cfg = RunConfig(lam=1, mu=15, phi=0.0, budget_evals=1500, seed=31)
        state = initialize(cfg, objective)
        start = state.dists[0]
        for _ in range(100):
            iterate(state)
        mean, var = _separable_nes_reference(np.array(start.mean), np.array(start.variance),
                                             31, 15, 100, 1500, 0.5, 0.1)
        np.testing.assert_allclose(state.dists[0].mean, mean, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(state.dists[0].variance, var, rtol=1e-9, atol=1e-15)


if __name__ == "__main__":
    import pytest
    pytest.main([__file__, "-v"])
