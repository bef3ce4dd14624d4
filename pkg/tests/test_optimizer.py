"""Tests for ncnes/domain/optimizer.py — the multi-process outer loop."""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from ncnes.domain.gaussian import VAR_FLOOR, SearchDistribution
from ncnes.domain.gradients import MAXIMIZE, MINIMIZE
from ncnes.domain.optimizer import (
    AUTO,
    NONBLOCKING,
    PLAIN,
    RunConfig,
    build_report,
    initialize,
    is_better,
    iterate,
    plan_iteration,
    plan_run,
    resolve_box,
    run,
    trim_reevals,
    validate_run_config,
)
from ncnes.errors import BudgetExhausted
from ncnes.objectives import ObjectiveSpec, get_objective

SPHERE2 = get_objective("sphere", 2)
SMALL = RunConfig(lam=3, mu=5, budget_evals=300, seed=7)


def _fields(errors):
    return {e["field"] for e in errors}


def _counting_objective(fail_after, value=None):
    calls = {"n": 0}

    def fn(x):
        calls["n"] += 1
        if calls["n"] > fail_after:
            if value is not None:
                return value
            raise RuntimeError("simulator crashed")
        return float(np.dot(x, x))

    return ObjectiveSpec(id="flaky", dimension=2, sense=MINIMIZE,
                         domain_box=((-1.0, 1.0), (-1.0, 1.0)), fn=fn)


# ── Configuration ──────────────────────────────────────────────────

class TestValidateRunConfig:
    def test_defaults_are_valid(self):
        cfg = RunConfig()
        assert (cfg.lam, cfg.mu, cfg.phi, cfg.eta_m_init, cfg.eta_v_init) == (5, 15, 0.0001, 0.5, 0.1)
        assert validate_run_config(cfg, get_objective("rastrigin", 10)) == []

    def test_zero_lambda_names_field(self):
        assert "lambda" in _fields(validate_run_config(RunConfig(lam=0)))

    def test_collects_every_violation(self):
        cfg = RunConfig(lam=0, mu=-1, phi=-1.0, eta_m_init=0.0, reevals=(3, 1), update_rule="fancy")
        assert _fields(validate_run_config(cfg)) >= {"lambda", "mu", "phi", "eta_m_init", "reevals", "update_rule"}

    def test_budget_below_one_generation(self):
        errors = validate_run_config(RunConfig(lam=5, mu=15, budget_evals=74))
        assert "budget_evals" in _fields(errors)

    def test_auto_phi_accepted(self):
        assert validate_run_config(RunConfig(phi=AUTO)) == []

    def test_box_checks(self):
        bad = RunConfig(init_lower=(1.0, 0.0), init_upper=(0.0, 1.0))
        assert "init_box" in _fields(validate_run_config(bad, SPHERE2))
        wrong_len = RunConfig(init_lower=(0.0, 0.0, 0.0), init_upper=1.0)
        assert "init_box" in _fields(validate_run_config(wrong_len, SPHERE2))

    def test_scalar_box_expands(self):
        lower, upper = resolve_box(RunConfig(init_lower=-1.0, init_upper=2.0), SPHERE2)
        assert lower.tolist() == [-1.0, -1.0] and upper.tolist() == [2.0, 2.0]

    def test_initialize_rejects_invalid(self):
        with pytest.raises(ValueError, match="lambda"):
            initialize(RunConfig(lam=0), SPHERE2)


# ── Planning & budget ──────────────────────────────────────────────

class TestPlanning:
    def test_trim_last_solutions_first(self):
        counts = np.array([[3, 3], [3, 3]])
        assert trim_reevals(counts, 9)
        assert counts.tolist() == [[3, 3], [2, 1]]
        assert not trim_reevals(counts, 9)

    def test_deterministic_objective_uses_single_evaluations(self):
        plan = plan_iteration(SMALL, SPHERE2, 0, 0)
        assert plan.reevals.shape == (3, 5)
        assert plan.cost == 15

    def test_noisy_counts_in_range(self):
        noisy = get_objective("sphere", 2, noise_sd=0.5)
        plan = plan_iteration(SMALL, noisy, 0, 0)
        assert plan.reevals.min() >= 1 and plan.reevals.max() <= 5

    def test_no_plan_when_generation_does_not_fit(self):
        assert plan_iteration(SMALL, SPHERE2, 20, 286) is None

    def test_plans_fit_budget(self):
        noisy = get_objective("sphere", 2, noise_sd=0.5)
        cfg = RunConfig(lam=3, mu=5, budget_evals=1000, seed=3)
        plans = plan_run(cfg, noisy)
        assert sum(p.cost for p in plans) <= 1000
        assert all(p.reevals.min() >= 1 for p in plans)
        assert [p.iteration for p in plans] == list(range(len(plans)))


# ── Run loop ───────────────────────────────────────────────────────

class TestRun:
    def test_budget_of_one_generation(self):
        report = run(RunConfig(lam=3, mu=5, budget_evals=15), SPHERE2)
        assert len(report.curve) == 1
        assert report.evals == 15

    def test_deterministic(self):
        assert run(SMALL, SPHERE2) == run(SMALL, SPHERE2)

    def test_iterate_matches_run(self):
        cfg = RunConfig(lam=3, mu=5, budget_evals=4 * 15, seed=11)
        state = initialize(cfg, SPHERE2)
        for _ in range(4):
            iterate(state)
        with pytest.raises(BudgetExhausted):
            iterate(state)
        assert build_report(state) == run(cfg, SPHERE2)

    def test_exact_accounting_under_noise(self):
        noisy = get_objective("rastrigin", 3, noise_sd=1.0)
        cfg = RunConfig(lam=3, mu=5, budget_evals=800, seed=2)
        report = run(cfg, noisy)
        assert report.evals == sum(p.cost for p in plan_run(cfg, noisy))
        assert report.evals <= 800
        assert [r.evals for r in report.curve] == sorted(r.evals for r in report.curve)

    def test_best_so_far_monotone_and_variance_floor(self):
        report = run(RunConfig(lam=4, mu=6, budget_evals=2400, seed=5), get_objective("ackley", 3))
        best = [r.best_fitness for r in report.curve]
        assert all(b <= a for a, b in zip(best, best[1:]))
        for _, variance in report.final_distributions:
            assert min(variance) >= VAR_FLOOR
        assert report.best_fitness == best[-1]
        assert len(report.best_solution) == 3

    def test_maximize_sense_override(self):
        report = run(SMALL.with_overrides(sense=MAXIMIZE), SPHERE2)
        best = [r.best_fitness for r in report.curve]
        assert report.sense == MAXIMIZE
        assert all(b >= a for a, b in zip(best, best[1:]))

    def test_curve_records(self):
        report = run(SMALL, SPHERE2)
        assert [r.iteration for r in report.curve] == list(range(1, 21))
        assert all(len(r.process_mean_fitness) == 3 for r in report.curve)
        assert all(r.mean_pairwise_db >= 0 for r in report.curve)

    def test_single_process_phi_irrelevant(self):
        cfg = RunConfig(lam=1, mu=8, budget_evals=400, seed=9)
        a = run(cfg.with_overrides(phi=0.0), SPHERE2)
        b = run(cfg.with_overrides(phi=10.0), SPHERE2)
        assert a.curve == b.curve
        assert a.final_distributions == b.final_distributions
        assert a.best_solution == b.best_solution

    def test_phi_zero_ignores_peers(self):
        cfg = RunConfig(lam=3, mu=5, budget_evals=300, seed=4, phi=0.0)
        reference = initialize(cfg, SPHERE2)
        perturbed = initialize(cfg, SPHERE2)
        far = SearchDistribution(np.array([4.0, -4.0]), np.array([0.1, 9.0]))
        perturbed.dists[1] = perturbed.previous[1] = far
        perturbed.dists[2] = perturbed.previous[2] = far
        iterate(reference)
        iterate(perturbed)
        assert reference.dists[0] == perturbed.dists[0]

        with_phi = initialize(cfg.with_overrides(phi=1.0), SPHERE2)
        with_phi.dists[1] = with_phi.previous[1] = far
        iterate(with_phi)
        assert with_phi.dists[0] != reference.dists[0]

    def test_plain_rule_runs(self):
        report = run(SMALL.with_overrides(update_rule=PLAIN), SPHERE2)
        assert report.valid
        assert report.final_distributions != run(SMALL, SPHERE2).final_distributions

    def test_nonblocking_serial_runs(self):
        report = run(SMALL.with_overrides(phi=0.5), SPHERE2, exchange=NONBLOCKING)
        assert report.valid and len(report.curve) == 20

    def test_auto_phi_recorded(self):
        report = run(SMALL.with_overrides(phi=AUTO), SPHERE2)
        assert report.phi_used is not None and report.phi_used > 0

    def test_evaluation_failure_returns_partial_report(self):
        cfg = RunConfig(lam=2, mu=5, budget_evals=200, seed=1)
        report = run(cfg, _counting_objective(fail_after=40))
        assert not report.valid
        assert "process=0 iteration=4 sample=0" in report.error
        assert len(report.curve) == 4
        assert report.evals == 40

    def test_non_finite_fitness_is_a_failure(self):
        cfg = RunConfig(lam=2, mu=5, budget_evals=200, seed=1)
        report = run(cfg, _counting_objective(fail_after=12, value=float("nan")))
        assert not report.valid
        assert "process=0 iteration=1 sample=2" in report.error

    def test_report_dict(self):
        d = run(SMALL, SPHERE2).to_dict()
        assert d["lambda"] == 3 and d["iterations"] == 20 and d["valid"] is True
        assert "wall_clock" not in d

    def test_is_better(self):
        assert is_better(1.0, None, MINIMIZE)
        assert is_better(1.0, 2.0, MINIMIZE) and not is_better(2.0, 2.0, MINIMIZE)
        assert is_better(3.0, 2.0, MAXIMIZE)


# ── Benchmark-scale experiments ────────────────────────────────────

@pytest.mark.slow
class TestExperiments:
    def test_sphere_reaches_target(self):
        hits = 0
        for seed in range(1, 21):
            report = run(RunConfig(seed=seed), get_objective("sphere", 2))
            hits += report.best_fitness < 1e-2
        assert hits >= 18

    def test_diversity_term_keeps_processes_apart(self):
        rastrigin = get_objective("rastrigin", 10)
        wins = 0
        for seed in range(1, 21):
            spread = {}
            for phi in (0.0, 0.0001):
                state = initialize(RunConfig(seed=seed, phi=phi), rastrigin)
                for _ in range(50):
                    iterate(state)
                spread[phi] = state.curve[-1].mean_pairwise_db
            wins += spread[0.0001] > spread[0.0]
        assert wins >= 18


if __name__ == "__main__":
    import pytest
    pytest.main([__file__, "-v"])
