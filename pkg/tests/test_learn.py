# Copyright (c) 2024. All rights reserved.
"""Tests for the Stochastic Greedy learner, its baselines and the approximation bounds."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.errors import (
    BudgetExhaustsRatesError,
    ContractViolationError,
    InstanceTooLargeError,
    InvalidArgumentError,
    UndefinedMuError,
)
from app.learn import (
    LearnerConfig,
    Oracle,
    bound_params,
    brute_force_optimum,
    expected_bound,
    full_greedy,
    high_prob_bound,
    homogeneous_policy,
    measure_mu,
    stochastic_greedy,
    training_time,
    unit_cost_budget,
)
from app.netsim.oracles import NoiseLaw, synthetic_oracle
from app.syncmodel import SyncPolicy, SystemModel


class ScaledOracle:
    """Multiplies another oracle's observations by a constant."""

    def __init__(self, inner, factor: float):
        self.inner = inner
        self.factor = factor

    def try_out(self, policy: SyncPolicy, slot: int) -> float:
        return self.factor * self.inner.try_out(policy, slot)


class TestTrainingTime:
    """Tests for the slot count formula."""

    def test_worked_example(self):
        """Test tau + sigma * tau * B for sigma=5, tau=3, B=10."""
        assert training_time(5, 3, 10) == 153

    def test_routing_schedule(self):
        """Test the routing training schedule length."""
        assert training_time(2, 4, 18) == 148


class TestLearnerConfig:
    """Tests for learner input validation."""

    def test_sigma_above_pair_count(self):
        """Test that sigma cannot exceed C(C-1)."""
        with pytest.raises(ValidationError):
            LearnerConfig(controller_count=2, sigma=3, tau=1, budget=1, max_rate=1)

    def test_non_positive_tau(self):
        """Test that tau must be positive."""
        with pytest.raises(ValidationError):
            LearnerConfig(controller_count=2, sigma=1, tau=0, budget=1, max_rate=1)


class TestStochasticGreedy:
    """Tests for the sampled greedy learner."""

    def test_full_scan_modular_picks_largest_weights(self, modular_oracle):
        """Test that a full scan with R=1 places B increments on the B heaviest pairs."""
        config = LearnerConfig(controller_count=3, sigma=6, tau=1, budget=3, max_rate=1)
        run = stochastic_greedy(config, modular_oracle)
        assert run.final_policy.rates == (1, 1, 1, 0, 0, 0)
        _, optimum = brute_force_optimum(modular_oracle.truth, 3, 1, 3)
        assert modular_oracle.truth(run.final_policy) == pytest.approx(optimum)

    def test_full_scan_modular_concentrates_when_rates_allow(self):
        """Test that a large rate cap puts every increment on the heaviest pair."""
        oracle = synthetic_oracle("modular", {"controller_count": 2, "weights": [1.0, 2.0]})
        config = LearnerConfig(controller_count=2, sigma=2, tau=1, budget=4, max_rate=4)
        assert stochastic_greedy(config, oracle).final_policy.rates == (0, 4)

    def test_single_candidate_spends_whole_budget(self, coverage_factory):
        """Test that sigma=1 commits one candidate per iteration."""
        config = LearnerConfig(controller_count=3, sigma=1, tau=2, budget=5, max_rate=2, rng_seed=3)
        run = stochastic_greedy(config, coverage_factory())
        assert all(len(it.candidates) == 1 for it in run.iterations)
        assert run.final_policy.total() == 5
        assert max(run.final_policy.rates) <= 2

    def test_slot_schedule(self, coverage_factory):
        """Test the slot indices handed to the oracle for every candidate."""
        sigma, tau, budget = 2, 3, 4
        config = LearnerConfig(controller_count=3, sigma=sigma, tau=tau, budget=budget, max_rate=2, rng_seed=1)
        run = stochastic_greedy(config, coverage_factory())
        assert run.slots_used == training_time(sigma, tau, budget)
        assert [obs.slot for obs in run.observations] == list(range(1, run.slots_used + 1))
        for it in run.iterations:
            k = it.index
            for p, slots in enumerate(it.slots, start=1):
                start = (k - 1) * sigma * tau + p * tau + 1
                assert slots == list(range(start, start + tau))

    def test_budget_feasible(self, coverage_factory):
        """Test that the learned policy spends exactly B within the cap."""
        config = LearnerConfig(controller_count=3, sigma=2, tau=1, budget=7, max_rate=2, rng_seed=9)
        policy = stochastic_greedy(config, coverage_factory()).final_policy
        assert policy.total() == 7
        assert all(r <= 2 for r in policy.rates)

    def test_shortfall_recorded(self):
        """Test that fewer eligible pairs than sigma are all tried and recorded."""
        oracle = synthetic_oracle("coverage", {"controller_count": 2})
        config = LearnerConfig(controller_count=2, sigma=2, tau=1, budget=2, max_rate=1)
        run = stochastic_greedy(config, oracle)
        assert run.iterations[0].shortfall == 0
        assert run.iterations[1].shortfall == 1
        assert len(run.iterations[1].candidates) == 1
        assert run.slots_used == 1 + 2 + 1
        assert run.final_policy.rates == (1, 1)

    def test_budget_exhausts_rates(self, modular_oracle):
        """Test that B > R * C(C-1) is refused before any try-out."""
        config = LearnerConfig(controller_count=3, sigma=2, tau=1, budget=7, max_rate=1)
        with pytest.raises(BudgetExhaustsRatesError):
            stochastic_greedy(config, modular_oracle)

    def test_deterministic(self, coverage_factory):
        """Test that identical config and oracle seed give identical traces."""
        noise = NoiseLaw(kind="uniform", low=0.4, high=0.6)
        config = LearnerConfig(controller_count=3, sigma=3, tau=2, budget=4, max_rate=2, rng_seed=5)
        first = stochastic_greedy(config, coverage_factory(4, noise)).to_dict()
        second = stochastic_greedy(config, coverage_factory(4, noise)).to_dict()
        assert first == second

    def test_winners_invariant_under_scaling(self, coverage_factory):
        """Test that multiplying every observation by a constant keeps the decisions."""
        noise = NoiseLaw(kind="uniform", low=0.4, high=0.6)
        config = LearnerConfig(controller_count=3, sigma=3, tau=2, budget=5, max_rate=2, rng_seed=2)
        plain = stochastic_greedy(config, coverage_factory(8, noise))
        scaled = stochastic_greedy(config, ScaledOracle(coverage_factory(8, noise), 3.5))
        assert plain.winners == scaled.winners
        assert plain.final_policy == scaled.final_policy

    def test_estimate_carried_forward(self, modular_oracle):
        """Test that a winner's estimate becomes the next iteration's baseline."""
        config = LearnerConfig(controller_count=3, sigma=2, tau=1, budget=3, max_rate=2, rng_seed=0)
        run = stochastic_greedy(config, modular_oracle)
        assert run.iterations[0].base_estimate == run.baseline_estimate
        for prev, nxt in zip(run.iterations, run.iterations[1:]):
            assert nxt.base_estimate == prev.estimates[prev.candidates.index(prev.winner)]
        assert run.final_estimate == pytest.approx(modular_oracle.truth(run.final_policy))

    def test_oracle_protocol(self, modular_oracle):
        """Test that synthetic oracles satisfy the Oracle protocol."""
        assert isinstance(modular_oracle, Oracle)

    def test_oracle_contract_violation_propagates(self, modular_oracle):
        """Test that a reused oracle fails on the repeated slot."""
        config = LearnerConfig(controller_count=3, sigma=1, tau=1, budget=1, max_rate=1)
        stochastic_greedy(config, modular_oracle)
        with pytest.raises(ContractViolationError):
            stochastic_greedy(config, modular_oracle)


class TestFullGreedy:
    """Tests for the all-candidates greedy comparator."""

    def test_matches_full_scan(self):
        """Test that full greedy equals a full-scan stochastic greedy on a modular oracle."""
        weights = [6.0, 5.0, 4.0, 3.0, 2.0, 1.0]
        config = LearnerConfig(controller_count=3, sigma=6, tau=1, budget=3, max_rate=1)
        sg = stochastic_greedy(config, synthetic_oracle("modular", {"controller_count": 3, "weights": weights}))
        fg = full_greedy(config, synthetic_oracle("modular", {"controller_count": 3, "weights": weights}))
        assert fg.final_policy == sg.final_policy

    def test_slots_without_saturation(self, modular_oracle):
        """Test tau + tau * B * C(C-1) when no pair saturates."""
        config = LearnerConfig(controller_count=3, sigma=1, tau=2, budget=4, max_rate=10)
        assert full_greedy(config, modular_oracle).slots_used == 2 + 2 * 4 * 6

    def test_slots_with_saturation(self, modular_oracle):
        """Test the shrinking eligibility schedule for C=3, B=18, tau=4, R=3."""
        config = LearnerConfig(controller_count=3, sigma=1, tau=4, budget=18, max_rate=3)
        run = full_greedy(config, modular_oracle)
        assert [len(it.candidates) for it in run.iterations] == [6, 6, 6, 5, 5, 5, 4, 4, 4, 3, 3, 3, 2, 2, 2, 1, 1, 1]
        assert run.slots_used == 256
        assert run.final_policy == SyncPolicy.uniform(3, 3)


class TestHomogeneousPolicy:
    """Tests for the equal-rate baseline."""

    def test_three_controllers(self):
        """Test rate 3 on six pairs for B=18."""
        model = SystemModel(controller_count=3, change_rates=(1, 1, 1), slot_seconds=1, pair_costs=1, budget=18, max_rate=5)
        assert homogeneous_policy(model) == SyncPolicy.uniform(3, 3)

    def test_budget_below_pair_count(self):
        """Test rate 0 when B is smaller than the number of pairs."""
        model = SystemModel(controller_count=5, change_rates=(1,) * 5, slot_seconds=1, pair_costs=1, budget=10, max_rate=5)
        assert homogeneous_policy(model) == SyncPolicy.zeros(5)

    def test_costly_pairs(self):
        """Test rate 1 with costs 2 and B=5, one unit left over."""
        model = SystemModel(controller_count=2, change_rates=(1, 1), slot_seconds=1, pair_costs=2, budget=5, max_rate=5)
        assert homogeneous_policy(model) == SyncPolicy(2, (1, 1))

    def test_capped_by_max_rate(self):
        """Test that the rate never exceeds R."""
        model = SystemModel(controller_count=2, change_rates=(1, 1), slot_seconds=1, pair_costs=1, budget=100, max_rate=3)
        assert homogeneous_policy(model) == SyncPolicy.uniform(2, 3)

    def test_unit_cost_budget_heterogeneous(self, mocker):
        """Test that heterogeneous costs charge the most expensive pair."""
        mock_logger = mocker.patch("app.learn.logger")
        model = SystemModel(controller_count=2, change_rates=(1, 1), slot_seconds=1, pair_costs=[2, 3], budget=10, max_rate=3)
        assert unit_cost_budget(model) == 3
        mock_logger.warning.assert_called_once()


class TestBounds:
    """Tests for the approximation factors."""

    def test_expected_bound_worked_example(self):
        """Test C=5, B=10, R=1, sigma=5, mu=0.5."""
        assert bound_params(5, 10, 1, 5, 0.5).epsilon == pytest.approx(math.exp(-2.5))
        assert expected_bound(5, 10, 1, 5, 0.5) == pytest.approx(0.368, abs=1e-3)

    def test_expected_bound_limits(self):
        """Test small mu and large sigma limits."""
        assert expected_bound(3, 4, 2, 1, 1e-9) == pytest.approx(0.0, abs=1e-8)
        assert expected_bound(3, 4, 2, 10_000, 0.5) == pytest.approx(1.0 - math.exp(-0.5))

    def test_high_prob_worked_example(self):
        """Test the factor and probability for gamma=0.5."""
        factor, prob = high_prob_bound(5, 10, 1, 5, 3, 0.5, 0.5)
        assert factor == pytest.approx(0.205, abs=1e-3)
        assert prob == pytest.approx(0.99945, abs=1e-5)

    def test_high_prob_proof_variant(self):
        """Test that the alternative probability carries mu in the exponent."""
        _, prob = high_prob_bound(5, 10, 1, 5, 3, 0.5, 0.5, use_proof_variant=True)
        assert prob == pytest.approx(1.0 - math.exp(-3.75))

    def test_small_gamma_recovers_expected_bound(self):
        """Test that gamma near zero gives the expected-value factor and no guarantee."""
        factor, prob = high_prob_bound(5, 10, 1, 5, 3, 0.5, 1e-9)
        assert factor == pytest.approx(expected_bound(5, 10, 1, 5, 0.5))
        assert prob == pytest.approx(0.0, abs=1e-7)

    @pytest.mark.parametrize("mu,gamma", [(0.0, 0.5), (1.5, 0.5), (0.5, 0.0), (0.5, 1.0)])
    def test_invalid_parameters(self, mu, gamma):
        """Test the mu and gamma ranges."""
        with pytest.raises(InvalidArgumentError):
            high_prob_bound(3, 4, 2, 1, 1, mu, gamma)


class TestMeasureMu:
    """Tests for the empirical gain ratio."""

    def config(self, seed: int = 0) -> LearnerConfig:
        return LearnerConfig(controller_count=3, sigma=3, tau=5, budget=8, max_rate=2, rng_seed=seed)

    def test_noiseless(self, coverage_factory):
        """Test that exact observations give mu = 1."""
        oracle = coverage_factory()
        run = stochastic_greedy(self.config(), oracle)
        assert measure_mu(run, oracle.truth).mu == pytest.approx(1.0)

    def test_constant_scale(self, coverage_factory):
        """Test that observations at half the truth give mu = 0.5."""
        oracle = coverage_factory(0, NoiseLaw(kind="scale", scale=0.5))
        run = stochastic_greedy(self.config(), oracle)
        assert measure_mu(run, oracle.truth).mu == pytest.approx(0.5)

    def test_uniform_noise(self, coverage_factory):
        """Test that uniform noise on [0.4, 0.6] gives mu near 0.5."""
        oracle = coverage_factory(3, NoiseLaw(kind="uniform", low=0.4, high=0.6))
        run = stochastic_greedy(self.config(3), oracle)
        estimate = measure_mu(run, oracle.truth, oracle.counterfactual)
        assert estimate.count >= 100
        assert estimate.mu == pytest.approx(0.5, abs=0.05)

    def test_undefined_without_positive_gains(self):
        """Test that flat truths leave mu undefined."""
        oracle = synthetic_oracle("modular", {"controller_count": 2, "weights": [0.0, 0.0]})
        run = stochastic_greedy(LearnerConfig(controller_count=2, sigma=2, tau=1, budget=1, max_rate=1), oracle)
        with pytest.raises(UndefinedMuError):
            measure_mu(run, oracle.truth)


class TestBruteForceOptimum:
    """Tests for the policy enumeration oracle."""

    def test_cap(self, modular_oracle):
        """Test that oversized enumerations are refused."""
        with pytest.raises(InstanceTooLargeError):
            brute_force_optimum(modular_oracle.truth, 3, 9, 10, cap=1000)

    def test_respects_budget(self, modular_oracle):
        """Test that the optimum spends at most B."""
        policy, value = brute_force_optimum(modular_oracle.truth, 3, 2, 3)
        assert policy.total() <= 3
        assert value == pytest.approx(17.0)


class TestApproximationEmpirical:
    """Monte Carlo checks of the approximation guarantees on synthetic instances."""

    def test_expected_ratio_noiseless(self):
        """Test mean achieved/OPT against the noiseless bound, non-decreasing in sigma."""
        c, rate_cap, budget = 3, 2, 4
        runs = 200
        instances = []
        for seed in range(runs):
            oracle = synthetic_oracle("coverage", {"controller_count": c}, rng_seed=seed)
            _, optimum = brute_force_optimum(oracle.truth, c, rate_cap, budget)
            instances.append((seed, optimum))
        means = []
        for sigma in (1, 3, 6):
            ratios = []
            for seed, optimum in instances:
                oracle = synthetic_oracle("coverage", {"controller_count": c}, rng_seed=seed)
                config = LearnerConfig(controller_count=c, sigma=sigma, tau=1, budget=budget, max_rate=rate_cap, rng_seed=seed)
                run = stochastic_greedy(config, oracle)
                ratios.append(oracle.truth(run.final_policy) / optimum)
            mean = float(np.mean(ratios))
            assert mean >= expected_bound(c, budget, rate_cap, sigma, 1.0) - 0.02
            means.append(mean)
        assert means == sorted(means)

    @pytest.mark.parametrize("proof_variant", [False, True])
    def test_violation_frequency(self, proof_variant):
        """Test how often a noisy run falls below the discounted factor."""
        c, rate_cap, budget, sigma, tau, gamma = 3, 2, 4, 3, 3, 0.3
        noise = NoiseLaw(kind="uniform", low=0.4, high=0.6)
        runs = 500
        factor, prob = high_prob_bound(c, budget, rate_cap, sigma, tau, noise.mean_ratio, gamma, proof_variant)
        optima: dict[int, float] = {}
        violations = 0
        for run_index in range(runs):
            instance = run_index % 50
            if instance not in optima:
                clean = synthetic_oracle("coverage", {"controller_count": c}, rng_seed=instance)
                optima[instance] = brute_force_optimum(clean.truth, c, rate_cap, budget)[1]
            oracle = synthetic_oracle("coverage", {"controller_count": c}, noise=noise, rng_seed=instance)
            config = LearnerConfig(controller_count=c, sigma=sigma, tau=tau, budget=budget, max_rate=rate_cap, rng_seed=run_index)
            run = stochastic_greedy(config, oracle)
            if oracle.truth(run.final_policy) < factor * optima[instance]:
                violations += 1
        assert violations / runs <= (1.0 - prob) + 0.02
