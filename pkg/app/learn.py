# Copyright (c) 2024. All rights reserved.
"""Budgeted rate learning against a black-box performance oracle.

The learner starts from the all-zero policy and spends a budget of B unit
rate increments one at a time. Each iteration samples sigma eligible pairs
(rate still below R), tries each augmented policy for tau slots, and commits
the pair whose averaged observation gains the most over the current
estimate. Total training time is tau + sigma * tau * B slots.

Also provided: the Homogeneous baseline, a full-scan greedy comparator, the
expected and high-probability approximation factors, and ``measure_mu`` for
synthetic oracles whose true mean is known.
"""

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Protocol, runtime_checkable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.errors import (
    BudgetExhaustsRatesError,
    InstanceTooLargeError,
    InvalidArgumentError,
    UndefinedMuError,
)
from app.metrics import track_operation
from app.syncmodel import SyncPolicy, SystemModel, ordered_pairs, pair_count

logger = logging.getLogger("syncrate.learn")

DEFAULT_OPTIMUM_CAP = 2_000_000


@runtime_checkable
class Oracle(Protocol):
    """Observes one slot of application performance under a policy.

    Successive calls advance the environment; slots must be requested in
    increasing order.
    """

    def try_out(self, policy: SyncPolicy, slot: int) -> float:
        ...


# ============================================================================
# Configuration and Trace Models
# ============================================================================

class LearnerConfig(BaseModel):
    """Stochastic Greedy inputs; costs are one unit per increment."""
    model_config = ConfigDict(frozen=True)

    controller_count: int = Field(ge=2)
    sigma: int = Field(ge=1, description="Candidates sampled per iteration")
    tau: int = Field(ge=1, description="Slots per try-out")
    budget: int = Field(ge=1, description="Unit increments to place")
    max_rate: int = Field(ge=1)
    rng_seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check_sigma(self) -> "LearnerConfig":
        pairs = pair_count(self.controller_count)
        if self.sigma > pairs:
            raise ValueError(f"sigma={self.sigma} exceeds the {pairs} ordered pairs")
        return self


@dataclass
class IterationRecord:
    """One increment decision."""
    index: int
    base_rates: tuple[int, ...]
    base_estimate: float
    candidates: list[int]
    slots: list[list[int]]
    observations: list[list[float]]
    estimates: list[float]
    gains: list[float]
    winner: int
    shortfall: int = 0


@dataclass
class SlotObservation:
    """One oracle call: which policy was tried in which slot and what it scored."""
    slot: int
    phase: str  # "baseline" or "candidate"
    iteration: int
    pair: int | None
    policy_hash: str
    psi: float


@dataclass
class LearnerRun:
    """Full trace of a training run."""
    final_policy: SyncPolicy
    baseline_estimate: float
    iterations: list[IterationRecord]
    slots_used: int
    observations: list[SlotObservation] = field(default_factory=list)
    config: LearnerConfig | None = None

    @property
    def final_estimate(self) -> float:
        """Estimate of the committed policy after the last iteration."""
        if not self.iterations:
            return self.baseline_estimate
        last = self.iterations[-1]
        return last.estimates[last.candidates.index(last.winner)]

    @property
    def winners(self) -> list[int]:
        return [it.winner for it in self.iterations]

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready trace."""
        c = self.final_policy.controller_count
        pairs = ordered_pairs(c)
        return {
            "config": self.config.model_dump() if self.config else None,
            "final_policy": self.final_policy.to_dict(),
            "baseline_estimate": self.baseline_estimate,
            "final_estimate": self.final_estimate,
            "slots_used": self.slots_used,
            "iterations": [
                {
                    **asdict(it),
                    "base_rates": list(it.base_rates),
                    "winner_pair": "{}->{}".format(*pairs[it.winner]),
                }
                for it in self.iterations
            ],
            "observations": [asdict(obs) for obs in self.observations],
        }


@dataclass(frozen=True)
class BoundParams:
    """Quantities entering the approximation factors."""
    epsilon: float
    mu: float
    gamma: float | None = None


# ============================================================================
# Learners
# ============================================================================

def training_time(sigma: int, tau: int, budget: int) -> int:
    """Slots a run uses when every iteration finds sigma eligible pairs."""
    return tau + sigma * tau * budget


def _run_greedy(config: LearnerConfig, oracle: Oracle, full_scan: bool) -> LearnerRun:
    c = config.controller_count
    pairs = pair_count(c)
    if config.budget > config.max_rate * pairs:
        raise BudgetExhaustsRatesError(
            f"budget {config.budget} exceeds the {config.max_rate * pairs} increments "
            f"available to {pairs} pairs at max rate {config.max_rate}"
        )

    rng = np.random.default_rng(config.rng_seed)
    policy = SyncPolicy.zeros(c)
    observations: list[SlotObservation] = []
    slot = 0

    def observe(candidate: SyncPolicy, phase: str, iteration: int, pair: int | None) -> tuple[list[int], list[float]]:
        nonlocal slot
        slots, values = [], []
        for _ in range(config.tau):
            slot += 1
            psi = float(oracle.try_out(candidate, slot))
            slots.append(slot)
            values.append(psi)
            observations.append(
                SlotObservation(slot, phase, iteration, pair, candidate.policy_hash(), psi)
            )
        return slots, values

    _, base_values = observe(policy, "baseline", 0, None)
    baseline = float(np.mean(base_values))
    estimate = baseline
    logger.debug(f"Baseline estimate over {config.tau} slots: {baseline:.6f}")

    iterations: list[IterationRecord] = []
    for k in range(1, config.budget + 1):
        eligible = [p for p, rate in enumerate(policy.rates) if rate < config.max_rate]
        if full_scan:
            candidates = eligible
            shortfall = 0
        else:
            draw = min(config.sigma, len(eligible))
            shortfall = config.sigma - draw
            candidates = [int(p) for p in rng.choice(eligible, size=draw, replace=False)]
            if shortfall:
                logger.warning(
                    f"Iteration {k}: only {draw} eligible pairs for sigma={config.sigma}"
                )

        slot_lists, obs_lists, estimates = [], [], []
        for p in candidates:
            slots, values = observe(policy.incremented(p), "candidate", k, p)
            slot_lists.append(slots)
            obs_lists.append(values)
            estimates.append(float(np.mean(values)))
        gains = [e - estimate for e in estimates]
        best = int(np.argmax(gains))
        winner = candidates[best]

        iterations.append(
            IterationRecord(
                index=k,
                base_rates=policy.rates,
                base_estimate=estimate,
                candidates=candidates,
                slots=slot_lists,
                observations=obs_lists,
                estimates=estimates,
                gains=gains,
                winner=winner,
                shortfall=shortfall,
            )
        )
        policy = policy.incremented(winner)
        estimate = estimates[best]
        logger.debug(
            f"Iteration {k}: candidates={candidates}, winner={winner}, gain={gains[best]:.6f}"
        )

    logger.info(
        f"Training finished: B={config.budget}, sigma={'all' if full_scan else config.sigma}, "
        f"tau={config.tau}, slots={slot}, estimate={estimate:.6f}"
    )
    return LearnerRun(
        final_policy=policy,
        baseline_estimate=baseline,
        iterations=iterations,
        slots_used=slot,
        observations=observations,
        config=config,
    )


def _describe_run(run: LearnerRun) -> dict[str, int]:
    return {"slots": run.slots_used, "iterations": len(run.iterations)}


@track_operation("learn", describe=_describe_run)
def stochastic_greedy(config: LearnerConfig, oracle: Oracle) -> LearnerRun:
    """Train a policy with sigma sampled candidates per increment.

    Fewer than sigma eligible pairs at an iteration means all of them are
    tried and the shortfall is recorded. The winner's estimate becomes the
    baseline of the next iteration; ties go to the first candidate drawn.

    Raises:
        BudgetExhaustsRatesError: B exceeds R * C(C-1).
    """
    return _run_greedy(config, oracle, full_scan=False)


@track_operation("learn", describe=_describe_run)
def full_greedy(config: LearnerConfig, oracle: Oracle) -> LearnerRun:
    """Greedy that tries every currently eligible pair at each increment.

    ``config.sigma`` is ignored.
    """
    return _run_greedy(config, oracle, full_scan=True)


def homogeneous_policy(model: SystemModel) -> SyncPolicy:
    """Equal rate on every pair, min(R, floor(B / sum of costs)); remainder unspent."""
    rate = min(model.max_rate, model.budget // sum(model.pair_costs))
    return SyncPolicy.uniform(model.controller_count, rate)


def unit_cost_budget(model: SystemModel) -> int:
    """Number of unit increments the learner may spend for a model.

    Uniform costs b give floor(B / b). With heterogeneous costs every
    increment is charged at the most expensive pair, which keeps any learned
    policy within budget.
    """
    costs = set(model.pair_costs)
    worst = max(costs)
    if len(costs) > 1:
        logger.warning(
            f"Heterogeneous pair costs {sorted(costs)}: charging every increment at {worst}"
        )
    return model.budget // worst


# ============================================================================
# Bounds
# ============================================================================

def _check_bound_args(controller_count: int, budget: int, max_rate: int, sigma: int) -> None:
    if controller_count < 2:
        raise InvalidArgumentError("need at least two controllers")
    if budget < 1 or max_rate < 1 or sigma < 1:
        raise InvalidArgumentError("budget, max_rate and sigma must be positive")


def bound_params(
    controller_count: int,
    budget: int,
    max_rate: int,
    sigma: int,
    mu: float,
    gamma: float | None = None,
) -> BoundParams:
    """epsilon = exp(-sigma B / (C(C-1) R)) together with mu and gamma."""
    _check_bound_args(controller_count, budget, max_rate, sigma)
    if not 0.0 < mu <= 1.0:
        raise InvalidArgumentError(f"mu must lie in (0, 1], got {mu}")
    if gamma is not None and not 0.0 < gamma < 1.0:
        raise InvalidArgumentError(f"gamma must lie in (0, 1), got {gamma}")
    eps = math.exp(-sigma * budget / (pair_count(controller_count) * max_rate))
    return BoundParams(epsilon=eps, mu=mu, gamma=gamma)


def expected_bound(controller_count: int, budget: int, max_rate: int, sigma: int, mu: float) -> float:
    """Expected approximation factor 1 - exp(-(1 - epsilon) mu)."""
    params = bound_params(controller_count, budget, max_rate, sigma, mu)
    return 1.0 - math.exp(-(1.0 - params.epsilon) * mu)


def high_prob_bound(
    controller_count: int,
    budget: int,
    max_rate: int,
    sigma: int,
    tau: int,
    mu: float,
    gamma: float,
    use_proof_variant: bool = False,
) -> tuple[float, float]:
    """Factor 1 - exp(-(1-epsilon)(1-gamma) mu) and the probability it holds.

    The probability is 1 - exp(-gamma B tau / 2); ``use_proof_variant``
    switches to 1 - exp(-gamma mu B tau / 2).
    """
    if tau < 1:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    params = bound_params(controller_count, budget, max_rate, sigma, mu, gamma)
    factor = 1.0 - math.exp(-(1.0 - params.epsilon) * (1.0 - gamma) * mu)
    exponent = gamma * budget * tau / 2.0
    if use_proof_variant:
        exponent *= mu
    return factor, 1.0 - math.exp(-exponent)


# ============================================================================
# Empirical checks
# ============================================================================

@dataclass(frozen=True)
class MuEstimate:
    """Mean observed-to-true marginal ratio over try-outs with positive true gain."""
    mu: float
    unclamped: float
    count: int


def measure_mu(
    run: LearnerRun,
    truth: Callable[[SyncPolicy], float],
    counterfactual: Callable[[SyncPolicy, int], float] | None = None,
) -> MuEstimate:
    """Empirical mu of a completed run.

    For every try-out slot t of candidate x' over base x the observed gain is
    psi_t(x') minus a reference: ``counterfactual(x, t)`` (what x would have
    scored in the same slot) when given, otherwise the learner's estimate of
    x. The ratio to truth(x') - truth(x) is clamped to [0, 1] for ``mu``.

    Raises:
        UndefinedMuError: no try-out had a positive true marginal gain.
    """
    c = run.final_policy.controller_count
    ratios: list[float] = []
    for it in run.iterations:
        base = SyncPolicy(c, it.base_rates)
        base_truth = truth(base)
        for pair, slots, values in zip(it.candidates, it.slots, it.observations):
            cand = base.incremented(pair)
            true_gain = truth(cand) - base_truth
            if true_gain <= 0.0:
                continue
            for t, psi in zip(slots, values):
                ref = counterfactual(base, t) if counterfactual is not None else it.base_estimate
                ratios.append((psi - ref) / true_gain)
    if not ratios:
        raise UndefinedMuError("no try-out had a positive true marginal gain")
    arr = np.asarray(ratios)
    return MuEstimate(
        mu=float(np.clip(arr, 0.0, 1.0).mean()),
        unclamped=float(arr.mean()),
        count=len(ratios),
    )


def brute_force_optimum(
    truth: Callable[[SyncPolicy], float],
    controller_count: int,
    max_rate: int,
    budget: int,
    cap: int = DEFAULT_OPTIMUM_CAP,
) -> tuple[SyncPolicy, float]:
    """Best policy with total rate at most B and every rate at most R.

    Raises:
        InstanceTooLargeError: (R + 1)^(C(C-1)) exceeds ``cap``.
    """
    pairs = pair_count(controller_count)
    size = (max_rate + 1) ** pairs
    if size > cap:
        raise InstanceTooLargeError(f"{size} policies exceed the enumeration cap {cap}")
    best_policy = SyncPolicy.zeros(controller_count)
    best_value = truth(best_policy)
    for rates in itertools.product(range(max_rate + 1), repeat=pairs):
        if sum(rates) > budget:
            continue
        policy = SyncPolicy(controller_count, rates)
        value = truth(policy)
        if value > best_value:
            best_policy, best_value = policy, value
    return best_policy, best_value
