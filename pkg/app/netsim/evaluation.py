# Copyright (c) 2024. All rights reserved.
"""Post-training policy evaluation over seeds."""

import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from app.errors import InvalidArgumentError
from app.netsim.oracles import SimulationOracle
from app.netsim.state import Scenario
from app.syncmodel import SyncPolicy

logger = logging.getLogger("syncrate.netsim")


@dataclass(frozen=True)
class PolicyEvaluation:
    """Per-seed mean performance and its spread across seeds."""
    mean: float
    std: float
    minimum: float
    maximum: float
    per_seed: tuple[float, ...]

    @property
    def count(self) -> int:
        return len(self.per_seed)

    @property
    def standard_error(self) -> float:
        return self.std / math.sqrt(self.count)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean": self.mean,
            "std": self.std,
            "min": self.minimum,
            "max": self.maximum,
            "per_seed": list(self.per_seed),
        }


def summarize(values: list[float] | np.ndarray) -> PolicyEvaluation:
    """Mean, sample standard deviation (0 for one value), min and max."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise InvalidArgumentError("nothing to summarize")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return PolicyEvaluation(
        mean=float(arr.mean()),
        std=std,
        minimum=float(arr.min()),
        maximum=float(arr.max()),
        per_seed=tuple(float(v) for v in arr),
    )


def evaluate_policy(
    scenario: Scenario,
    policy: SyncPolicy,
    slots: int,
    seeds: list[int],
) -> PolicyEvaluation:
    """Play ``slots`` slots of ``policy`` for every seed and summarize the per-seed means."""
    if slots < 1:
        raise InvalidArgumentError(f"slots must be positive, got {slots}")
    if not seeds:
        raise InvalidArgumentError("at least one seed is required")
    means = []
    for seed in seeds:
        oracle = SimulationOracle(scenario, seed)
        values = [oracle.try_out(policy, t) for t in range(1, slots + 1)]
        means.append(float(np.mean(values)))
    result = summarize(means)
    logger.debug(
        f"Evaluated policy {policy.policy_hash()} over {len(seeds)} seeds x {slots} slots: "
        f"mean={result.mean:.6f}, std={result.std:.6f}"
    )
    return result


def pooled_standard_error(a: PolicyEvaluation, b: PolicyEvaluation) -> float:
    """Standard error of the difference of two means, sqrt(s_a^2/n_a + s_b^2/n_b)."""
    return math.sqrt(a.std**2 / a.count + b.std**2 / b.count)
