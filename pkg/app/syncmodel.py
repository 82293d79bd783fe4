# Copyright (c) 2024. All rights reserved.
"""Analytic model of eventually-consistent controller synchronization.

A system of C controllers, each owning a domain whose state changes as a
Poisson process of rate lambda_i, synchronizes every ordered controller pair
once at the start of each slot of length s. A policy adds x_ij extra messages
from i to j per slot, spread uniformly, which raises the probability that j's
view of i is current at slot end from exp(-lambda_i s) to
exp(-lambda_i s / (x_ij + 1)). Each extra message costs b_ij resource units
against a budget B.

Ordered pairs are stored densely in row-major order, (0,1), (0,2), ...,
(1,0), (1,2), ..., so every algorithm enumerates pairs identically.
"""

import hashlib
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from functools import lru_cache
from types import MappingProxyType
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.errors import InvalidArgumentError

logger = logging.getLogger("syncrate.syncmodel")

Pair = tuple[int, int]


@lru_cache(maxsize=64)
def ordered_pairs(controller_count: int) -> tuple[Pair, ...]:
    """All ordered pairs (i, j), i != j, in row-major order."""
    return tuple(
        (i, j)
        for i in range(controller_count)
        for j in range(controller_count)
        if i != j
    )


def pair_count(controller_count: int) -> int:
    """Number of ordered controller pairs, C(C-1)."""
    return controller_count * (controller_count - 1)


def pair_index(controller_count: int, i: int, j: int) -> int:
    """Position of pair (i, j) in the row-major pair order."""
    if i == j or not (0 <= i < controller_count and 0 <= j < controller_count):
        raise InvalidArgumentError(f"({i}, {j}) is not an ordered pair of {controller_count} controllers")
    return i * (controller_count - 1) + (j if j < i else j - 1)


def _parse_pair_key(key: Any) -> Pair:
    """Accept (i, j) tuples/lists and "i->j" / "i,j" strings."""
    if isinstance(key, (tuple, list)) and len(key) == 2:
        return int(key[0]), int(key[1])
    if isinstance(key, str):
        for sep in ("->", ",", "-"):
            if sep in key:
                left, right = key.split(sep, 1)
                return int(left.strip()), int(right.strip())
    raise InvalidArgumentError(f"Unrecognized pair key: {key!r}")


# ============================================================================
# Domain Types
# ============================================================================

class SystemModel(BaseModel):
    """Everything the consistency objective needs analytically.

    ``pair_costs`` may be given as a dense row-major list, a single integer
    applied to every pair, or a mapping of pair keys (``"0->1"``) to costs
    with an optional ``default`` entry.
    """
    model_config = ConfigDict(frozen=True)

    controller_count: int = Field(ge=2)
    change_rates: tuple[float, ...] = Field(description="Poisson state-change rate per domain (events/s)")
    slot_seconds: float = Field(gt=0.0)
    pair_costs: tuple[int, ...] = Field(description="Resource units per extra message, row-major pairs")
    budget: int = Field(ge=0)
    max_rate: int = Field(ge=1)

    @model_validator(mode="before")
    @classmethod
    def _expand_costs(cls, data: Any) -> Any:
        if not isinstance(data, Mapping):
            return data
        data = dict(data)
        costs = data.get("pair_costs", 1)
        count = data.get("controller_count")
        if isinstance(count, int) and count >= 2:
            pairs = ordered_pairs(count)
            if isinstance(costs, int):
                data["pair_costs"] = tuple(costs for _ in pairs)
            elif isinstance(costs, Mapping):
                default = costs.get("default")
                explicit = {
                    _parse_pair_key(k): int(v) for k, v in costs.items() if k != "default"
                }
                unknown = set(explicit) - set(pairs)
                if unknown:
                    raise ValueError(f"pair_costs names pairs outside the model: {sorted(unknown)}")
                if default is None and len(explicit) != len(pairs):
                    missing = [p for p in pairs if p not in explicit]
                    raise ValueError(f"pair_costs missing entries for {missing}")
                data["pair_costs"] = tuple(explicit.get(p, default) for p in pairs)
        return data

    @model_validator(mode="after")
    def _check_shapes(self) -> "SystemModel":
        c = self.controller_count
        if len(self.change_rates) != c:
            raise ValueError(f"change_rates has {len(self.change_rates)} entries, expected {c}")
        if any(rate < 0 or not math.isfinite(rate) for rate in self.change_rates):
            raise ValueError("change_rates must be finite and non-negative")
        if len(self.pair_costs) != pair_count(c):
            raise ValueError(f"pair_costs has {len(self.pair_costs)} entries, expected {pair_count(c)}")
        if any(cost < 1 for cost in self.pair_costs):
            raise ValueError("pair_costs must be positive integers")
        return self

    @property
    def pairs(self) -> tuple[Pair, ...]:
        return ordered_pairs(self.controller_count)

    @property
    def pair_count(self) -> int:
        return pair_count(self.controller_count)

    def cost(self, i: int, j: int) -> int:
        return self.pair_costs[pair_index(self.controller_count, i, j)]

    def source_rates(self) -> np.ndarray:
        """lambda_i for every ordered pair (i, j), row-major."""
        return np.repeat(np.asarray(self.change_rates, dtype=float), self.controller_count - 1)

    def with_budget(self, budget: int) -> "SystemModel":
        return self.model_validate({**self.model_dump(), "budget": budget})

    @classmethod
    def from_domain_sizes(
        cls,
        domain_sizes: list[int] | tuple[int, ...],
        unit_rate: float,
        slot_seconds: float,
        budget: int,
        max_rate: int,
        pair_costs: Any = 1,
    ) -> "SystemModel":
        """Build a model with lambda_i = n_i * unit_rate for domain sizes n_i."""
        return cls(
            controller_count=len(domain_sizes),
            change_rates=tuple(n * unit_rate for n in domain_sizes),
            slot_seconds=slot_seconds,
            pair_costs=pair_costs,
            budget=budget,
            max_rate=max_rate,
        )


@dataclass(frozen=True)
class SyncPolicy:
    """Extra synchronization messages per slot for every ordered pair."""
    controller_count: int
    rates: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.controller_count < 2:
            raise InvalidArgumentError("a policy needs at least two controllers")
        rates = tuple(int(r) for r in self.rates)
        if len(rates) != pair_count(self.controller_count):
            raise InvalidArgumentError(
                f"policy has {len(rates)} rates, expected {pair_count(self.controller_count)}"
            )
        if any(r < 0 for r in rates):
            raise InvalidArgumentError("synchronization rates must be non-negative")
        object.__setattr__(self, "rates", rates)

    @classmethod
    def zeros(cls, controller_count: int) -> "SyncPolicy":
        return cls(controller_count, (0,) * pair_count(controller_count))

    @classmethod
    def uniform(cls, controller_count: int, rate: int) -> "SyncPolicy":
        return cls(controller_count, (rate,) * pair_count(controller_count))

    @classmethod
    def from_mapping(cls, controller_count: int, rates: Mapping[Any, int]) -> "SyncPolicy":
        """Build from a pair -> rate mapping that must cover exactly the ordered pairs."""
        parsed = {_parse_pair_key(k): int(v) for k, v in rates.items()}
        pairs = ordered_pairs(controller_count)
        extra = set(parsed) - set(pairs)
        missing = [p for p in pairs if p not in parsed]
        if extra or missing:
            raise InvalidArgumentError(f"policy pairs mismatch: missing={missing}, extra={sorted(extra)}")
        return cls(controller_count, tuple(parsed[p] for p in pairs))

    @property
    def pairs(self) -> tuple[Pair, ...]:
        return ordered_pairs(self.controller_count)

    def rate(self, i: int, j: int) -> int:
        return self.rates[pair_index(self.controller_count, i, j)]

    def incremented(self, index: int, amount: int = 1) -> "SyncPolicy":
        """Copy with the rate at pair position ``index`` raised by ``amount``."""
        rates = list(self.rates)
        rates[index] += amount
        return SyncPolicy(self.controller_count, tuple(rates))

    def total(self) -> int:
        return sum(self.rates)

    def as_mapping(self) -> dict[Pair, int]:
        return dict(zip(self.pairs, self.rates))

    def policy_hash(self) -> str:
        """Short stable digest used to label per-slot traces."""
        digest = hashlib.sha1(",".join(map(str, self.rates)).encode("ascii"))
        return digest.hexdigest()[:12]

    def to_dict(self) -> dict[str, int]:
        return {f"{i}->{j}": r for (i, j), r in self.as_mapping().items()}


@dataclass(frozen=True)
class ConsistencyReport:
    """Consistency level of a policy and its per-pair probabilities."""
    omega: float
    per_pair: Mapping[Pair, float]


# ============================================================================
# Operations
# ============================================================================

def pair_consistency_prob(change_rate: float, slot_seconds: float, level: int) -> float:
    """Probability that j's view of i is current at slot end under rate level x_ij.

    Args:
        change_rate: lambda_i, state changes per second in i's domain.
        slot_seconds: Slot length s.
        level: Extra messages per slot x_ij.

    Returns:
        exp(-lambda_i * s / (x_ij + 1)).
    """
    if change_rate < 0 or not math.isfinite(change_rate):
        raise InvalidArgumentError(f"change rate must be non-negative, got {change_rate}")
    if slot_seconds <= 0:
        raise InvalidArgumentError(f"slot length must be positive, got {slot_seconds}")
    if level < 0:
        raise InvalidArgumentError(f"rate level must be non-negative, got {level}")
    return math.exp(-change_rate * slot_seconds / (level + 1))


def _check_policy(model: SystemModel, policy: SyncPolicy) -> None:
    if policy.controller_count != model.controller_count:
        raise InvalidArgumentError(
            f"policy covers {policy.controller_count} controllers, model has {model.controller_count}"
        )
    if any(r > model.max_rate for r in policy.rates):
        raise InvalidArgumentError(f"policy exceeds the maximum rate {model.max_rate}")


def consistency_level(model: SystemModel, policy: SyncPolicy) -> ConsistencyReport:
    """Expected number of consistent ordered pairs, Omega(x)."""
    _check_policy(model, policy)
    levels = np.asarray(policy.rates, dtype=float)
    probs = np.exp(-model.source_rates() * model.slot_seconds / (levels + 1.0))
    per_pair = MappingProxyType({pair: float(p) for pair, p in zip(model.pairs, probs)})
    return ConsistencyReport(omega=float(probs.sum()), per_pair=per_pair)


def policy_cost(model: SystemModel, policy: SyncPolicy) -> int:
    """Resource units spent by a policy, sum of x_ij * b_ij.

    Raises:
        InvalidArgumentError: If any rate exceeds ``model.max_rate``.
    """
    _check_policy(model, policy)
    return sum(x * b for x, b in zip(policy.rates, model.pair_costs))


def is_feasible(model: SystemModel, policy: SyncPolicy) -> bool:
    """Whether a policy respects both the budget and the rate cap."""
    return (
        all(r <= model.max_rate for r in policy.rates)
        and policy_cost(model, policy) <= model.budget
    )


def baseline_consistency(model: SystemModel) -> float:
    """Consistency of the mandatory-messages-only policy, sum of exp(-lambda_i s)."""
    return consistency_level(model, SyncPolicy.zeros(model.controller_count)).omega


def max_rate_policy(model: SystemModel) -> SyncPolicy:
    return SyncPolicy.uniform(model.controller_count, model.max_rate)
