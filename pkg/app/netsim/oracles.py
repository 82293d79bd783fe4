# Copyright (c) 2024. All rights reserved.
"""Performance oracles the learner trains against.

``SimulationOracle`` plays slots of a simulated scenario and carries the
world state between calls. ``SyntheticOracle`` scales a known mean function
by multiplicative noise, which makes the observed-to-true gain ratio
measurable.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np

from app.errors import ContractViolationError, InvalidArgumentError
from app.netsim.rng import NOISE, substream
from app.netsim.state import Scenario, WorldState
from app.syncmodel import SyncPolicy, pair_count

logger = logging.getLogger("syncrate.netsim")

TRACE_COLUMNS = ["seed", "slot", "policy_hash", "psi", "components"]


@dataclass(frozen=True)
class TraceRow:
    """One observed slot."""
    seed: int
    slot: int
    policy_hash: str
    psi: float
    components: dict[str, float] = field(default_factory=dict)

    def to_csv_row(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "slot": self.slot,
            "policy_hash": self.policy_hash,
            "psi": repr(self.psi),
            "components": json.dumps(self.components, sort_keys=True),
        }


def write_trace_csv(path: str | Path, rows: list[TraceRow]) -> Path:
    """Write per-slot observations as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.to_csv_row())
    logger.info(f"Wrote {len(rows)} trace rows to {path}")
    return path


class _SlotOrder:
    """Enforces strictly increasing slot requests."""

    def __init__(self) -> None:
        self.last_slot = 0

    def advance(self, slot: int) -> int:
        if slot <= self.last_slot:
            raise ContractViolationError(
                f"slot {slot} requested after slot {self.last_slot}; slots must increase"
            )
        previous, self.last_slot = self.last_slot, slot
        return previous


class SimulationOracle:
    """Stateful oracle over a simulated scenario.

    Skipped slots still advance the environment (without traffic), so the
    world a slot sees depends only on the seed and the slot index.
    """

    def __init__(self, scenario: Scenario, rng_seed: int | None = None):
        self._scenario = scenario if rng_seed is None else scenario.with_seed(rng_seed)
        self._state: WorldState = self._scenario.initial_state()
        self._order = _SlotOrder()
        self._trace: list[TraceRow] = []

    @property
    def scenario(self) -> Scenario:
        return self._scenario

    @property
    def trace(self) -> list[TraceRow]:
        return list(self._trace)

    @property
    def last_slot(self) -> int:
        return self._order.last_slot

    def try_out(self, policy: SyncPolicy, slot: int) -> float:
        previous = self._order.advance(slot)
        for idle in range(previous + 1, slot):
            self._state = self._scenario.advance_idle(self._state, idle)
        result = self._scenario.run_slot(self._state, policy, slot)
        self._state = result.state
        self._trace.append(
            TraceRow(self._scenario.rng_seed, slot, policy.policy_hash(), result.psi, result.components)
        )
        return result.psi


def as_oracle(scenario: Scenario, rng_seed: int) -> SimulationOracle:
    """Fresh oracle over ``scenario`` seeded with ``rng_seed``."""
    return SimulationOracle(scenario, rng_seed)


# ============================================================================
# Synthetic oracles
# ============================================================================

@dataclass(frozen=True)
class NoiseLaw:
    """Multiplicative observation noise with a known mean ratio.

    ``none`` observes the truth; ``scale`` multiplies by a constant;
    ``uniform`` multiplies by a fresh draw from [low, high] each slot.
    """
    kind: Literal["none", "scale", "uniform"] = "none"
    scale: float = 1.0
    low: float = 1.0
    high: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("none", "scale", "uniform"):
            raise InvalidArgumentError(f"unknown noise law: {self.kind}")
        if self.kind == "scale" and self.scale <= 0.0:
            raise InvalidArgumentError("noise scale must be positive")
        if self.kind == "uniform" and not 0.0 <= self.low <= self.high:
            raise InvalidArgumentError("uniform noise needs 0 <= low <= high")

    @property
    def mean_ratio(self) -> float:
        if self.kind == "scale":
            return self.scale
        if self.kind == "uniform":
            return (self.low + self.high) / 2.0
        return 1.0

    def factor(self, seed: int, slot: int) -> float:
        if self.kind == "scale":
            return self.scale
        if self.kind == "uniform":
            return float(substream(seed, NOISE, slot).uniform(self.low, self.high))
        return 1.0


class SyntheticOracle:
    """Noisy observations of a known monotone mean function.

    ``modular``: truth(x) = sum_p c_p x_p.
    ``coverage``: truth(x) = sum_p a_p (1 - beta_p ** x_p), whose per-pair
    marginal gains shrink geometrically.
    """

    def __init__(
        self,
        controller_count: int,
        kind: Literal["modular", "coverage"],
        weights: list[float] | np.ndarray,
        decay: list[float] | np.ndarray | None = None,
        noise: NoiseLaw | None = None,
        rng_seed: int = 0,
    ):
        pairs = pair_count(controller_count)
        self.controller_count = controller_count
        self.kind = kind
        self.weights = np.asarray(weights, dtype=float)
        self.noise = noise or NoiseLaw()
        self.rng_seed = rng_seed
        if self.weights.shape != (pairs,) or np.any(self.weights < 0):
            raise InvalidArgumentError(f"need {pairs} non-negative weights")
        if kind == "modular":
            self.decay = None
        elif kind == "coverage":
            if decay is None:
                raise InvalidArgumentError("coverage oracle needs per-pair decay factors")
            self.decay = np.asarray(decay, dtype=float)
            if self.decay.shape != (pairs,) or np.any((self.decay <= 0) | (self.decay >= 1)):
                raise InvalidArgumentError(f"need {pairs} decay factors in (0, 1)")
        else:
            raise InvalidArgumentError(f"unknown synthetic oracle kind: {kind}")
        self._order = _SlotOrder()

    def truth(self, policy: SyncPolicy) -> float:
        x = np.asarray(policy.rates, dtype=float)
        if self.kind == "modular":
            return float(self.weights @ x)
        return float(self.weights @ (1.0 - self.decay ** x))

    def counterfactual(self, policy: SyncPolicy, slot: int) -> float:
        """What ``policy`` would have been observed at ``slot``; has no side effects."""
        return self.noise.factor(self.rng_seed, slot) * self.truth(policy)

    def try_out(self, policy: SyncPolicy, slot: int) -> float:
        self._order.advance(slot)
        return self.counterfactual(policy, slot)


def synthetic_oracle(
    kind: Literal["modular", "coverage"],
    params: dict[str, Any],
    noise: NoiseLaw | None = None,
    rng_seed: int = 0,
) -> SyntheticOracle:
    """Build a synthetic oracle from ``params``.

    ``params`` holds ``controller_count`` and either explicit ``weights``
    (plus ``decay`` for coverage) or ``weight_range``/``decay_range`` pairs
    from which they are drawn with ``rng_seed``.
    """
    c = int(params["controller_count"])
    pairs = pair_count(c)
    rng = np.random.default_rng(rng_seed)
    weights = params.get("weights")
    if weights is None:
        low, high = params.get("weight_range", (0.5, 1.5))
        weights = rng.uniform(low, high, size=pairs)
    decay = params.get("decay")
    if kind == "coverage" and decay is None:
        low, high = params.get("decay_range", (0.3, 0.8))
        decay = rng.uniform(low, high, size=pairs)
    return SyntheticOracle(c, kind, weights, decay, noise, rng_seed)
