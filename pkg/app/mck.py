# Copyright (c) 2024. All rights reserved.
"""Multiple-choice knapsack reduction and solvers for the consistency objective.

Every ordered controller pair (i, j) becomes a class whose l-th item
(l = 1..R) stands for "synchronize at rate l": weight b_ij * l and value
exp(-lambda_i s / (l + 1)) - exp(-lambda_i s), the consistency gained over
the mandatory message alone. Leaving a class empty means rate 0. Maximizing
packed value under capacity B is exactly maximizing Omega under the budget.

Solvers:
- ``solve_exact_dp``: weight-indexed table, O(K * R * W).
- ``solve_fptas``: value-scaled, min-weight table; (1 - eps)-optimal.
- ``solve_brute_force``: exhaustive enumeration used as a test oracle.

Ties between equally valuable selections are broken by lower total weight,
then by lexicographically smaller item choices (an empty class sorts first).
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import bisect

from app.errors import InstanceTooLargeError, InvalidArgumentError, NotEncodableError
from app.metrics import track_operation
from app.syncmodel import (
    ConsistencyReport,
    Pair,
    SyncPolicy,
    SystemModel,
    consistency_level,
    pair_index,
)

logger = logging.getLogger("syncrate.mck")

DEFAULT_BRUTE_FORCE_CAP = 10_000_000

# Relative tolerance when comparing float totals of competing selections
_VALUE_RTOL = 1e-12
_VALUE_ATOL = 1e-15

# The largest consistency gain a single extra message can buy, at lambda*s = 2 ln 2
MAX_ENCODABLE_VALUE = 0.25


# ============================================================================
# Data Models
# ============================================================================

@dataclass(frozen=True)
class MckItem:
    """One packable item; ``pair`` and ``level`` tag its synchronization meaning."""
    weight: int
    value: float
    pair: Pair | None = None
    level: int | None = None


@dataclass(frozen=True)
class MckInstance:
    """Knapsack capacity and item classes (pick at most one item per class)."""
    capacity: int
    classes: tuple[tuple[MckItem, ...], ...]
    controller_count: int | None = None
    max_rate: int | None = None

    def __post_init__(self) -> None:
        if self.capacity < 0:
            raise InvalidArgumentError(f"capacity must be non-negative, got {self.capacity}")
        for k, items in enumerate(self.classes):
            for item in items:
                if item.weight < 1:
                    raise InvalidArgumentError(f"class {k}: item weights must be positive integers")
                if item.value < 0 or not math.isfinite(item.value):
                    raise InvalidArgumentError(f"class {k}: item values must be finite and non-negative")

    @property
    def class_count(self) -> int:
        return len(self.classes)


@dataclass(frozen=True)
class MckSolution:
    """Chosen item index per class (None for an empty class) and totals."""
    chosen: tuple[int | None, ...]
    total_value: float
    total_weight: int


def _evaluate(inst: MckInstance, chosen: tuple[int | None, ...]) -> MckSolution:
    value = 0.0
    weight = 0
    for items, idx in zip(inst.classes, chosen):
        if idx is not None:
            value += items[idx].value
            weight += items[idx].weight
    return MckSolution(chosen=tuple(chosen), total_value=value, total_weight=weight)


def _describe_solution(sol: MckSolution) -> dict[str, float]:
    return {"value": sol.total_value, "weight": sol.total_weight}


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=_VALUE_RTOL, abs_tol=_VALUE_ATOL)


# ============================================================================
# Reduction
# ============================================================================

def build_mck_instance(model: SystemModel) -> MckInstance:
    """One class per ordered pair with R rate-level items; capacity B."""
    classes = []
    for (i, j), cost in zip(model.pairs, model.pair_costs):
        a = model.change_rates[i] * model.slot_seconds
        base = math.exp(-a)
        items = tuple(
            MckItem(weight=cost * level, value=math.exp(-a / (level + 1)) - base, pair=(i, j), level=level)
            for level in range(1, model.max_rate + 1)
        )
        classes.append(items)
    inst = MckInstance(
        capacity=model.budget,
        classes=tuple(classes),
        controller_count=model.controller_count,
        max_rate=model.max_rate,
    )
    logger.debug(f"Built MCK instance: K={inst.class_count}, R={model.max_rate}, W={inst.capacity}")
    return inst


def decode_policy(inst: MckInstance, sol: MckSolution) -> SyncPolicy:
    """Map a packed selection back to synchronization rates."""
    if inst.controller_count is None:
        raise InvalidArgumentError("instance carries no controller tags; it was not built from a model")
    if len(sol.chosen) != inst.class_count:
        raise InvalidArgumentError(
            f"solution has {len(sol.chosen)} classes, instance has {inst.class_count}"
        )
    rates = [0] * inst.class_count
    for k, (items, idx) in enumerate(zip(inst.classes, sol.chosen)):
        if idx is None:
            continue
        if not 0 <= idx < len(items):
            raise InvalidArgumentError(f"class {k}: item index {idx} out of range")
        item = items[idx]
        if item.pair is None or item.level is None:
            raise InvalidArgumentError(f"class {k}: item carries no pair/level tag")
        rates[pair_index(inst.controller_count, *item.pair)] = item.level
    return SyncPolicy(inst.controller_count, tuple(rates))


# ============================================================================
# Solvers
# ============================================================================

@track_operation("mck", describe=_describe_solution)
def solve_exact_dp(inst: MckInstance) -> MckSolution:
    """Value-maximal selection via a (class suffix x exact weight) table.

    ``best[k][w]`` is the largest value classes k..K-1 can add using exactly
    weight w. The selection is then rebuilt front to back, taking at every
    class the smallest option (empty first) that still reaches the optimum,
    which yields the lexicographically smallest optimal choice vector.
    """
    K = inst.class_count
    W = inst.capacity
    best = np.full((K + 1, W + 1), -np.inf)
    best[K, 0] = 0.0
    for k in range(K - 1, -1, -1):
        row = best[k + 1].copy()
        for item in inst.classes[k]:
            if item.weight > W:
                continue
            shifted = np.full(W + 1, -np.inf)
            shifted[item.weight:] = best[k + 1, : W + 1 - item.weight] + item.value
            np.maximum(row, shifted, out=row)
        best[k] = row

    top = float(best[0].max())
    # Lowest total weight reaching the optimum
    target_weight = next(w for w in range(W + 1) if _close(float(best[0, w]), top) or best[0, w] >= top)

    chosen: list[int | None] = []
    remaining = target_weight
    for k in range(K):
        goal = float(best[k, remaining])
        if _close(float(best[k + 1, remaining]), goal) or best[k + 1, remaining] >= goal:
            chosen.append(None)
            continue
        for idx, item in enumerate(inst.classes[k]):
            if item.weight > remaining:
                continue
            candidate = float(best[k + 1, remaining - item.weight]) + item.value
            if _close(candidate, goal) or candidate >= goal:
                chosen.append(idx)
                remaining -= item.weight
                break
        else:  # pragma: no cover - table is self-consistent
            raise RuntimeError(f"DP reconstruction failed at class {k}")

    sol = _evaluate(inst, tuple(chosen))
    logger.debug(f"Exact DP: value={sol.total_value:.6f}, weight={sol.total_weight}/{W}")
    return sol


@track_operation("mck", describe=_describe_solution)
def solve_fptas(inst: MckInstance, eps: float) -> MckSolution:
    """(1 - eps)-optimal selection by profit scaling.

    Values of items that fit on their own are scaled by mu = eps * v_max / K
    and floored; a table of minimum weight per exact scaled profit is filled
    class by class, and the largest scaled profit within capacity is rebuilt
    and reported at true values.
    """
    if not 0.0 < eps < 1.0:
        raise InvalidArgumentError(f"eps must lie in (0, 1), got {eps}")

    K = inst.class_count
    W = inst.capacity
    feasible_values = [item.value for items in inst.classes for item in items if item.weight <= W]
    v_max = max(feasible_values, default=0.0)
    if K == 0 or v_max <= 0.0:
        return _evaluate(inst, (None,) * K)

    mu = eps * v_max / K
    scaled: list[list[int]] = [
        [int(math.floor(item.value / mu)) if item.weight <= W else -1 for item in items]
        for items in inst.classes
    ]
    profit_cap = sum(max((p for p in row if p >= 0), default=0) for row in scaled)

    no_weight = np.iinfo(np.int64).max
    min_weight = np.full(profit_cap + 1, no_weight, dtype=np.int64)
    min_weight[0] = 0
    # choice[k][p] = item index used by class k to reach profit p (-1 = empty)
    choice = np.full((K, profit_cap + 1), -1, dtype=np.int32)
    for k, items in enumerate(inst.classes):
        nxt = min_weight.copy()
        for idx, item in enumerate(items):
            p = scaled[k][idx]
            if p < 0:
                continue
            prev = min_weight[: profit_cap + 1 - p]
            reachable = prev != no_weight
            cand = np.where(reachable, prev + item.weight, no_weight)
            target = nxt[p:]
            better = cand < target
            target[better] = cand[better]
            choice[k, p:][better] = idx
        min_weight = nxt

    feasible = np.nonzero(min_weight <= W)[0]
    profit = int(feasible.max())

    chosen: list[int | None] = [None] * K
    for k in range(K - 1, -1, -1):
        idx = int(choice[k, profit])
        if idx >= 0:
            chosen[k] = idx
            profit -= scaled[k][idx]
    sol = _evaluate(inst, tuple(chosen))
    logger.debug(f"FPTAS(eps={eps}): value={sol.total_value:.6f}, weight={sol.total_weight}/{W}")
    return sol


def solve_brute_force(inst: MckInstance, cap: int = DEFAULT_BRUTE_FORCE_CAP) -> MckSolution:
    """Exhaustive optimum over every selection; a test oracle."""
    size = math.prod(len(items) + 1 for items in inst.classes)
    if size > cap:
        raise InstanceTooLargeError(f"{size} selections exceed the brute-force cap {cap}")

    options = [[None, *range(len(items))] for items in inst.classes]
    best: MckSolution | None = None
    for chosen in itertools.product(*options):
        sol = _evaluate(inst, chosen)
        if sol.total_weight > inst.capacity:
            continue
        if (
            best is None
            or (sol.total_value > best.total_value and not _close(sol.total_value, best.total_value))
            or (_close(sol.total_value, best.total_value) and sol.total_weight < best.total_weight)
        ):
            best = sol
    assert best is not None  # the empty selection is always feasible
    return best


def solve_obj1(
    model: SystemModel,
    method: Literal["dp", "fptas", "brute-force"] = "dp",
    eps: float = 0.1,
) -> tuple[SyncPolicy, ConsistencyReport]:
    """Solve the consistency objective for a model and report Omega of the result."""
    inst = build_mck_instance(model)
    if method == "dp":
        sol = solve_exact_dp(inst)
    elif method == "fptas":
        sol = solve_fptas(inst, eps)
    elif method == "brute-force":
        sol = solve_brute_force(inst)
    else:
        raise InvalidArgumentError(f"Unknown Obj. 1 method: {method}")
    policy = decode_policy(inst, sol)
    report = consistency_level(model, policy)
    logger.info(f"Obj. 1 via {method}: B={model.budget}, omega={report.omega:.6f}")
    return policy, report


# ============================================================================
# Hardness construction
# ============================================================================

def _single_message_gain(a: float) -> float:
    return math.exp(-a / 2.0) - math.exp(-a)


def knapsack_hardness_instance(
    items: list[tuple[int, float]],
    capacity: int,
    slot_seconds: float = 1.0,
) -> SystemModel:
    """Encode a 0/1 knapsack as a consistency problem with R = 1.

    Item l becomes pair (l, L) with cost w_l and a source rate chosen so one
    extra message gains exactly v_l; controller L is a rate-0 sink. Every other
    pair costs B + 1 and can never be synchronized.
    """
    if not items:
        raise InvalidArgumentError("the knapsack needs at least one item")
    upper = 2.0 * math.log(2.0)
    rates = []
    for weight, value in items:
        if weight < 1:
            raise InvalidArgumentError(f"item weight must be a positive integer, got {weight}")
        if not 0.0 < value <= MAX_ENCODABLE_VALUE:
            raise NotEncodableError(f"item value {value} lies outside (0, {MAX_ENCODABLE_VALUE}]")
        if value >= _single_message_gain(upper):
            a = upper
        else:
            # Smaller root: the gain is increasing on (0, 2 ln 2]
            a = bisect(lambda x: _single_message_gain(x) - value, 0.0, upper, xtol=1e-12)
        rates.append(a / slot_seconds)

    sink = len(items)
    controller_count = max(2, len(items) + 1)
    change_rates = rates + [0.0] * (controller_count - len(rates))
    blocked = capacity + 1
    costs = {}
    for i in range(controller_count):
        for j in range(controller_count):
            if i != j:
                costs[(i, j)] = items[i][0] if (i < len(items) and j == sink) else blocked
    return SystemModel(
        controller_count=controller_count,
        change_rates=tuple(change_rates),
        slot_seconds=slot_seconds,
        pair_costs=costs,
        budget=capacity,
        max_rate=1,
    )


# ============================================================================
# Text fixtures
# ============================================================================

def dump_instance(inst: MckInstance) -> str:
    """Serialize as a ``K W`` header followed by ``k w v`` lines."""
    lines = [f"{inst.class_count} {inst.capacity}"]
    for k, items in enumerate(inst.classes):
        for item in items:
            lines.append(f"{k} {item.weight} {item.value!r}")
    return "\n".join(lines) + "\n"


def parse_instance(text: str) -> MckInstance:
    """Parse the ``K W`` / ``k w v`` fixture format."""
    rows = [line.split() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    if not rows or len(rows[0]) != 2:
        raise InvalidArgumentError("missing 'K W' header")
    class_count, capacity = int(rows[0][0]), int(rows[0][1])
    classes: list[list[MckItem]] = [[] for _ in range(class_count)]
    for row in rows[1:]:
        if len(row) != 3:
            raise InvalidArgumentError(f"expected 'k w v', got {' '.join(row)!r}")
        k, weight, value = int(row[0]), int(row[1]), float(row[2])
        if not 0 <= k < class_count:
            raise InvalidArgumentError(f"class index {k} outside 0..{class_count - 1}")
        classes[k].append(MckItem(weight=weight, value=value, level=len(classes[k]) + 1))
    return MckInstance(capacity=capacity, classes=tuple(tuple(c) for c in classes))
