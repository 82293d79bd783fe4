# Copyright (c) 2024. All rights reserved.
"""Named scenario and model presets loaded from YAML documents.

A preset is a mapping with a ``kind`` of ``model`` (analytic consistency
model), ``routing`` or ``loadbalance``. Presets are looked up by name in the
configured presets directory, by explicit path, or given inline.
"""

import logging
from pathlib import Path
from typing import Annotated, Any, Literal, Union

from pydantic import BaseModel, Field, TypeAdapter, model_validator

from app.config import load_yaml_document, resolve_path
from app.errors import PresetNotFoundError
from app.netsim.loadbalance import LoadBalanceScenario
from app.netsim.routing import RoutingScenario
from app.netsim.topology import Topology, generate_topology
from app.syncmodel import SystemModel

logger = logging.getLogger("syncrate.harness")


class TopologyDoc(BaseModel):
    """Explicit edge list or a seeded random graph."""
    node_count: int = Field(ge=2)
    edges: list[tuple[int, int]] | None = None
    domain_of: list[int] | None = None
    domain_sizes: list[int] | None = None
    controller_count: int | None = Field(default=None, ge=2)
    edge_prob: float | None = Field(default=None, gt=0.0, le=1.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_source(self) -> "TopologyDoc":
        if self.edges is None and (self.edge_prob is None or self.controller_count is None):
            raise ValueError("topology needs either 'edges' or 'edge_prob' with 'controller_count'")
        if self.edges is not None and self.domain_of is None and self.domain_sizes is None:
            raise ValueError("explicit topologies need 'domain_of' or 'domain_sizes'")
        if self.domain_sizes is not None and sum(self.domain_sizes) != self.node_count:
            raise ValueError(f"domain_sizes sum to {sum(self.domain_sizes)}, expected {self.node_count}")
        return self

    def build(self) -> Topology:
        if self.edges is None:
            return generate_topology(self.node_count, self.controller_count, self.edge_prob, self.seed)
        if self.domain_of is not None:
            domain_of = tuple(self.domain_of)
        else:
            domain_of = tuple(d for d, size in enumerate(self.domain_sizes) for _ in range(size))
        return Topology(self.node_count, tuple(self.edges), domain_of)


class _LearningPreset(BaseModel):
    """Fields shared by the simulated applications."""
    slot_seconds: int = Field(ge=1)
    max_rate: int = Field(ge=1)
    budget: int = Field(ge=1)
    sigma: int | None = Field(default=None, ge=1)
    tau: int | None = Field(default=None, ge=1)
    rate_levels: list[int] = Field(default_factory=list)


class RoutingPreset(_LearningPreset):
    kind: Literal["routing"] = "routing"
    topology: TopologyDoc
    flip_prob: float = Field(default=0.05, ge=0.0, le=1.0)
    packets_per_tick: int = Field(default=8, ge=1)
    metric: Literal["delivered", "optimal"] = "delivered"

    def scenario(self, seed: int = 0) -> RoutingScenario:
        return RoutingScenario(
            topology=self.topology.build(),
            flip_prob=self.flip_prob,
            packets_per_tick=self.packets_per_tick,
            slot_seconds=self.slot_seconds,
            metric=self.metric,
            rng_seed=seed,
        )

    def system_model(self, budget: int | None = None) -> SystemModel:
        """Unit-cost model whose change rates are domain size times flip rate."""
        topo = self.topology.build()
        return SystemModel.from_domain_sizes(
            topo.domain_sizes,
            unit_rate=self.flip_prob,
            slot_seconds=float(self.slot_seconds),
            budget=self.budget if budget is None else budget,
            max_rate=self.max_rate,
        )


class LoadBalancePreset(_LearningPreset):
    kind: Literal["loadbalance"] = "loadbalance"
    arrival_rates: tuple[float, float]
    work: Literal["constant", "uniform"] = "constant"
    work_low: float = 0.5
    work_high: float = 1.5

    def scenario(self, seed: int = 0) -> LoadBalanceScenario:
        return LoadBalanceScenario(
            arrival_rates=self.arrival_rates,
            slot_seconds=self.slot_seconds,
            work=self.work,
            work_low=self.work_low,
            work_high=self.work_high,
            rng_seed=seed,
        )

    def system_model(self, budget: int | None = None) -> SystemModel:
        """Unit-cost model whose change rates are the arrival rates."""
        return SystemModel(
            controller_count=2,
            change_rates=self.arrival_rates,
            slot_seconds=float(self.slot_seconds),
            pair_costs=1,
            budget=self.budget if budget is None else budget,
            max_rate=self.max_rate,
        )


class ModelPreset(BaseModel):
    """Analytic consistency model with change rates n_i * unit_rate or explicit rates."""
    kind: Literal["model"] = "model"
    domain_sizes: list[int] | None = None
    unit_rate: float | None = Field(default=None, ge=0.0)
    change_rates: list[float] | None = None
    slot_seconds: float = Field(gt=0.0)
    pair_costs: Any = 1
    budget: int = Field(default=0, ge=0)
    max_rate: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_rates(self) -> "ModelPreset":
        if self.change_rates is None and (self.domain_sizes is None or self.unit_rate is None):
            raise ValueError("model needs 'change_rates' or 'domain_sizes' with 'unit_rate'")
        return self

    def system_model(self, budget: int | None = None, unit_rate: float | None = None) -> SystemModel:
        budget = self.budget if budget is None else budget
        if self.domain_sizes is not None and (unit_rate is not None or self.change_rates is None):
            return SystemModel.from_domain_sizes(
                self.domain_sizes,
                unit_rate=self.unit_rate if unit_rate is None else unit_rate,
                slot_seconds=self.slot_seconds,
                budget=budget,
                max_rate=self.max_rate,
                pair_costs=self.pair_costs,
            )
        return SystemModel(
            controller_count=len(self.change_rates),
            change_rates=tuple(self.change_rates),
            slot_seconds=self.slot_seconds,
            pair_costs=self.pair_costs,
            budget=budget,
            max_rate=self.max_rate,
        )


Preset = Annotated[Union[ModelPreset, RoutingPreset, LoadBalancePreset], Field(discriminator="kind")]
_PRESET_ADAPTER: TypeAdapter = TypeAdapter(Preset)


def parse_preset(data: dict[str, Any]) -> ModelPreset | RoutingPreset | LoadBalancePreset:
    """Validate a preset mapping."""
    return _PRESET_ADAPTER.validate_python(data)


def find_preset(name: str, presets_dir: str | Path) -> Path:
    """Locate a preset by file path or by name inside ``presets_dir``."""
    candidate = Path(name)
    if candidate.suffix in (".yaml", ".yml") and candidate.exists():
        return candidate
    directory = resolve_path(presets_dir)
    for suffix in (".yaml", ".yml"):
        path = directory / f"{name}{suffix}"
        if path.exists():
            return path
    raise PresetNotFoundError(f"Preset '{name}' not found (looked in {directory})")


def load_preset(
    ref: str | dict[str, Any],
    presets_dir: str | Path = "config/presets",
) -> ModelPreset | RoutingPreset | LoadBalancePreset:
    """Resolve a preset reference: an inline mapping, a YAML path or a preset name."""
    if isinstance(ref, dict):
        return parse_preset(ref)
    path = find_preset(ref, presets_dir)
    preset = parse_preset(load_yaml_document(path))
    logger.debug(f"Loaded preset '{ref}' ({preset.kind}) from {path}")
    return preset


__all__ = [
    "LoadBalancePreset",
    "ModelPreset",
    "Preset",
    "RoutingPreset",
    "TopologyDoc",
    "find_preset",
    "load_preset",
    "parse_preset",
]
