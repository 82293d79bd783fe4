# Copyright (c) 2024. All rights reserved.
"""Pytest configuration and fixtures."""

import math

import pytest

import app.metrics as metrics_module
from app.config import AppConfig, HarnessConfig, LoggingConfig, MetricsConfig, get_project_root
from app.netsim.oracles import NoiseLaw, synthetic_oracle
from app.netsim.topology import Topology
from app.syncmodel import SystemModel


@pytest.fixture(autouse=True)
def disabled_metrics():
    """Keep the global metrics collector disabled so tests never write metric files."""
    metrics_module.configure_metrics(enabled=False)
    yield
    metrics_module.configure_metrics(enabled=False)


@pytest.fixture
def presets_dir():
    """Absolute path of the shipped presets."""
    return get_project_root() / "config" / "presets"


@pytest.fixture
def test_settings(presets_dir, tmp_path):
    """Application settings for tests: quiet logs, no metrics, tmp outputs."""
    return AppConfig(
        logging=LoggingConfig(level="WARNING", file=None),
        metrics=MetricsConfig(enabled=False, directory=str(tmp_path / "metrics")),
        harness=HarnessConfig(workers=1, presets_dir=str(presets_dir), output_dir=str(tmp_path / "results")),
    )


@pytest.fixture
def ln2_model():
    """Two controllers with lambda * s = ln 2, unit costs, R = 2, B = 2."""
    return SystemModel(
        controller_count=2,
        change_rates=(math.log(2.0), math.log(2.0)),
        slot_seconds=1.0,
        pair_costs=1,
        budget=2,
        max_rate=2,
    )


@pytest.fixture
def three_domain_model():
    """Domains of 6, 5 and 5 nodes, unit rate 0.05, slot 30 s, B = 18."""
    return SystemModel.from_domain_sizes([6, 5, 5], unit_rate=0.05, slot_seconds=30.0, budget=18, max_rate=15)


@pytest.fixture
def line_topology():
    """Five nodes in a line split into two domains; link (2, 3) crosses the boundary."""
    return Topology(5, ((0, 1), (1, 2), (2, 3), (3, 4)), (0, 0, 0, 1, 1))


@pytest.fixture
def ring_topology():
    """Six-node ring with one chord over three domains."""
    return Topology(
        6,
        ((0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)),
        (0, 0, 1, 1, 2, 2),
    )


@pytest.fixture
def modular_oracle():
    """Noiseless modular oracle on three controllers with distinct weights."""
    return synthetic_oracle("modular", {"controller_count": 3, "weights": [6.0, 5.0, 4.0, 3.0, 2.0, 1.0]})


@pytest.fixture
def coverage_factory():
    """Build coverage oracles on three controllers with a chosen noise law and seed."""
    def factory(rng_seed: int = 0, noise: NoiseLaw | None = None):
        return synthetic_oracle("coverage", {"controller_count": 3}, noise=noise, rng_seed=rng_seed)
    return factory
