# Copyright (c) 2024. All rights reserved.
"""Experiment harness: presets, result tables and sweep execution."""

from app.harness.experiments import (
    ExperimentOutcome,
    ExperimentSpec,
    load_experiment,
    run_bound_check,
    run_experiment,
    run_obj1_sweep,
    run_obj2_train,
    run_rate_curve,
    run_tradeoff_sweep,
)
from app.harness.presets import LoadBalancePreset, ModelPreset, RoutingPreset, load_preset
from app.harness.results import ResultRow, ResultTable

__all__ = [
    "ExperimentOutcome",
    "ExperimentSpec",
    "LoadBalancePreset",
    "ModelPreset",
    "ResultRow",
    "ResultTable",
    "RoutingPreset",
    "load_experiment",
    "load_preset",
    "run_bound_check",
    "run_experiment",
    "run_obj1_sweep",
    "run_obj2_train",
    "run_rate_curve",
    "run_tradeoff_sweep",
]
