# Copyright (c) 2024. All rights reserved.
"""Experiment runner.

An experiment document names a kind, a preset and its parameter grids. The
runner expands the grids into independent cells, runs them (optionally in
worker processes), and collects their rows in cell order. A failing cell
becomes an error row and the sweep continues.

Kinds:
- ``obj1-sweep``: consistency of MCK-DP, FPTAS and Homogeneous per budget
  (and per unit change rate).
- ``obj2-train``: Stochastic Greedy training per seed, then evaluation of the
  learned and Homogeneous policies on matched seeds.
- ``rate-curve``: performance of uniform rate levels.
- ``bound-check``: achieved/optimal ratios on synthetic oracles against the
  approximation factors.
- ``tradeoff-sweep``: training time against performance over (sigma, tau).
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.stats import spearmanr

from app.config import AppConfig, get_config, load_yaml_document
from app.errors import InstanceTooLargeError, InvalidArgumentError, UndefinedMuError
from app.harness.presets import LoadBalancePreset, ModelPreset, RoutingPreset, load_preset
from app.harness.results import ResultRow, ResultTable
from app.learn import (
    LearnerConfig,
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
from app.logging_config import current_level, setup_worker_logging
from app.mck import solve_obj1
from app.metrics import get_metrics_collector
from app.netsim.evaluation import evaluate_policy, pooled_standard_error, summarize
from app.netsim.oracles import NoiseLaw, SyntheticOracle, as_oracle, synthetic_oracle
from app.syncmodel import (
    SyncPolicy,
    baseline_consistency,
    consistency_level,
    is_feasible,
    ordered_pairs,
    pair_count,
    policy_cost,
)

logger = logging.getLogger("syncrate.harness")

ExperimentKind = Literal["obj1-sweep", "obj2-train", "rate-curve", "bound-check", "tradeoff-sweep"]

# Largest pair_count * max_rate the bound check enumerates
MAX_BOUND_CHECK_INCREMENTS = 20


# ============================================================================
# Experiment documents
# ============================================================================

class NoiseDoc(BaseModel):
    """Multiplicative noise of a synthetic oracle."""
    kind: Literal["none", "scale", "uniform"] = "none"
    scale: float = 1.0
    low: float = 1.0
    high: float = 1.0

    def to_law(self) -> NoiseLaw:
        return NoiseLaw(kind=self.kind, scale=self.scale, low=self.low, high=self.high)


class ExperimentSpec(BaseModel):
    """One experiment: kind, preset reference and parameter grids."""
    name: str
    kind: ExperimentKind
    preset: str | dict[str, Any] | None = None
    seeds: list[int] = Field(default_factory=list)
    output: str | None = None

    # obj1-sweep
    budgets: list[int] = Field(default_factory=list)
    unit_rates: list[float] = Field(default_factory=list)
    fptas_eps: float | None = Field(default=None, gt=0.0, lt=1.0)

    # learning kinds
    sigma: int | None = Field(default=None, ge=1)
    tau: int | None = Field(default=None, ge=1)
    budget: int | None = Field(default=None, ge=1)
    sigma_tau: list[tuple[int, int]] = Field(default_factory=list)
    include_full_greedy: bool = False
    rate_levels: list[int] = Field(default_factory=list)
    slots: int = Field(default=40, ge=1, description="Evaluation slots per seed")
    eval_seed_offset: int = Field(default=1000, ge=0)

    # bound-check
    controller_count: int = Field(default=3, ge=2)
    max_rate: int = Field(default=2, ge=1)
    oracle: Literal["modular", "coverage"] = "coverage"
    noise: NoiseDoc = Field(default_factory=NoiseDoc)
    mu: float | None = Field(default=None, gt=0.0, le=1.0)
    gamma: float = Field(default=0.3, gt=0.0, lt=1.0)
    sigmas: list[int] = Field(default_factory=list)
    runs: int = Field(default=200, ge=1)
    instance_seed: int = Field(default=0, ge=0)
    use_proof_variant: bool = False

    @model_validator(mode="after")
    def _check_grids(self) -> "ExperimentSpec":
        if any(seed < 0 for seed in self.seeds):
            raise ValueError("seeds must be non-negative")
        needs_preset = self.kind != "bound-check"
        if needs_preset and self.preset is None:
            raise ValueError(f"{self.kind} needs a preset")
        if self.kind == "obj1-sweep" and not self.budgets:
            raise ValueError("obj1-sweep needs a non-empty 'budgets' grid")
        if self.kind in ("obj2-train", "rate-curve", "tradeoff-sweep") and not self.seeds:
            raise ValueError(f"{self.kind} needs explicit seeds")
        if self.kind == "tradeoff-sweep" and not self.sigma_tau:
            raise ValueError("tradeoff-sweep needs a non-empty 'sigma_tau' grid")
        if self.kind == "bound-check":
            if not self.sigmas:
                raise ValueError("bound-check needs a non-empty 'sigmas' grid")
            if self.budget is None:
                raise ValueError("bound-check needs a 'budget'")
        return self


@dataclass(frozen=True)
class Cell:
    """One independent unit of work."""
    index: int
    params: dict[str, Any]

    @property
    def label(self) -> str:
        return f"c{self.index:03d}"


@dataclass(frozen=True)
class CellJob:
    """Everything a worker process needs to run one cell."""
    spec: ExperimentSpec
    preset: ModelPreset | RoutingPreset | LoadBalancePreset | None
    cell: Cell
    brute_force_cap: int


@dataclass
class CellOutcome:
    rows: list[ResultRow]
    traces: dict[str, Any] = field(default_factory=dict)
    seconds: float = 0.0
    error: str | None = None


@dataclass
class ExperimentOutcome:
    """Result table plus JSON-ready learner traces keyed by cell."""
    table: ResultTable
    traces: dict[str, Any] = field(default_factory=dict)


def load_experiment(path: str) -> ExperimentSpec:
    """Read an experiment document from YAML."""
    return ExperimentSpec(**load_yaml_document(path))


# ============================================================================
# Planning
# ============================================================================

def _learning_preset(spec: ExperimentSpec, preset: Any) -> RoutingPreset | LoadBalancePreset:
    if not isinstance(preset, (RoutingPreset, LoadBalancePreset)):
        raise InvalidArgumentError(f"{spec.kind} needs a routing or loadbalance preset")
    return preset


def _eval_seeds(spec: ExperimentSpec, seed: int) -> list[int]:
    return [seed + spec.eval_seed_offset]


def plan_cells(
    spec: ExperimentSpec,
    preset: ModelPreset | RoutingPreset | LoadBalancePreset | None,
    settings: AppConfig,
) -> list[Cell]:
    """Expand an experiment's grids into cells, in a fixed order."""
    params: list[dict[str, Any]] = []
    if spec.kind == "obj1-sweep":
        if not isinstance(preset, ModelPreset):
            raise InvalidArgumentError("obj1-sweep needs a model preset")
        eps = spec.fptas_eps or settings.solver.fptas_eps
        for unit_rate in spec.unit_rates or [preset.unit_rate]:
            for budget in spec.budgets:
                params.append({"budget": budget, "unit_rate": unit_rate, "eps": eps})

    elif spec.kind == "obj2-train":
        preset = _learning_preset(spec, preset)
        sigma = spec.sigma or preset.sigma or settings.learner.sigma
        tau = spec.tau or preset.tau or settings.learner.tau
        budget = spec.budget or preset.budget
        for seed in spec.seeds:
            params.append({
                "seed": seed, "sigma": sigma, "tau": tau, "budget": budget,
                "slots": spec.slots, "eval_seeds": _eval_seeds(spec, seed),
            })

    elif spec.kind == "rate-curve":
        preset = _learning_preset(spec, preset)
        levels = spec.rate_levels or preset.rate_levels
        if not levels:
            raise InvalidArgumentError("rate-curve needs rate levels in the experiment or preset")
        for level in sorted(levels):
            params.append({
                "rate": level,
                "msgs_per_second": (level + 1) / preset.slot_seconds,
                "slots": spec.slots,
                "seeds": list(spec.seeds),
            })

    elif spec.kind == "tradeoff-sweep":
        preset = _learning_preset(spec, preset)
        budget = spec.budget or preset.budget
        for sigma, tau in spec.sigma_tau:
            params.append({
                "learner": "stochastic", "sigma": sigma, "tau": tau, "budget": budget,
                "slots": spec.slots, "seeds": list(spec.seeds),
            })
        if spec.include_full_greedy:
            for tau in sorted({tau for _, tau in spec.sigma_tau}):
                params.append({
                    "learner": "full", "sigma": None, "tau": tau, "budget": budget,
                    "slots": spec.slots, "seeds": list(spec.seeds),
                })

    elif spec.kind == "bound-check":
        tau = spec.tau or 1
        for sigma in spec.sigmas:
            params.append({
                "sigma": sigma, "tau": tau, "budget": spec.budget,
                "controller_count": spec.controller_count, "max_rate": spec.max_rate,
                "oracle": spec.oracle, "noise": spec.noise.model_dump(),
                "mu": spec.mu, "gamma": spec.gamma, "runs": spec.runs,
                "instance_seed": spec.instance_seed,
                "use_proof_variant": spec.use_proof_variant,
            })

    return [Cell(index, p) for index, p in enumerate(params)]


# ============================================================================
# Cell runners
# ============================================================================

def _row(job: CellJob, metric: str, value: float | None, dispersion: float | None = None,
         **extra: Any) -> ResultRow:
    return ResultRow(
        experiment=job.spec.name,
        cell=job.cell.label,
        params={**job.cell.params, **extra},
        metric=metric,
        value=value,
        dispersion=dispersion,
    )


def _run_obj1_cell(job: CellJob) -> CellOutcome:
    p = job.cell.params
    model = job.preset.system_model(budget=p["budget"], unit_rate=p["unit_rate"])
    dp_policy, dp_report = solve_obj1(model, "dp")
    fptas_policy, fptas_report = solve_obj1(model, "fptas", p["eps"])
    homog = homogeneous_policy(model)
    rows = [
        _row(job, "omega_mck_dp", dp_report.omega),
        _row(job, "omega_fptas", fptas_report.omega),
        _row(job, "omega_homogeneous", consistency_level(model, homog).omega),
        _row(job, "omega_baseline", baseline_consistency(model)),
        _row(job, "cost_mck_dp", float(policy_cost(model, dp_policy))),
        _row(job, "cost_fptas", float(policy_cost(model, fptas_policy))),
        _row(job, "cost_homogeneous", float(policy_cost(model, homog))),
    ]
    return CellOutcome(rows)


def _train(preset: RoutingPreset | LoadBalancePreset, seed: int,
           sigma: int | None, tau: int, budget: int, full: bool):
    scenario = preset.scenario()
    model = preset.system_model(budget)
    units = unit_cost_budget(model)
    config = LearnerConfig(
        controller_count=scenario.controller_count,
        sigma=sigma if sigma is not None else pair_count(scenario.controller_count),
        tau=tau,
        budget=units,
        max_rate=preset.max_rate,
        rng_seed=seed,
    )
    oracle = as_oracle(scenario, seed)
    run = (full_greedy if full else stochastic_greedy)(config, oracle)
    return scenario, model, run


def _run_obj2_cell(job: CellJob) -> CellOutcome:
    p = job.cell.params
    preset = job.preset
    scenario, model, run = _train(preset, p["seed"], p["sigma"], p["tau"], p["budget"], full=False)
    homog = homogeneous_policy(model)
    sg_eval = evaluate_policy(scenario, run.final_policy, p["slots"], p["eval_seeds"])
    homog_eval = evaluate_policy(scenario, homog, p["slots"], p["eval_seeds"])

    rows = [
        _row(job, "slots_used", float(run.slots_used)),
        _row(job, "expected_slots", float(training_time(p["sigma"], p["tau"], run.config.budget))),
        _row(job, "train_estimate", run.final_estimate),
        _row(job, "sg_total_rate", float(run.final_policy.total())),
        _row(job, "budget_feasible", 1.0 if is_feasible(model, run.final_policy) else 0.0),
        _row(job, "sg_performance", sg_eval.mean, sg_eval.std),
        _row(job, "homogeneous_performance", homog_eval.mean, homog_eval.std),
        _row(job, "homogeneous_rate", float(homog.rates[0])),
    ]
    pairs = ordered_pairs(run.final_policy.controller_count)
    for it in run.iterations:
        rows.append(_row(job, "winner", float(it.winner), iteration=it.index,
                         pair="{}->{}".format(*pairs[it.winner])))
    for obs in run.observations:
        rows.append(_row(job, "observed_psi", obs.psi, slot=obs.slot, phase=obs.phase))
    traces = {f"{job.spec.name}/{job.cell.label}/seed={p['seed']}": run.to_dict()}
    return CellOutcome(rows, traces)


def _run_rate_curve_cell(job: CellJob) -> CellOutcome:
    p = job.cell.params
    scenario = job.preset.scenario()
    policy = SyncPolicy.uniform(scenario.controller_count, p["rate"])
    ev = evaluate_policy(scenario, policy, p["slots"], p["seeds"])
    rows = [
        _row(job, "performance", ev.mean, ev.std),
        _row(job, "performance_min", ev.minimum),
        _row(job, "performance_max", ev.maximum),
    ]
    for seed, value in zip(p["seeds"], ev.per_seed):
        rows.append(_row(job, "performance_seed", value, seed=seed))
    return CellOutcome(rows)


def _run_tradeoff_cell(job: CellJob) -> CellOutcome:
    p = job.cell.params
    full = p["learner"] == "full"
    slots_used, performance = [], []
    for seed in p["seeds"]:
        scenario, _, run = _train(job.preset, seed, p["sigma"], p["tau"], p["budget"], full=full)
        ev = evaluate_policy(scenario, run.final_policy, p["slots"], [seed + job.spec.eval_seed_offset])
        slots_used.append(run.slots_used)
        performance.append(ev.mean)
    slots = summarize(slots_used)
    perf = summarize(performance)
    rows = [
        _row(job, "training_slots", slots.mean, slots.std),
        _row(job, "performance", perf.mean, perf.std),
    ]
    if not full:
        rows.append(_row(job, "expected_training_slots", float(training_time(p["sigma"], p["tau"], p["budget"]))))
    return CellOutcome(rows)


def _run_bound_check_cell(job: CellJob) -> CellOutcome:
    p = job.cell.params
    c, r, b = p["controller_count"], p["max_rate"], p["budget"]
    if pair_count(c) * r > MAX_BOUND_CHECK_INCREMENTS:
        raise InstanceTooLargeError(
            f"{pair_count(c)} pairs x max rate {r} exceeds {MAX_BOUND_CHECK_INCREMENTS} increments"
        )
    noise = NoiseDoc(**p["noise"]).to_law()
    instance = synthetic_oracle(p["oracle"], {"controller_count": c}, rng_seed=p["instance_seed"])
    _, opt = brute_force_optimum(instance.truth, c, r, b, cap=job.brute_force_cap)
    mu = p["mu"] if p["mu"] is not None else noise.mean_ratio
    factor, probability = high_prob_bound(c, b, r, p["sigma"], p["tau"], mu, p["gamma"], p["use_proof_variant"])
    bound = expected_bound(c, b, r, p["sigma"], mu)

    ratios, mus, raw_mus = [], [], []
    for run_index in range(p["runs"]):
        seed = p["instance_seed"] * 1_000_003 + run_index
        oracle = SyntheticOracle(c, p["oracle"], instance.weights, instance.decay, noise, rng_seed=seed)
        config = LearnerConfig(controller_count=c, sigma=p["sigma"], tau=p["tau"], budget=b,
                               max_rate=r, rng_seed=seed)
        run = stochastic_greedy(config, oracle)
        ratios.append(instance.truth(run.final_policy) / opt if opt > 0 else 1.0)
        try:
            estimate = measure_mu(run, instance.truth, oracle.counterfactual)
        except UndefinedMuError:
            continue
        mus.append(estimate.mu)
        raw_mus.append(estimate.unclamped)

    ratio = summarize(ratios)
    violations = float(np.mean(np.asarray(ratios) < factor))
    rows = [
        _row(job, "opt_value", opt),
        _row(job, "ratio", ratio.mean, ratio.std),
        _row(job, "ratio_min", ratio.minimum),
        _row(job, "expected_bound", bound),
        _row(job, "expected_bound_noiseless", expected_bound(c, b, r, p["sigma"], 1.0)),
        _row(job, "high_prob_factor", factor),
        _row(job, "high_prob_probability", probability),
        _row(job, "violation_frequency", violations),
        _row(job, "violation_allowance", 1.0 - probability),
    ]
    if mus:
        rows.append(_row(job, "measured_mu", float(np.mean(mus)), float(np.std(mus))))
        rows.append(_row(job, "measured_mu_unclamped", float(np.mean(raw_mus))))
    return CellOutcome(rows)


_RUNNERS: dict[str, Callable[[CellJob], CellOutcome]] = {
    "obj1-sweep": _run_obj1_cell,
    "obj2-train": _run_obj2_cell,
    "rate-curve": _run_rate_curve_cell,
    "tradeoff-sweep": _run_tradeoff_cell,
    "bound-check": _run_bound_check_cell,
}


def run_cell(job: CellJob) -> CellOutcome:
    """Run one cell; any exception becomes an error row.

    The outcome carries its own wall time so the parent process can record
    cells that ran in workers.
    """
    label = job.cell.label
    start = time.perf_counter()
    try:
        outcome = _RUNNERS[job.spec.kind](job)
        outcome.seconds = time.perf_counter() - start
        logger.info(f"Cell {job.spec.name}/{label} finished: {len(outcome.rows)} rows")
        return outcome
    except Exception as e:
        logger.error(f"Cell {job.spec.name}/{label} failed: {e}", exc_info=True)
        error_row = ResultRow(
            experiment=job.spec.name,
            cell=label,
            params=job.cell.params,
            metric="error",
            value=None,
            error=f"{type(e).__name__}: {e}",
        )
        return CellOutcome([error_row], seconds=time.perf_counter() - start, error=error_row.error)


# ============================================================================
# Summaries
# ============================================================================

def _summary_row(spec: ExperimentSpec, metric: str, value: float | None,
                 dispersion: float | None = None, **params: Any) -> ResultRow:
    return ResultRow(spec.name, "summary", params, metric, value, dispersion)


def _summarize_training(spec: ExperimentSpec, table: ResultTable) -> list[ResultRow]:
    sg = table.values("sg_performance")
    homog = table.values("homogeneous_performance")
    if len(sg) != len(spec.seeds) or len(homog) != len(spec.seeds):
        return []
    sg_summary, homog_summary = summarize(sg), summarize(homog)
    seeds = list(spec.seeds)
    return [
        _summary_row(spec, "sg_performance_mean", sg_summary.mean, sg_summary.std, seeds=seeds),
        _summary_row(spec, "homogeneous_performance_mean", homog_summary.mean, homog_summary.std, seeds=seeds),
        _summary_row(spec, "mean_difference", sg_summary.mean - homog_summary.mean, seeds=seeds),
        _summary_row(spec, "pooled_standard_error", pooled_standard_error(sg_summary, homog_summary), seeds=seeds),
    ]


def _summarize_rate_curve(spec: ExperimentSpec, table: ResultTable) -> list[ResultRow]:
    rows = table.select("performance")
    if len(rows) < 2 or table.has_errors:
        return []
    levels = [row.params["rate"] for row in rows]
    means = [row.value for row in rows]
    seeds = list(spec.seeds)
    out = []
    if len(set(means)) > 1:
        rho = float(spearmanr(levels, means).statistic)
        out.append(_summary_row(spec, "spearman_rho", rho, seeds=seeds))
    monotone = all(b >= a for a, b in zip(means, means[1:]))
    out.append(_summary_row(spec, "monotone", 1.0 if monotone else 0.0, seeds=seeds))
    for lo, hi, a, b in zip(levels, levels[1:], means, means[1:]):
        out.append(_summary_row(spec, "marginal_gain", b - a, seeds=seeds, rate_from=lo, rate_to=hi))
    return out


# ============================================================================
# Entry points
# ============================================================================

def run_experiment(
    spec: ExperimentSpec,
    workers: int = 1,
    settings: AppConfig | None = None,
) -> ExperimentOutcome:
    """Run every cell of an experiment and collect rows in cell order.

    Raises:
        PresetNotFoundError: the preset reference cannot be resolved.
        InvalidArgumentError: the preset does not fit the experiment kind.
    """
    settings = settings or get_config()
    preset = load_preset(spec.preset, settings.harness.presets_dir) if spec.preset is not None else None
    cells = plan_cells(spec, preset, settings)
    jobs = [CellJob(spec, preset, cell, settings.solver.brute_force_cap) for cell in cells]
    logger.info(f"Running experiment '{spec.name}' ({spec.kind}): {len(cells)} cells, workers={workers}")

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=setup_worker_logging,
            initargs=(current_level(),),
        ) as pool:
            outcomes = list(pool.map(run_cell, jobs))
    else:
        outcomes = [run_cell(job) for job in jobs]

    collector = get_metrics_collector()
    table = ResultTable()
    traces: dict[str, Any] = {}
    for job, outcome in zip(jobs, outcomes):
        collector.record_cell(spec.name, job.cell.label, outcome.seconds, outcome.error, len(outcome.rows))
        table.extend(outcome.rows)
        traces.update(outcome.traces)

    if spec.kind == "obj2-train":
        table.extend(_summarize_training(spec, table))
    elif spec.kind == "rate-curve":
        table.extend(_summarize_rate_curve(spec, table))

    errors = len(table.errors)
    if errors:
        logger.warning(f"Experiment '{spec.name}' finished with {errors} failed cells")
    else:
        logger.info(f"Experiment '{spec.name}' finished: {len(table)} rows")
    return ExperimentOutcome(table, traces)


def _run_kind(kind: str, spec: ExperimentSpec, workers: int, settings: AppConfig | None) -> ResultTable:
    if spec.kind != kind:
        raise InvalidArgumentError(f"expected a {kind} experiment, got {spec.kind}")
    return run_experiment(spec, workers, settings).table


def run_obj1_sweep(spec: ExperimentSpec, workers: int = 1, settings: AppConfig | None = None) -> ResultTable:
    return _run_kind("obj1-sweep", spec, workers, settings)


def run_obj2_train(spec: ExperimentSpec, workers: int = 1, settings: AppConfig | None = None) -> ResultTable:
    return _run_kind("obj2-train", spec, workers, settings)


def run_rate_curve(spec: ExperimentSpec, workers: int = 1, settings: AppConfig | None = None) -> ResultTable:
    return _run_kind("rate-curve", spec, workers, settings)


def run_bound_check(spec: ExperimentSpec, workers: int = 1, settings: AppConfig | None = None) -> ResultTable:
    return _run_kind("bound-check", spec, workers, settings)


def run_tradeoff_sweep(spec: ExperimentSpec, workers: int = 1, settings: AppConfig | None = None) -> ResultTable:
    return _run_kind("tradeoff-sweep", spec, workers, settings)
