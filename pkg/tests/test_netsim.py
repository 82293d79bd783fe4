# Copyright (c) 2024. All rights reserved.
"""Tests for the slotted network simulator and its oracles."""

import csv
import itertools
import json
import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from app.errors import ContractViolationError, InvalidArgumentError
from app.harness.presets import load_preset
from app.netsim import (
    LoadBalanceScenario,
    NoiseLaw,
    RoutingScenario,
    SimulationOracle,
    Topology,
    WorldState,
    as_oracle,
    evaluate_policy,
    generate_topology,
    pooled_standard_error,
    route_packet,
    run_slot,
    summarize,
    sync_ticks,
    synthetic_oracle,
    write_trace_csv,
)
from app.netsim.state import sync_events
from app.syncmodel import SyncPolicy


def mirrored(policy: SyncPolicy) -> SyncPolicy:
    """Two-controller policy with the pair rates exchanged."""
    return SyncPolicy(2, (policy.rates[1], policy.rates[0]))


def psi_sequence(scenario, policies: list[SyncPolicy]) -> list[float]:
    oracle = SimulationOracle(scenario)
    return [oracle.try_out(policy, t) for t, policy in enumerate(policies, start=1)]


class TestSyncSchedule:
    """Tests for spreading extra messages over a slot."""

    def test_mandatory_message_only(self):
        """Test that rate 0 syncs only at tick 0."""
        assert sync_ticks(32, 0) == (0,)

    def test_evenly_spread(self):
        """Test that 15 extra messages in 32 ticks land every two ticks."""
        assert sync_ticks(32, 15) == tuple(range(0, 32, 2))

    @pytest.mark.parametrize("slot_seconds", [10, 32, 60])
    def test_staleness_bound(self, slot_seconds):
        """Test that no gap between refreshes exceeds ceil(s / (r + 1))."""
        for rate in range(21):
            ticks = list(sync_ticks(slot_seconds, rate)) + [slot_seconds]
            gaps = np.diff(ticks)
            assert gaps.max() <= math.ceil(slot_seconds / (rate + 1))

    def test_events_list_pairs(self):
        """Test that events name the (source, destination) pair per tick."""
        events = sync_events(SyncPolicy(2, (1, 0)), 4)
        assert events[0] == [(0, 1), (1, 0)]
        assert events[2] == [(0, 1)]

    def test_invalid_arguments(self):
        """Test that empty slots and negative rates are rejected."""
        with pytest.raises(InvalidArgumentError):
            sync_ticks(0, 1)
        with pytest.raises(InvalidArgumentError):
            sync_ticks(10, -1)


class TestTopology:
    """Tests for topology validation and generation."""

    def test_edges_normalized(self):
        """Test that edges are stored (low, high) and sorted."""
        topo = Topology(3, ((2, 1), (1, 0)), (0, 0, 1))
        assert topo.edges == ((0, 1), (1, 2))

    def test_disconnected_rejected(self):
        """Test that a graph must be connected with every link up."""
        with pytest.raises(InvalidArgumentError):
            Topology(4, ((0, 1), (2, 3)), (0, 0, 1, 1))

    def test_domains_numbered_from_zero(self):
        """Test that domains must be 0..C-1."""
        with pytest.raises(InvalidArgumentError):
            Topology(3, ((0, 1), (1, 2)), (0, 2, 2))

    def test_boundary_owned_by_lower_controller(self, line_topology):
        """Test that a boundary link belongs to the lower-indexed controller."""
        boundary = line_topology.edges.index((2, 3))
        assert line_topology.is_boundary(boundary)
        assert line_topology.owners[boundary] == 0
        assert line_topology.owned_links == ((0, 1, 2), (3,))

    def test_domain_sizes(self, ring_topology):
        """Test per-controller node counts."""
        assert ring_topology.domain_sizes == (2, 2, 2)
        assert ring_topology.controller_count == 3

    def test_generated_topology(self):
        """Test that a generated graph is connected, seeded and split evenly."""
        first = generate_topology(16, 3, 0.25, seed=4)
        second = generate_topology(16, 3, 0.25, seed=4)
        assert first == second
        assert first.domain_sizes == (6, 5, 5)

    def test_preset_topology(self, presets_dir):
        """Test the shipped 16-node preset."""
        topo = load_preset("routing16", presets_dir).topology.build()
        assert topo.node_count == 16
        assert topo.link_count == 26
        assert topo.domain_sizes == (6, 5, 5)


class TestRoutePacket:
    """Tests for routing a single packet on a view."""

    def test_fresh_view_delivers_shortest(self, ring_topology):
        """Test that routing on the truth delivers along a shortest path."""
        up = np.ones(ring_topology.link_count, dtype=bool)
        outcome = route_packet(ring_topology, up, up, 0, 3)
        assert outcome.delivered and outcome.optimal
        assert outcome.hops == 3

    def test_stale_view_fails(self, line_topology):
        """Test that a path over a link that went down is a failure."""
        view = np.ones(line_topology.link_count, dtype=bool)
        truth = view.copy()
        truth[3] = False
        assert not route_packet(line_topology, view, truth, 0, 4).delivered

    def test_stale_view_can_be_suboptimal(self, ring_topology):
        """Test a delivered but longer-than-necessary route."""
        view = np.ones(ring_topology.link_count, dtype=bool)
        chord = ring_topology.edges.index((1, 4))
        view[chord] = False
        truth = np.ones(ring_topology.link_count, dtype=bool)
        outcome = route_packet(ring_topology, view, truth, 1, 4)
        assert outcome.delivered
        assert not outcome.optimal

    @pytest.mark.parametrize(
        "topology",
        [
            Topology(4, ((0, 1), (1, 2), (2, 3), (0, 3), (0, 2)), (0, 0, 1, 1)),
            Topology(5, ((0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)), (0, 0, 1, 1, 2)),
        ],
    )
    def test_fresher_view_never_loses_packets(self, topology):
        """Test every truth, stale view and route: fresh routing delivers whenever stale routing did."""
        links = topology.link_count
        masks = [np.array(bits, dtype=bool) for bits in itertools.product((False, True), repeat=links)]
        pairs = [(s, d) for s in range(topology.node_count) for d in range(topology.node_count) if s != d]
        for truth in masks:
            fresh = {pair: route_packet(topology, truth, truth, *pair).delivered for pair in pairs}
            for view in masks:
                for pair in pairs:
                    if route_packet(topology, view, truth, *pair).delivered:
                        assert fresh[pair]


class TestRoutingScenario:
    """Tests for slot simulation of the routing application."""

    def test_static_network_always_delivers(self, ring_topology):
        """Test psi = 1 on every slot when no link ever changes."""
        scenario = RoutingScenario(ring_topology, flip_prob=0.0, slot_seconds=8)
        assert psi_sequence(scenario, [SyncPolicy.zeros(3)] * 3) == [1.0, 1.0, 1.0]

    def test_all_links_down(self, ring_topology):
        """Test psi = 0 when every link is down and stays down."""
        scenario = RoutingScenario(ring_topology, flip_prob=0.0, slot_seconds=8)
        state = WorldState(link_up=np.zeros(ring_topology.link_count, dtype=bool))
        result = run_slot(scenario, state, SyncPolicy.uniform(3, 2), 1)
        assert result.psi == 0.0
        assert result.components["delivered"] == 0.0

    def test_optimal_metric_never_exceeds_delivered(self, ring_topology):
        """Test that optimal deliveries are a subset of deliveries."""
        scenario = RoutingScenario(ring_topology, flip_prob=0.1, slot_seconds=16, metric="optimal", rng_seed=3)
        result = scenario.run_slot(scenario.initial_state(), SyncPolicy.uniform(3, 1), 1)
        assert result.components["optimal"] <= result.components["delivered"]
        assert result.psi == result.components["optimal"] / result.components["packets"]

    def test_views_match_truth_at_last_sync(self, ring_topology):
        """Test that every remote view equals ground truth as of its last refresh, bit for bit."""
        scenario = RoutingScenario(ring_topology, flip_prob=0.2, slot_seconds=20, rng_seed=7)
        policy = SyncPolicy(3, (0, 1, 2, 3, 4, 9))
        owned = [list(links) for links in ring_topology.owned_links]
        history: list[np.ndarray] = []

        def hook(tick, truth, views, last_sync):
            history.append(truth)
            for j in range(3):
                assert np.array_equal(views[j, owned[j]], truth[owned[j]])
                for i in range(3):
                    if i == j:
                        continue
                    assert np.array_equal(views[j, owned[i]], history[last_sync[i, j]][owned[i]])
                    rate = policy.rate(i, j)
                    assert tick - last_sync[i, j] <= math.ceil(20 / (rate + 1))

        scenario.run_slot(scenario.initial_state(), policy, 1, tick_hook=hook)
        assert len(history) == 20

    def test_links_independent_of_policy(self, presets_dir):
        """Test that ground truth evolves identically under different policies."""
        scenario = load_preset("routing16", presets_dir).scenario(seed=2)
        low = scenario.run_slot(scenario.initial_state(), SyncPolicy.zeros(3), 1)
        high = scenario.run_slot(scenario.initial_state(), SyncPolicy.uniform(3, 15), 1)
        assert np.array_equal(low.state.link_up, high.state.link_up)
        assert low.components["packets"] == high.components["packets"]

    def test_slot_zero_rejected(self, ring_topology):
        """Test that slots are numbered from 1."""
        scenario = RoutingScenario(ring_topology)
        with pytest.raises(InvalidArgumentError):
            scenario.run_slot(scenario.initial_state(), SyncPolicy.zeros(3), 0)

    def test_policy_size_mismatch(self, ring_topology):
        """Test that the policy must cover the topology's controllers."""
        scenario = RoutingScenario(ring_topology)
        with pytest.raises(InvalidArgumentError):
            scenario.run_slot(scenario.initial_state(), SyncPolicy.zeros(2), 1)


class TestLoadBalanceScenario:
    """Tests for slot simulation of the two-server application."""

    def test_symmetric_deterministic_arrivals(self):
        """Test that identical arrivals at both switches keep the servers level."""
        scenario = LoadBalanceScenario(arrival_rates=(1.0, 1.0), slot_seconds=30)
        for policy in (SyncPolicy.zeros(2), SyncPolicy(2, (3, 0)), SyncPolicy.uniform(2, 7)):
            result = scenario.run_slot(scenario.initial_state(), policy, 1)
            assert result.psi == 0.0
            assert result.components["flows"] == 60.0

    def test_psi_is_negative_rmse(self):
        """Test that psi equals minus half the throughput gap."""
        scenario = LoadBalanceScenario(rng_seed=5)
        result = scenario.run_slot(scenario.initial_state(), SyncPolicy.zeros(2), 1)
        gap = abs(result.components["throughput_0"] - result.components["throughput_1"])
        assert result.psi == pytest.approx(-gap / 2.0)

    @pytest.mark.parametrize("work", ["constant", "uniform"])
    def test_label_swap_symmetry(self, work):
        """Test that mirrored rates, streams and policies replay the same slots."""
        original = LoadBalanceScenario(arrival_rates=(0.8, 0.4), slot_seconds=40, work=work, rng_seed=11)
        swapped = LoadBalanceScenario(
            arrival_rates=(0.4, 0.8), slot_seconds=40, work=work, rng_seed=11, swap_labels=True
        )
        policies = [SyncPolicy(2, (3, 0)), SyncPolicy(2, (0, 5)), SyncPolicy(2, (1, 2))] * 3
        assert psi_sequence(original, policies) == psi_sequence(swapped, [mirrored(p) for p in policies])

    def test_symmetric_scenario_swap_keeps_distribution(self):
        """Test that swapping labels of a symmetric scenario keeps the mean RMSE under matched seeds."""
        policy = SyncPolicy(2, (2, 2))
        seeds = list(range(5))
        plain = evaluate_policy(LoadBalanceScenario(arrival_rates=(0.6, 0.6)), policy, 5, seeds)
        swapped = evaluate_policy(LoadBalanceScenario(arrival_rates=(0.6, 0.6), swap_labels=True), policy, 5, seeds)
        assert plain.per_seed == swapped.per_seed

    def test_invalid_arrival_rate(self):
        """Test that arrival probabilities must lie in (0, 1]."""
        with pytest.raises(InvalidArgumentError):
            LoadBalanceScenario(arrival_rates=(1.5, 0.4))


class TestSimulationOracle:
    """Tests for the stateful simulation oracle."""

    def test_deterministic(self, ring_topology):
        """Test that two oracles with the same seed replay the same observations."""
        scenario = RoutingScenario(ring_topology, flip_prob=0.1, slot_seconds=16)
        policies = [SyncPolicy.uniform(3, r) for r in (0, 2, 1, 3)]
        first = as_oracle(scenario, 5)
        second = as_oracle(scenario, 5)
        assert [first.try_out(p, t) for t, p in enumerate(policies, 1)] == [
            second.try_out(p, t) for t, p in enumerate(policies, 1)
        ]

    def test_out_of_order_slot(self, ring_topology):
        """Test that slot indices must strictly increase."""
        oracle = as_oracle(RoutingScenario(ring_topology, slot_seconds=8), 0)
        oracle.try_out(SyncPolicy.zeros(3), 2)
        with pytest.raises(ContractViolationError):
            oracle.try_out(SyncPolicy.zeros(3), 2)
        with pytest.raises(ContractViolationError):
            oracle.try_out(SyncPolicy.zeros(3), 1)

    def test_skipped_slots_advance_the_network(self, ring_topology):
        """Test that jumping to slot 3 sees the same world as playing slots 1 and 2."""
        scenario = RoutingScenario(ring_topology, flip_prob=0.1, slot_seconds=16)
        policy = SyncPolicy.uniform(3, 1)
        played = as_oracle(scenario, 9)
        played.try_out(SyncPolicy.zeros(3), 1)
        played.try_out(SyncPolicy.uniform(3, 4), 2)
        jumped = as_oracle(scenario, 9)
        assert played.try_out(policy, 3) == jumped.try_out(policy, 3)

    def test_trace_rows(self, ring_topology, tmp_path):
        """Test that every observation is traced and written as CSV."""
        oracle = as_oracle(RoutingScenario(ring_topology, slot_seconds=8), 3)
        oracle.try_out(SyncPolicy.zeros(3), 1)
        oracle.try_out(SyncPolicy.uniform(3, 1), 2)
        rows = oracle.trace
        assert [row.slot for row in rows] == [1, 2]
        assert rows[0].seed == 3
        path = write_trace_csv(tmp_path / "trace.csv", rows)
        with open(path, newline="", encoding="utf-8") as f:
            written = list(csv.DictReader(f))
        assert written[1]["policy_hash"] == SyncPolicy.uniform(3, 1).policy_hash()
        assert json.loads(written[0]["components"])["packets"] == 64.0


class TestSyntheticOracle:
    """Tests for synthetic mean functions with multiplicative noise."""

    def test_modular_truth(self):
        """Test that a noiseless modular oracle observes sum c_p x_p."""
        oracle = synthetic_oracle("modular", {"controller_count": 2, "weights": [2.0, 3.0]})
        assert oracle.try_out(SyncPolicy(2, (1, 2)), 1) == 8.0

    def test_coverage_diminishing_returns(self):
        """Test strictly decreasing marginal gains along every coordinate."""
        oracle = synthetic_oracle("coverage", {"controller_count": 3}, rng_seed=4)
        for p in range(6):
            values = [oracle.truth(SyncPolicy.zeros(3).incremented(p, x)) for x in range(5)]
            gains = np.diff(values)
            assert np.all(gains > 0)
            assert np.all(np.diff(gains) < 0)

    def test_noise_scales_truth(self):
        """Test that observations are noise factor times truth."""
        noise = NoiseLaw(kind="uniform", low=0.4, high=0.6)
        oracle = synthetic_oracle("coverage", {"controller_count": 2}, noise=noise, rng_seed=1)
        policy = SyncPolicy(2, (1, 1))
        ratios = [oracle.try_out(policy, t) / oracle.truth(policy) for t in range(1, 200)]
        assert min(ratios) >= 0.4 and max(ratios) <= 0.6
        assert np.mean(ratios) == pytest.approx(0.5, abs=0.02)
        assert noise.mean_ratio == 0.5

    def test_counterfactual_has_no_side_effects(self):
        """Test that counterfactual queries leave the slot order alone."""
        oracle = synthetic_oracle("modular", {"controller_count": 2, "weights": [1.0, 1.0]})
        oracle.counterfactual(SyncPolicy.zeros(2), 5)
        assert oracle.try_out(SyncPolicy.zeros(2), 1) == 0.0

    def test_invalid_weights(self):
        """Test that weights must match the pair count."""
        with pytest.raises(InvalidArgumentError):
            synthetic_oracle("modular", {"controller_count": 3, "weights": [1.0, 2.0]})


class TestEvaluatePolicy:
    """Tests for multi-seed policy evaluation."""

    def test_static_network(self, ring_topology):
        """Test mean 1 and zero spread on a static network."""
        scenario = RoutingScenario(ring_topology, flip_prob=0.0, slot_seconds=8)
        result = evaluate_policy(scenario, SyncPolicy.zeros(3), 3, [0, 1, 2])
        assert result.mean == 1.0
        assert result.std == 0.0

    def test_repeatable(self, ring_topology):
        """Test that the same seeds give the same summary."""
        scenario = RoutingScenario(ring_topology, flip_prob=0.1, slot_seconds=8)
        policy = SyncPolicy.uniform(3, 1)
        assert evaluate_policy(scenario, policy, 3, [4, 5]) == evaluate_policy(scenario, policy, 3, [4, 5])

    def test_summarize(self):
        """Test sample statistics and the single-value case."""
        result = summarize([1.0, 2.0, 3.0])
        assert result.mean == 2.0
        assert result.std == pytest.approx(1.0)
        assert (result.minimum, result.maximum) == (1.0, 3.0)
        assert summarize([4.0]).std == 0.0

    def test_pooled_standard_error(self):
        """Test sqrt(s_a^2 / n_a + s_b^2 / n_b)."""
        a = summarize([1.0, 2.0, 3.0])
        b = summarize([2.0, 4.0])
        assert pooled_standard_error(a, b) == pytest.approx(math.sqrt(1.0 / 3 + 2.0 / 2))
        assert a.standard_error == pytest.approx(1.0 / math.sqrt(3))

    def test_no_seeds(self, ring_topology):
        """Test that at least one seed is required."""
        with pytest.raises(InvalidArgumentError):
            evaluate_policy(RoutingScenario(ring_topology), SyncPolicy.zeros(3), 1, [])


class TestRateCurveTrend:
    """Performance against homogeneous synchronization rate on the shipped presets."""

    SEEDS = list(range(10))
    SLOTS = 40

    def curve(self, preset):
        return [
            evaluate_policy(preset.scenario(), SyncPolicy.uniform(preset.system_model().controller_count, level), self.SLOTS, self.SEEDS)
            for level in preset.rate_levels
        ]

    def test_routing_curve_saturates(self, presets_dir):
        """Test a monotone routing curve whose marginal gains shrink within noise."""
        preset = load_preset("routing16", presets_dir)
        evaluations = self.curve(preset)
        means = [e.mean for e in evaluations]
        rho = spearmanr(preset.rate_levels, means).correlation
        assert rho >= 0.9

        gains = np.diff(means)
        inversions = [
            (gains[k + 1] - gains[k], pooled_standard_error(evaluations[k + 1], evaluations[k + 2]))
            for k in range(len(gains) - 1)
            if gains[k + 1] > gains[k]
        ]
        assert len(inversions) <= 1
        assert all(excess <= se for excess, se in inversions)

    def test_loadbalance_curve_monotone(self, presets_dir):
        """Test that minus RMSE rises with the synchronization rate."""
        preset = load_preset("loadbalance2", presets_dir)
        means = [e.mean for e in self.curve(preset)]
        assert spearmanr(preset.rate_levels, means).correlation >= 0.9
        assert means[-1] > means[0]
