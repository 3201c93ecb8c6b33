import itertools
import random

import pytest

from edgedist.model import PairEstimate, RejectKind
from edgedist.transit import ACCESS_ROUTER, HOST, EstimateOptions, estimate_pair
from edgedist.synth import (
    SimOptions,
    Simulator,
    Topology,
    dijkstra,
    generate_topology,
    load_topology,
    min_hop_distance,
    run_experiment,
    save_topology,
    simulate_traceroute,
    true_distance,
)

from conftest import make_topology


# --- generators ------------------------------------------------------------


def test_ring_of_stars_degenerate_is_path():
    topo = generate_topology("ring_of_stars", {"cores": 1, "leaves": 2}, seed=0)
    assert sorted(topo.routers) == ["C0", "C0L0", "C0L1"]
    hops, _ = true_distance(topo, "C0L0", "C0L1")
    assert hops == 2


def test_random_geometric_deterministic():
    a = generate_topology("random_geometric", {"n": 50}, seed=5)
    b = generate_topology("random_geometric", {"n": 50}, seed=5)
    assert a.edges == b.edges and a.nodes == b.nodes


def test_random_geometric_disconnected_raises():
    with pytest.raises(ValueError, match="disconnected"):
        generate_topology(
            "random_geometric", {"n": 40, "radius": 0.01, "retries": 3}, seed=1
        )


def test_two_tier_peering_shrinks_leaf_distances():
    params = {"regions": 4, "leaves": 5}
    plain = generate_topology("two_tier", params, seed=2)
    peered = generate_topology("two_tier", dict(params, peering=True), seed=2)

    def mean_leaf_distance(topo):
        leaves = [n for n in topo.routers if "A" in n]
        total = count = 0
        for a, b in itertools.combinations(leaves, 2):
            total += true_distance(topo, a, b)[1]
            count += 1
        return total / count

    assert mean_leaf_distance(peered) < mean_leaf_distance(plain)


def test_generated_topologies_are_symmetric():
    for model, params in (
        ("ring_of_stars", {"cores": 3, "leaves": 2}),
        ("random_geometric", {"n": 30}),
        ("two_tier", {"regions": 3, "leaves": 3}),
    ):
        assert generate_topology(model, params, seed=4).is_symmetric()


def test_unknown_model():
    with pytest.raises(ValueError):
        generate_topology("mesh", {}, seed=0)


# --- shortest paths --------------------------------------------------------


def test_true_distance_identity():
    topo = make_topology([("A", "B", 1.0)], {})
    assert true_distance(topo, "A", "A") == (0, 0.0)


def test_true_distance_three_node_path():
    topo = make_topology([("A", "B", 1.0), ("B", "C", 1.0)], {})
    assert true_distance(topo, "A", "C") == (2, 2.0)


def test_true_distance_unreachable():
    topo = Topology(nodes=("A", "B"), edges={}, host_attachment={})
    with pytest.raises(ValueError):
        true_distance(topo, "A", "B")


def _bellman_ford(topo, source):
    dist = {n: float("inf") for n in topo.nodes}
    dist[source] = 0.0
    for _ in range(len(topo.nodes) - 1):
        changed = False
        for (u, v), lat in topo.edges.items():
            if dist[u] + lat < dist[v]:
                dist[v] = dist[u] + lat
                changed = True
        if not changed:
            break
    return dist


def test_dijkstra_matches_bellman_ford():
    topo = generate_topology("random_geometric", {"n": 100}, seed=8)
    rng = random.Random(0)
    for source in rng.sample(topo.routers, 5):
        dist, _ = dijkstra(topo, source)
        oracle = _bellman_ford(topo, source)
        for node in topo.nodes:
            assert dist.get(node, float("inf")) == oracle[node]


def test_min_hop_distance_bfs():
    topo = make_topology(
        [("A", "B", 10.0), ("B", "C", 10.0), ("A", "X", 1.0), ("X", "Y", 1.0),
         ("Y", "C", 1.0)],
        {},
    )
    # latency-shortest goes via X,Y (3 hops); hop-shortest via B (2 hops)
    assert true_distance(topo, "A", "C") == (3, 3.0)
    assert min_hop_distance(topo, "A", "C") == 2


# --- simulation ------------------------------------------------------------


def line_topology():
    return make_topology([("O", "A", 1.0)], {"B": ("A", 1.0)})


def test_simulated_line_trace():
    trace = simulate_traceroute(line_topology(), "O", "B")
    assert trace.reached
    assert [(h.ttl, h.address, h.rtt_ms) for h in trace.hops] == [
        (1, "A", 2.0),
        (2, "B", 4.0),
    ]


def test_blocked_node_is_unresponsive():
    topo = line_topology()
    trace = simulate_traceroute(topo, "O", "B", SimOptions(block_probability=1.0))
    assert not trace.hop(1).responsive
    assert trace.hop(2).address == "B"
    assert trace.reached


def test_symmetric_destination_rtt_is_twice_one_way():
    topo = generate_topology("two_tier", {"regions": 3, "leaves": 4}, seed=6)
    sim = Simulator(topo)
    for host in topo.hosts[:6]:
        trace, _ = sim.trace("T0", host)
        _, one_way = true_distance(topo, "T0", host)
        assert trace.hops[-1].rtt_ms == 2 * one_way


def test_asymmetry_delta_causes_decreasing_rtt_and_rejection():
    topo = make_topology(
        [("O", "T", 1.0), ("T", "A1", 1.0), ("T", "B1", 1.0)],
        {"HA": ("A1", 1.0), "HB": ("B1", 1.0)},
    )
    clean = Simulator(topo)
    # force the delta onto every router: A1 and B1 both inflate, and their
    # cumulative RTT exceeds the destination's
    skewed = Simulator(
        topo,
        SimOptions(asymmetry_probability=1.0, asymmetry_delta_ms=50.0, seed=1),
    )
    opts = EstimateOptions(mode=HOST)
    ta, truth_a = skewed.trace("O", "HA")
    tb, _ = skewed.trace("O", "HB")
    assert truth_a.rtt_decreasing
    reject = estimate_pair(ta, tb, opts)
    assert reject.kind is RejectKind.ASYMMETRY_SUSPECTED
    ca, ct = clean.trace("O", "HA")
    assert not ct.rtt_decreasing
    assert isinstance(estimate_pair(ca, clean.trace("O", "HB")[0], opts), PairEstimate)


def test_simulation_deterministic_under_seed():
    topo = generate_topology("two_tier", {"regions": 4, "leaves": 4}, seed=9)
    opts = SimOptions(block_probability=0.2, asymmetry_probability=0.2,
                      asymmetry_delta_ms=40.0, loop_probability=0.1,
                      rtt_jitter_ms=0.5, seed=77)
    t1 = Simulator(topo, opts).trace("T1", topo.hosts[3])
    t2 = Simulator(topo, opts).trace("T1", topo.hosts[3])
    assert t1 == t2


def test_loop_injection_duplicates_an_address():
    topo = generate_topology("two_tier", {"regions": 4, "leaves": 4}, seed=10)
    sim = Simulator(topo, SimOptions(loop_probability=1.0, seed=3))
    found = False
    for host in topo.hosts:
        trace, truth = sim.trace("T2", host)
        if truth.loop_injected:
            addrs = [h.address for h in trace.hops if h.responsive]
            assert len(addrs) != len(set(addrs))
            found = True
    assert found


# --- experiments -----------------------------------------------------------


def test_symmetric_experiment_has_no_soundness_violations():
    topo = generate_topology("two_tier", {"regions": 5, "leaves": 5}, seed=12)
    hosts = topo.hosts
    rng = random.Random(1)
    pairs = [tuple(rng.sample(hosts, 2)) for _ in range(20)]
    report = run_experiment(
        topo, ["T0", "T2", "T4"], pairs,
        est_options=EstimateOptions(allow_origin_fallback=True),
    )
    assert report.soundness_violations == 0
    assert report.stats.success_ratio == 1.0
    assert report.false_rtt_accepts == 0


def test_origin_on_shortest_path_gives_tight_bound():
    # O hangs off T which lies on the unique shortest path between the
    # access routers A1 and B1
    topo = make_topology(
        [("O", "T", 1.0), ("T", "A1", 2.0), ("T", "B1", 3.0)],
        {"HA": ("A1", 0.5), "HB": ("B1", 0.5)},
    )
    report = run_experiment(topo, ["O"], [("HA", "HB")])
    (result,) = report.results
    assert result.tight_hop and result.tight_rtt
    assert result.best_hop_bound == result.true_hops == 2
    assert result.best_rtt_bound == 2 * result.true_one_way_ms == 10.0


def test_experiment_report_deterministic():
    topo = generate_topology("random_geometric", {"n": 40}, seed=13)
    rng = random.Random(2)
    pairs = [tuple(rng.sample(topo.hosts, 2)) for _ in range(10)]
    opts = SimOptions(asymmetry_probability=0.3, asymmetry_delta_ms=80.0, seed=5)
    r1 = run_experiment(topo, topo.routers[:4], pairs, opts)
    r2 = run_experiment(topo, topo.routers[:4], pairs, opts)
    assert r1.to_text() == r2.to_text()


def test_topology_save_load_round_trip(tmp_path):
    topo = generate_topology("two_tier", {"regions": 3, "leaves": 3}, seed=14)
    path = tmp_path / "topo.jsonl"
    save_topology(topo, path)
    loaded = load_topology(path)
    assert loaded.nodes == topo.nodes
    assert loaded.edges == topo.edges
    assert loaded.host_attachment == topo.host_attachment
    assert loaded.seed == topo.seed
