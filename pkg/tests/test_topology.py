import dataclasses
import json

import pytest

from src.config.experiment import TopologySpec
from src.core.errors import TopologyError
from src.core.topology import (
    LC,
    NOC,
    ROC,
    balanced_local_sizes,
    build_topology,
    chain_graph,
    relay_attachment,
    topology_from_dict,
    topology_to_dict,
    validate_topology,
)


def test_balanced_sizes_for_default_chain():
    assert balanced_local_sizes(60, [10, 10]) == [15, 10, 15]


def test_default_chain_is_valid(make_topology):
    topo = make_topology(num_clients=60, overlap_sizes=(10, 10))
    assert [len(u) for u in topo.local_clients] == [15, 10, 15]
    assert [len(v) for v in topo.overlap_clients] == [10, 10]
    assert validate_topology(topo) == []


def test_single_server_has_no_relays(make_topology):
    topo = make_topology(num_servers=1, num_clients=5, overlap_sizes=())
    assert topo.local_clients == ((0, 1, 2, 3, 4),)
    assert topo.overlap_clients == ()
    assert topo.relay_clients == ()
    assert validate_topology(topo) == []


def test_minimal_overlap_is_only_the_relay(make_topology):
    topo = make_topology(num_clients=42, overlap_sizes=(1, 1))
    for p in range(2):
        assert topo.overlap_clients[p] == topo.relay_clients[p]
        assert topo.normal_overlap_clients(p) == ()
        assert topo.role(topo.relay_client(p)).kind == ROC


def test_roles_follow_region_order(make_topology):
    topo = make_topology()
    # U_0 = {0, 1, 2}, V_01 = {3, 4}, U_1 = {5, 6}, V_12 = {7, 8}, U_2 = {9, 10, 11}
    assert topo.local_clients == ((0, 1, 2), (5, 6), (9, 10, 11))
    assert topo.overlap_clients == ((3, 4), (7, 8))
    assert topo.role(0).kind == LC and topo.role(0).index == 0
    assert topo.role(7).kind in (NOC, ROC) and topo.role(7).index == 1
    assert topo.covering_servers(3) == (0, 1)
    assert topo.coverage(1) == (3, 4, 5, 6, 7, 8)


@pytest.mark.parametrize("seed", range(5))
def test_every_client_in_exactly_one_set(seed):
    spec = TopologySpec(num_servers=4, num_clients=40, overlap_sizes=[3, 5, 2], balance=False)
    topo = build_topology(spec, rng_seed=seed)
    members = [k for u in topo.local_clients for k in u] + [k for v in topo.overlap_clients for k in v]
    assert sorted(members) == list(range(40))
    assert validate_topology(topo) == []


def test_geometry_matches_roles(make_topology):
    topo = make_topology(num_clients=60, overlap_sizes=(10, 10), seed=4)
    for k in range(topo.num_clients):
        covering = topo.covering_servers(k)
        for l in range(topo.num_servers):
            if l in covering:
                assert topo.distance(k, l) <= topo.cell_radius + 1e-9
            else:
                assert topo.distance(k, l) > topo.cell_radius


def test_same_seed_gives_same_topology(make_topology):
    a = json.dumps(topology_to_dict(make_topology(seed=11)), sort_keys=True)
    b = json.dumps(topology_to_dict(make_topology(seed=11)), sort_keys=True)
    assert a == b


def test_dict_round_trip(make_topology):
    topo = make_topology(seed=2)
    assert topology_from_dict(topology_to_dict(topo)) == topo


def test_duplicate_membership_is_reported(make_topology):
    topo = make_topology()
    stray = topo.overlap_clients[0][0]
    broken = dataclasses.replace(
        topo, local_clients=(topo.local_clients[0] + (stray,),) + topo.local_clients[1:]
    )
    violations = validate_topology(broken)
    assert [v.invariant for v in violations] == ["duplicate membership"]
    assert violations[0].ids == (stray,)


def test_two_relays_in_one_pair_are_reported(make_topology):
    topo = make_topology()
    broken = dataclasses.replace(topo, relay_clients=(topo.overlap_clients[0],) + topo.relay_clients[1:])
    violations = validate_topology(broken)
    assert [v.invariant for v in violations] == ["relay cardinality"]


def test_relay_attachment_splits_at_chain_centre():
    assert [relay_attachment(p, 3) for p in range(2)] == [0, 2]
    assert [relay_attachment(p, 4) for p in range(3)] == [0, 1, 3]
    assert relay_attachment(0, 2) == 0


def test_disjoint_disks_with_overlap_clients_fail():
    spec = TopologySpec(num_servers=3, num_clients=12, overlap_sizes=[2, 2], overlap_fraction=0.0)
    with pytest.raises(TopologyError):
        build_topology(spec, rng_seed=0)


def test_local_sizes_must_add_up():
    spec = TopologySpec(num_servers=3, num_clients=12, overlap_sizes=[2, 2], local_sizes=[3, 3, 3])
    with pytest.raises(TopologyError):
        build_topology(spec, rng_seed=0)


def test_infeasible_balance_raises():
    with pytest.raises(TopologyError):
        balanced_local_sizes(6, [10, 10])


def test_central_policy_picks_best_placed_client(make_topology):
    topo = make_topology(num_clients=60, overlap_sizes=(10, 10), roc_policy="central", seed=5)
    for p in range(topo.num_pairs):
        roc = topo.relay_client(p)

        def worst(k):
            return max(topo.distance(k, p), topo.distance(k, p + 1))

        assert worst(roc) == min(worst(k) for k in topo.overlap_clients[p])


def test_chain_graph_edges_carry_overlap_and_relay(make_topology):
    topo = make_topology()
    graph = chain_graph(topo)
    assert sorted(graph.edges()) == [(0, 1), (1, 2)]
    assert graph.edges[0, 1]["overlap"] == 2
    assert graph.edges[1, 2]["relay"] == topo.relay_client(1)
