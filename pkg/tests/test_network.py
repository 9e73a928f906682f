from __future__ import annotations

import csv
import itertools
import math
import warnings

import hypothesis.strategies as st
import pytest
from hypothesis import given, settings

from busevac.errors import DataValueError, ReferentialError, SchemaError
from busevac.fixtures import six_node_dir
from busevac.network import (Link, Network, NetworkWarning, Node, NodeType, load_network,
                             nearest_with_capacity, nearest_with_demand, save_network, shortest_path)
from busevac.simulator import SimConfig, reset

from oracles import all_simple_path_times


def test_six_node_shape(net):
    assert len(net.nodes) == 6
    assert len(net.links) == 16
    assert set(net.zones) == {"z1", "z2"}
    assert net.origins == ["o1", "o2"]
    assert net.shelters == ["d1", "d2"]
    # zones partition the node set
    members = [n for z in net.zones.values() for n in z.member_nodes]
    assert sorted(members) == sorted(net.nodes)


def test_shortest_path_examples(net):
    p = shortest_path(net, "o2", "d1")
    assert p.links == ("11",) and p.total_time == 10
    assert shortest_path(net, "o1", "o1").links == ()
    assert shortest_path(net, "o1", "o1").total_time == 0
    p = shortest_path(net, "n1", "d2")
    assert p.links == ("1", "8") and p.total_time == 10


def test_shortest_path_matches_exhaustive_enumeration(net):
    for a, b in itertools.permutations(net.nodes, 2):
        times = all_simple_path_times(net, a, b)
        best = min(times) if times else math.inf
        assert shortest_path(net, a, b).total_time == best


def test_paths_never_exceed_direct_links(net):
    for link in net.links.values():
        assert shortest_path(net, link.from_node_id, link.to_node_id).total_time <= link.travel_time


def test_path_chains(net):
    for a, b in itertools.permutations(net.nodes, 2):
        p = shortest_path(net, a, b)
        node = a
        for link_id in p.links:
            assert net.links[link_id].from_node_id == node
            node = net.links[link_id].to_node_id
        assert node == b
        assert sum(net.links[l].travel_time for l in p.links) == pytest.approx(p.total_time)


def test_unreachable_is_a_result_not_an_error():
    nodes = [Node("a", 0, 0, NodeType.TRANSIT), Node("b", 1, 0, NodeType.TRANSIT)]
    net = Network(nodes, [Link("1", "a", "b", 2.0)])
    p = shortest_path(net, "b", "a")
    assert not p.reachable and p.links == ()


def test_nearest_queries(net, scenario):
    state = reset(net, scenario, SimConfig())
    assert nearest_with_demand(net, state, "d1") == "o2"
    assert nearest_with_capacity(net, state, "o1") == "d2"
    assert nearest_with_capacity(net, state, "d2") == "d2"
    state.node_demand = {"o1": 0, "o2": 5}
    assert nearest_with_demand(net, state, "o2") == "o2"
    state.node_demand = {"o1": 0, "o2": 0}
    assert nearest_with_demand(net, state, "d1") is None
    state.shelter_remaining = {"d1": 0, "d2": 0}
    assert nearest_with_capacity(net, state, "o1") is None


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def test_round_trip(tmp_path, net):
    save_network(net, tmp_path)
    again = load_network(tmp_path / "nodes.csv", tmp_path / "links.csv", tmp_path / "zones.csv")
    assert again.nodes == net.nodes
    assert again.links == net.links
    assert again.zones == net.zones


def test_missing_column_is_named(tmp_path):
    d = six_node_dir()
    _write(tmp_path / "links.csv", ["link_id", "from_node_id", "to_node_id"], [["1", "n1", "o1"]])
    with pytest.raises(SchemaError, match="travel_time"):
        load_network(d / "nodes.csv", tmp_path / "links.csv", d / "zones.csv")


def test_dangling_link_reference(tmp_path):
    d = six_node_dir()
    _write(tmp_path / "links.csv", ["link_id", "from_node_id", "to_node_id", "travel_time"],
           [["99", "n9", "o1", "3"]])
    with pytest.raises(ReferentialError, match="99"):
        load_network(d / "nodes.csv", tmp_path / "links.csv", d / "zones.csv")


def test_negative_values_rejected(tmp_path):
    d = six_node_dir()
    _write(tmp_path / "links.csv", ["link_id", "from_node_id", "to_node_id", "travel_time"],
           [["1", "n1", "o1", "-3"]])
    with pytest.raises(DataValueError):
        load_network(d / "nodes.csv", tmp_path / "links.csv", d / "zones.csv")


def test_node_type_invariants():
    with pytest.raises(DataValueError):
        Node("o", 0, 0, NodeType.ORIGIN, demand=3, capacity=1)
    with pytest.raises(DataValueError):
        Node("d", 0, 0, NodeType.SHELTER, demand=1, capacity=5)
    with pytest.raises(DataValueError):
        Node("t", 0, 0, NodeType.TRANSIT, demand=1)


def test_degenerate_single_node(tmp_path):
    _write(tmp_path / "nodes.csv",
           ["name", "node_id", "x_coord", "y_coord", "node_type", "demand", "capacity", "inequity_index", "zone_id"],
           [["t", "t1", "0", "0", "transit", "0", "0", "0", "z"]])
    _write(tmp_path / "links.csv", ["link_id", "from_node_id", "to_node_id", "travel_time"], [])
    _write(tmp_path / "zones.csv", ["zone_id", "epc_flag", "population"], [["z", "0", "0"]])
    net = load_network(tmp_path / "nodes.csv", tmp_path / "links.csv", tmp_path / "zones.csv")
    assert len(net.nodes) == 1 and not net.links


def test_unreachable_shelter_warns(tmp_path):
    _write(tmp_path / "nodes.csv",
           ["name", "node_id", "x_coord", "y_coord", "node_type", "demand", "capacity", "inequity_index", "zone_id"],
           [["a", "a", "0", "0", "origin", "5", "0", "0", "z"], ["s", "s", "1", "0", "shelter", "0", "9", "0", "z"]])
    _write(tmp_path / "links.csv", ["link_id", "from_node_id", "to_node_id", "travel_time"], [["1", "s", "a", "2"]])
    _write(tmp_path / "zones.csv", ["zone_id", "epc_flag", "population"], [["z", "0", "5"]])
    with pytest.warns(NetworkWarning):
        load_network(tmp_path / "nodes.csv", tmp_path / "links.csv", tmp_path / "zones.csv")


def test_fractional_times_kept_at_tenth_minutes():
    assert Link("1", "a", "b", 2.34).travel_time == 2.3
    assert Link("1", "a", "b", 2.36).ticks == 24


@st.composite
def random_graphs(draw):
    n = draw(st.integers(2, 9))
    ids = [f"v{i}" for i in range(n)]
    pairs = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=30))
    links = []
    for k, (a, b) in enumerate(pairs):
        if a != b:
            t = draw(st.integers(1, 20))
            links.append(Link(str(k + 1), ids[a], ids[b], float(t)))
    return Network([Node(i, 0, 0, NodeType.TRANSIT) for i in ids], links)


@settings(max_examples=60, deadline=None)
@given(random_graphs())
def test_triangle_inequality_and_identity(g):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        d = {(a, b): shortest_path(g, a, b).total_time for a in g.nodes for b in g.nodes}
    for a in g.nodes:
        assert d[a, a] == 0
    for a, b, c in itertools.product(g.nodes, repeat=3):
        if math.isfinite(d[a, b]) and math.isfinite(d[b, c]):
            assert d[a, c] <= d[a, b] + d[b, c] + 1e-9
