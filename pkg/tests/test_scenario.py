from __future__ import annotations

from collections import Counter
from dataclasses import replace

import hypothesis.strategies as st
import pytest
from hypothesis import given, settings

from busevac.errors import ContractViolation, ReferentialError
from busevac.fixtures import six_node_dir
from busevac.network import Link, Network, Node, NodeType, Zone
from busevac.scenario import (HazardSpec, Scenario, build_scenario, estimate_evacuees, feasibility_report,
                              load_scenario, read_bus_placements, save_scenario, select_impaired_zones,
                              split_evenly, write_bus_placements)
from busevac.simulator import SimConfig, reset


def five_zone_network():
    nodes = [Node(f"o{i}", i, 0, NodeType.ORIGIN, zone_id=f"z{i}") for i in range(1, 6)]
    nodes.append(Node("s", 0, 1, NodeType.SHELTER, capacity=100, zone_id="z1"))
    links = [Link(str(i), f"o{i}", "s", 1.0) for i in range(1, 6)]
    zones = [Zone(f"z{i}", 0, 10 * i) for i in range(1, 6)]
    return Network(nodes, links, zones)


def test_split_examples():
    assert split_evenly(30, ["a", "b", "c"]) == {"a": 10, "b": 10, "c": 10}
    assert split_evenly(10, ["n3", "n1", "n2"]) == {"n1": 4, "n2": 3, "n3": 3}
    assert split_evenly(0, ["a", "b"]) == {"a": 0, "b": 0}


@settings(max_examples=300)
@given(st.integers(0, 10_000), st.integers(1, 40))
def test_split_conserves(total, n):
    counts = split_evenly(total, [f"v{i}" for i in range(n)])
    assert sum(counts.values()) == total
    assert max(counts.values()) - min(counts.values()) <= 1


def test_reproduce_passthrough():
    net = five_zone_network()
    assert select_impaired_zones(HazardSpec(mode="reproduce", zone_list=("z3",)), net) == ("z3",)
    with pytest.raises(ReferentialError):
        select_impaired_zones(HazardSpec(mode="reproduce", zone_list=("z9",)), net)


def test_randomized_draws():
    net = five_zone_network()
    assert len(select_impaired_zones(HazardSpec(impairment_scale=5), net)) == 5
    a = select_impaired_zones(HazardSpec(impairment_scale=2, seed=11), net)
    assert a == select_impaired_zones(HazardSpec(impairment_scale=2, seed=11), net)
    assert len(set(a)) == 2
    with pytest.raises(ContractViolation):
        select_impaired_zones(HazardSpec(impairment_scale=6), net)


def test_randomized_frequencies_are_uniform():
    net = five_zone_network()
    counts = Counter()
    n = 100_000
    for seed in range(n):
        counts.update(select_impaired_zones(HazardSpec(impairment_scale=2, seed=seed), net))
    for z in net.zones:
        assert counts[z] / n == pytest.approx(0.4, abs=0.02)


def test_weights_bias_selection():
    net = five_zone_network()
    spec = HazardSpec(impairment_scale=1, zone_weights={"z2": 1.0})
    assert all(select_impaired_zones(replace(spec, seed=s), net) == ("z2",) for s in range(20))


def test_estimate_evacuees_and_zero_population():
    net = five_zone_network()
    assert estimate_evacuees(["z2", "z4"], net) == {"o2": 20, "o4": 40}
    empty = Network(net.nodes.values(), net.links.values(), [Zone("z1", 0, 0)] +
                    [z for k, z in net.zones.items() if k != "z1"])
    assert estimate_evacuees(["z1"], empty) == {"o1": 0}


def test_six_node_build_matches_tables(net, scenario):
    placements = read_bus_placements(six_node_dir() / "buses.csv")
    built = build_scenario(HazardSpec(mode="reproduce", zone_list=("z1", "z2")), net, placements)
    assert built.origin_demands == scenario.origin_demands == {"o1": 10, "o2": 30}
    assert built.bus_placements == scenario.bus_placements


def test_no_impaired_zone_terminates_at_reset(net, scenario):
    empty = Scenario((), {}, scenario.bus_placements)
    assert reset(net, empty, SimConfig()).is_terminal()


def test_disabled_links_can_make_scenario_infeasible(net):
    placements = read_bus_placements(six_node_dir() / "buses.csv")
    sc = build_scenario(HazardSpec(mode="reproduce", zone_list=("z1", "z2")), net, placements)
    assert feasibility_report(net, sc).feasible
    into_shelters = tuple(l.link_id for l in net.links.values() if l.to_node_id in ("d1", "d2"))
    blocked = replace(sc, disabled_links=into_shelters)
    report = feasibility_report(net, blocked)
    assert not report.feasible and report.stranded == ["o1", "o2"]


def test_seed_reproducibility_and_round_trip(tmp_path, net):
    placements = read_bus_placements(six_node_dir() / "buses.csv")
    spec = HazardSpec(impairment_scale=1, seed=4)
    a, b = build_scenario(spec, net, placements), build_scenario(spec, net, placements)
    assert a == b
    assert load_scenario(save_scenario(a, tmp_path / "s.json")) == a
    assert read_bus_placements(write_bus_placements(placements, tmp_path / "b.csv")) == placements


def test_hazard_spec_validation():
    with pytest.raises(ContractViolation):
        HazardSpec(mode="reproduce")
    with pytest.raises(ContractViolation):
        HazardSpec(mode="guess")
    assert HazardSpec.from_dict(HazardSpec(seed=3).to_dict()) == HazardSpec(seed=3)
