"""The six-node, two-bus example network bundled with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from busevac.network import Network, load_network
from busevac.scenario import Scenario, read_bus_placements, scenario_from_tables

# Destination sequences of the two hand-built feasible plans. Each yields
# 1,270 passenger-minutes.
FEASIBLE_SCRIPTS = {
    1: {"b1": ["o1", "d1", "o2", "d1"], "b2": ["n2", "o2", "d2"]},
    2: {"b1": ["o1", "d1", "o2", "d2"], "b2": ["n2", "o2", "d1"]},
}

# (bus, origin, destination, trip time, waiting time, passengers)
FEASIBLE_TRIPS = {
    1: [("b1", "o1", "d1", 15, 4, 10), ("b1", "o2", "d1", 10, 29, 15), ("b2", "o2", "d2", 20, 13, 15)],
    2: [("b1", "o1", "d1", 15, 4, 10), ("b1", "o2", "d2", 20, 29, 15), ("b2", "o2", "d1", 10, 13, 15)],
}


def six_node_dir() -> Path:
    return Path(str(resources.files("busevac") / "data" / "six_node"))


def six_node_network() -> Network:
    d = six_node_dir()
    return load_network(d / "nodes.csv", d / "links.csv", d / "zones.csv")


def six_node_scenario(network: Network | None = None) -> Scenario:
    """Demand and bus positions at hazard time (10 and 30 evacuees, two buses)."""
    network = network or six_node_network()
    buses = read_bus_placements(six_node_dir() / "buses.csv")
    return scenario_from_tables(network, buses, name="six-node")
