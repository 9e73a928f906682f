"""Benchmark dispatch strategies.

Every policy is a callable ``policy(state, network, masks, rng) -> actions``
where ``masks`` maps each bus awaiting a decision to its admissible
destinations and ``actions`` maps the same buses to chosen nodes.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from busevac.network import Network, id_key
from busevac.simulator import SimState

Masks = Mapping[str, tuple[str, ...]]


def _nearest(network: Network, source: str, candidates) -> str | None:
    dist = network.distances_from(source)
    best = None
    for node in candidates:
        if node in dist:
            key = (dist[node], id_key(node))
            if best is None or key < best[0]:
                best = (key, node)
    return None if best is None else best[1]


def _demand_nodes(state: SimState, exclude: str | None = None) -> list[str]:
    return [n for n, d in state.node_demand.items() if d > 0 and n != exclude]


def _open_shelters(state: SimState) -> list[str]:
    return [n for n, c in state.shelter_remaining.items() if c > 0]


def _checked(target: str | None, mask, bus) -> str:
    return target if target is not None and target in mask else bus.to_node


class StochasticAll:
    """pi_1: uniform over every origin and shelter, regardless of demand or room.

    Masks forbid driving to an emptied origin or a full shelter, so a draw
    outside the bus's mask is played out as a wasted trip: the bus holds for
    the shortest-path time to the drawn node (at least one interval) before it
    draws again. Memory is cleared whenever a new episode starts.
    """

    def __init__(self):
        self._release: dict[str, int] = {}
        self._last_clock = -1

    def __call__(self, state: SimState, network: Network, masks: Masks, rng: np.random.Generator):
        if state.clock < self._last_clock or state.steps == 0:
            self._release = {}
        self._last_clock = state.clock
        universe = network.origins + network.shelters
        actions = {}
        for bus_id, mask in masks.items():
            bus = state.buses[bus_id]
            if self._release.get(bus_id, -1) > state.clock:
                actions[bus_id] = bus.to_node
                continue
            pick = universe[int(rng.integers(len(universe)))] if universe else None
            if pick is not None and pick in mask:
                actions[bus_id] = pick
                continue
            actions[bus_id] = bus.to_node
            if pick is not None:
                wasted = network.distances_from(bus.to_node).get(pick, 0)
                self._release[bus_id] = state.clock + max(int(wasted), 1)
        return actions


stochastic_all = StochasticAll()


def stochastic_feasible(state: SimState, network: Network, masks: Masks, rng: np.random.Generator):
    """pi_2: uniform over origins with waiting evacuees and shelters with room.

    Once nobody is left waiting or aboard, every bus holds.
    """
    if state.waiting == 0 and state.onboard == 0:
        return {bus_id: state.buses[bus_id].to_node for bus_id in masks}
    useful = set(_demand_nodes(state)) | set(_open_shelters(state))
    actions = {}
    for bus_id, mask in masks.items():
        candidates = [n for n in mask if n in useful]
        if candidates:
            actions[bus_id] = candidates[int(rng.integers(len(candidates)))]
        else:
            actions[bus_id] = state.buses[bus_id].to_node
    return actions


def rule_nearest(state: SimState, network: Network, masks: Masks, rng=None):
    """Rule 1: collect at the nearest demand node, unload at the nearest open shelter.

    A bus seeks a shelter once it is full, or when it carries evacuees and no
    demand is left anywhere.
    """
    demand = _demand_nodes(state)
    actions = {}
    for bus_id, mask in masks.items():
        bus = state.buses[bus_id]
        if bus.onboard >= bus.capacity or (bus.onboard > 0 and not demand):
            target = _nearest(network, bus.to_node, _open_shelters(state))
        else:
            target = _nearest(network, bus.to_node, demand)
        actions[bus_id] = _checked(target, mask, bus)
    return actions


def rule_demand(state: SimState, network: Network, masks: Masks, rng=None):
    """Rule 2: collect where the most evacuees wait (ties: nearer, then lower id)."""
    actions = {}
    for bus_id, mask in masks.items():
        bus = state.buses[bus_id]
        demand = _demand_nodes(state)
        if bus.onboard >= bus.capacity or (bus.onboard > 0 and not demand):
            target = _nearest(network, bus.to_node, _open_shelters(state))
        elif demand:
            dist = network.distances_from(bus.to_node)
            reachable = [n for n in demand if n in dist]
            target = min(reachable, key=lambda n: (-state.node_demand[n], dist[n], id_key(n)),
                         default=None)
        else:
            target = None
        actions[bus_id] = _checked(target, mask, bus)
    return actions


def greedy_controller(state: SimState, network: Network, masks: Masks, rng=None):
    """Greedy Dijkstra controller.

    Judges fullness after the evacuees waiting at the bus's own node have
    boarded: a full bus heads for the nearest shelter with room; otherwise it
    goes to the nearest other node with demand; with no demand left, a bus
    carrying evacuees heads for the nearest shelter with room.
    """
    actions = {}
    for bus_id, mask in masks.items():
        bus = state.buses[bus_id]
        here = bus.at_node
        pending = min(bus.free_seats, state.node_demand.get(here, 0)) if here else 0
        load = bus.onboard + pending
        if load >= bus.capacity:
            target = _nearest(network, bus.to_node, _open_shelters(state))
        else:
            demand = _demand_nodes(state, exclude=here if pending else None)
            target = _nearest(network, bus.to_node, demand)
            if target is None and load > 0:
                target = _nearest(network, bus.to_node, _open_shelters(state))
        actions[bus_id] = _checked(target, mask, bus)
    return actions


POLICIES: dict[str, Callable] = {
    "pi1": stochastic_all,
    "pi2": stochastic_feasible,
    "rule1": rule_nearest,
    "rule2": rule_demand,
    "greedy": greedy_controller,
}

POLICY_NAMES = tuple(POLICIES) + ("ppo",)


def get_policy(name: str) -> Callable:
    if name == "pi1":
        return StochasticAll()
    try:
        return POLICIES[name]
    except KeyError:
        raise KeyError(f"unknown policy {name!r}; valid names: {', '.join(POLICY_NAMES)}") from None
