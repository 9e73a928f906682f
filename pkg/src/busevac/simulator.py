"""Time-stepped evacuation environment.

Each call to :func:`step` covers one interval of ``delta_t`` minutes:

1. every bus receives a destination. A bus standing at a node first boards
   evacuees there (if it is an origin), then sets off along the shortest path;
   a bus in the middle of a link only changes the path it takes from the
   link's end node on.
2. the step cost ``T = (onboard + waiting) * delta_t`` and the equity penalty
   ``J`` are charged on the post-boarding state.
3. buses move ``delta_t`` minutes. A bus that reaches its destination stops
   there for the rest of the interval and, at a shelter, unloads immediately.

Boarding is capped so a bus never loads more evacuees than its destination
shelter can still take, counting passengers that other buses are already
carrying there. Times are tracked in integer tenths of a minute.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, NamedTuple

import numpy as np

from busevac.equity import community_zones, point_biserial, zone_snapshot
from busevac.errors import ContractViolation, ReferentialError
from busevac.network import Network, NodeType, id_key, to_minutes, to_ticks
from busevac.scenario import Scenario

PENALTY_MODES = ("pointbiserial", "epc_waiting")


@dataclass(frozen=True)
class SimConfig:
    delta_t: float = 1.0
    max_steps: int = 1000
    equity_enabled: bool = True
    # "pointbiserial": J = |r_pb| * T.  "epc_waiting": J = waiting evacuees at
    # EPC nodes * delta_t (the six-node illustration's penalty).
    penalty_mode: str = "pointbiserial"
    reward_sign: int = -1

    def __post_init__(self):
        if not self.delta_t > 0:
            raise ContractViolation("delta_t must be positive")
        if self.max_steps <= 0:
            raise ContractViolation("max_steps must be positive")
        if self.penalty_mode not in PENALTY_MODES:
            raise ContractViolation(f"penalty_mode must be one of {PENALTY_MODES}")
        if self.reward_sign != -1:
            raise ContractViolation("reward_sign is fixed to -1 (reward = -(T + J))")

    @property
    def delta_ticks(self) -> int:
        return to_ticks(self.delta_t)


@dataclass(frozen=True)
class Group:
    """Evacuees boarded together: origin node, pickup clock (ticks), head count."""

    origin: str
    pickup: int
    count: int


@dataclass(frozen=True)
class TripRecord:
    bus_id: str
    origin: str
    destination: str
    trip_time: float
    waiting_time: float
    passengers: int
    epc: int = 0

    @property
    def passenger_time(self) -> float:
        return self.passengers * (self.trip_time + self.waiting_time)


TRIP_COLUMNS = ("bus_id", "origin", "destination", "trip_time", "waiting_time", "passengers")


@dataclass(frozen=True)
class Bus:
    bus_id: str
    capacity: int
    destination: str
    current_link: str
    from_node: str
    to_node: str
    ticks_to_arrive: int
    planned_path: tuple[str, ...] = ()
    groups: tuple[Group, ...] = ()

    @property
    def onboard(self) -> int:
        return sum(g.count for g in self.groups)

    @property
    def time_to_arrive(self) -> float:
        return to_minutes(self.ticks_to_arrive)

    @property
    def at_node(self) -> str | None:
        return self.to_node if self.ticks_to_arrive == 0 else None

    @property
    def free_seats(self) -> int:
        return self.capacity - self.onboard


@dataclass(frozen=True)
class StepInfo:
    step_cost: float = 0.0
    penalty: float = 0.0
    r_pb: float = 0.0


@dataclass
class SimState:
    clock: int
    buses: dict[str, Bus]
    node_demand: dict[str, int]
    shelter_remaining: dict[str, int]
    horizon: int
    total_demand: int
    cumulative_cost: float = 0.0
    evacuated: int = 0
    steps: int = 0
    passenger_time: float = 0.0
    penalty_total: float = 0.0
    rpb_weighted: float = 0.0
    trips: tuple[TripRecord, ...] = ()
    last: StepInfo = StepInfo()

    @property
    def clock_minutes(self) -> float:
        return to_minutes(self.clock)

    @property
    def waiting(self) -> int:
        return sum(self.node_demand.values())

    @property
    def onboard(self) -> int:
        return sum(b.onboard for b in self.buses.values())

    @property
    def overall_rpb(self) -> float:
        """Step-cost weighted mean of |r_pb| over the steps taken so far."""
        return self.rpb_weighted / self.passenger_time if self.passenger_time > 0 else 0.0

    def is_terminal(self) -> bool:
        evacuated = self.waiting == 0 and self.onboard == 0
        return evacuated or self.clock >= self.horizon

    def copy(self) -> "SimState":
        return replace(self, buses=dict(self.buses), node_demand=dict(self.node_demand),
                       shelter_remaining=dict(self.shelter_remaining))


class Route(NamedTuple):
    """Destination plus an explicit link sequence from the bus's next node."""

    destination: str
    links: tuple[str, ...]


ActionSet = Mapping[str, "str | Route"]


def _plan(network: Network, start: str, destination) -> tuple[str, tuple[str, ...]]:
    """Return (effective destination, link path); unreachable targets become a hold."""
    if isinstance(destination, Route):
        node = start
        for link_id in destination.links:
            link = network.links.get(link_id)
            if link is None or link.from_node_id != node:
                raise ContractViolation(f"route {destination.links} does not chain from {start}")
            node = link.to_node_id
        if node != destination.destination:
            raise ContractViolation(f"route {destination.links} does not end at {destination.destination}")
        return destination.destination, tuple(destination.links)
    if destination == start:
        return start, ()
    path = network.shortest_path(start, destination)
    if not path.reachable:
        return start, ()
    return destination, path.links


def reset(network: Network, scenario: Scenario, config: SimConfig, seed: int = 0) -> SimState:
    """Initial state: buses at their scenario positions, demand from the scenario."""
    node_demand = {n: 0 for n in network.origins}
    for node_id, count in scenario.origin_demands.items():
        node = network.nodes.get(node_id)
        if node is None:
            raise ReferentialError(f"scenario demand references unknown node {node_id!r}")
        if node.node_type is not NodeType.ORIGIN:
            raise ReferentialError(f"scenario demand placed on non-origin node {node_id!r}")
        if count < 0:
            raise ContractViolation(f"negative demand at {node_id}")
        node_demand[node_id] = int(count)
    shelter_remaining = {n: network.nodes[n].capacity for n in network.shelters}

    buses = {}
    for p in scenario.bus_placements:
        link = network.links.get(p.link_id)
        if link is None:
            raise ReferentialError(f"bus {p.bus_id} placed on unknown link {p.link_id!r}")
        if (p.from_node_id, p.to_node_id) != (link.from_node_id, link.to_node_id):
            raise ReferentialError(f"bus {p.bus_id}: endpoints disagree with link {p.link_id}")
        if p.destination not in network.nodes:
            raise ReferentialError(f"bus {p.bus_id}: unknown destination {p.destination!r}")
        ticks = to_ticks(p.time_to_travel)
        if not 0 <= ticks <= link.ticks:
            raise ContractViolation(f"bus {p.bus_id}: time_to_travel outside [0, travel_time]")
        if not 0 <= p.onboard <= p.capacity:
            raise ContractViolation(f"bus {p.bus_id}: onboard outside [0, capacity]")
        destination, path = _plan(network, link.to_node_id, p.destination)
        groups = (Group(link.from_node_id, 0, p.onboard),) if p.onboard else ()
        path = list(path)
        bus = Bus(p.bus_id, p.capacity, destination, link.link_id,
                  link.from_node_id, link.to_node_id, ticks, (), groups)
        bus = _enter_next_link(network, bus, path)
        buses[p.bus_id] = replace(bus, planned_path=tuple(path))
    buses = {k: buses[k] for k in sorted(buses, key=id_key)}
    total = sum(node_demand.values()) + sum(b.onboard for b in buses.values())
    return SimState(
        clock=0, buses=buses, node_demand=node_demand, shelter_remaining=shelter_remaining,
        horizon=config.max_steps * config.delta_ticks, total_demand=total,
    )


def action_mask(state: SimState, bus_id: str) -> tuple[str, ...]:
    """Admissible destinations: demand nodes, open shelters, and the hold node.

    The hold node is the end of the bus's current link (its own node when it
    is standing still). Returned sorted by node id.
    """
    bus = state.buses[bus_id]
    mask = {n for n, d in state.node_demand.items() if d > 0}
    mask.update(n for n, c in state.shelter_remaining.items() if c > 0)
    mask.add(bus.to_node)
    return tuple(sorted(mask, key=id_key))


def needs_decision(state: SimState, bus_id: str) -> bool:
    """True when the bus stands idle at its destination.

    Buses never stop at pass-through nodes, so moving buses are not asked.
    """
    bus = state.buses[bus_id]
    return bus.ticks_to_arrive == 0 and bus.to_node == bus.destination


def decision_masks(state: SimState) -> dict[str, tuple[str, ...]]:
    return {b: action_mask(state, b) for b in state.buses if needs_decision(state, b)}


def boarding_limit(state: SimState, network: Network, bus_id: str, destination: str) -> int:
    """Most evacuees ``bus_id`` may load when it leaves for ``destination``."""
    bus = state.buses[bus_id]
    if destination not in state.shelter_remaining:
        return bus.free_seats
    committed = sum(b.onboard for k, b in state.buses.items()
                    if k != bus_id and b.destination == destination)
    room = state.shelter_remaining[destination] - committed - bus.onboard
    return max(0, min(bus.free_seats, room))


def _step_penalty(state: SimState, network: Network, config: SimConfig, cost: float,
                  zones) -> tuple[float, float]:
    r = point_biserial(zone_snapshot(network, state.node_demand, zones)) if zones else 0.0
    if not config.equity_enabled:
        return 0.0, r
    if config.penalty_mode == "pointbiserial":
        return abs(r) * cost, r
    epc_waiting = sum(d for n, d in state.node_demand.items() if network.nodes[n].inequity_index == 1)
    return epc_waiting * config.delta_t, r


def step(state: SimState, actions: ActionSet, network: Network, config: SimConfig,
         zones: list[str] | None = None) -> tuple[SimState, float, bool]:
    """Advance one interval. Returns ``(next_state, reward, done)``.

    Buses absent from ``actions`` keep their destination and route; every
    action given must lie in its bus's mask. ``zones`` may be passed to skip
    recomputing the zones that enter the equity index.
    """
    nxt = state.copy()
    if zones is None:
        zones = community_zones(network)
    unknown = set(actions) - set(nxt.buses)
    if unknown:
        raise ContractViolation(f"actions for unknown buses {sorted(unknown)}")

    # 1. decisions and boarding; masks are those of the state the policy saw
    masks = {b: action_mask(state, b) for b in actions}
    for bus_id in nxt.buses:
        if bus_id not in actions:
            continue
        bus = nxt.buses[bus_id]
        target = actions[bus_id]
        node = target.destination if isinstance(target, Route) else target
        if node not in masks[bus_id]:
            raise ContractViolation(f"bus {bus_id}: action {node!r} not in mask {masks[bus_id]}")
        if bus.ticks_to_arrive == 0:
            here = bus.to_node
            waiting = nxt.node_demand.get(here, 0)
            if waiting > 0:
                count = min(waiting, boarding_limit(nxt, network, bus_id, node))
                if count > 0:
                    nxt.node_demand[here] = waiting - count
                    bus = replace(bus, groups=bus.groups + (Group(here, nxt.clock, count),))
            destination, path = _plan(network, here, target)
        else:
            destination, path = _plan(network, bus.to_node, target)
        nxt.buses[bus_id] = replace(bus, destination=destination, planned_path=path)

    # 2. cost of the interval
    cost = (nxt.onboard + nxt.waiting) * config.delta_t
    penalty, r = _step_penalty(nxt, network, config, cost, zones)

    # 3. movement
    trips = []
    for bus_id in nxt.buses:
        bus = nxt.buses[bus_id]
        budget = config.delta_ticks
        path = list(bus.planned_path)
        bus = _enter_next_link(network, bus, path)
        while budget > 0 and bus.ticks_to_arrive > 0:
            move = min(budget, bus.ticks_to_arrive)
            budget -= move
            bus = replace(bus, ticks_to_arrive=bus.ticks_to_arrive - move)
            if bus.ticks_to_arrive == 0:
                if bus.to_node == bus.destination:
                    arrival = nxt.clock + config.delta_ticks - budget
                    bus = _unload(nxt, network, bus, arrival, trips)
                    break
                bus = _enter_next_link(network, bus, path)
        nxt.buses[bus_id] = replace(bus, planned_path=tuple(path))

    nxt.clock += config.delta_ticks
    nxt.steps += 1
    nxt.passenger_time += cost
    nxt.penalty_total += penalty
    nxt.rpb_weighted += abs(r) * cost
    nxt.cumulative_cost += cost + penalty
    nxt.trips = state.trips + tuple(trips)
    nxt.last = StepInfo(cost, penalty, r)
    return nxt, -(cost + penalty), nxt.is_terminal()


def _enter_next_link(network: Network, bus: Bus, path: list) -> Bus:
    """Move a bus standing at a pass-through node onto the next link of its route."""
    if bus.ticks_to_arrive > 0 or bus.to_node == bus.destination or not path:
        return bus
    link = network.links[path.pop(0)]
    return replace(bus, current_link=link.link_id, from_node=link.from_node_id,
                   to_node=link.to_node_id, ticks_to_arrive=link.ticks)


def _unload(state: SimState, network: Network, bus: Bus, arrival: int, trips: list) -> Bus:
    node = bus.to_node
    room = state.shelter_remaining.get(node)
    if room is None or room == 0 or not bus.groups:
        return bus
    groups = list(bus.groups)
    left = room
    while groups and left > 0:
        g = groups[0]
        n = min(g.count, left)
        left -= n
        trips.append(TripRecord(bus.bus_id, g.origin, node, to_minutes(arrival - g.pickup),
                                to_minutes(g.pickup), n, network.nodes[g.origin].inequity_index))
        if n == g.count:
            groups.pop(0)
        else:
            groups[0] = replace(g, count=g.count - n)
    state.shelter_remaining[node] = left
    state.evacuated += room - left
    return replace(bus, groups=tuple(groups))


# -- observation -------------------------------------------------------------

def candidate_nodes(network: Network) -> list[str]:
    """Observation universe: origins then shelters, each sorted by id."""
    return network.origins + network.shelters


OBSERVATIONS = ("basic", "distances")


def observation_layout(state: SimState, network: Network, features: str = "basic") -> list[str]:
    """Feature names, in order, of the vector returned by :func:`observe`."""
    universe = candidate_nodes(network)
    names = []
    for bus_id in sorted(state.buses, key=id_key):
        names += [f"{bus_id}.capacity", f"{bus_id}.onboard"]
        names += [f"{bus_id}.dest={n}" for n in universe]
        names.append(f"{bus_id}.time_to_arrive")
    for n in universe:
        names += [f"{n}.demand", f"{n}.capacity", f"{n}.epc"]
    names.append("clock")
    if features == "distances":
        for bus_id in sorted(state.buses, key=id_key):
            names += [f"{bus_id}.minutes_to={n}" for n in universe]
    elif features != "basic":
        raise ContractViolation(f"observation features must be one of {OBSERVATIONS}")
    return names


def layout_hash(state: SimState, network: Network, features: str = "basic") -> str:
    blob = json.dumps(observation_layout(state, network, features)).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _unreachable_minutes(network: Network) -> float:
    return 2.0 * sum(l.travel_time for l in network.links.values()) or 1.0


def observe(state: SimState, network: Network, features: str = "basic") -> np.ndarray:
    """Fixed-length feature vector.

    Per bus (sorted by id): capacity, onboard, one-hot destination over the
    candidate nodes, minutes to the next node. Per candidate node: remaining
    demand, remaining shelter capacity, EPC flag. Then clock / horizon.
    Length is ``B * (3 + K) + 3 * K + 1`` for B buses and K candidates.

    With ``features="distances"`` a further ``B * K`` block follows: for each
    bus, the minutes from its next node to every candidate (unreachable
    candidates get twice the network's summed link time).
    """
    universe = candidate_nodes(network)
    index = {n: i for i, n in enumerate(universe)}
    k = len(universe)
    out = []
    for bus_id in sorted(state.buses, key=id_key):
        bus = state.buses[bus_id]
        onehot = [0.0] * k
        if bus.destination in index:
            onehot[index[bus.destination]] = 1.0
        out += [bus.capacity, bus.onboard, *onehot, bus.time_to_arrive]
    for n in universe:
        out += [state.node_demand.get(n, 0), state.shelter_remaining.get(n, 0),
                network.nodes[n].inequity_index]
    out.append(state.clock / state.horizon if state.horizon else 0.0)
    if features == "distances":
        far = _unreachable_minutes(network)
        for bus_id in sorted(state.buses, key=id_key):
            dist = network.distances_from(state.buses[bus_id].to_node)
            out += [to_minutes(dist[n]) if n in dist else far for n in universe]
    elif features != "basic":
        raise ContractViolation(f"observation features must be one of {OBSERVATIONS}")
    return np.asarray(out, dtype=float)


def observation_scale(state: SimState, network: Network, features: str = "basic") -> np.ndarray:
    """Positive per-feature divisors that bring :func:`observe` to O(1)."""
    universe = candidate_nodes(network)
    k = len(universe)
    max_cap = max([b.capacity for b in state.buses.values()] + [1])
    max_time = max([l.travel_time for l in network.links.values()] + [1.0])
    max_demand = max([state.node_demand.get(n, 0) for n in universe] + [1])
    max_room = max([state.shelter_remaining.get(n, 0) for n in universe] + [1])
    scale = []
    for _ in state.buses:
        scale += [max_cap, max_cap] + [1.0] * k + [max_time]
    for _ in universe:
        scale += [max_demand, max_room, 1.0]
    scale.append(1.0)
    if features == "distances":
        scale += [max_time * max(1, len(network.nodes) ** 0.5)] * (len(state.buses) * k)
    return np.asarray(scale, dtype=float)


# -- episodes ------------------------------------------------------------------

Policy = Callable[..., Mapping[str, str]]


@dataclass
class EpisodeTrace:
    records: list[dict] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    trips: list[TripRecord] = field(default_factory=list)
    final: SimState | None = None

    @property
    def total_passenger_time(self) -> float:
        return self.final.passenger_time if self.final else 0.0

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))


def bus_status(state: SimState) -> list[dict]:
    return [{"bus_id": b.bus_id, "capacity": b.capacity, "onboard": b.onboard,
             "destination": b.destination} for b in state.buses.values()]


def run_episode(network: Network, scenario: Scenario, config: SimConfig, policy: Policy,
                seed: int = 0, rng: np.random.Generator | None = None) -> EpisodeTrace:
    """Roll ``policy`` to termination.

    The policy is consulted only on steps where some bus awaits a decision
    and is handed the masks of those buses only; other buses keep going.
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    zones = community_zones(network)
    state = reset(network, scenario, config, seed)
    trace = EpisodeTrace()
    done = state.is_terminal()
    while not done:
        masks = decision_masks(state)
        actions = dict(policy(state, network, masks, rng)) if masks else {}
        state, reward, done = step(state, actions, network, config, zones)
        trace.rewards.append(reward)
        trace.records.append({"step": state.steps, "clock": state.clock_minutes,
                              "buses": bus_status(state), "reward": reward,
                              "step_cost": state.last.step_cost, "r_pb": state.last.r_pb})
    trace.trips = list(state.trips)
    trace.final = state
    return trace


class ScriptPolicy:
    """Follows fixed per-bus node sequences.

    A bus's script head is dropped once the bus stands on it; an exhausted
    script means hold. Consecutive script nodes joined by a link are
    travelled along that link, otherwise along the shortest path.
    """

    def __init__(self, script: Mapping[str, Iterable[str]]):
        self.queues = {bus: list(seq) for bus, seq in script.items()}
        self.calls = 0

    def __call__(self, state, network, masks, rng=None):
        self.calls += 1
        actions = {}
        for bus_id, mask in masks.items():
            bus = state.buses[bus_id]
            queue = self.queues.get(bus_id, [])
            while queue and bus.at_node == queue[0]:
                queue.pop(0)
            target = queue[0] if queue else bus.to_node
            if target not in mask:
                raise ContractViolation(
                    f"script step {self.calls}: bus {bus_id} -> {target!r} not in mask {mask}")
            hops = [network.links[l] for l in network.adjacency[bus.to_node]
                    if network.links[l].to_node_id == target]
            if hops:
                direct = min(hops, key=lambda l: (l.ticks, id_key(l.link_id)))
                actions[bus_id] = Route(target, (direct.link_id,))
            else:
                actions[bus_id] = target
        return actions


def replay(network: Network, scenario: Scenario, script: Mapping[str, Iterable[str]],
           config: SimConfig | None = None) -> EpisodeTrace:
    """Run a scripted episode and return its trace and trip log."""
    config = config or SimConfig(equity_enabled=False)
    return run_episode(network, scenario, config, ScriptPolicy(script))
