"""Directed road network: typed nodes, timed one-way links, census zones.

Networks are read from GMNS-style CSV files (``nodes.csv``, ``links.csv``,
``zones.csv``) and are treated as immutable once loaded. Travel times are
held internally as integer tenths of a minute so that path sums and the
simulator clock stay exact.
"""

from __future__ import annotations

import csv
import heapq
import math
import warnings
from dataclasses import dataclass
from enum import Enum
import pathlib
from typing import Iterable, Mapping

from busevac.errors import DataValueError, ReferentialError, SchemaError

TICKS_PER_MINUTE = 10

NODE_COLUMNS = (
    "name", "node_id", "x_coord", "y_coord", "node_type",
    "demand", "capacity", "inequity_index", "zone_id",
)
LINK_COLUMNS = ("link_id", "from_node_id", "to_node_id", "travel_time")
ZONE_COLUMNS = ("zone_id", "epc_flag", "population")


class NetworkWarning(UserWarning):
    pass


class NodeType(str, Enum):
    ORIGIN = "origin"
    SHELTER = "shelter"
    TRANSIT = "transit"

    @classmethod
    def parse(cls, raw: str) -> "NodeType":
        value = raw.strip().lower()
        if value == "node":  # the GMNS tables label plain road nodes "node"
            return cls.TRANSIT
        try:
            return cls(value)
        except ValueError:
            raise DataValueError(f"unknown node_type {raw!r}") from None


def id_key(identifier: str) -> tuple:
    """Sort key giving numeric ids numeric order, others lexical order."""
    try:
        return (0, int(identifier), "")
    except ValueError:
        return (1, 0, identifier)


def to_ticks(minutes: float) -> int:
    return int(round(float(minutes) * TICKS_PER_MINUTE))


def to_minutes(ticks: int) -> float:
    return ticks / TICKS_PER_MINUTE


@dataclass(frozen=True)
class Node:
    node_id: str
    x_coord: float
    y_coord: float
    node_type: NodeType
    demand: int = 0
    capacity: int = 0
    zone_id: str = ""
    inequity_index: int = 0
    name: str = ""

    def __post_init__(self):
        if self.demand < 0 or self.capacity < 0:
            raise DataValueError(f"node {self.node_id}: negative demand or capacity")
        if self.node_type is NodeType.ORIGIN and self.capacity != 0:
            raise DataValueError(f"origin {self.node_id} must have capacity 0")
        if self.node_type is NodeType.SHELTER and self.demand != 0:
            raise DataValueError(f"shelter {self.node_id} must have demand 0")
        if self.node_type is NodeType.TRANSIT and (self.demand or self.capacity):
            raise DataValueError(f"transit node {self.node_id} must have zero demand and capacity")
        if self.inequity_index not in (0, 1):
            raise DataValueError(f"node {self.node_id}: inequity_index must be 0 or 1")


@dataclass(frozen=True)
class Link:
    link_id: str
    from_node_id: str
    to_node_id: str
    travel_time: float

    def __post_init__(self):
        if not self.travel_time > 0:
            raise DataValueError(f"link {self.link_id}: travel_time must be positive")
        # fixed-point minutes, 0.1 resolution
        object.__setattr__(self, "travel_time", to_ticks(self.travel_time) / TICKS_PER_MINUTE)
        if self.travel_time <= 0:
            raise DataValueError(f"link {self.link_id}: travel_time rounds to zero")

    @property
    def ticks(self) -> int:
        return to_ticks(self.travel_time)


@dataclass(frozen=True)
class Zone:
    zone_id: str
    epc_flag: int = 0
    population: int = 0
    member_nodes: frozenset = frozenset()


@dataclass(frozen=True)
class Path:
    """A directed path; ``total_time`` is ``inf`` when the target is unreachable."""

    links: tuple[str, ...]
    total_time: float

    @property
    def reachable(self) -> bool:
        return math.isfinite(self.total_time)


UNREACHABLE = Path((), math.inf)


class Network:
    """Directed graph G = (V, E) with zones; immutable after construction."""

    def __init__(self, nodes: Iterable[Node], links: Iterable[Link], zones: Iterable[Zone] = ()):
        self.nodes: dict[str, Node] = {}
        for node in nodes:
            if node.node_id in self.nodes:
                raise DataValueError(f"duplicate node_id {node.node_id}")
            self.nodes[node.node_id] = node
        self.links: dict[str, Link] = {}
        for link in links:
            if link.link_id in self.links:
                raise DataValueError(f"duplicate link_id {link.link_id}")
            for end in (link.from_node_id, link.to_node_id):
                if end not in self.nodes:
                    raise ReferentialError(f"link {link.link_id} references unknown node {end!r}")
            self.links[link.link_id] = link

        members: dict[str, set[str]] = {}
        for node in self.nodes.values():
            members.setdefault(node.zone_id, set()).add(node.node_id)
        self.zones: dict[str, Zone] = {}
        for zone in zones:
            self.zones[zone.zone_id] = Zone(
                zone.zone_id, zone.epc_flag, zone.population,
                frozenset(members.get(zone.zone_id, ())),
            )
        if self.zones:
            for node in self.nodes.values():
                zone = self.zones.get(node.zone_id)
                if zone is None:
                    raise ReferentialError(f"node {node.node_id} references unknown zone {node.zone_id!r}")
                if zone.epc_flag != node.inequity_index:
                    raise DataValueError(
                        f"node {node.node_id}: inequity_index {node.inequity_index} "
                        f"disagrees with zone {zone.zone_id} epc_flag {zone.epc_flag}"
                    )

        self.adjacency: dict[str, tuple[str, ...]] = {}
        incoming: dict[str, list[str]] = {n: [] for n in self.nodes}
        outgoing: dict[str, list[str]] = {n: [] for n in self.nodes}
        for link in self.links.values():
            outgoing[link.from_node_id].append(link.link_id)
            incoming[link.to_node_id].append(link.link_id)
        for node_id, out in outgoing.items():
            self.adjacency[node_id] = tuple(sorted(out, key=id_key))
        self.incoming = {n: tuple(sorted(v, key=id_key)) for n, v in incoming.items()}
        self._tree_cache: dict[str, tuple[dict[str, int], dict[str, str]]] = {}

    # -- queries -----------------------------------------------------------

    def node_ids(self, node_type: NodeType | None = None) -> list[str]:
        ids = [n.node_id for n in self.nodes.values() if node_type is None or n.node_type is node_type]
        return sorted(ids, key=id_key)

    @property
    def origins(self) -> list[str]:
        return self.node_ids(NodeType.ORIGIN)

    @property
    def shelters(self) -> list[str]:
        return self.node_ids(NodeType.SHELTER)

    def unreachable_nodes(self) -> list[str]:
        """Origins and shelters with no incoming link from another node."""
        bad = []
        for node_id in self.node_ids():
            if self.nodes[node_id].node_type is NodeType.TRANSIT:
                continue
            if not any(self.links[l].from_node_id != node_id for l in self.incoming[node_id]):
                bad.append(node_id)
        return bad

    def _tree(self, source: str) -> tuple[dict[str, int], dict[str, str]]:
        cached = self._tree_cache.get(source)
        if cached is not None:
            return cached
        dist = {source: 0}
        pred: dict[str, str] = {}
        done: set[str] = set()
        heap = [(0, id_key(source), source)]
        while heap:
            d, _, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for link_id in self.adjacency[u]:
                link = self.links[link_id]
                v = link.to_node_id
                nd = d + link.ticks
                # strict improvement only, so the first (lowest-key) predecessor wins ties
                if v not in done and nd < dist.get(v, math.inf):
                    dist[v] = nd
                    pred[v] = link_id
                    heapq.heappush(heap, (nd, id_key(v), v))
        self._tree_cache[source] = (dist, pred)
        return dist, pred

    def distance_ticks(self, source: str, target: str) -> float:
        return self._tree(source)[0].get(target, math.inf)

    def distances_from(self, source: str) -> dict[str, int]:
        return dict(self._tree(source)[0])

    def shortest_path(self, source: str, target: str) -> Path:
        for node_id in (source, target):
            if node_id not in self.nodes:
                raise ReferentialError(f"unknown node {node_id!r}")
        dist, pred = self._tree(source)
        if target not in dist:
            return UNREACHABLE
        links = []
        cur = target
        while cur != source:
            link_id = pred[cur]
            links.append(link_id)
            cur = self.links[link_id].from_node_id
        return Path(tuple(reversed(links)), to_minutes(dist[target]))

    def without_links(self, link_ids: Iterable[str]) -> "Network":
        drop = set(link_ids)
        return Network(
            self.nodes.values(),
            (l for l in self.links.values() if l.link_id not in drop),
            self.zones.values(),
        )


def shortest_path(network: Network, source: str, target: str) -> Path:
    """Minimum-time directed path from ``source`` to ``target`` (Dijkstra)."""
    return network.shortest_path(source, target)


def _nearest(network: Network, source: str, candidates: Iterable[str]) -> str | None:
    if source not in network.nodes:
        raise ReferentialError(f"unknown node {source!r}")
    dist = network._tree(source)[0]
    best = None
    for node_id in candidates:
        if node_id not in dist:
            continue
        key = (dist[node_id], id_key(node_id))
        if best is None or key < best[0]:
            best = (key, node_id)
    return None if best is None else best[1]


def nearest_with_demand(network: Network, state, source: str) -> str | None:
    """Closest node (by shortest-path time) whose remaining demand is positive."""
    return _nearest(network, source, (n for n, d in state.node_demand.items() if d > 0))


def nearest_with_capacity(network: Network, state, source: str) -> str | None:
    """Closest shelter whose remaining capacity is positive."""
    return _nearest(network, source, (n for n, c in state.shelter_remaining.items() if c > 0))


# -- CSV I/O ---------------------------------------------------------------

def _read_rows(path: pathlib.Path | str, required: tuple[str, ...], kind: str) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in required:
            if column not in header:
                raise SchemaError(f"{kind} file {path}: missing column {column!r}")
        return [row for row in reader]


def _int_field(row: Mapping[str, str], column: str, where: str) -> int:
    raw = (row.get(column) or "").strip()
    try:
        value = float(raw)
    except ValueError:
        raise DataValueError(f"{where}: {column}={raw!r} is not a number") from None
    if value != int(value):
        raise DataValueError(f"{where}: {column}={raw!r} is not an integer")
    if value < 0:
        raise DataValueError(f"{where}: {column} must be nonnegative, got {raw}")
    return int(value)


def _float_field(row: Mapping[str, str], column: str, where: str) -> float:
    raw = (row.get(column) or "").strip()
    try:
        return float(raw)
    except ValueError:
        raise DataValueError(f"{where}: {column}={raw!r} is not a number") from None


def load_network(nodes_source, links_source, zones_source) -> Network:
    """Read and validate a network from node, link and zone CSV files."""
    zones = []
    for row in _read_rows(zones_source, ZONE_COLUMNS, "zones"):
        zone_id = row["zone_id"].strip()
        where = f"zone {zone_id}"
        zones.append(Zone(zone_id, _int_field(row, "epc_flag", where), _int_field(row, "population", where)))

    nodes = []
    for row in _read_rows(nodes_source, NODE_COLUMNS, "nodes"):
        node_id = row["node_id"].strip()
        where = f"node {node_id}"
        nodes.append(Node(
            node_id=node_id,
            x_coord=_float_field(row, "x_coord", where),
            y_coord=_float_field(row, "y_coord", where),
            node_type=NodeType.parse(row["node_type"]),
            demand=_int_field(row, "demand", where),
            capacity=_int_field(row, "capacity", where),
            zone_id=row["zone_id"].strip(),
            inequity_index=_int_field(row, "inequity_index", where),
            name=row["name"],
        ))

    links = []
    for row in _read_rows(links_source, LINK_COLUMNS, "links"):
        link_id = row["link_id"].strip()
        travel_time = _float_field(row, "travel_time", f"link {link_id}")
        if travel_time <= 0:
            raise DataValueError(f"link {link_id}: travel_time must be positive, got {travel_time}")
        links.append(Link(link_id, row["from_node_id"].strip(), row["to_node_id"].strip(), travel_time))

    network = Network(nodes, links, zones)
    for node_id in network.unreachable_nodes():
        warnings.warn(f"node {node_id} cannot be reached from any other node", NetworkWarning, stacklevel=2)
    return network


def _fmt(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def save_network(network: Network, directory: pathlib.Path | str) -> tuple[pathlib.Path, ...]:
    """Write ``nodes.csv``, ``links.csv`` and ``zones.csv`` into ``directory``."""
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = (directory / "nodes.csv", directory / "links.csv", directory / "zones.csv")
    with open(paths[0], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(NODE_COLUMNS)
        for n in network.nodes.values():
            writer.writerow([n.name, n.node_id, _fmt(n.x_coord), _fmt(n.y_coord), n.node_type.value,
                             n.demand, n.capacity, n.inequity_index, n.zone_id])
    with open(paths[1], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LINK_COLUMNS)
        for l in network.links.values():
            writer.writerow([l.link_id, l.from_node_id, l.to_node_id, _fmt(l.travel_time)])
    with open(paths[2], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ZONE_COLUMNS)
        for z in network.zones.values():
            writer.writerow([z.zone_id, z.epc_flag, z.population])
    return paths
