"""Seeded grid networks with EPC zones for desk-scale experiments.

Layout: a ``rows x cols`` grid of two-way streets. Shelters sit in the east
column; the west half of the grid is split into EPC zones and the east half
into ordinary zones, so vulnerable communities are the farthest from safety.
Every zone holds a few origin nodes and the whole population is evacuated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from busevac.network import Link, Network, Node, NodeType, Zone
from busevac.scenario import BusPlacement, Scenario, estimate_evacuees


@dataclass(frozen=True)
class SyntheticConfig:
    rows: int = 4
    cols: int = 5
    n_buses: int = 3
    bus_capacity: int = 20
    n_shelters: int = 3
    origins_per_zone: int = 2
    population: tuple[int, int] = (20, 50)
    travel_time: tuple[int, int] = (3, 10)
    shelter_slack: int = 10


def _zone_of(r: int, c: int, cfg: SyntheticConfig) -> str:
    # four zones: west/east halves split into north/south; the west pair are EPC
    west = c < (cfg.cols - 1) / 2
    north = r < cfg.rows / 2
    return {(True, True): "z1", (True, False): "z2", (False, True): "z3", (False, False): "z4"}[(west, north)]


EPC_ZONES = ("z1", "z2")


def generate(seed: int, cfg: SyntheticConfig = SyntheticConfig()) -> tuple[Network, Scenario]:
    """Network and full-evacuation scenario for ``seed``."""
    rng = np.random.default_rng(seed)
    node_id = {(r, c): str(r * cfg.cols + c + 1) for r in range(cfg.rows) for c in range(cfg.cols)}
    east = [(r, cfg.cols - 1) for r in range(cfg.rows)]
    shelter_cells = {east[i] for i in rng.choice(len(east), size=cfg.n_shelters, replace=False)}

    by_zone: dict[str, list[tuple[int, int]]] = {}
    for cell in node_id:
        if cell not in shelter_cells:
            by_zone.setdefault(_zone_of(*cell, cfg), []).append(cell)
    origin_cells = set()
    for zone_id in sorted(by_zone):
        cells = by_zone[zone_id]
        k = min(cfg.origins_per_zone, len(cells))
        origin_cells.update(cells[i] for i in rng.choice(len(cells), size=k, replace=False))

    zone_pop = {z: int(rng.integers(cfg.population[0], cfg.population[1] + 1)) for z in sorted(by_zone)}
    total = sum(zone_pop.values())
    room = -(-total // cfg.n_shelters) + cfg.shelter_slack

    nodes = []
    for (r, c), nid in node_id.items():
        zone_id = _zone_of(r, c, cfg)
        epc = int(zone_id in EPC_ZONES)
        if (r, c) in shelter_cells:
            kind, cap = NodeType.SHELTER, room
        elif (r, c) in origin_cells:
            kind, cap = NodeType.ORIGIN, 0
        else:
            kind, cap = NodeType.TRANSIT, 0
        nodes.append(Node(nid, float(c), float(r), kind, 0, cap, zone_id, epc, f"node {nid}"))

    links = []
    for (r, c), nid in node_id.items():
        for dr, dc in ((0, 1), (1, 0)):
            other = node_id.get((r + dr, c + dc))
            if other is None:
                continue
            t = float(rng.integers(cfg.travel_time[0], cfg.travel_time[1] + 1))
            links.append(Link(str(len(links) + 1), nid, other, t))
            links.append(Link(str(len(links) + 1), other, nid, t))
    zones = [Zone(z, int(z in EPC_ZONES), zone_pop.get(z, 0)) for z in ("z1", "z2", "z3", "z4")]
    network = Network(nodes, links, zones)

    demands = estimate_evacuees(sorted(zone_pop), network)
    buses = []
    for b in range(cfg.n_buses):
        link = links[int(rng.integers(len(links)))]
        remaining = float(rng.integers(0, int(link.travel_time) + 1))
        buses.append(BusPlacement(f"b{b + 1}", link.link_id, link.from_node_id, link.to_node_id,
                                  remaining, cfg.bus_capacity, link.to_node_id))
    scenario = Scenario(tuple(sorted(zone_pop)), demands, buses, "random", name=f"synthetic-{seed}")
    return network, scenario


def suite(n: int = 30, first_seed: int = 0, cfg: SyntheticConfig = SyntheticConfig()):
    """``n`` consecutive seeded instances."""
    return [generate(first_seed + i, cfg) for i in range(n)]
