"""Scenario construction: impaired zones, evacuee estimates, fleet placement."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from busevac.errors import ContractViolation, ReferentialError, SchemaError
from busevac.network import Network, NetworkWarning, NodeType, id_key

BUS_COLUMNS = ("bus_id", "link_id", "from_node_id", "to_node_id", "time_to_travel", "capacity", "destination")
HAZARD_LABELS = ("wildfire", "landslide", "flood", "earthquake", "random")


@dataclass(frozen=True)
class BusPlacement:
    """Initial position of one bus, one row of the bus table."""

    bus_id: str
    link_id: str
    from_node_id: str
    to_node_id: str
    time_to_travel: float
    capacity: int
    destination: str
    onboard: int = 0


@dataclass
class Scenario:
    impaired_zones: tuple[str, ...]
    origin_demands: dict[str, int]
    bus_placements: list[BusPlacement]
    hazard_label: str = "random"
    disabled_links: tuple[str, ...] = ()
    name: str = ""

    @property
    def total_demand(self) -> int:
        return sum(self.origin_demands.values())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "hazard_label": self.hazard_label,
            "impaired_zones": list(self.impaired_zones),
            "origin_demands": dict(self.origin_demands),
            "disabled_links": list(self.disabled_links),
            "bus_placements": [asdict(b) for b in self.bus_placements],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        return cls(
            impaired_zones=tuple(data.get("impaired_zones", ())),
            origin_demands={str(k): int(v) for k, v in data.get("origin_demands", {}).items()},
            bus_placements=[BusPlacement(**b) for b in data.get("bus_placements", [])],
            hazard_label=data.get("hazard_label", "random"),
            disabled_links=tuple(data.get("disabled_links", ())),
            name=data.get("name", ""),
        )


def save_scenario(scenario: Scenario, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(scenario.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
    return path


def load_scenario(path: Path | str) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def read_bus_placements(path: Path | str) -> list[BusPlacement]:
    """Read a bus table (``bus_id, link_id, ..., destination``)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for column in BUS_COLUMNS:
            if column not in (reader.fieldnames or []):
                raise SchemaError(f"bus file {path}: missing column {column!r}")
        rows = list(reader)
    return [
        BusPlacement(
            bus_id=r["bus_id"].strip(),
            link_id=r["link_id"].strip(),
            from_node_id=r["from_node_id"].strip(),
            to_node_id=r["to_node_id"].strip(),
            time_to_travel=float(r["time_to_travel"]),
            capacity=int(float(r["capacity"])),
            destination=r["destination"].strip(),
            onboard=int(float(r.get("onboard") or 0)),
        )
        for r in rows
    ]


def write_bus_placements(placements, path: Path | str) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(BUS_COLUMNS)
        for b in placements:
            t = b.time_to_travel
            writer.writerow([b.bus_id, b.link_id, b.from_node_id, b.to_node_id,
                             int(t) if float(t).is_integer() else t, b.capacity, b.destination])
    return path


# -- hazard selection and demand -------------------------------------------------

HAZARD_MODES = ("reproduce", "randomized")


@dataclass
class HazardSpec:
    mode: str = "randomized"
    impairment_scale: int = 1
    zone_list: tuple[str, ...] = ()
    zone_weights: dict[str, float] | None = None
    seed: int = 0
    hazard_label: str = "random"
    disable_links: bool = False

    def __post_init__(self):
        self.zone_list = tuple(str(z) for z in self.zone_list)
        if self.mode not in HAZARD_MODES:
            raise ContractViolation(f"hazard mode must be one of {HAZARD_MODES}, got {self.mode!r}")
        if self.hazard_label not in HAZARD_LABELS:
            raise ContractViolation(f"hazard_label must be one of {HAZARD_LABELS}")
        if self.mode == "reproduce" and not self.zone_list:
            raise ContractViolation("reproduce mode needs a nonempty zone_list")
        if self.mode == "randomized" and self.impairment_scale < 1:
            raise ContractViolation("impairment_scale must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "HazardSpec":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["zone_list"] = list(self.zone_list)
        return out


def load_hazard_spec(path: Path | str) -> HazardSpec:
    return HazardSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def select_impaired_zones(spec: HazardSpec, network: Network) -> tuple[str, ...]:
    """Zones hit by the hazard, sorted by id."""
    if spec.mode == "reproduce":
        unknown = [z for z in spec.zone_list if z not in network.zones]
        if unknown:
            raise ReferentialError(f"zone_list references unknown zones {unknown}")
        return tuple(sorted(set(spec.zone_list), key=id_key))
    zone_ids = sorted(network.zones, key=id_key)
    if spec.impairment_scale > len(zone_ids):
        raise ContractViolation(
            f"impairment_scale {spec.impairment_scale} exceeds the {len(zone_ids)} zones")
    p = None
    if spec.zone_weights:
        unknown = [z for z in spec.zone_weights if z not in network.zones]
        if unknown:
            raise ReferentialError(f"zone_weights references unknown zones {unknown}")
        w = np.array([float(spec.zone_weights.get(z, 0.0)) for z in zone_ids])
        if (w < 0).any() or np.count_nonzero(w) < spec.impairment_scale:
            raise ContractViolation("zone_weights must be nonnegative with enough positive entries")
        p = w / w.sum()
    rng = np.random.default_rng(spec.seed)
    picked = rng.choice(len(zone_ids), size=spec.impairment_scale, replace=False, p=p)
    return tuple(sorted((zone_ids[i] for i in picked), key=id_key))


def split_evenly(total: int, node_ids) -> dict[str, int]:
    """Floor share for every node; the remainder goes one each to the lowest ids."""
    ordered = sorted(node_ids, key=id_key)
    if not ordered:
        return {}
    base, extra = divmod(int(total), len(ordered))
    return {n: base + (1 if i < extra else 0) for i, n in enumerate(ordered)}


def estimate_evacuees(zones, network: Network) -> dict[str, int]:
    """Evacuees per origin node: each zone's population spread over its origins."""
    out: dict[str, int] = {}
    for zone_id in zones:
        zone = network.zones.get(zone_id)
        if zone is None:
            raise ReferentialError(f"unknown zone {zone_id!r}")
        origins = [n for n in zone.member_nodes if network.nodes[n].node_type is NodeType.ORIGIN]
        if not origins:
            warnings.warn(f"zone {zone_id} has no origin nodes; skipped", NetworkWarning)
            continue
        out.update(split_evenly(zone.population, origins))
    return dict(sorted(out.items(), key=lambda kv: id_key(kv[0])))


def links_inside(network: Network, zones) -> tuple[str, ...]:
    """Links whose two endpoints both lie in the given zones."""
    zones = set(zones)
    inside = [l.link_id for l in network.links.values()
              if network.nodes[l.from_node_id].zone_id in zones
              and network.nodes[l.to_node_id].zone_id in zones]
    return tuple(sorted(inside, key=id_key))


def routing_network(network: Network, scenario: Scenario) -> Network:
    """The network with the scenario's disabled links removed.

    Links a bus occupies at hazard time are kept so it can finish them.
    """
    if not scenario.disabled_links:
        return network
    occupied = {b.link_id for b in scenario.bus_placements}
    return network.without_links(l for l in scenario.disabled_links if l not in occupied)


@dataclass
class FeasibilityReport:
    reachable: dict[str, bool] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return all(self.reachable.values())

    @property
    def stranded(self) -> list[str]:
        return [n for n, ok in self.reachable.items() if not ok]


def feasibility_report(network: Network, scenario: Scenario) -> FeasibilityReport:
    """Whether each demand node can still reach at least one shelter."""
    net = routing_network(network, scenario)
    shelters = set(net.shelters)
    report = FeasibilityReport()
    for node_id, count in sorted(scenario.origin_demands.items(), key=lambda kv: id_key(kv[0])):
        if count > 0:
            report.reachable[node_id] = bool(shelters & set(net.distances_from(node_id)))
    return report


def build_scenario(spec: HazardSpec, network: Network, placements, name: str = "") -> Scenario:
    """Compose zone selection, evacuee estimation and fleet placement.

    ``placements`` is a sequence of :class:`BusPlacement` (from a bus CSV or
    :func:`busevac.gtfs.snap_to_network`). A placement whose destination is
    empty defaults to the end node of its link.
    """
    zones = select_impaired_zones(spec, network)
    demands = estimate_evacuees(zones, network)
    buses = []
    for p in placements:
        if p.link_id not in network.links:
            raise ReferentialError(f"bus {p.bus_id} placed on unknown link {p.link_id!r}")
        if not p.destination:
            p = replace(p, destination=network.links[p.link_id].to_node_id)
        buses.append(p)
    disabled = links_inside(network, zones) if spec.disable_links else ()
    return Scenario(impaired_zones=zones, origin_demands=demands, bus_placements=buses,
                    hazard_label=spec.hazard_label, disabled_links=disabled, name=name)


def scenario_from_tables(network: Network, placements, name: str = "") -> Scenario:
    """Scenario whose demand is the ``demand`` column of the node table."""
    demands = {n: network.nodes[n].demand for n in network.origins}
    zones = sorted({network.nodes[n].zone_id for n, d in demands.items() if d > 0}, key=id_key)
    return Scenario(impaired_zones=tuple(zones), origin_demands=demands,
                    bus_placements=list(placements), hazard_label="random", name=name)
