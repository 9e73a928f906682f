"""Point-biserial equity index and the inequity penalty built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from busevac.errors import ContractViolation
from busevac.network import Network, NodeType, id_key


@dataclass(frozen=True)
class ZoneDemandSnapshot:
    """Per-zone evacuee demand paired with the zone's EPC flag."""

    demands: tuple[float, ...]
    epc_flags: tuple[int, ...]
    zone_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.demands) != len(self.epc_flags):
            raise ContractViolation("demands and epc_flags differ in length")
        if any(d < 0 for d in self.demands):
            raise ContractViolation("zone demand must be nonnegative")

    @classmethod
    def of(cls, demands: Sequence[float], epc_flags: Sequence[int]) -> "ZoneDemandSnapshot":
        return cls(tuple(demands), tuple(int(x) for x in epc_flags))


def community_zones(network: Network) -> list[str]:
    """Zones that hold at least one origin node; these enter the equity index."""
    keep = []
    for zone_id in sorted(network.zones, key=id_key):
        members = network.zones[zone_id].member_nodes
        if any(network.nodes[n].node_type is NodeType.ORIGIN for n in members):
            keep.append(zone_id)
    return keep


def zone_snapshot(network: Network, node_demand: Mapping[str, int],
                  zones: Sequence[str] | None = None) -> ZoneDemandSnapshot:
    """Aggregate remaining node demand to zones (lambda_i = sum over member nodes)."""
    zones = community_zones(network) if zones is None else zones
    demands = []
    flags = []
    for zone_id in zones:
        zone = network.zones[zone_id]
        demands.append(sum(node_demand.get(n, 0) for n in zone.member_nodes))
        flags.append(zone.epc_flag)
    return ZoneDemandSnapshot(tuple(demands), tuple(flags), tuple(zones))


def point_biserial(snapshot: ZoneDemandSnapshot) -> float:
    """Point-biserial correlation between zone demand and EPC designation.

    Uses the population standard deviation over all zones, which makes the
    result identical to the Pearson correlation of (demand, flag). Returns 0
    when the demand has no spread or one of the two groups is empty.
    """
    if not snapshot.demands:
        raise ContractViolation("snapshot must hold at least one zone")
    lam = np.asarray(snapshot.demands, dtype=float)
    flag = np.asarray(snapshot.epc_flags, dtype=int) == 1
    n = lam.size
    n_e = int(flag.sum())
    n_ne = n - n_e
    s_n = float(lam.std())
    if n_e == 0 or n_ne == 0 or s_n == 0.0:
        return 0.0
    r = (lam[flag].mean() - lam[~flag].mean()) / s_n * math.sqrt(n_e * n_ne / n**2)
    return float(min(1.0, max(-1.0, r)))


def inequity_penalty(snapshot: ZoneDemandSnapshot, step_cost: float) -> float:
    """J = |r_pb| * T for a nonnegative step cost T."""
    if step_cost < 0:
        raise ContractViolation(f"step_cost must be nonnegative, got {step_cost}")
    return abs(point_biserial(snapshot)) * step_cost
