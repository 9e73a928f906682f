"""Decision-epoch wrapper around the simulator for learning agents.

The agent is consulted only when some bus is idle at its destination and has
a real choice. Intervals in which no bus decides (or every deciding bus has
a single admissible move) are simulated straight through, and their rewards
are summed into the reward of the preceding decision.

Actions are slot indices: slots ``0..K-1`` are the candidate nodes (origins
then shelters); slot ``K`` means "stay where you are" and is only offered
when the bus's own node is not a candidate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from busevac.equity import community_zones
from busevac.network import Network, id_key
from busevac.scenario import Scenario
from busevac.simulator import (SimConfig, SimState, candidate_nodes, decision_masks, layout_hash,
                               observation_scale, observe, reset, step)


@dataclass
class Decision:
    obs: np.ndarray
    slot_mask: np.ndarray   # (B, K + 1) bool
    deciding: np.ndarray    # (B,) bool


class EvacEnv:
    def __init__(self, network: Network, scenario: Scenario, config: SimConfig,
                 reward_scale: float | None = None, features: str = "basic"):
        self.features = features
        self.network = network
        self.scenario = scenario
        self.config = config
        self.zones = community_zones(network)
        self.universe = candidate_nodes(network)
        self.slot_of = {n: i for i, n in enumerate(self.universe)}
        self.hold_slot = len(self.universe)
        self.state: SimState = reset(network, scenario, config)
        self.bus_ids = sorted(self.state.buses, key=id_key)
        if reward_scale is None:
            reward_scale = 1.0 / max(1.0, self.state.total_demand * config.delta_t)
        self.reward_scale = reward_scale
        self._masks: dict[str, tuple[str, ...]] = {}
        self.lead_in_reward = 0.0

    @property
    def n_buses(self) -> int:
        return len(self.bus_ids)

    @property
    def n_slots(self) -> int:
        return len(self.universe) + 1

    @property
    def obs_dim(self) -> int:
        return observe(self.state, self.network, self.features).shape[0]

    def layout_hash(self) -> str:
        return layout_hash(self.state, self.network, self.features)

    def observation_scale(self) -> np.ndarray:
        initial = reset(self.network, self.scenario, self.config)
        return observation_scale(initial, self.network, self.features)

    def slot_mask_for(self, state: SimState, masks) -> tuple[np.ndarray, np.ndarray]:
        slot_mask = np.zeros((self.n_buses, self.n_slots), dtype=bool)
        deciding = np.zeros(self.n_buses, dtype=bool)
        for row, bus_id in enumerate(self.bus_ids):
            if bus_id not in masks:
                continue
            deciding[row] = True
            here = state.buses[bus_id].to_node
            for node in masks[bus_id]:
                slot_mask[row, self.slot_of.get(node, self.hold_slot)] = True
            if here not in self.slot_of:
                slot_mask[row, self.hold_slot] = True
        return slot_mask, deciding

    def slot_for(self, bus_id: str, node: str) -> int:
        return self.slot_of.get(node, self.hold_slot)

    def node_for(self, bus_id: str, slot: int) -> str:
        if slot == self.hold_slot:
            return self.state.buses[bus_id].to_node
        return self.universe[slot]

    def _advance_to_decision(self) -> tuple[float, bool]:
        """Step with no actions until a real choice is pending. Returns (raw reward, done)."""
        total = 0.0
        done = self.state.is_terminal()
        while not done:
            masks = decision_masks(self.state)
            if any(len(m) > 1 for m in masks.values()):
                break
            self.state, reward, done = step(self.state, {}, self.network, self.config, self.zones)
            total += reward
        self._masks = {} if done else decision_masks(self.state)
        return total, done

    def current(self) -> Decision:
        slot_mask, deciding = self.slot_mask_for(self.state, self._masks)
        return Decision(observe(self.state, self.network, self.features), slot_mask, deciding)

    def reset(self) -> tuple[Decision, bool]:
        """Start an episode. The (scaled) reward of the steps simulated before the
        first decision does not depend on the agent and is kept in ``lead_in_reward``."""
        self.state = reset(self.network, self.scenario, self.config)
        reward, done = self._advance_to_decision()
        self.lead_in_reward = reward * self.reward_scale
        return self.current(), done

    def step(self, slots) -> tuple[Decision, float, bool]:
        """Apply one slot per deciding bus; returns (next decision, scaled reward, done)."""
        actions = {}
        for row, bus_id in enumerate(self.bus_ids):
            if bus_id in self._masks:
                actions[bus_id] = self.node_for(bus_id, int(slots[row]))
        self.state, reward, done = step(self.state, actions, self.network, self.config, self.zones)
        if not done:
            extra, done = self._advance_to_decision()
            reward += extra
        else:
            self._masks = {}
        return self.current(), reward * self.reward_scale, done
