"""Experiment drivers shared by the runner scripts and the acceptance suite."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from busevac.fixtures import six_node_network, six_node_scenario
from busevac.metrics import PairedTest, paired_test
from busevac.policies import get_policy
from busevac.ppo.train import PpoConfig, PpoPolicy, train
from busevac.simulator import SimConfig, run_episode
from busevac.synthetic import suite

log = logging.getLogger(__name__)

# settings used for the six-node agent
SIX_NODE_SIM = SimConfig(max_steps=100, penalty_mode="epc_waiting")
SIX_NODE_PPO = PpoConfig(learning_rate=1e-3, updates=200, seed=0)

# settings used for the synthetic equity/efficiency comparison
SUITE_SIM = SimConfig(max_steps=600)
SUITE_PPO = PpoConfig(updates=60, learning_rate=1e-4, entropy_coef=0.01, patience=None,
                      observation="distances", warm_start="greedy")


def six_node_agent(config: PpoConfig = SIX_NODE_PPO, sim: SimConfig = SIX_NODE_SIM):
    """Train on the six-node case; return (train result, greedy episode trace)."""
    net, sc = six_node_network(), six_node_scenario()
    result = train(net, sc, sim, config)
    trace = run_episode(net, sc, sim, PpoPolicy(result.params, net, sc, sim))
    return result, trace


@dataclass
class BaselineComparison:
    times: dict[str, np.ndarray]
    tests: dict[tuple[str, str], PairedTest] = field(default_factory=dict)


def compare_baselines(n_networks: int = 30, episodes: int = 5,
                      names=("pi1", "pi2", "rule1", "rule2", "greedy"),
                      sim: SimConfig = SUITE_SIM) -> BaselineComparison:
    """Mean passenger time per network for each policy, plus paired tests.

    Stochastic policies are averaged over ``episodes`` seeds per network.
    """
    times = {n: np.zeros(n_networks) for n in names}
    for i, (net, sc) in enumerate(suite(n_networks)):
        for name in names:
            runs = episodes if name in ("pi1", "pi2") else 1
            policy = get_policy(name)
            times[name][i] = np.mean([run_episode(net, sc, sim, policy, seed=s).final.passenger_time
                                      for s in range(runs)])
    out = BaselineComparison(times)
    for a in names:
        for b in names:
            if a != b:
                out.tests[a, b] = paired_test(times[a], times[b])
    return out


@dataclass
class EquityComparison:
    equity: np.ndarray       # (networks, 2): passenger time, overall |r_pb|
    efficiency: np.ndarray
    seconds: float

    @property
    def rpb_gain(self) -> float:
        return float(self.efficiency[:, 1].mean() - self.equity[:, 1].mean())

    @property
    def time_ratio(self) -> float:
        return float(self.equity[:, 0].mean() / self.efficiency[:, 0].mean())


def compare_equity(n_networks: int = 30, config: PpoConfig = SUITE_PPO,
                   sim: SimConfig = SUITE_SIM) -> EquityComparison:
    """Train an equity-aware and an efficiency-only agent on each synthetic network."""
    start = time.perf_counter()
    rows = {True: [], False: []}
    for i, (net, sc) in enumerate(suite(n_networks)):
        for equity in (True, False):
            cfg = replace(sim, equity_enabled=equity)
            result = train(net, sc, cfg, replace(config, seed=i))
            final = run_episode(net, sc, cfg, PpoPolicy(result.params, net, sc, cfg)).final
            rows[equity].append((final.passenger_time, final.overall_rpb))
        log.info("network %d: equity %s efficiency %s", i, rows[True][-1], rows[False][-1])
    return EquityComparison(np.array(rows[True]), np.array(rows[False]), time.perf_counter() - start)
