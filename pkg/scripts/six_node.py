"""Six-node case: exhaustive optimum, baselines, and a trained PPO agent."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from busevac.experiments import SIX_NODE_PPO, SIX_NODE_SIM, six_node_agent
from busevac.fixtures import six_node_network, six_node_scenario
from busevac.policies import POLICIES, get_policy
from busevac.ppo.train import save_checkpoint
from busevac.simulator import run_episode

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from oracles import six_node_optimum  # noqa: E402


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=SIX_NODE_PPO.seed)
    p.add_argument("--updates", type=int, default=SIX_NODE_PPO.updates)
    p.add_argument("--checkpoint", help="where to save the trained weights")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    net, sc = six_node_network(), six_node_scenario()

    cost, plan = six_node_optimum(net, sc, horizon=SIX_NODE_SIM.max_steps, epc_penalty=True)
    print(f"exhaustive optimum: reward {-cost:g}")
    target = {}
    for t, moves in plan:
        # holds repeat the previous target; show changes only
        changes = [(i, node) for i, node in moves if target.get(i) != node]
        target.update(moves)
        if changes:
            print(f"  t={t:3d}  " + ", ".join(f"b{i + 1}->{node}" for i, node in changes))
    for name in POLICIES:
        trace = run_episode(net, sc, SIX_NODE_SIM, get_policy(name), seed=0)
        print(f"{name:>8}: reward {trace.total_reward:g}")

    config = dataclasses.replace(SIX_NODE_PPO, seed=args.seed, updates=args.updates)
    result, trace = six_node_agent(config)
    print(f"     ppo: reward {trace.total_reward:g} after {result.updates} updates")
    for t in trace.trips:
        print(f"  {t.bus_id} {t.origin}->{t.destination} trip {t.trip_time:g} wait {t.waiting_time:g} "
              f"x{t.passengers}")
    if args.checkpoint:
        save_checkpoint(args.checkpoint, result.params, config, result.updates, result.optimizer)


if __name__ == "__main__":
    main()
