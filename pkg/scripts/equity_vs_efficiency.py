"""Equity-aware vs efficiency-only PPO agents on the synthetic suite."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging

from busevac.experiments import SUITE_PPO, compare_equity


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--networks", type=int, default=30)
    p.add_argument("--updates", type=int, default=SUITE_PPO.updates)
    p.add_argument("--out", default=None, help="optional JSON summary path")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    res = compare_equity(args.networks, dataclasses.replace(SUITE_PPO, updates=args.updates))
    summary = {
        "equity_time": float(res.equity[:, 0].mean()), "equity_rpb": float(res.equity[:, 1].mean()),
        "efficiency_time": float(res.efficiency[:, 0].mean()),
        "efficiency_rpb": float(res.efficiency[:, 1].mean()),
        "rpb_gain": res.rpb_gain, "time_ratio": res.time_ratio, "seconds": res.seconds,
    }
    print(json.dumps(summary, indent=2))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(summary, fh, indent=2)


if __name__ == "__main__":
    main()
