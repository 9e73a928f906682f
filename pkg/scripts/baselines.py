"""Baseline dispatchers on the synthetic suite with paired t-tests."""

from __future__ import annotations

import argparse

from busevac.experiments import compare_baselines


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--networks", type=int, default=30)
    p.add_argument("--episodes", type=int, default=5, help="seeds per network for stochastic policies")
    args = p.parse_args()
    res = compare_baselines(args.networks, args.episodes)
    for name, times in res.times.items():
        print(f"{name:>8}: mean passenger time {times.mean():10.1f}")
    for (a, b), t in sorted(res.tests.items()):
        print(f"{a:>8} - {b:<8} mean diff {t.mean_difference:10.1f}  p = {t.p_value:.2e}")


if __name__ == "__main__":
    main()
