"""Command-line entry point: ``busevac <command> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path


from busevac import gtfs, metrics, synthetic
from busevac.errors import ContractViolation, DataError, NumericalError
from busevac.fixtures import six_node_dir
from busevac.network import Network, load_network, save_network
from busevac.policies import POLICY_NAMES, get_policy
from busevac.ppo.train import PpoConfig, PpoPolicy, expected_layout, load_checkpoint, save_checkpoint, train
from busevac.scenario import (HazardSpec, Scenario, build_scenario, feasibility_report, load_hazard_spec,
                              load_scenario, read_bus_placements, routing_network, save_scenario,
                              scenario_from_tables, write_bus_placements)
from busevac.simulator import PENALTY_MODES, TRIP_COLUMNS, SimConfig, replay, run_episode

log = logging.getLogger("busevac")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


# -- shared loading ------------------------------------------------------------------

def _network_dir(args) -> Path:
    return Path(args.network) if args.network else six_node_dir()


def load_network_dir(directory: Path) -> Network:
    return load_network(directory / "nodes.csv", directory / "links.csv", directory / "zones.csv")


def load_case(args) -> tuple[Network, Scenario]:
    """Network plus scenario from ``--network``/``--scenario`` (six-node fixture by default)."""
    directory = _network_dir(args)
    network = load_network_dir(directory)
    if getattr(args, "scenario", None):
        scenario = load_scenario(args.scenario)
    else:
        buses = Path(getattr(args, "buses", None) or directory / "buses.csv")
        scenario = scenario_from_tables(network, read_bus_placements(buses), name=directory.name)
    return network, scenario


def sim_config(args) -> SimConfig:
    return SimConfig(delta_t=args.delta_t, max_steps=args.max_steps,
                     equity_enabled=not args.no_equity, penalty_mode=args.penalty_mode)


def _add_sim_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta-t", type=float, default=1.0, help="minutes per step")
    p.add_argument("--max-steps", type=int, default=1000)
    p.add_argument("--penalty-mode", choices=PENALTY_MODES, default="pointbiserial")
    p.add_argument("--no-equity", action="store_true", help="drop the inequity penalty from rewards")


def _add_case_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--network", help="directory with nodes.csv, links.csv, zones.csv (default: six-node)")
    p.add_argument("--scenario", help="scenario JSON (default: demand column plus buses.csv)")
    p.add_argument("--buses", help="bus placement CSV used when --scenario is absent")


def _seeds(args) -> list[int]:
    if args.seed_list:
        return [int(s) for s in args.seed_list.split(",") if s.strip()]
    return list(range(args.first_seed, args.first_seed + args.episodes))


def _add_seed_options(p: argparse.ArgumentParser, episodes: int) -> None:
    p.add_argument("--episodes", type=int, default=episodes)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--seed-list", help="comma-separated seeds (overrides --episodes)")


def make_policy(spec: str, network: Network, scenario: Scenario, config: SimConfig):
    """``name`` of a baseline or ``ppo:CHECKPOINT``."""
    name, _, path = spec.partition(":")
    if name == "ppo":
        if not path:
            raise UsageError("policy 'ppo' needs a checkpoint: ppo:PATH")
        params, _, _, _ = load_checkpoint(path, expected_layout(network, scenario, config,
                                                                _features_of(path)))
        return PpoPolicy(params, network, scenario, config)
    if name not in POLICY_NAMES:
        raise UsageError(f"unknown policy {spec!r}; valid names: {', '.join(POLICY_NAMES)}")
    return get_policy(name)


def _features_of(path) -> str:
    return json.loads(Path(path).read_text()).get("features", "basic")


def run_strategy(spec: str, cases, config: SimConfig, seeds, aggregation: str) -> metrics.RunReport:
    episodes = []
    for (network, scenario), seed in zip(cases, seeds):
        policy = make_policy(spec, network, scenario, config)
        trace = run_episode(routing_network(network, scenario), scenario, config, policy, seed=seed)
        episodes.append(metrics.episode_result(trace, scenario, seed, aggregation))
    return metrics.RunReport(spec, episodes, aggregation)


# -- commands ---------------------------------------------------------------------

def cmd_run(args) -> int:
    network, scenario = load_case(args)
    config = sim_config(args)
    seeds = _seeds(args)
    report = run_strategy(args.policy, [(network, scenario)] * len(seeds), config, seeds, args.rpb)
    edges = [float(x) for x in args.bin_edges.split(",")] if args.bin_edges else None
    out = metrics.write_report(report, args.out, args.bin_width, edges)
    print(f"{report.strategy}: total evacuation time {report.total_evacuation_time:.1f} "
          f"passenger-min, overall |r_pb| {report.overall_rpb:.4f} over {len(seeds)} episodes -> {out}")
    return EXIT_OK


def _suite_cases(args):
    if args.synthetic:
        return synthetic.suite(args.synthetic, args.synthetic_seed)
    return [load_case(args)]


def cmd_compare(args) -> int:
    strategies = [s for s in args.strategies.split(",") if s]
    if len(strategies) < 2:
        raise UsageError("compare needs at least two strategies")
    config = sim_config(args)
    cases = _suite_cases(args)
    seeds = _seeds(args)
    # every strategy sees the same (case, seed) sequence
    pairs = [(c, s) for c in cases for s in seeds]
    reports = [run_strategy(spec, [c for c, _ in pairs], config, [s for _, s in pairs], args.rpb)
               for spec in strategies]
    rows = metrics.comparison_table(reports)
    path = metrics.write_comparison(rows, Path(args.out) / "comparison.csv")
    for r in rows:
        print(f"{r['strategy']:>24}  time {r['total_evacuation_time']:12.1f}  |r_pb| {r['overall_rpb']:.4f}")
    base = reports[0]
    for other in reports[1:] if len(base.episodes) > 1 else ():
        t = metrics.paired_test([e.passenger_time for e in other.episodes],
                                [e.passenger_time for e in base.episodes])
        print(f"{other.strategy} - {base.strategy}: mean diff {t.mean_difference:.1f}, p = {t.p_value:.3g}")
    with open(Path(args.out) / "scenario_hashes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("episode", "seed", "scenario_hash"))
        for i, e in enumerate(base.episodes):
            w.writerow((i, e.seed, e.scenario_hash))
    print(f"table -> {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    network, scenario = load_case(args)
    config = sim_config(args)
    ppo_cfg = PpoConfig.from_dict(json.loads(Path(args.config).read_text())) if args.config else PpoConfig()
    if args.updates is not None:
        ppo_cfg.updates = args.updates
    if args.seed is not None:
        ppo_cfg.seed = args.seed
    params = optimizer = None
    start = 0
    if args.resume:
        params, _, start, optimizer = load_checkpoint(args.resume)
        if params.layout_hash != expected_layout(network, scenario, config, params.features):
            raise ContractViolation("checkpoint observation layout does not match this network")
    result = train(routing_network(network, scenario), scenario, config, ppo_cfg, params, optimizer, start)
    save_checkpoint(args.out, result.params, ppo_cfg, result.updates, result.optimizer)
    log_path = Path(args.log) if args.log else Path(args.out).with_suffix(".log.csv")
    columns = ("update", "sampled_return", "greedy_return", "best_return", "objective", "clip",
               "value", "entropy", "approx_kl", "clip_fraction", "grad_norm")
    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        w.writerows(result.history)
    print(f"best greedy return {result.best_return:.1f} after {result.updates} updates -> {args.out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    network, scenario = load_case(args)
    script = json.loads(Path(args.script).read_text())
    trace = replay(routing_network(network, scenario), scenario, script, sim_config(args))
    out = Path(args.out) if args.out else None
    rows = [[getattr(t, c) for c in TRIP_COLUMNS] for t in trace.trips]
    if out:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TRIP_COLUMNS)
            w.writerows(rows)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(TRIP_COLUMNS)
        w.writerows(rows)
    print(f"total passenger time {metrics.trip_log_time(trace.trips):g}")
    return EXIT_OK


def cmd_gtfs_snapshot(args) -> int:
    feed = gtfs.parse_feed(args.feed)
    snap = gtfs.positions_at(feed, args.weekday, gtfs.parse_time(args.time))
    network = load_network_dir(_network_dir(args))
    placements = gtfs.snap_to_network(snap, network, args.capacity, args.projection)
    write_bus_placements(placements, args.out)
    print(f"{len(placements)} buses placed -> {args.out}")
    return EXIT_OK


def cmd_gen_scenario(args) -> int:
    if args.synthetic is not None:
        network, scenario = synthetic.generate(args.synthetic)
        if args.network_out:
            save_network(network, args.network_out)
            write_bus_placements(scenario.bus_placements, Path(args.network_out) / "buses.csv")
    else:
        directory = _network_dir(args)
        network = load_network_dir(directory)
        spec = load_hazard_spec(args.hazard) if args.hazard else HazardSpec(
            mode="reproduce", zone_list=tuple(sorted(network.zones)))
        if args.gtfs:
            feed = gtfs.parse_feed(args.gtfs)
            snap = gtfs.positions_at(feed, args.weekday, gtfs.parse_time(args.time))
            placements = gtfs.snap_to_network(snap, network, args.capacity)
        else:
            placements = read_bus_placements(args.buses or directory / "buses.csv")
        scenario = build_scenario(spec, network, placements, name=args.name)
    save_scenario(scenario, args.out)
    report = feasibility_report(network, scenario)
    status = "feasible" if report.feasible else f"INFEASIBLE (stranded: {', '.join(report.stranded)})"
    print(f"{len(scenario.bus_placements)} buses, {scenario.total_demand} evacuees in "
          f"{len(scenario.impaired_zones)} zones, {status} -> {args.out}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="busevac", description="Bus evacuation simulation and dispatch experiments.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run seeded episodes of one policy")
    _add_case_options(p)
    _add_sim_options(p)
    _add_seed_options(p, episodes=1)
    p.add_argument("--policy", default="greedy", help=f"one of {', '.join(POLICY_NAMES)} (ppo:CHECKPOINT)")
    p.add_argument("--out", default="runs/run")
    p.add_argument("--bin-width", type=float, default=metrics.DEFAULT_BIN_WIDTH)
    p.add_argument("--bin-edges", help="comma-separated histogram edges (overrides --bin-width)")
    p.add_argument("--rpb", choices=metrics.RPB_AGGREGATIONS, default="weighted")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="compare strategies on shared scenarios and seeds")
    _add_case_options(p)
    _add_sim_options(p)
    _add_seed_options(p, episodes=1)
    p.add_argument("--strategies", required=True, help="comma-separated policy names")
    p.add_argument("--synthetic", type=int, default=0, help="use N seeded synthetic networks")
    p.add_argument("--synthetic-seed", type=int, default=0)
    p.add_argument("--out", default="runs/compare")
    p.add_argument("--rpb", choices=metrics.RPB_AGGREGATIONS, default="weighted")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("train", help="train a PPO dispatcher")
    _add_case_options(p)
    _add_sim_options(p)
    p.add_argument("--config", help="PPO config JSON")
    p.add_argument("--updates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", required=True, help="checkpoint path (JSON)")
    p.add_argument("--log", help="training log CSV (default: next to the checkpoint)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("replay", help="replay a per-bus destination script and print its trip log")
    _add_case_options(p)
    _add_sim_options(p)
    p.add_argument("--script", required=True, help='JSON such as {"b1": ["o1", "d1"]}')
    p.add_argument("--out", help="trip log CSV (default: stdout)")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("gtfs-snapshot", help="scheduled bus positions snapped onto the network")
    p.add_argument("--feed", required=True)
    p.add_argument("--network")
    p.add_argument("--weekday", default="monday")
    p.add_argument("--time", required=True, help="HH:MM:SS (may exceed 24:00:00)")
    p.add_argument("--capacity", type=int, default=gtfs.DEFAULT_CAPACITY)
    p.add_argument("--projection", choices=("equirectangular", "none"), default="equirectangular")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gtfs_snapshot)

    p = sub.add_parser("gen-scenario", help="build a scenario from a hazard spec, or a synthetic case")
    p.add_argument("--network")
    p.add_argument("--hazard", help="hazard spec JSON (default: every zone impaired)")
    p.add_argument("--buses", help="bus placement CSV")
    p.add_argument("--gtfs", help="GTFS feed directory to place buses from instead")
    p.add_argument("--weekday", default="monday")
    p.add_argument("--time", default="08:00:00")
    p.add_argument("--capacity", type=int, default=gtfs.DEFAULT_CAPACITY)
    p.add_argument("--synthetic", type=int, help="generate synthetic network SEED instead")
    p.add_argument("--network-out", help="directory for the synthetic network's CSV files")
    p.add_argument("--name", default="")
    p.add_argument("--out", required=True, help="scenario JSON path")
    p.set_defaults(func=cmd_gen_scenario)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"busevac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"busevac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"busevac: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ContractViolation as exc:
        print(f"busevac: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"busevac: numerical failure: {exc}", file=sys.stderr)
        snapshot = getattr(exc, "snapshot", None)
        if snapshot:
            print(json.dumps(snapshot, default=str), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
