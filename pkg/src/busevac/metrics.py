"""Episode metrics, run reports, histograms and paired strategy comparisons."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from busevac.errors import ContractViolation
from busevac.scenario import HAZARD_LABELS, Scenario
from busevac.simulator import TRIP_COLUMNS, EpisodeTrace, TripRecord

RPB_AGGREGATIONS = ("weighted", "mean", "final")
DEFAULT_BIN_WIDTH = 5.0


def scenario_hash(scenario: Scenario) -> str:
    blob = json.dumps(scenario.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def trip_log_time(trips) -> float:
    """Passenger-minutes recomputed from delivered trips alone."""
    return float(sum(t.passengers * (t.trip_time + t.waiting_time) for t in trips))


def overall_rpb(trace: EpisodeTrace, aggregation: str = "weighted") -> float:
    """|r_pb| over an episode.

    ``weighted``: per-step |r_pb| averaged with step cost as weight (default).
    ``mean``: plain average over steps. ``final``: the value on the last step.
    """
    if aggregation not in RPB_AGGREGATIONS:
        raise ContractViolation(f"aggregation must be one of {RPB_AGGREGATIONS}")
    r = np.array([abs(rec.get("r_pb", 0.0)) for rec in trace.records])
    if r.size == 0:
        return 0.0
    if aggregation == "final":
        return float(r[-1])
    if aggregation == "mean":
        return float(r.mean())
    w = np.array([rec.get("step_cost", 0.0) for rec in trace.records])
    return float((r * w).sum() / w.sum()) if w.sum() > 0 else 0.0


def per_evacuee(trips, attribute: str) -> np.ndarray:
    """One entry per delivered evacuee (trip attribute repeated by head count)."""
    values = [getattr(t, attribute) for t in trips]
    counts = [t.passengers for t in trips]
    return np.repeat(np.asarray(values, dtype=float), counts) if values else np.zeros(0)


def histogram(values, bin_width: float = DEFAULT_BIN_WIDTH, edges=None) -> tuple[np.ndarray, np.ndarray]:
    """Counts over ``edges`` (default: ``bin_width`` bins from 0 past the maximum)."""
    values = np.asarray(values, dtype=float)
    if edges is None:
        if not bin_width > 0:
            raise ContractViolation("bin_width must be positive")
        top = float(values.max()) if values.size else 0.0
        n_bins = int(np.floor(top / bin_width)) + 1 if values.size else 0
        edges = np.arange(n_bins + 1) * bin_width
    edges = np.asarray(edges, dtype=float)
    if edges.size < 2:
        return edges, np.zeros(0, dtype=int)
    counts, _ = np.histogram(values, bins=edges)
    return edges, counts


@dataclass
class EpisodeResult:
    seed: int
    scenario_hash: str
    hazard_label: str
    passenger_time: float
    trip_log_time: float
    overall_rpb: float
    evacuated: int
    unevacuated: int
    clearance_time: float
    trips: list[TripRecord] = field(default_factory=list)


def episode_result(trace: EpisodeTrace, scenario: Scenario, seed: int,
                   aggregation: str = "weighted") -> EpisodeResult:
    final = trace.final
    unevacuated = final.waiting + final.onboard if final is not None else 0
    return EpisodeResult(
        seed=seed, scenario_hash=scenario_hash(scenario), hazard_label=scenario.hazard_label,
        passenger_time=float(final.passenger_time) if final is not None else 0.0,
        trip_log_time=trip_log_time(trace.trips),
        overall_rpb=overall_rpb(trace, aggregation),
        evacuated=final.evacuated if final is not None else 0,
        unevacuated=unevacuated,
        clearance_time=final.clock_minutes if final is not None else 0.0,
        trips=list(trace.trips),
    )


@dataclass
class RunReport:
    strategy: str
    episodes: list[EpisodeResult]
    aggregation: str = "weighted"

    @property
    def seeds(self) -> list[int]:
        return [e.seed for e in self.episodes]

    @property
    def total_evacuation_time(self) -> float:
        """Mean passenger-minutes per episode."""
        return float(np.mean([e.passenger_time for e in self.episodes])) if self.episodes else 0.0

    @property
    def overall_rpb(self) -> float:
        return float(np.mean([e.overall_rpb for e in self.episodes])) if self.episodes else 0.0

    def rpb_by_hazard(self) -> dict[str, float]:
        out = {}
        for label in HAZARD_LABELS:
            vals = [e.overall_rpb for e in self.episodes if e.hazard_label == label]
            if vals:
                out[label] = float(np.mean(vals))
        return out

    @property
    def trips(self) -> list[TripRecord]:
        return [t for e in self.episodes for t in e.trips]

    def travel_times(self) -> np.ndarray:
        return per_evacuee(self.trips, "trip_time")

    def waiting_times(self) -> np.ndarray:
        return per_evacuee(self.trips, "waiting_time")

    def summary(self) -> dict:
        return {
            "strategy": self.strategy,
            "episodes": len(self.episodes),
            "seeds": self.seeds,
            "total_evacuation_time": self.total_evacuation_time,
            "overall_rpb": self.overall_rpb,
            "rpb_aggregation": self.aggregation,
            "rpb_by_hazard": self.rpb_by_hazard(),
            "evacuated": int(sum(e.evacuated for e in self.episodes)),
            "unevacuated": int(sum(e.unevacuated for e in self.episodes)),
            "per_episode": [{k: v for k, v in asdict(e).items() if k != "trips"} for e in self.episodes],
        }


def write_report(report: RunReport, out_dir: Path | str, bin_width: float = DEFAULT_BIN_WIDTH,
                 edges=None) -> Path:
    """Write ``report.json``, ``trips.csv`` and two histogram CSVs into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.summary(), indent=2), encoding="utf-8")
    with open(out / "trips.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("seed",) + TRIP_COLUMNS)
        for e in report.episodes:
            for t in e.trips:
                w.writerow([e.seed] + [getattr(t, c) for c in TRIP_COLUMNS])
    for name, values in (("travel_times", report.travel_times()), ("waiting_times", report.waiting_times())):
        bin_edges, counts = histogram(values, bin_width, edges)
        with open(out / f"{name}_hist.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("bin_start", "bin_end", "count"))
            for lo, hi, c in zip(bin_edges[:-1], bin_edges[1:], counts):
                w.writerow((lo, hi, int(c)))
    return out


# -- comparisons ------------------------------------------------------------------

COMPARISON_COLUMNS = ("strategy", "total_evacuation_time", "overall_rpb") + tuple(
    f"rpb_{label}" for label in HAZARD_LABELS)


def comparison_table(reports: list[RunReport]) -> list[dict]:
    """One row per strategy; scenario hashes must line up across strategies."""
    if len(reports) < 2:
        raise ContractViolation("a comparison needs at least two strategies")
    reference = [e.scenario_hash for e in reports[0].episodes]
    for r in reports[1:]:
        if [e.scenario_hash for e in r.episodes] != reference:
            raise ContractViolation(f"strategy {r.strategy} ran on a different scenario sequence")
    rows = []
    for r in reports:
        by_hazard = r.rpb_by_hazard()
        row = {"strategy": r.strategy, "total_evacuation_time": r.total_evacuation_time,
               "overall_rpb": r.overall_rpb}
        for label in HAZARD_LABELS:
            row[f"rpb_{label}"] = by_hazard.get(label, "")
        rows.append(row)
    return rows


def write_comparison(rows: list[dict], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=COMPARISON_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    return path


@dataclass(frozen=True)
class PairedTest:
    mean_difference: float
    statistic: float
    p_value: float


def paired_test(a, b) -> PairedTest:
    """Two-sided paired t-test of ``a`` against ``b`` (mean of a - b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 2:
        raise ContractViolation("paired samples need equal length of at least 2")
    diff = a - b
    if np.all(diff == diff[0]):
        return PairedTest(float(diff[0]), float("inf") if diff[0] else 0.0, 0.0 if diff[0] else 1.0)
    res = stats.ttest_rel(a, b)
    return PairedTest(float(diff.mean()), float(res.statistic), float(res.pvalue))
