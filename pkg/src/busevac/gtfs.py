"""Static GTFS feeds: parsing, scheduled fleet positions, and network snapping.

Times are seconds after midnight of the service day and may exceed 24 h.
Positions between stops are straight-line interpolations in (lat, lon); a bus
whose query time falls on a stop's arrival-departure window sits exactly at
the stop.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date
from enum import IntEnum
from pathlib import Path

from busevac.errors import ContractViolation, DataValueError, ReferentialError, SchemaError
from busevac.network import Network, id_key, to_minutes, to_ticks
from busevac.scenario import BusPlacement

DEFAULT_CAPACITY = 40
MAX_QUERY_TIME = 28 * 3600

REQUIRED = {
    "stops.txt": ("stop_id", "stop_lat", "stop_lon"),
    "trips.txt": ("route_id", "service_id", "trip_id"),
    "stop_times.txt": ("trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"),
}
CALENDAR_COLUMNS = ("service_id", "monday", "tuesday", "wednesday", "thursday", "friday",
                    "saturday", "sunday", "start_date", "end_date")
CALENDAR_DATES_COLUMNS = ("service_id", "date", "exception_type")


class Weekday(IntEnum):
    MONDAY = 0
    TUESDAY = 1
    WEDNESDAY = 2
    THURSDAY = 3
    FRIDAY = 4
    SATURDAY = 5
    SUNDAY = 6

    @classmethod
    def parse(cls, raw) -> "Weekday":
        if isinstance(raw, cls):
            return raw
        text = str(raw).strip().upper()
        for day in cls:
            if day.name == text or day.name[:3] == text:
                return day
        raise ContractViolation(f"unknown weekday {raw!r}")


@dataclass(frozen=True)
class Stop:
    stop_id: str
    lat: float
    lon: float


@dataclass(frozen=True)
class Trip:
    trip_id: str
    route_id: str
    service_id: str


@dataclass(frozen=True)
class StopTime:
    trip_id: str
    stop_sequence: int
    arrival: int
    departure: int
    stop_id: str


@dataclass
class GtfsFeed:
    stops: dict[str, Stop]
    trips: dict[str, Trip]
    stop_times: dict[str, tuple[StopTime, ...]]
    # service_id -> seven booleans, Monday first
    calendar: dict[str, tuple[bool, ...]]
    calendar_dates: dict[str, tuple[tuple[str, int], ...]] = field(default_factory=dict)

    def active(self, service_id: str, weekday: Weekday) -> bool:
        days = self.calendar.get(service_id)
        return bool(days and days[weekday])


@dataclass(frozen=True)
class VehiclePosition:
    trip_id: str
    lat: float
    lon: float
    prev_stop: str
    next_stop: str
    fraction: float
    occupancy: int = 0


@dataclass
class FleetSnapshot:
    weekday: Weekday
    time: int
    vehicles: list[VehiclePosition] = field(default_factory=list)

    def __len__(self):
        return len(self.vehicles)


# -- parsing ----------------------------------------------------------------------

def parse_time(text: str) -> int:
    """``H:MM:SS`` to seconds; hours may exceed 23."""
    parts = text.strip().split(":")
    if len(parts) != 3 or not all(p.isdigit() for p in parts):
        raise ValueError(f"malformed time {text!r}")
    h, m, s = (int(p) for p in parts)
    if m > 59 or s > 59:
        raise ValueError(f"malformed time {text!r}")
    return h * 3600 + m * 60 + s


def format_time(seconds: int) -> str:
    h, rem = divmod(int(seconds), 3600)
    m, s = divmod(rem, 60)
    return f"{h:02d}:{m:02d}:{s:02d}"


def _rows(path: Path, required) -> list[tuple[int, dict[str, str]]]:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in reader.fieldnames or []]
        reader.fieldnames = header
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path.name}: missing columns {missing}")
        # line 1 is the header
        return [(i + 2, {k: (v or "").strip() for k, v in row.items() if k})
                for i, row in enumerate(reader)]


def _fill_missing_times(rows: list[list]) -> None:
    """Interpolate untimed stops evenly between the timed stops around them."""
    timed = [i for i, r in enumerate(rows) if r[2] is not None]
    if not timed or timed[0] != 0 or timed[-1] != len(rows) - 1:
        raise DataValueError(f"trip {rows[0][0]}: first and last stops need times")
    for a, b in zip(timed, timed[1:]):
        for k in range(a + 1, b):
            t = rows[a][3] + (rows[b][2] - rows[a][3]) * (k - a) // (b - a)
            rows[k][2] = rows[k][3] = t


def parse_feed(directory: Path | str) -> GtfsFeed:
    directory = Path(directory)
    for name in REQUIRED:
        if not (directory / name).is_file():
            raise SchemaError(f"GTFS feed {directory}: required file {name} is missing")
    has_calendar = (directory / "calendar.txt").is_file()
    has_dates = (directory / "calendar_dates.txt").is_file()
    if not (has_calendar or has_dates):
        raise SchemaError(f"GTFS feed {directory}: calendar.txt or calendar_dates.txt is required")

    stops = {}
    for line, r in _rows(directory / "stops.txt", REQUIRED["stops.txt"]):
        try:
            stops[r["stop_id"]] = Stop(r["stop_id"], float(r["stop_lat"]), float(r["stop_lon"]))
        except ValueError as exc:
            raise DataValueError(f"stops.txt line {line}: {exc}") from None

    trips = {}
    for _, r in _rows(directory / "trips.txt", REQUIRED["trips.txt"]):
        trips[r["trip_id"]] = Trip(r["trip_id"], r["route_id"], r["service_id"])

    raw: dict[str, list[list]] = {}
    for line, r in _rows(directory / "stop_times.txt", REQUIRED["stop_times.txt"]):
        where = f"stop_times.txt line {line}"
        if r["trip_id"] not in trips:
            raise ReferentialError(f"{where}: unknown trip {r['trip_id']!r}")
        if r["stop_id"] not in stops:
            raise ReferentialError(f"{where}: unknown stop {r['stop_id']!r}")
        try:
            seq = int(r["stop_sequence"])
            arr = parse_time(r["arrival_time"]) if r["arrival_time"] else None
            dep = parse_time(r["departure_time"]) if r["departure_time"] else None
        except ValueError as exc:
            raise DataValueError(f"{where}: {exc}") from None
        arr = dep if arr is None else arr
        dep = arr if dep is None else dep
        if arr is not None and dep < arr:
            raise DataValueError(f"{where}: departure before arrival")
        raw.setdefault(r["trip_id"], []).append([r["trip_id"], seq, arr, dep, r["stop_id"], line])

    stop_times = {}
    for trip_id, rows in raw.items():
        rows.sort(key=lambda x: x[1])
        for prev, cur in zip(rows, rows[1:]):
            if cur[1] == prev[1]:
                raise DataValueError(f"stop_times.txt line {cur[5]}: repeated stop_sequence in trip {trip_id}")
        _fill_missing_times(rows)
        for prev, cur in zip(rows, rows[1:]):
            if cur[2] < prev[3]:
                raise DataValueError(f"stop_times.txt line {cur[5]}: time goes backwards in trip {trip_id}")
        stop_times[trip_id] = tuple(StopTime(t, s, a, d, st) for t, s, a, d, st, _ in rows)

    calendar: dict[str, tuple[bool, ...]] = {}
    if has_calendar:
        for line, r in _rows(directory / "calendar.txt", CALENDAR_COLUMNS[:8]):
            try:
                calendar[r["service_id"]] = tuple(bool(int(r[d])) for d in CALENDAR_COLUMNS[1:8])
            except ValueError:
                raise DataValueError(f"calendar.txt line {line}: weekday flags must be 0 or 1") from None
    dates: dict[str, list[tuple[str, int]]] = {}
    if has_dates:
        for line, r in _rows(directory / "calendar_dates.txt", CALENDAR_DATES_COLUMNS):
            try:
                kind = int(r["exception_type"])
                day = date(int(r["date"][:4]), int(r["date"][4:6]), int(r["date"][6:8]))
            except (ValueError, IndexError):
                raise DataValueError(f"calendar_dates.txt line {line}: bad date or exception_type") from None
            dates.setdefault(r["service_id"], []).append((r["date"], kind))
            # services known only by dated additions run on the weekdays they are added
            if not has_calendar and kind == 1:
                days = list(calendar.get(r["service_id"], (False,) * 7))
                days[day.weekday()] = True
                calendar[r["service_id"]] = tuple(days)
    return GtfsFeed(stops, trips, stop_times, calendar, {k: tuple(v) for k, v in dates.items()})


def write_feed(feed: GtfsFeed, directory: Path | str) -> Path:
    """Serialize ``feed`` as GTFS text files that :func:`parse_feed` reads back."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def dump(name, header, rows):
        with open(directory / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    dump("stops.txt", ("stop_id", "stop_lat", "stop_lon"),
         [(s.stop_id, repr(s.lat), repr(s.lon)) for s in feed.stops.values()])
    dump("trips.txt", ("route_id", "service_id", "trip_id"),
         [(t.route_id, t.service_id, t.trip_id) for t in feed.trips.values()])
    dump("stop_times.txt", REQUIRED["stop_times.txt"],
         [(st.trip_id, format_time(st.arrival), format_time(st.departure), st.stop_id, st.stop_sequence)
          for times in feed.stop_times.values() for st in times])
    dump("calendar.txt", CALENDAR_COLUMNS,
         [(sid, *(int(d) for d in days), "20000101", "20991231") for sid, days in feed.calendar.items()])
    if feed.calendar_dates:
        dump("calendar_dates.txt", CALENDAR_DATES_COLUMNS,
             [(sid, d, k) for sid, entries in feed.calendar_dates.items() for d, k in entries])
    return directory


# -- scheduled positions ----------------------------------------------------------

def _lerp(a: float, b: float, f: float) -> float:
    v = a + f * (b - a)
    return min(max(v, min(a, b)), max(a, b))


def positions_at(feed: GtfsFeed, weekday, time: int) -> FleetSnapshot:
    """Scheduled position of every trip running at ``time`` on ``weekday``."""
    weekday = Weekday.parse(weekday)
    if not 0 <= time < MAX_QUERY_TIME:
        raise ContractViolation(f"query time must lie in [0, {MAX_QUERY_TIME})")
    snap = FleetSnapshot(weekday, int(time))
    for trip_id in sorted(feed.stop_times, key=id_key):
        trip = feed.trips[trip_id]
        times = feed.stop_times[trip_id]
        if not feed.active(trip.service_id, weekday):
            continue
        if not times or not times[0].arrival <= time <= times[-1].departure:
            continue
        vehicle = None
        for i, st in enumerate(times):
            if st.arrival <= time <= st.departure:
                stop = feed.stops[st.stop_id]
                nxt = times[i + 1].stop_id if i + 1 < len(times) else st.stop_id
                vehicle = VehiclePosition(trip_id, stop.lat, stop.lon, st.stop_id, nxt, 0.0)
                break
            if i + 1 < len(times) and st.departure < time < times[i + 1].arrival:
                nxt = times[i + 1]
                a, b = feed.stops[st.stop_id], feed.stops[nxt.stop_id]
                f = (time - st.departure) / (nxt.arrival - st.departure)
                vehicle = VehiclePosition(trip_id, _lerp(a.lat, b.lat, f), _lerp(a.lon, b.lon, f),
                                          st.stop_id, nxt.stop_id, f)
                break
        if vehicle is not None:
            snap.vehicles.append(vehicle)
    return snap


# -- snapping to the evacuation network ----------------------------------------------

def _projector(network: Network, projection: str):
    """Map (lon, lat) pairs to planar coordinates; network x is lon, y is lat."""
    if projection == "none":
        return lambda x, y: (x, y)
    if projection != "equirectangular":
        raise ContractViolation(f"unknown projection {projection!r}")
    ys = [n.y_coord for n in network.nodes.values()]
    xs = [n.x_coord for n in network.nodes.values()]
    x0, y0 = sum(xs) / len(xs), sum(ys) / len(ys)
    k = math.cos(math.radians(y0))
    return lambda x, y: ((x - x0) * k, y - y0)


def _segment_projection(p, a, b) -> tuple[float, float]:
    """(distance, parameter t in [0, 1]) of point p onto segment ab."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    seg = dx * dx + dy * dy
    t = 0.0 if seg == 0 else ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / seg
    t = min(1.0, max(0.0, t))
    qx, qy = a[0] + t * dx, a[1] + t * dy
    return math.hypot(p[0] - qx, p[1] - qy), t


def snap_to_network(snapshot: FleetSnapshot, network: Network, default_capacity: int = DEFAULT_CAPACITY,
                    projection: str = "equirectangular", tol: float = 1e-9) -> list[BusPlacement]:
    """Place each vehicle on its nearest directed link.

    Distances within ``tol`` count as ties. Ties prefer a placement at the
    start of a link (the bus has just left a node), then the lowest link id.
    The remaining travel time is the unfinished share of the link's time, and
    each bus initially heads for the link's end node.
    """
    if not network.links:
        raise ContractViolation("cannot snap buses onto a network without links")
    project = _projector(network, projection)
    ends = {}
    for link in network.links.values():
        a, b = network.nodes[link.from_node_id], network.nodes[link.to_node_id]
        ends[link.link_id] = (project(a.x_coord, a.y_coord), project(b.x_coord, b.y_coord))
    placements = []
    for v in snapshot.vehicles:
        p = project(v.lon, v.lat)
        scored = []
        for link_id, (a, b) in ends.items():
            d, t = _segment_projection(p, a, b)
            scored.append((d, t, link_id))
        best_d = min(s[0] for s in scored)
        ties = [s for s in scored if s[0] <= best_d + tol]
        d, t, link_id = min(ties, key=lambda s: (0 if s[1] <= tol else 1, id_key(s[2])))
        link = network.links[link_id]
        t = 0.0 if t <= tol else t
        remaining = to_minutes(min(link.ticks, to_ticks((1.0 - t) * link.travel_time)))
        placements.append(BusPlacement(v.trip_id, link_id, link.from_node_id, link.to_node_id,
                                       remaining, int(default_capacity), link.to_node_id, v.occupancy))
    return placements
