from __future__ import annotations

import hypothesis.strategies as st
import pytest
from hypothesis import given, settings

from busevac.errors import ContractViolation, DataValueError, ReferentialError, SchemaError
from busevac.gtfs import (FleetSnapshot, VehiclePosition, Weekday, format_time, parse_feed, parse_time,
                          positions_at, snap_to_network, write_feed)
from busevac.network import Network


def write_minimal_feed(d, stop_times=None, calendar=True):
    d.mkdir(parents=True, exist_ok=True)
    (d / "stops.txt").write_text("stop_id,stop_name,stop_lat,stop_lon\nA,a,0,0\nB,b,1,0\n")
    (d / "trips.txt").write_text("route_id,service_id,trip_id\nR,WK,T1\n")
    rows = stop_times or ["T1,10:00:00,10:00:00,A,1", "T1,10:10:00,10:10:00,B,2"]
    (d / "stop_times.txt").write_text(
        "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n" + "\n".join(rows) + "\n")
    if calendar:
        (d / "calendar.txt").write_text(
            "service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date\n"
            "WK,1,1,1,1,1,0,0,20240101,20241231\n")
    return d


def test_parse_minimal(tmp_path):
    feed = parse_feed(write_minimal_feed(tmp_path / "f"))
    assert len(feed.trips) == 1 and len(feed.stop_times["T1"]) == 2
    assert feed.active("WK", Weekday.MONDAY) and not feed.active("WK", Weekday.SUNDAY)


def test_time_overflow_convention():
    assert parse_time("25:30:00") == 91800
    assert format_time(91800) == "25:30:00"
    with pytest.raises(ValueError):
        parse_time("10:61:00")


@settings(max_examples=200)
@given(st.integers(0, 48 * 3600 - 1))
def test_time_round_trip(seconds):
    assert parse_time(format_time(seconds)) == seconds


def test_missing_file_is_named(tmp_path):
    d = write_minimal_feed(tmp_path / "f")
    (d / "trips.txt").unlink()
    with pytest.raises(SchemaError, match="trips.txt"):
        parse_feed(d)


def test_unknown_stop(tmp_path):
    d = write_minimal_feed(tmp_path / "f", ["T1,10:00:00,10:00:00,A,1", "T1,10:10:00,10:10:00,Z,2"])
    with pytest.raises(ReferentialError, match="Z"):
        parse_feed(d)


def test_malformed_time_has_line_number(tmp_path):
    d = write_minimal_feed(tmp_path / "f", ["T1,10:00:00,10:00:00,A,1", "T1,10:xx:00,10:10:00,B,2"])
    with pytest.raises(DataValueError, match="line 3"):
        parse_feed(d)


def test_calendar_dates_only(tmp_path):
    d = write_minimal_feed(tmp_path / "f", calendar=False)
    # 2024-01-06 is a Saturday
    (d / "calendar_dates.txt").write_text("service_id,date,exception_type\nWK,20240106,1\n")
    feed = parse_feed(d)
    assert feed.active("WK", Weekday.SATURDAY) and not feed.active("WK", Weekday.MONDAY)


def test_untimed_stop_is_interpolated(tmp_path):
    d = write_minimal_feed(tmp_path / "f", ["T1,10:00:00,10:00:00,A,1", "T1,,,B,2", "T1,10:20:00,10:20:00,A,3"])
    times = parse_feed(d).stop_times["T1"]
    assert times[1].arrival == parse_time("10:10:00")


def test_positions(tmp_path):
    feed = parse_feed(write_minimal_feed(tmp_path / "f"))
    at_a = positions_at(feed, "monday", parse_time("10:00:00")).vehicles[0]
    assert (at_a.lat, at_a.lon) == (0.0, 0.0)
    mid = positions_at(feed, Weekday.MONDAY, parse_time("10:05:00")).vehicles[0]
    assert mid.lat == pytest.approx(0.5, abs=1e-12) and mid.lon == 0.0
    assert len(positions_at(feed, "mon", parse_time("09:00:00"))) == 0
    assert len(positions_at(feed, "sunday", parse_time("10:05:00"))) == 0
    with pytest.raises(ContractViolation):
        positions_at(feed, "mon", -1)


def test_round_trip(tmp_path):
    feed = parse_feed(write_minimal_feed(tmp_path / "f"))
    again = parse_feed(write_feed(feed, tmp_path / "g"))
    assert again.stops == feed.stops and again.trips == feed.trips
    assert again.stop_times == feed.stop_times and again.calendar == feed.calendar


def _at(lat, lon):
    return FleetSnapshot(Weekday.MONDAY, 0, [VehiclePosition("bus", lat, lon, "", "", 0.0)])


def test_snap_examples(net):
    # link 1 runs n1 (0, 1) -> o1 (1, 1); coordinates are x = lon, y = lat
    p = snap_to_network(_at(1.0, 0.5), net)[0]
    assert (p.link_id, p.time_to_travel, p.capacity, p.onboard) == ("1", 2.5, 40, 0)
    p = snap_to_network(_at(1.0, 0.0), net)[0]
    assert p.link_id == "1" and p.time_to_travel == 5.0
    assert snap_to_network(FleetSnapshot(Weekday.MONDAY, 0), net) == []
    with pytest.raises(ContractViolation):
        snap_to_network(_at(0, 0), Network([], []))
