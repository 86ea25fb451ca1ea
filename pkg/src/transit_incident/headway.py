"""Observed headways from AVL arrival events.

Station headways are gaps between consecutive arrivals of a line-direction at
a station within one service day; the first arrival of the day carries the
sentinel headway 0. Line headways pool all stations of the line-direction per
time interval.
"""

from __future__ import annotations

import datetime as dt
import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import DuplicateEventError, SchemaError
from .timeutil import minute_of_day

DENOMINATORS = ("sentinel", "verbatim")


@dataclass(frozen=True)
class VehicleEvent:
    trip_id: str
    line: str
    station: str
    arrival: dt.datetime


@dataclass(frozen=True)
class StationHeadway:
    trip_id: str
    minute: float
    headway: float
    first_of_day: bool


def _station_day_sequences(events: Iterable[VehicleEvent], line: str, stations: set[str] | None = None):
    groups: dict[tuple[dt.date, str], list[VehicleEvent]] = defaultdict(list)
    seen = set()
    for ev in events:
        if ev.line != line or (stations is not None and ev.station not in stations):
            continue
        day = ev.arrival.date()
        key = (day, ev.trip_id, ev.station)
        if key in seen:
            raise DuplicateEventError(f"duplicate arrival of trip {ev.trip_id!r} at {ev.station!r} on {day}")
        seen.add(key)
        groups[(day, ev.station)].append(ev)
    out = {}
    for key, evs in groups.items():
        evs.sort(key=lambda e: (e.arrival, e.trip_id))
        seq = []
        prev = None
        for ev in evs:
            m = minute_of_day(ev.arrival)
            if prev is None:
                seq.append(StationHeadway(ev.trip_id, m, 0.0, True))
            else:
                seq.append(StationHeadway(ev.trip_id, m, (ev.arrival - prev).total_seconds() / 60.0, False))
            prev = ev.arrival
        out[key] = seq
    return out


def station_headways(events: Iterable[VehicleEvent], station: str, line: str) -> list[float]:
    """Headways at ``station`` in arrival order, restarting at 0 each service day."""
    seqs = _station_day_sequences(events, line, {station})
    out = []
    for day in sorted(d for d, _ in seqs):
        out.extend(h.headway for h in seqs[(day, station)])
    return out


@dataclass
class HeadwayCell:
    """Additive pieces of one (day, interval) line headway.

    The sum is kept as an exact rational so cells merge without rounding.
    """

    headway_sum: Fraction = Fraction(0)
    trips: int = 0
    sentinels: int = 0

    def denominator(self, mode: str = "sentinel") -> int:
        if mode == "verbatim":
            return self.trips - 1
        return self.trips - self.sentinels

    def value(self, mode: str = "sentinel") -> float | None:
        den = self.denominator(mode)
        if den <= 0:
            return None
        return float(self.headway_sum / den)


def _mean_std(values: Sequence[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


@dataclass
class HeadwaySeries:
    line: str
    interval: float
    denominator: str
    cells: dict[dt.date, dict[int, HeadwayCell]]
    normal_days: list[dt.date] = field(default_factory=list)
    incident_day: dt.date | None = None

    def intervals(self) -> list[int]:
        taus = set()
        for day_cells in self.cells.values():
            taus.update(day_cells)
        return sorted(taus)

    def headway(self, day: dt.date, tau: int) -> float | None:
        cell = self.cells.get(day, {}).get(tau)
        return None if cell is None else cell.value(self.denominator)

    def baseline(self, tau: int) -> tuple[float | None, float | None, int]:
        vals = [v for v in (self.headway(d, tau) for d in self.normal_days) if v is not None]
        mean, std = _mean_std(vals)
        return mean, std, len(vals)

    def rows(self) -> list[dict]:
        """Plot-ready table: one row per interval."""
        out = []
        for tau in self.intervals():
            mean, std, n = self.baseline(tau)
            cell = self.cells.get(self.incident_day, {}).get(tau) if self.incident_day else None
            out.append(
                {
                    "interval": tau,
                    "start_min": tau * self.interval,
                    "incident_headway": None if cell is None else cell.value(self.denominator),
                    "incident_trips": 0 if cell is None else cell.trips,
                    "baseline_mean": mean,
                    "baseline_std": std,
                    "baseline_days": n,
                }
            )
        return out


def line_headway_series(
    events: Iterable[VehicleEvent],
    line: str,
    interval: float = 15.0,
    normal_days: Iterable[dt.date] | None = None,
    incident_day: dt.date | None = None,
    stations: Iterable[str] | None = None,
    denominator: str = "sentinel",
) -> HeadwaySeries:
    """Per-interval mean headway of one line-direction.

    For every day and interval the numerator is the sum of station headways of
    all arrivals in the interval. With ``denominator="sentinel"`` (default) the
    arrival count is reduced by the number of first-of-day zero headways in the
    cell; ``"verbatim"`` subtracts exactly 1. Cells whose denominator is not
    positive have no value ("no service").
    """
    if not interval > 0:
        raise SchemaError("interval must be > 0", "headway.interval")
    if denominator not in DENOMINATORS:
        raise SchemaError(f"denominator must be one of {DENOMINATORS}", "headway.denominator")
    seqs = _station_day_sequences(events, line, None if stations is None else set(stations))
    cells: dict[dt.date, dict[int, HeadwayCell]] = defaultdict(dict)
    for (day, _station), seq in sorted(seqs.items()):
        day_cells = cells[day]
        for h in seq:
            tau = math.floor(h.minute / interval)
            cell = day_cells.setdefault(tau, HeadwayCell())
            cell.headway_sum += Fraction(h.headway)
            cell.trips += 1
            cell.sentinels += h.first_of_day
    days = sorted(cells)
    if normal_days is None:
        normal_days = [d for d in days if d != incident_day]
    return HeadwaySeries(
        line=line,
        interval=float(interval),
        denominator=denominator,
        cells=dict(cells),
        normal_days=sorted(normal_days),
        incident_day=incident_day,
    )


def check_trip_order(events: Iterable[VehicleEvent], station_order: dict[str, Sequence[str]]) -> None:
    """Raise if a trip's arrivals do not increase along its line's station order."""
    by_trip: dict[tuple[dt.date, str, str], list[VehicleEvent]] = defaultdict(list)
    for ev in events:
        by_trip[(ev.arrival.date(), ev.line, ev.trip_id)].append(ev)
    for (day, line, trip), evs in by_trip.items():
        order = station_order.get(line)
        if order is None:
            continue
        pos = {s: i for i, s in enumerate(order)}
        evs = sorted(evs, key=lambda e: pos.get(e.station, -1))
        for a, b in zip(evs, evs[1:]):
            if not b.arrival > a.arrival:
                raise SchemaError(
                    f"trip {trip!r} on {day}: arrival at {b.station!r} not after {a.station!r}",
                    "headway.trip-order",
                )
