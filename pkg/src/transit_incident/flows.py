"""Tap-in demand series, normal-day baselines and incident-day deviations."""

from __future__ import annotations

import datetime as dt
import math
import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import IntegrityError, NoNormalDaysError, SchemaError
from .network import IncidentSpec, TransitNetwork
from .timeutil import minute_of_day

SIGMA_MULTIPLIER = 2.0
MIN_BASELINE_DAYS = 3


@dataclass(frozen=True)
class TapEvent:
    card_id: str
    timestamp: dt.datetime
    location: str
    mode: str = "rail"
    fare_type: str = "pay-as-you-go"
    reduced_fare: bool = False
    destination: str | None = None


@dataclass(frozen=True)
class NormalDaySet:
    incident_day: dt.date
    candidates: tuple[dt.date, ...]
    excluded: tuple[dt.date, ...]

    @property
    def days(self) -> list[dt.date]:
        return [d for d in self.candidates if d not in set(self.excluded)]


def _overlaps(a0, a1, b0, b1) -> bool:
    return a0 <= b1 and b0 <= a1


def select_normal_days(
    calendar: Iterable[dt.date] | None,
    incident: IncidentSpec,
    incident_log: Sequence = (),
    window: int = 8,
    buffer: float = 60.0,
) -> NormalDaySet:
    """Same-weekday days in the ``window`` weeks before the incident.

    A candidate is excluded when a logged incident on one of the incident's
    lines overlaps the incident's clock window widened by ``buffer`` minutes.
    Logged incidents without line information are treated as conflicting, as
    is every logged incident when the incident itself names no lines.
    ``calendar`` (days with data) restricts the candidates when given.
    """
    if window < 1:
        raise SchemaError("window must be >= 1 week", "flows.window")
    day = incident.day
    available = None if calendar is None else set(calendar)
    candidates = []
    for w in range(1, window + 1):
        d = day - dt.timedelta(weeks=w)
        if available is None or d in available:
            candidates.append(d)
    pad = dt.timedelta(minutes=buffer)
    excluded = []
    for d in candidates:
        shift = dt.datetime.combine(d, dt.time()) - dt.datetime.combine(day, dt.time())
        w0, w1 = incident.start + shift - pad, incident.end + shift + pad
        for logged in incident_log:
            same_line = not incident.lines or not logged.lines or bool(incident.lines & logged.lines)
            if same_line and _overlaps(logged.start, logged.end, w0, w1):
                excluded.append(d)
                break
    out = NormalDaySet(day, tuple(sorted(candidates)), tuple(sorted(excluded)))
    if not out.days:
        raise NoNormalDaysError(f"no normal day qualifies for incident on {day}")
    return out


class TapCounts:
    """Tap-in counts keyed by (day, location, interval index)."""

    def __init__(self, taps: Iterable[TapEvent], interval: float = 15.0):
        if not interval > 0:
            raise SchemaError("interval must be > 0", "flows.interval")
        self.interval = float(interval)
        self.counts: Counter = Counter()
        self.modes: dict[str, str] = {}
        for tap in taps:
            tau = math.floor(minute_of_day(tap.timestamp) / self.interval)
            self.counts[(tap.timestamp.date(), tap.location, tau)] += 1
            self.modes.setdefault(tap.location, tap.mode)
        self.days = sorted({k[0] for k in self.counts})
        taus = [k[2] for k in self.counts]
        self.taus = list(range(min(taus), max(taus) + 1)) if taus else []

    def locations(self, mode: str | None = None) -> list[str]:
        return sorted(loc for loc, m in self.modes.items() if mode is None or m == mode)

    def total(self, day: dt.date, locations: Iterable[str], tau: int) -> int:
        return sum(self.counts.get((day, loc, tau), 0) for loc in locations)


def scope_locations(scope: str, counts: TapCounts, network: TransitNetwork | None = None) -> list[str]:
    """Resolve ``system:<mode>``, ``line:<route>`` or ``station:<id>``."""
    kind, _, ident = scope.partition(":")
    if kind == "system":
        if ident not in ("rail", "bus"):
            raise IntegrityError(f"unknown system scope {scope!r}", "flows.scope")
        # Each location belongs to exactly one system so the two add up to the
        # total. Observed taps decide; silent stations go to rail if any rail
        # line stops there.
        found = set(counts.locations(ident))
        if network is not None:
            for sid in network.stations:
                if sid in counts.modes:
                    continue
                modes = {ln.mode for ln in network.lines.values() if sid in ln.stations}
                if modes and ("rail" if "rail" in modes else "bus") == ident:
                    found.add(sid)
        return sorted(found)
    if kind == "line":
        if network is None:
            raise IntegrityError("line scope needs a network", "flows.scope")
        members = network.lines_of_route(ident)
        if not members:
            raise IntegrityError(f"unknown line {ident!r}", "flows.scope")
        return sorted({s for ln in members for s in ln.stations})
    if kind == "station":
        if network is not None and ident not in network.stations:
            raise IntegrityError(f"unknown station {ident!r}", "flows.scope")
        return [ident]
    raise IntegrityError(f"unknown scope {scope!r}", "flows.scope")


@dataclass
class DemandSeries:
    scope: str
    interval: float
    taus: list[int]
    counts: dict[dt.date, list[int]]
    normal_days: list[dt.date]
    incident_day: dt.date

    def _col(self, i: int) -> list[int]:
        return [self.counts[d][i] for d in self.normal_days]

    def incident_counts(self) -> list[int]:
        return self.counts[self.incident_day]

    def baseline_mean(self) -> list[float]:
        return [statistics.fmean(self._col(i)) for i in range(len(self.taus))]

    def baseline_std(self) -> list[float]:
        if len(self.normal_days) < 2:
            return [0.0] * len(self.taus)
        return [statistics.stdev(self._col(i)) for i in range(len(self.taus))]

    def flags(self) -> list[bool | None]:
        """True where the incident day leaves the mean +/- 2 sigma band.

        ``None`` means "insufficient baseline" (fewer than three normal days).
        """
        if len(self.normal_days) < MIN_BASELINE_DAYS:
            return [None] * len(self.taus)
        return [
            is_significant(x, m, s)
            for x, m, s in zip(self.incident_counts(), self.baseline_mean(), self.baseline_std())
        ]

    def rows(self) -> list[dict]:
        out = []
        for tau, x, m, s, f in zip(self.taus, self.incident_counts(), self.baseline_mean(), self.baseline_std(), self.flags()):
            out.append(
                {
                    "scope": self.scope,
                    "interval": tau,
                    "start_min": tau * self.interval,
                    "incident_count": x,
                    "baseline_mean": m,
                    "baseline_std": s,
                    "significant": "insufficient-baseline" if f is None else f,
                }
            )
        return out


def is_significant(value: float, mean: float, std: float) -> bool:
    return abs(value - mean) > SIGMA_MULTIPLIER * std


def demand_series(
    taps: Iterable[TapEvent] | TapCounts,
    scope: str,
    normal_days: Iterable[dt.date],
    incident_day: dt.date,
    interval: float = 15.0,
    network: TransitNetwork | None = None,
) -> DemandSeries:
    counts = taps if isinstance(taps, TapCounts) else TapCounts(taps, interval)
    locs = scope_locations(scope, counts, network)
    normal_days = sorted(normal_days)
    table = {
        day: [counts.total(day, locs, tau) for tau in counts.taus]
        for day in [*normal_days, incident_day]
    }
    return DemandSeries(scope, counts.interval, list(counts.taus), table, normal_days, incident_day)


def window_intervals(taus: Sequence[int], interval: float, incident: IncidentSpec) -> list[int]:
    """Indices into ``taus`` of intervals overlapping the incident."""
    t0 = minute_of_day(incident.start)
    t1 = t0 + incident.duration
    return [i for i, tau in enumerate(taus) if tau * interval < t1 and (tau + 1) * interval > t0]


@dataclass(frozen=True)
class DemandDelta:
    scope: str
    delta: float
    intervals: int


@dataclass
class DeltaReport:
    ranked: list[DemandDelta]
    increases: list[DemandDelta] = field(default_factory=list)
    decreases: list[DemandDelta] = field(default_factory=list)


def demand_delta_report(series: Iterable[DemandSeries], incident: IncidentSpec) -> DeltaReport:
    """Sum of (incident - baseline mean) over the incident window, per scope."""
    series = list(series)
    grids = {tuple(s.taus) for s in series}
    if len(grids) > 1 or len({s.interval for s in series}) > 1:
        raise SchemaError("series must share one interval grid", "flows.grid")
    rows = []
    for s in series:
        idx = window_intervals(s.taus, s.interval, incident)
        inc, mean = s.incident_counts(), s.baseline_mean()
        delta = math.fsum(inc[i] - mean[i] for i in idx)
        rows.append(DemandDelta(s.scope, delta, len(idx)))
    rows.sort(key=lambda r: (-r.delta, r.scope))
    return DeltaReport(
        ranked=rows,
        increases=[r for r in rows if r.delta > 0],
        decreases=sorted((r for r in rows if r.delta < 0), key=lambda r: (r.delta, r.scope)),
    )
