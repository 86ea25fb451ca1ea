"""Path throughput and the incident redundancy index.

Throughput counts equivalent completed passenger trips per hour while an
incident lasts: vehicle ``k`` (dispatched ``(k - 1) * headway`` minutes into
the incident) carries ``capacity`` passengers and is credited with the
fraction of the path it manages to travel before the incident ends.
"""

from __future__ import annotations

import datetime as dt
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import NoAffectedODError, SchemaError, UndefinedODError
from .network import IncidentSpec, TransitNetwork, station_tracks
from .paths import Path, PathFilter, PathSet, incident_path_sets, k_shortest_paths

MINUTES_PER_HOUR = 60.0
# floor() guard for ratios such as 0.3 / 0.1 that land just below an integer
_FLOOR_EPS = 1e-9
TIME_TOL = 1e-9

QUADRANTS = ("critical-red", "informable-yellow", "prepare-blue", "low-priority-green")


def throughput(headway: float, travel_time: float, capacity: float, duration: float) -> float:
    """Equivalent completed trips per hour for one path (closed form).

    All times in minutes. The sum over dispatched vehicles splits into the
    vehicles that reach the destination (each worth ``capacity``) and the
    remainder, whose partial credits form an arithmetic series.
    """
    for name, v in (("duration", duration), ("headway", headway), ("travel_time", travel_time), ("capacity", capacity)):
        if not v > 0:
            raise SchemaError(f"{name} must be > 0, got {v!r}", "redundancy.domain")
    n = math.floor(duration / headway + _FLOOR_EPS)
    if n == 0:
        return 0.0
    # vehicle k completes iff duration - (k - 1) * headway >= travel_time
    if duration + TIME_TOL < travel_time:
        full = 0
    else:
        full = min(n, math.floor((duration - travel_time) / headway + _FLOOR_EPS) + 1)
    m = n - full
    # sum_{k=full+1}^{n} (duration - (k - 1) * headway) = m * duration - headway * sum_{j=full}^{n-1} j
    partial = m * duration - headway * (m * (full + n - 1) / 2.0)
    trips = full * capacity + partial / travel_time * capacity
    return trips / duration * MINUTES_PER_HOUR


def path_throughput(path: Path, duration: float) -> float:
    return throughput(path.headway, path.travel_time, path.capacity, duration)


@dataclass(frozen=True)
class ODThroughput:
    od: tuple[str, str]
    before: float
    during: float
    affected: bool

    @property
    def redundancy(self) -> float:
        if not self.before > 0:
            raise UndefinedODError(f"OD {self.od}: no baseline throughput")
        return self.during / self.before


def od_throughputs(pathset: PathSet, duration: float) -> tuple[float, float]:
    """(before, during) total throughput; during is clamped to before."""
    before = math.fsum(path_throughput(p, duration) for p in pathset.baseline)
    raw = math.fsum(path_throughput(p, duration) for p in pathset.incident)
    return before, min(raw, before)


def nrui(rows: Iterable[tuple[float, float]]) -> float:
    """Redundancy index from (before, during) throughputs of affected ODs."""
    rows = list(rows)
    if not rows:
        raise NoAffectedODError("no affected OD pair")
    den = math.fsum(b for b, _ in rows)
    if not den > 0:
        raise NoAffectedODError("affected OD pairs carry no baseline throughput")
    return math.fsum(d for _, d in rows) / den


def od_redundancy(pathset: PathSet, duration: float) -> float:
    before, during = od_throughputs(pathset, duration)
    if not before > 0:
        raise UndefinedODError(f"OD {pathset.od}: no baseline throughput")
    return during / before


@dataclass
class ThroughputReport:
    """Everything needed to audit one redundancy index value."""

    duration: float
    index: float
    vacuous: bool
    affected_ods: list[tuple[str, str]]
    ods: dict[tuple[str, str], ODThroughput]
    path_throughput: dict[str, float] = field(default_factory=dict)
    blocked_lines: list[str] = field(default_factory=list)

    def ratio_over(self, ods: Iterable[tuple[str, str]]) -> float:
        """Throughput ratio over a fixed OD set; unaffected pairs count as fully served."""
        rows = [(self.ods[od].before, self.ods[od].during) for od in ods]
        return nrui(rows)

    def to_dict(self) -> dict:
        return {
            "duration_min": self.duration,
            "nrui": self.index,
            "vacuous": self.vacuous,
            "blocked_lines": list(self.blocked_lines),
            "affected_ods": [list(od) for od in self.affected_ods],
            "ods": [
                {
                    "origin": od[0],
                    "destination": od[1],
                    "affected": r.affected,
                    "throughput_before": r.before,
                    "throughput_during": r.during,
                }
                for od, r in self.ods.items()
            ],
            "path_throughput": dict(self.path_throughput),
        }


def report_from_path_sets(pathsets: Mapping[tuple[str, str], PathSet], duration: float) -> ThroughputReport:
    ods = {}
    per_path = {}
    affected = []
    blocked = set()
    for od, ps in pathsets.items():
        blocked |= ps.blocked_lines
        for p in list(ps.baseline) + list(ps.incident):
            per_path[f"{od[0]}->{od[1]}: {p.label()}"] = path_throughput(p, duration)
        before, during = od_throughputs(ps, duration)
        ods[od] = ODThroughput(od, before, during, ps.affected)
        if ps.affected:
            affected.append(od)
    rows = [(ods[od].before, ods[od].during) for od in affected]
    if rows:
        index, vacuous = nrui(rows), False
    else:
        index, vacuous = 1.0, True
    return ThroughputReport(
        duration=duration,
        index=index,
        vacuous=vacuous,
        affected_ods=affected,
        ods=ods,
        path_throughput=per_path,
        blocked_lines=sorted(blocked),
    )


def redundancy_report(
    network: TransitNetwork,
    incident: IncidentSpec,
    ods: Iterable[tuple[str, str]] | None = None,
    flt: PathFilter | None = None,
    incident_k: int | None = None,
    duration: float | None = None,
    baseline: dict | None = None,
) -> ThroughputReport:
    """Compute the redundancy index of ``incident`` on ``network``.

    ``duration`` overrides the incident's own duration (minutes). When no OD
    pair is affected the index is reported as 1.0 with ``vacuous`` set.
    """
    duration = incident.duration if duration is None else duration
    sets = incident_path_sets(network, incident, ods, flt=flt, incident_k=incident_k, baseline=baseline)
    return report_from_path_sets(sets, duration)


class ODRedundancyCache:
    """Memoised OD-based redundancy for one incident."""

    def __init__(self, network, incident, flt=None, incident_k=None, duration=None):
        self.network = network
        self.incident = incident
        self.flt = flt or PathFilter()
        self.incident_k = incident_k
        self.duration = incident.duration if duration is None else duration
        self._cache: dict[tuple[str, str], float] = {}

    def __call__(self, origin: str, destination: str) -> float:
        od = (origin, destination)
        if od not in self._cache:
            ps = incident_path_sets(self.network, self.incident, [od], flt=self.flt, incident_k=self.incident_k)[od]
            self._cache[od] = od_redundancy(ps, self.duration)
        return self._cache[od]


# -- all-station sweep ---------------------------------------------------------------


@dataclass(frozen=True)
class LoggedIncident:
    id: str
    station: str
    start: dt.datetime
    end: dt.datetime
    lines: frozenset[str] = frozenset()

    @property
    def duration(self) -> float:
        return (self.end - self.start).total_seconds() / 60.0


@dataclass(frozen=True)
class StationSweepRow:
    station: str
    track: str
    redundancy: float
    vacuous: bool
    incidents_per_year: float
    quadrant: str = ""


def incident_rates(log: Sequence[LoggedIncident], min_duration: float = 10.0, years: float | None = None) -> dict[str, float]:
    """Incidents per year at each station, counting those longer than ``min_duration``.

    ``years`` defaults to the number of distinct calendar years in the log.
    """
    if years is None:
        years = float(len({inc.start.year for inc in log}) or 1)
    counts: dict[str, int] = {}
    for inc in log:
        if inc.duration > min_duration:
            counts[inc.station] = counts.get(inc.station, 0) + 1
    return {s: c / years for s, c in counts.items()}


def classify_quadrant(redundancy: float, rate: float, redundancy_threshold: float, rate_threshold: float) -> str:
    frequent = rate > rate_threshold
    redundant = redundancy >= redundancy_threshold
    if frequent and not redundant:
        return "critical-red"
    if frequent:
        return "informable-yellow"
    if not redundant:
        return "prepare-blue"
    return "low-priority-green"


def station_sweep(
    network: TransitNetwork,
    incident_log: Sequence[LoggedIncident] = (),
    duration: float = 60.0,
    ods: Iterable[tuple[str, str]] | None = None,
    flt: PathFilter | None = None,
    incident_k: int | None = None,
    redundancy_threshold: float | None = None,
    rate_threshold: float | None = None,
    min_incident_duration: float = 10.0,
    years: float | None = None,
) -> list[StationSweepRow]:
    """Hypothetical ``duration``-minute block of every (station, track) pair.

    Quadrant thresholds default to the medians of the sweep.
    """
    flt = flt or PathFilter()
    ods = network.od_universe() if ods is None else list(ods)
    if not ods:
        raise NoAffectedODError("empty OD universe", "redundancy.empty-od-universe")
    baseline = {od: k_shortest_paths(network, od, flt=flt) for od in ods}
    rates = incident_rates(incident_log, min_incident_duration, years)
    t0 = dt.datetime(2000, 1, 1)
    rows = []
    for station in network.rail_stations():
        for track, segs in station_tracks(network, station).items():
            hypothetical = IncidentSpec(
                blocked_segments=segs,
                start=t0,
                end=t0 + dt.timedelta(minutes=duration),
                id=f"sweep:{station}:{track}",
            )
            rep = redundancy_report(network, hypothetical, ods, flt, incident_k, duration, baseline)
            rows.append(StationSweepRow(station, track, rep.index, rep.vacuous, rates.get(station, 0.0)))
    if not rows:
        return rows
    r_thr = statistics.median(r.redundancy for r in rows) if redundancy_threshold is None else redundancy_threshold
    c_thr = statistics.median(r.incidents_per_year for r in rows) if rate_threshold is None else rate_threshold
    return [
        StationSweepRow(
            r.station,
            r.track,
            r.redundancy,
            r.vacuous,
            r.incidents_per_year,
            classify_quadrant(r.redundancy, r.incidents_per_year, r_thr, c_thr),
        )
        for r in rows
    ]
