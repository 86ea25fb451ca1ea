"""Integrated rail + bus network model and incident specifications.

A network is loaded from a YAML document with the sections ``stations``,
``segments``, ``lines``, ``transfers``, ``downtown``, ``income`` and an
optional ``ods`` list restricting the OD universe. See ``docs/formats.md`` for
the field names. Networks are treated as immutable once loaded.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import yaml

from .errors import IntegrityError, SchemaError
from .timeutil import format_timestamp, parse_timestamp

RAIL = "rail"
BUS = "bus"
MODES = (RAIL, BUS)


@dataclass(frozen=True)
class Station:
    id: str
    name: str = ""
    lat: float | None = None
    lon: float | None = None
    served_tracks: frozenset[str] = frozenset()
    is_downtown: bool = False


@dataclass(frozen=True)
class TrackSegment:
    """A blockable piece of infrastructure between two adjacent stations.

    ``track`` groups segments into physical tracks; blocking "the track at a
    station" blocks every segment touching that station with the same label.
    Bus links are segments with ``kind == "bus"``.
    """

    id: str
    endpoints: tuple[str, str]
    lines_using: frozenset[str] = frozenset()
    kind: str = RAIL
    track: str = "main"


@dataclass(frozen=True)
class LineDirection:
    id: str
    mode: str
    stations: tuple[str, ...]
    segments: tuple[str, ...]
    headway: float
    capacity: float
    travel_times: tuple[float, ...]
    route: str = ""
    available_capacity: float | None = None

    @property
    def route_name(self) -> str:
        return self.route or self.id

    def position(self, station: str) -> int:
        return self.stations.index(station)


@dataclass(frozen=True)
class Transfer:
    origin: str
    destination: str
    walk_time: float


@dataclass(frozen=True)
class IncidentSpec:
    blocked_segments: frozenset[str]
    start: dt.datetime
    end: dt.datetime
    id: str = ""
    lines: frozenset[str] = frozenset()
    station: str | None = None

    def __post_init__(self):
        if not self.blocked_segments:
            raise SchemaError("incident must block at least one segment", "network.incident")
        if not self.end > self.start:
            raise SchemaError(
                f"incident {self.id or '?'}: end {self.end} must be after start {self.start}",
                "network.incident",
            )

    @property
    def duration(self) -> float:
        """Incident duration in minutes."""
        return (self.end - self.start).total_seconds() / 60.0

    @property
    def day(self) -> dt.date:
        return self.start.date()


@dataclass(frozen=True)
class TransitNetwork:
    stations: Mapping[str, Station]
    segments: Mapping[str, TrackSegment]
    lines: Mapping[str, LineDirection]
    transfers: tuple[Transfer, ...] = ()
    downtown: frozenset[str] = frozenset()
    income: Mapping[str, float] = field(default_factory=dict)
    ods: tuple[tuple[str, str], ...] | None = None

    def rail_stations(self) -> list[str]:
        out = set()
        for line in self.lines.values():
            if line.mode == RAIL:
                out.update(line.stations)
        return sorted(out)

    def od_universe(self) -> list[tuple[str, str]]:
        """Declared OD pairs, or every ordered pair of rail stations."""
        if self.ods is not None:
            return list(self.ods)
        rail = self.rail_stations()
        return [(o, d) for o in rail for d in rail if o != d]

    def lines_of_route(self, route: str) -> list[LineDirection]:
        return [ln for ln in self.lines.values() if ln.route_name == route]

    def require_station(self, station: str, code: str = "network.reference") -> Station:
        try:
            return self.stations[station]
        except KeyError:
            raise IntegrityError(f"unknown station {station!r}", code) from None


def blocked_line_directions(
    network: TransitNetwork, incident: IncidentSpec, mode: str | None = None
) -> frozenset[str]:
    """Line-directions whose segment sequence touches a blocked segment.

    ``mode`` restricts the answer to rail or bus lines.
    """
    for seg in incident.blocked_segments:
        if seg not in network.segments:
            raise IntegrityError(f"incident blocks unknown segment {seg!r}")
    blocked = set()
    for seg in incident.blocked_segments:
        blocked.update(network.segments[seg].lines_using)
    if mode is not None:
        blocked = {ln for ln in blocked if network.lines[ln].mode == mode}
    return frozenset(blocked)


# -- document codec -----------------------------------------------------------


def _require(record: dict, key: str, where: str):
    if not isinstance(record, dict):
        raise SchemaError(f"{where}: expected a mapping, got {type(record).__name__}")
    if key not in record:
        raise SchemaError(f"{where}: missing field {key!r}")
    return record[key]


def _positive(value, where: str) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: expected a number, got {value!r}") from None
    if not (x > 0 and x < float("inf")):
        raise SchemaError(f"{where}: must be finite and > 0, got {value!r}")
    return x


def network_from_document(doc: dict) -> TransitNetwork:
    """Build and validate a network from a parsed document."""
    if not isinstance(doc, dict):
        raise SchemaError("network document must be a mapping")
    unknown = set(doc) - {"stations", "segments", "lines", "transfers", "downtown", "income", "ods"}
    if unknown:
        raise SchemaError(f"network document: unknown sections {sorted(unknown)}")

    raw_stations = {}
    for i, rec in enumerate(doc.get("stations") or []):
        sid = str(_require(rec, "id", f"stations[{i}]"))
        if sid in raw_stations:
            raise SchemaError(f"stations[{i}]: duplicate station id {sid!r}")
        lat, lon = rec.get("lat"), rec.get("lon")
        if lat is not None and not -90.0 <= float(lat) <= 90.0:
            raise SchemaError(f"station {sid!r}: latitude {lat} out of range")
        if lon is not None and not -180.0 <= float(lon) <= 180.0:
            raise SchemaError(f"station {sid!r}: longitude {lon} out of range")
        raw_stations[sid] = rec

    def known(sid, where):
        sid = str(sid)
        if sid not in raw_stations:
            raise IntegrityError(f"{where}: unknown station {sid!r}")
        return sid

    segments: dict[str, dict] = {}
    for i, rec in enumerate(doc.get("segments") or []):
        where = f"segments[{i}]"
        seg_id = str(_require(rec, "id", where))
        if seg_id in segments:
            raise SchemaError(f"{where}: duplicate segment id {seg_id!r}")
        a = known(_require(rec, "from", where), where)
        b = known(_require(rec, "to", where), where)
        if a == b:
            raise SchemaError(f"segment {seg_id!r}: endpoints must differ")
        kind = rec.get("kind", RAIL)
        if kind not in MODES:
            raise SchemaError(f"segment {seg_id!r}: kind must be rail or bus")
        segments[seg_id] = {
            "endpoints": (a, b),
            "kind": kind,
            "track": str(rec.get("track", "main")),
            "declared_lines": rec.get("lines"),
            "lines": set(),
        }

    lines: dict[str, LineDirection] = {}
    for i, rec in enumerate(doc.get("lines") or []):
        where = f"lines[{i}]"
        lid = str(_require(rec, "id", where))
        if lid in lines:
            raise SchemaError(f"{where}: duplicate line id {lid!r}")
        mode = _require(rec, "mode", where)
        if mode not in MODES:
            raise SchemaError(f"line {lid!r}: mode must be rail or bus, got {mode!r}")
        seq = tuple(known(s, f"line {lid!r}") for s in _require(rec, "stations", where))
        if len(seq) < 2:
            raise SchemaError(f"line {lid!r}: needs at least two stations")
        if len(set(seq)) != len(seq):
            raise SchemaError(f"line {lid!r}: repeats a station")
        times = tuple(
            _positive(t, f"line {lid!r} travel_times") for t in _require(rec, "travel_times", where)
        )
        if len(times) != len(seq) - 1:
            raise SchemaError(f"line {lid!r}: need {len(seq) - 1} travel times, got {len(times)}")
        seg_ids = rec.get("segments")
        if seg_ids is None:
            if mode == RAIL:
                raise SchemaError(f"line {lid!r}: rail lines must list their segments")
            seg_ids = []
            for j in range(len(seq) - 1):
                auto = f"{lid}/{j}"
                if auto in segments:
                    raise SchemaError(f"line {lid!r}: generated link id {auto!r} collides")
                segments[auto] = {
                    "endpoints": (seq[j], seq[j + 1]),
                    "kind": BUS,
                    "track": "main",
                    "declared_lines": None,
                    "lines": set(),
                }
                seg_ids.append(auto)
        seg_ids = tuple(str(s) for s in seg_ids)
        if len(seg_ids) != len(seq) - 1:
            raise SchemaError(f"line {lid!r}: |segments| must equal |stations| - 1")
        for j, sid in enumerate(seg_ids):
            if sid not in segments:
                raise IntegrityError(f"line {lid!r}: unknown segment {sid!r}")
            if set(segments[sid]["endpoints"]) != {seq[j], seq[j + 1]}:
                raise IntegrityError(
                    f"line {lid!r}: segment {sid!r} does not join {seq[j]!r} and {seq[j + 1]!r}"
                )
            segments[sid]["lines"].add(lid)
        cap_avail = rec.get("available_capacity")
        lines[lid] = LineDirection(
            id=lid,
            mode=mode,
            stations=seq,
            segments=seg_ids,
            headway=_positive(_require(rec, "headway", where), f"line {lid!r} headway"),
            capacity=_positive(_require(rec, "capacity", where), f"line {lid!r} capacity"),
            travel_times=times,
            route=str(rec.get("route", "") or ""),
            available_capacity=None
            if cap_avail is None
            else _positive(cap_avail, f"line {lid!r} available_capacity"),
        )

    seg_objs = {}
    for sid, s in segments.items():
        declared = s["declared_lines"]
        if declared is not None:
            for lid in declared:
                if str(lid) not in lines:
                    raise IntegrityError(f"segment {sid!r}: unknown line {lid!r}")
        seg_objs[sid] = TrackSegment(
            id=sid,
            endpoints=s["endpoints"],
            lines_using=frozenset(s["lines"]),
            kind=s["kind"],
            track=s["track"],
        )

    transfers = []
    for i, rec in enumerate(doc.get("transfers") or []):
        where = f"transfers[{i}]"
        a = known(_require(rec, "from", where), where)
        b = known(_require(rec, "to", where), where)
        if a == b:
            raise SchemaError(f"{where}: transfer endpoints must differ")
        walk = _positive(_require(rec, "walk", where), f"{where} walk")
        transfers.append(Transfer(a, b, walk))
        if rec.get("bidirectional", True):
            transfers.append(Transfer(b, a, walk))
    transfers = tuple(sorted(set(transfers), key=lambda t: (t.origin, t.destination, t.walk_time)))

    downtown = {known(s, "downtown") for s in doc.get("downtown") or []}
    downtown.update(sid for sid, rec in raw_stations.items() if rec.get("downtown"))

    income = {}
    for sid, value in (doc.get("income") or {}).items():
        sid = known(sid, "income")
        try:
            v = float(value)
        except (TypeError, ValueError):
            raise SchemaError(f"income[{sid!r}]: expected a number") from None
        if v < 0:
            raise SchemaError(f"income[{sid!r}]: must be non-negative")
        income[sid] = v

    ods = None
    if doc.get("ods") is not None:
        ods = []
        for i, pair in enumerate(doc["ods"]):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise SchemaError(f"ods[{i}]: expected [origin, destination]")
            o, d = known(pair[0], f"ods[{i}]"), known(pair[1], f"ods[{i}]")
            if o == d:
                raise SchemaError(f"ods[{i}]: origin equals destination")
            ods.append((o, d))
        ods = tuple(ods)

    served: dict[str, set] = {sid: set() for sid in raw_stations}
    for seg in seg_objs.values():
        for end in seg.endpoints:
            served[end].add(seg.id)
    stations = {}
    for sid, rec in raw_stations.items():
        stations[sid] = Station(
            id=sid,
            name=str(rec.get("name", "") or ""),
            lat=None if rec.get("lat") is None else float(rec["lat"]),
            lon=None if rec.get("lon") is None else float(rec["lon"]),
            served_tracks=frozenset(served[sid]),
            is_downtown=sid in downtown,
        )
    for line in lines.values():
        if line.mode == RAIL:
            for sid in line.stations:
                if not stations[sid].served_tracks:  # pragma: no cover - implied by segments
                    raise SchemaError(f"rail station {sid!r} has no track")

    return TransitNetwork(
        stations=stations,
        segments=seg_objs,
        lines=lines,
        transfers=transfers,
        downtown=frozenset(downtown),
        income=income,
        ods=ods,
    )


def network_to_document(network: TransitNetwork) -> dict:
    """Inverse of :func:`network_from_document` (bus links are written out)."""
    stations = []
    for s in network.stations.values():
        rec = {"id": s.id, "name": s.name}
        if s.lat is not None:
            rec["lat"] = s.lat
        if s.lon is not None:
            rec["lon"] = s.lon
        stations.append(rec)
    segments = [
        {"id": g.id, "from": g.endpoints[0], "to": g.endpoints[1], "kind": g.kind, "track": g.track}
        for g in network.segments.values()
    ]
    lines = []
    for ln in network.lines.values():
        rec = {
            "id": ln.id,
            "mode": ln.mode,
            "stations": list(ln.stations),
            "segments": list(ln.segments),
            "headway": ln.headway,
            "capacity": ln.capacity,
            "travel_times": list(ln.travel_times),
        }
        if ln.route:
            rec["route"] = ln.route
        if ln.available_capacity is not None:
            rec["available_capacity"] = ln.available_capacity
        lines.append(rec)
    doc = {
        "stations": stations,
        "segments": segments,
        "lines": lines,
        "transfers": [
            {"from": t.origin, "to": t.destination, "walk": t.walk_time, "bidirectional": False}
            for t in network.transfers
        ],
        "downtown": sorted(network.downtown),
        "income": dict(sorted(network.income.items())),
    }
    if network.ods is not None:
        doc["ods"] = [list(p) for p in network.ods]
    return doc


def load_network(source) -> TransitNetwork:
    """Load a network from a path, a YAML string, or an already-parsed mapping."""
    if isinstance(source, dict):
        return network_from_document(source)
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        text = Path(source).read_text()
    else:
        text = str(source)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError(f"network document is not valid YAML: {exc}") from None
    return network_from_document(doc)


def dump_network(network: TransitNetwork) -> str:
    return yaml.safe_dump(network_to_document(network), sort_keys=False)


# -- incidents ------------------------------------------------------------------


def incident_from_document(doc: dict, network: TransitNetwork | None = None) -> IncidentSpec:
    if not isinstance(doc, dict):
        raise SchemaError("incident document must be a mapping")
    blocked = frozenset(str(s) for s in _require(doc, "blocked_segments", "incident"))
    incident = IncidentSpec(
        blocked_segments=blocked,
        start=parse_timestamp(_require(doc, "start", "incident")),
        end=parse_timestamp(_require(doc, "end", "incident")),
        id=str(doc.get("id", "") or ""),
        lines=frozenset(str(x) for x in doc.get("lines") or ()),
        station=None if doc.get("station") is None else str(doc["station"]),
    )
    if network is not None:
        validate_incident(network, incident)
    return incident


def validate_incident(network: TransitNetwork, incident: IncidentSpec) -> None:
    for seg in sorted(incident.blocked_segments):
        if seg not in network.segments:
            raise IntegrityError(f"incident blocks unknown segment {seg!r}")


def incident_to_document(incident: IncidentSpec) -> dict:
    doc = {
        "id": incident.id,
        "blocked_segments": sorted(incident.blocked_segments),
        "start": format_timestamp(incident.start),
        "end": format_timestamp(incident.end),
    }
    if incident.lines:
        doc["lines"] = sorted(incident.lines)
    if incident.station is not None:
        doc["station"] = incident.station
    return doc


def load_incident(source, network: TransitNetwork | None = None) -> IncidentSpec:
    if isinstance(source, dict):
        return incident_from_document(source, network)
    text = Path(source).read_text() if Path(str(source)).exists() else str(source)
    return incident_from_document(yaml.safe_load(text), network)


def station_tracks(network: TransitNetwork, station: str, kinds: Iterable[str] = (RAIL,)) -> dict[str, frozenset[str]]:
    """Map track label -> segments of that track touching ``station``."""
    kinds = set(kinds)
    out: dict[str, set] = {}
    for seg_id in network.stations[station].served_tracks:
        seg = network.segments[seg_id]
        if seg.kind in kinds and seg.lines_using:
            out.setdefault(seg.track, set()).add(seg_id)
    return {k: frozenset(v) for k, v in sorted(out.items())}
