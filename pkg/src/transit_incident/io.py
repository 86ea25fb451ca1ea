"""Delimited-text codecs and atomic output helpers.

All CSV files carry a header row. Column layouts are documented in
``docs/formats.md``.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from .behavior import ChoiceObservation, SaleTransaction
from .errors import InputMissingError, SchemaError
from .flows import TapEvent
from .headway import VehicleEvent
from .redundancy import LoggedIncident, StationSweepRow
from .timeutil import format_timestamp, parse_timestamp

AVL_COLUMNS = ("trip_id", "line_direction_id", "station_id", "arrival")
AFC_COLUMNS = ("card_id", "timestamp", "location_id", "mode", "fare_type", "reduced_fare")
SALES_COLUMNS = ("card_id", "timestamp", "amount")
INCIDENT_LOG_COLUMNS = ("incident_id", "station_id", "lines", "start", "end")
OBSERVATION_COLUMNS = (
    "card_id",
    "choice",
    "total_added_value",
    "add_value_frequency",
    "max_added_value",
    "high_income",
    "low_income",
    "pass_user",
    "reduced_fare",
    "downtown_destination",
    "od_redundancy",
    "trip_ordinal",
    "origin",
    "destination",
    "destination_source",
)
SWEEP_COLUMNS = ("station", "track", "redundancy", "vacuous", "incidents_per_year", "quadrant")

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f", ""}


def require_path(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise InputMissingError(f"input not found: {p}")
    return p


def _rows(path, required: Sequence[str]):
    p = require_path(path)
    with p.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"{p.name}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def _bool(value: str, where: str) -> bool:
    v = (value or "").strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise SchemaError(f"{where}: not a boolean: {value!r}")


def _ts(value: str, where: str) -> dt.datetime:
    try:
        return parse_timestamp(value)
    except ValueError:
        raise SchemaError(f"{where}: bad timestamp {value!r}") from None


def read_avl(path) -> list[VehicleEvent]:
    name = Path(path).name
    return [
        VehicleEvent(r["trip_id"], r["line_direction_id"], r["station_id"], _ts(r["arrival"], f"{name}:{n}"))
        for n, r in _rows(path, AVL_COLUMNS)
    ]


def write_avl(events: Iterable[VehicleEvent]) -> str:
    return _to_csv(
        AVL_COLUMNS,
        ([e.trip_id, e.line, e.station, format_timestamp(e.arrival)] for e in events),
    )


def read_afc(path) -> list[TapEvent]:
    """Read one AFC file, or every ``*.csv`` in a directory (sorted by name)."""
    p = require_path(path)
    files = sorted(p.glob("*.csv")) if p.is_dir() else [p]
    out = []
    for f in files:
        for n, r in _rows(f, AFC_COLUMNS):
            where = f"{f.name}:{n}"
            mode = r["mode"].strip()
            if mode not in ("rail", "bus"):
                raise SchemaError(f"{where}: mode must be rail or bus")
            dest = (r.get("destination_id") or "").strip() or None
            out.append(
                TapEvent(
                    card_id=r["card_id"],
                    timestamp=_ts(r["timestamp"], where),
                    location=r["location_id"],
                    mode=mode,
                    fare_type=r["fare_type"].strip(),
                    reduced_fare=_bool(r["reduced_fare"], where),
                    destination=dest,
                )
            )
    return out


def write_afc(taps: Iterable[TapEvent], with_destination: bool = False) -> str:
    cols = AFC_COLUMNS + (("destination_id",) if with_destination else ())

    def row(t):
        r = [t.card_id, format_timestamp(t.timestamp), t.location, t.mode, t.fare_type, int(t.reduced_fare)]
        if with_destination:
            r.append(t.destination or "")
        return r

    return _to_csv(cols, (row(t) for t in taps))


def read_sales(path) -> list[SaleTransaction]:
    out = []
    name = Path(path).name
    for n, r in _rows(path, SALES_COLUMNS):
        try:
            amount = float(r["amount"])
        except ValueError:
            raise SchemaError(f"{name}:{n}: bad amount {r['amount']!r}") from None
        if not amount > 0:
            raise SchemaError(f"{name}:{n}: amount must be > 0")
        out.append(SaleTransaction(r["card_id"], _ts(r["timestamp"], f"{name}:{n}"), amount))
    return out


def write_sales(sales: Iterable[SaleTransaction]) -> str:
    return _to_csv(SALES_COLUMNS, ([s.card_id, format_timestamp(s.timestamp), _num(s.amount)] for s in sales))


def read_incident_log(path) -> list[LoggedIncident]:
    out = []
    name = Path(path).name
    for n, r in _rows(path, INCIDENT_LOG_COLUMNS):
        where = f"{name}:{n}"
        start, end = _ts(r["start"], where), _ts(r["end"], where)
        if not end > start:
            raise SchemaError(f"{where}: end must be after start")
        lines = frozenset(x for x in (r["lines"] or "").split(";") if x)
        out.append(LoggedIncident(r["incident_id"], r["station_id"], start, end, lines))
    return out


def write_incident_log(log: Iterable[LoggedIncident]) -> str:
    return _to_csv(
        INCIDENT_LOG_COLUMNS,
        (
            [i.id, i.station, ";".join(sorted(i.lines)), format_timestamp(i.start), format_timestamp(i.end)]
            for i in log
        ),
    )


def read_observations(path) -> list[ChoiceObservation]:
    out = []
    name = Path(path).name
    for n, r in _rows(path, OBSERVATION_COLUMNS[:12]):
        try:
            out.append(
                ChoiceObservation(
                    card_id=r["card_id"],
                    choice=r["choice"],
                    total_added_value=float(r["total_added_value"]),
                    add_value_frequency=int(r["add_value_frequency"]),
                    max_added_value=float(r["max_added_value"]),
                    high_income=int(r["high_income"]),
                    low_income=int(r["low_income"]),
                    pass_user=int(r["pass_user"]),
                    reduced_fare=int(r["reduced_fare"]),
                    downtown_destination=int(r["downtown_destination"]),
                    od_redundancy=float(r["od_redundancy"]),
                    trip_ordinal=int(r["trip_ordinal"]),
                    origin=r.get("origin", "") or "",
                    destination=r.get("destination", "") or "",
                    destination_source=r.get("destination_source", "observed") or "observed",
                )
            )
        except ValueError as exc:
            raise SchemaError(f"{name}:{n}: {exc}") from None
    return out


def write_observations(obs: Iterable[ChoiceObservation]) -> str:
    return _to_csv(OBSERVATION_COLUMNS, ([_num(getattr(o, c)) for c in OBSERVATION_COLUMNS] for o in obs))


def read_sweep(path) -> list[StationSweepRow]:
    return [
        StationSweepRow(
            r["station"],
            r["track"],
            float(r["redundancy"]),
            _bool(r["vacuous"], "sweep"),
            float(r["incidents_per_year"]),
            r["quadrant"],
        )
        for _, r in _rows(path, SWEEP_COLUMNS)
    ]


def write_sweep(rows: Iterable[StationSweepRow]) -> str:
    return _to_csv(
        SWEEP_COLUMNS,
        ([r.station, r.track, _num(r.redundancy), int(r.vacuous), _num(r.incidents_per_year), r.quadrant] for r in rows),
    )


def write_table(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    return _to_csv(cols, ([_num(r[c]) for c in cols] for r in rows))


def read_table(path) -> list[dict]:
    with require_path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _num(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


def _to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_num(x) for x in r])
    return buf.getvalue()


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (dt.date, dt.datetime)):
        return o.isoformat()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def dumps_yaml(obj) -> str:
    return yaml.safe_dump(obj, sort_keys=False)


def load_yaml(path) -> dict:
    text = require_path(path).read_text()
    try:
        return yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise SchemaError(f"{Path(path).name}: invalid YAML: {exc}") from None


def atomic_write(path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
