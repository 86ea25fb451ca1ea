"""Seeded scenario generator with known ground truth.

Everything random flows from one ``numpy.random.Generator`` seeded from the
config, and every file is written in a fixed order, so a given config always
produces byte-identical output.

Trip-time jitter: each regular card's trip ``n`` is shifted by ``+b`` on half
of the normal days and ``-b`` on the other half (one extra day at 0 when the
count is odd), with ``b`` drawn from ``[0.5, jitter]`` minutes. That keeps every
day within one sample standard deviation of the mean, so regularity holds by
construction while the deviation is nonzero.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .behavior import OTHER, TRANSIT, UNLABELED, ChoiceObservation, SaleTransaction
from .errors import InfeasibleConfigError
from .flows import TapEvent
from .headway import VehicleEvent
from .io import (
    atomic_write,
    dumps_json,
    dumps_yaml,
    write_afc,
    write_avl,
    write_incident_log,
    write_observations,
    write_sales,
)
from .network import RAIL, load_network
from .redundancy import LoggedIncident
from .timeutil import at_minute, format_timestamp


def _at(day: dt.date, minute: float) -> dt.datetime:
    # whole seconds, so written timestamps read back unchanged
    return at_minute(day, 0) + dt.timedelta(seconds=int(round(minute * 60)))

TEMPLATES = ("paper-example", "two-parallel-lines", "single-line", "grid")
BEHAVIORS = ("transit_extra", "transit_switch", "other", "unaffected")
BEHAVIOR_LABEL = {
    "transit_extra": TRANSIT,
    "transit_switch": TRANSIT,
    "other": OTHER,
    "unaffected": UNLABELED,
}
IRREGULAR_KINDS = ("missing-day", "count-change", "origin-change", "time-outlier")

SERVICE_START = 5 * 60.0
AVL_END = 12 * 60.0
BACKGROUND_START = 6 * 60.0
BACKGROUND_END = 12 * 60.0
EVENING = (17 * 60.0, 18 * 60.0 + 30)
EXTRA_TRIP_GAP = 10.0


@dataclass
class ScenarioConfig:
    seed: int = 0
    template: str = "two-parallel-lines"
    n_cards: int = 200
    regular_share: float = 0.8
    mixture: dict = field(
        default_factory=lambda: {"transit_extra": 0.25, "transit_switch": 0.25, "other": 0.3, "unaffected": 0.2}
    )
    incident_date: str = "2019-11-08"
    incident_start: str = "08:30"
    incident_end: str | None = None  # None: 09:30 for paper-example, else 09:40
    normal_weeks: int = 9
    conflict_week: int | None = 3  # one candidate day gets a same-line incident; None disables
    jitter: float = 4.0
    background_rate: float = 4.0  # taps per station per interval
    injection: float = 0.4
    interval: float = 15.0
    headway_factor: float = 2.0  # dispatch interval multiplier on blocked lines during the incident
    extra_incidents: int = 12
    true_coefficients: dict | None = None
    n_observations: int = 0

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise InfeasibleConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**doc)

    def __post_init__(self):
        if self.incident_end is None:
            self.incident_end = "09:30" if self.template == "paper-example" else "09:40"

    def validate(self) -> None:
        if self.template not in TEMPLATES:
            raise InfeasibleConfigError(f"unknown template {self.template!r}")
        if set(self.mixture) != set(BEHAVIORS):
            raise InfeasibleConfigError(f"mixture must give fractions for {BEHAVIORS}")
        if any(v < 0 for v in self.mixture.values()) or not math.isclose(sum(self.mixture.values()), 1.0, abs_tol=1e-9):
            raise InfeasibleConfigError("mixture fractions must be >= 0 and sum to 1")
        if not 0.0 <= self.regular_share <= 1.0:
            raise InfeasibleConfigError("regular_share must be in [0, 1]")
        if self.n_cards < 0 or self.background_rate < 0:
            raise InfeasibleConfigError("card count and rates must be >= 0")
        if self.normal_weeks - (self.conflict_week is not None) < 2:
            raise InfeasibleConfigError("need at least two normal days")
        if self.conflict_week is not None and not 1 <= self.conflict_week <= self.normal_weeks:
            raise InfeasibleConfigError("conflict_week outside the normal-day window")
        start, end = _clock(self.incident_start), _clock(self.incident_end)
        if not end > start:
            raise InfeasibleConfigError("incident must end after it starts")
        if self.n_cards and self.regular_share > 0 and end - start < 2 * (self.jitter + 1) + EXTRA_TRIP_GAP + 1:
            raise InfeasibleConfigError("incident window too short for the jitter bound")
        if self.true_coefficients is not None and self.n_observations <= 0:
            raise InfeasibleConfigError("true_coefficients needs n_observations > 0")


def _clock(text: str) -> float:
    h, m = str(text).split(":")
    return int(h) * 60 + float(m)


# -- network templates -------------------------------------------------------------------


def _corridor(doc, route, stations, times, headway, capacity, mode, track="main"):
    """Add a two-direction line; rail directions share one set of segments."""
    seg_ids = None
    if mode == RAIL:
        seg_ids = []
        for a, b in zip(stations, stations[1:]):
            sid = f"{route}:{a}-{b}"
            doc["segments"].append({"id": sid, "from": a, "to": b, "kind": RAIL, "track": track})
            seg_ids.append(sid)
    for suffix, seq, tt, segs in (
        ("out", stations, times, seg_ids),
        ("in", stations[::-1], times[::-1], None if seg_ids is None else seg_ids[::-1]),
    ):
        rec = {
            "id": f"{route}-{suffix}",
            "route": route,
            "mode": mode,
            "stations": list(seq),
            "headway": headway,
            "capacity": capacity,
            "travel_times": list(tt),
        }
        if segs is not None:
            rec["segments"] = list(segs)
        doc["lines"].append(rec)


def _stations(doc, ids, rng, downtown=()):
    for i, sid in enumerate(ids):
        doc["stations"].append(
            {
                "id": sid,
                "name": sid.upper(),
                "lat": round(41.85 + 0.01 * i + float(rng.uniform(-0.002, 0.002)), 6),
                "lon": round(-87.65 + float(rng.uniform(-0.02, 0.02)), 6),
            }
        )
    doc["downtown"] = list(downtown)


@dataclass
class Template:
    network_doc: dict
    blocked: list[str]
    incident_lines: list[str]
    incident_station: str
    homes: list[str]  # candidate home stations (rail)
    works: list[str]
    alternatives: dict[str, str]  # home -> alternative tap-in station
    bypass: list[str]  # stations expected to absorb demand
    analysis: dict


def build_template(name: str, rng: np.random.Generator) -> Template:
    doc = {"stations": [], "segments": [], "lines": [], "transfers": [], "downtown": [], "income": {}}
    if name == "paper-example":
        _stations(doc, ["O", "X", "Y", "D"], rng, downtown=["D"])
        doc["segments"] = [{"id": "s1", "from": "O", "to": "X"}, {"id": "s2", "from": "X", "to": "D"}]
        doc["lines"] = [
            {"id": "P1", "mode": "rail", "stations": ["O", "X", "D"], "segments": ["s1", "s2"],
             "headway": 30, "capacity": 200, "travel_times": [10, 10]},
            {"id": "P2", "mode": "bus", "stations": ["O", "Y", "D"],
             "headway": 30, "capacity": 200, "travel_times": [30, 30]},
        ]
        doc["ods"] = [["O", "D"]]
        doc["income"] = {"O": 130000, "X": 60000, "Y": 22000, "D": 90000}
        return Template(doc, ["s1"], ["P1"], "O", ["O"], ["D"], {"O": "Y"}, ["Y"],
                        {"k": 1, "incident_k": 2, "max_transfers": 3, "max_detour_ratio": 3.0})
    if name in ("two-parallel-lines", "single-line"):
        # homes h0..h2 and workplaces w5..w7 sit on a trunk line A; the incident cuts A
        # between a3 and a4. The high-redundancy variant adds a parallel rail line B
        # through the same end stations; the low one only a slow bus.
        homes, works = ["h0", "h1", "h2"], ["w5", "w6", "w7"]
        trunk = homes + ["a3", "a4"] + works
        if name == "two-parallel-lines":
            branch = homes + ["b3", "b4"] + works
            _stations(doc, trunk + ["b3", "b4"], rng, downtown=["w7"])
            _corridor(doc, "A", trunk, [3] * 7, 8, 600, RAIL, track="A")
            _corridor(doc, "B", branch, [3.5] * 7, 8, 600, RAIL, track="B")
            bypass = ["b3", "b4"]
        else:
            _stations(doc, trunk, rng, downtown=["w7"])
            _corridor(doc, "A", trunk, [3] * 7, 8, 600, RAIL, track="A")
            _corridor(doc, "C", homes + works, [6, 6, 15, 6, 6], 20, 60, "bus")
            bypass = ["h1", "h2"]
        doc["ods"] = [[o, d] for o in homes for d in works] + [[d, o] for o in homes for d in works]
        incomes = [130000, 22000, 60000, 45000, 95000, 75000, 150000, 30000]
        for i, sid in enumerate(s["id"] for s in doc["stations"]):
            doc["income"][sid] = incomes[i % len(incomes)]
        return Template(doc, ["A:a3-a4"], ["A"], "a3", homes, works, {"h0": "h1", "h1": "h2", "h2": "h1"}, bypass,
                        {"k": 1, "incident_k": 3, "max_transfers": 2, "max_detour_ratio": 3.0})
    if name == "grid":
        nodes = [f"g{r}{c}" for r in range(3) for c in range(3)]
        _stations(doc, nodes, rng, downtown=["g12"])
        _corridor(doc, "R", ["g10", "g11", "g12"], [4, 4], 6, 800, RAIL)
        for r in range(3):
            _corridor(doc, f"row{r}", [f"g{r}{c}" for c in range(3)], [9, 9], 12, 70, "bus")
        for c in range(3):
            _corridor(doc, f"col{c}", [f"g{r}{c}" for r in range(3)], [9, 9], 12, 70, "bus")
        for i, sid in enumerate(nodes):
            doc["income"][sid] = [24000, 50000, 125000][i % 3]
        return Template(doc, ["R:g10-g11"], ["R"], "g10", ["g10"], ["g11", "g12"],
                        {"g10": "g00"}, ["g00", "g01", "g20", "g21"],
                        {"k": 3, "incident_k": 3, "max_transfers": 2, "max_detour_ratio": 3.0})
    raise InfeasibleConfigError(f"unknown template {name!r}")


# -- ground truth ---------------------------------------------------------------------------


@dataclass
class GroundTruth:
    normal_days: list[str]
    candidate_days: list[str]
    regular: dict[str, bool]
    labels: dict[str, str]  # intended label of each regular card
    behaviors: dict[str, str]
    irregular_kind: dict[str, str]
    injected: dict[str, float]  # expected extra taps per station during the incident
    incidents_per_station: dict[str, int]
    true_coefficients: dict | None
    analysis: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def allocate(total: int, fractions: dict[str, float]) -> dict[str, int]:
    """Largest-remainder split of ``total`` by ``fractions`` (ties by key order)."""
    raw = {k: total * v for k, v in fractions.items()}
    out = {k: int(math.floor(v)) for k, v in raw.items()}
    left = total - sum(out.values())
    order = sorted(raw, key=lambda k: (-(raw[k] - out[k]), list(fractions).index(k)))
    for k in order[:left]:
        out[k] += 1
    return out


# -- generation ----------------------------------------------------------------------------------


@dataclass
class Scenario:
    config: ScenarioConfig
    network_doc: dict
    incident_doc: dict
    incident_log: list[LoggedIncident]
    avl: list[VehicleEvent]
    afc: dict[str, list[TapEvent]]
    sales: list[SaleTransaction]
    observations: list[ChoiceObservation]
    truth: GroundTruth
    run_config: dict


def _signs(k: int, rng) -> np.ndarray:
    base = np.array([1.0] * (k // 2) + [-1.0] * (k // 2) + [0.0] * (k % 2))
    return rng.permutation(base)


def generate(config: ScenarioConfig) -> Scenario:
    config.validate()
    rng = np.random.default_rng(config.seed)
    tpl = build_template(config.template, rng)
    network = load_network(tpl.network_doc)

    day = dt.date.fromisoformat(config.incident_date)
    t_s, t_e = _clock(config.incident_start), _clock(config.incident_end)
    incident_doc = {
        "id": f"synth-{config.template}",
        "blocked_segments": list(tpl.blocked),
        "start": format_timestamp(at_minute(day, t_s)),
        "end": format_timestamp(at_minute(day, t_e)),
        "lines": list(tpl.incident_lines),
        "station": tpl.incident_station,
    }
    candidates = [day - dt.timedelta(weeks=w) for w in range(1, config.normal_weeks + 1)]
    conflict = None if config.conflict_week is None else day - dt.timedelta(weeks=config.conflict_week)
    normal_days = sorted(d for d in candidates if d != conflict)
    all_days = sorted(candidates) + [day]

    # incident log
    log = [LoggedIncident(incident_doc["id"], tpl.incident_station, at_minute(day, t_s), at_minute(day, t_e),
                          frozenset(tpl.incident_lines))]
    if conflict is not None:
        log.append(LoggedIncident("conflict", tpl.incident_station, at_minute(conflict, t_s - 20),
                                  at_minute(conflict, t_s + 15), frozenset(tpl.incident_lines)))
    rail = network.rail_stations()
    for i in range(config.extra_incidents):
        station = rail[int(rng.integers(len(rail)))]
        # Tuesdays only, so they never collide with the weekday of the incident
        d = dt.date(day.year, 1, 1) + dt.timedelta(days=int(rng.integers(0, 360)))
        d += dt.timedelta(days=(1 - d.weekday()) % 7)
        if d.year != day.year or d.weekday() == day.weekday():
            continue
        start = float(rng.integers(6 * 60, 20 * 60))
        dur = float(rng.choice([5, 8, 15, 30, 45, 90]))
        routes = sorted({network.lines[l].route_name for l in network.lines if station in network.lines[l].stations})
        log.append(LoggedIncident(f"log{i:03d}", station, at_minute(d, start), at_minute(d, start + dur),
                                  frozenset(routes)))
    log.sort(key=lambda x: (x.start, x.id))
    per_station: dict[str, int] = {}
    for inc in log:
        if inc.duration > 10:
            per_station[inc.station] = per_station.get(inc.station, 0) + 1

    avl = _avl(network, all_days, day, t_s, t_e, tpl, config)
    taps, truth_cards, cards_meta = _cards(network, tpl, config, rng, normal_days, all_days, day, t_s, t_e)
    bg, injected = _background(network, tpl, config, rng, all_days, day, t_s, t_e)
    afc: dict[str, list[TapEvent]] = {d.isoformat(): [] for d in all_days}
    for t in taps + bg:
        afc[t.timestamp.date().isoformat()].append(t)
    for k in afc:
        afc[k].sort(key=lambda t: (t.timestamp, t.card_id, t.location))
    sales = _sales(cards_meta, rng, day.year)

    observations = []
    if config.true_coefficients is not None:
        observations = generate_choice_observations(config.n_observations, config.true_coefficients, rng)

    truth = GroundTruth(
        normal_days=[d.isoformat() for d in normal_days],
        candidate_days=[d.isoformat() for d in sorted(candidates)],
        regular=truth_cards["regular"],
        labels=truth_cards["labels"],
        behaviors=truth_cards["behaviors"],
        irregular_kind=truth_cards["irregular"],
        injected=injected,
        incidents_per_station=dict(sorted(per_station.items())),
        true_coefficients=config.true_coefficients,
        analysis=tpl.analysis,
    )
    run_config = {
        "network": "network.yaml",
        "incident": "incident.yaml",
        "incident_log": "incident_log.csv",
        "avl": "avl.csv",
        "afc": "afc",
        "sales": "sales.csv",
        "normal_days": "auto",
        "window_weeks": config.normal_weeks,
        "buffer": 60.0,
        "interval": config.interval,
        **tpl.analysis,
        "flow_scopes": ["system:rail", "system:bus"]
        + [f"line:{r}" for r in sorted({ln.route_name for ln in network.lines.values()})]
        + [f"station:{s}" for s in sorted(network.stations)],
    }
    return Scenario(config, tpl.network_doc, incident_doc, log, avl, afc, sales, observations, truth, run_config)


def _avl(network, days, incident_day, t_s, t_e, tpl, config) -> list[VehicleEvent]:
    blocked = set()
    for seg in tpl.blocked:
        blocked |= network.segments[seg].lines_using
    out = []
    for lid in sorted(network.lines):
        line = network.lines[lid]
        offsets = np.concatenate([[0.0], np.cumsum(line.travel_times)])
        for d in days:
            t, n = SERVICE_START, 0
            while t < AVL_END:
                for sid, off in zip(line.stations, offsets):
                    out.append(VehicleEvent(f"{lid}#{d.isoformat()}#{n}", lid, sid, _at(d, t + float(off))))
                slow = d == incident_day and lid in blocked and t_s <= t < t_e
                t += line.headway * (config.headway_factor if slow else 1.0)
                n += 1
    out.sort(key=lambda e: (e.arrival, e.line, e.trip_id, e.station))
    return out


def _cards(network, tpl, config, rng, normal_days, all_days, incident_day, t_s, t_e):
    n_regular = int(round(config.n_cards * config.regular_share))
    counts = allocate(n_regular, config.mixture)
    behaviors = [b for b in BEHAVIORS for _ in range(counts[b])]
    behaviors = list(rng.permutation(behaviors)) if behaviors else []
    n_irregular = config.n_cards - n_regular
    irr_kinds = [IRREGULAR_KINDS[i % len(IRREGULAR_KINDS)] for i in range(n_irregular)]

    taps: list[TapEvent] = []
    meta = {}
    regular, labels, beh, irregular = {}, {}, {}, {}
    j = config.jitter
    lo, hi = t_s + j + 1, t_e - j - 1 - EXTRA_TRIP_GAP
    days_k = len(normal_days)
    rail_modes = {s: ("rail" if any(network.lines[l].mode == RAIL and s in network.lines[l].stations
                                    for l in network.lines) else "bus") for s in network.stations}

    def tap(card, d, minute, loc, fare, reduced):
        return TapEvent(card, _at(d, minute), loc, rail_modes[loc], fare, reduced)

    for idx in range(config.n_cards):
        card = f"c{idx:05d}"
        home = tpl.homes[int(rng.integers(len(tpl.homes)))]
        work = tpl.works[int(rng.integers(len(tpl.works)))]
        fare = "pass" if rng.random() < 0.374 else "pay-as-you-go"
        reduced = bool(rng.random() < 0.087)
        m1 = round(float(rng.uniform(lo, hi)) * 60) / 60
        m2 = round(float(rng.uniform(*EVENING)) * 60) / 60
        b = np.round(rng.uniform(0.5, j, size=2) * 60) / 60
        signs = [_signs(days_k, rng), _signs(days_k, rng)]
        meta[card] = {"home": home}
        is_reg = idx < n_regular
        regular[card] = is_reg
        kind = None if is_reg else irr_kinds[idx - n_regular]
        odd_day = normal_days[int(rng.integers(days_k))]
        for di, d in enumerate(normal_days):
            t1, t2 = m1 + b[0] * signs[0][di], m2 + b[1] * signs[1][di]
            o1 = home
            if kind == "missing-day" and d == odd_day:
                continue
            if kind == "origin-change" and d == odd_day:
                o1 = tpl.alternatives.get(home, work)
            if kind == "time-outlier":
                t1 = m1 + (60.0 if d == odd_day else 0.0)
            taps.append(tap(card, d, t1, o1, fare, reduced))
            taps.append(tap(card, d, t2, work, fare, reduced))
            if kind == "count-change" and d == odd_day:
                taps.append(tap(card, d, 12 * 60.0, work, fare, reduced))
        # excluded candidate days carry ordinary travel too
        for d in all_days[:-1]:
            if d not in normal_days:
                taps.append(tap(card, d, m1, home, fare, reduced))
                taps.append(tap(card, d, m2, work, fare, reduced))
        # incident day
        d = incident_day
        shift = float(rng.uniform(-b[0], b[0]))
        behavior = behaviors[idx] if is_reg else "unaffected"
        if behavior == "transit_extra":
            taps.append(tap(card, d, m1 + shift, home, fare, reduced))
            taps.append(tap(card, d, m1 + shift + EXTRA_TRIP_GAP, tpl.alternatives.get(home, work), fare, reduced))
        elif behavior == "transit_switch":
            taps.append(tap(card, d, m1 + shift, tpl.alternatives.get(home, work), fare, reduced))
        elif behavior == "unaffected":
            taps.append(tap(card, d, m1 + shift, home, fare, reduced))
        taps.append(tap(card, d, m2, work, fare, reduced))
        if is_reg:
            beh[card] = behavior
            labels[card] = BEHAVIOR_LABEL[behavior]
        else:
            irregular[card] = kind
    truth = {"regular": regular, "labels": labels, "behaviors": beh, "irregular": irregular}
    return taps, truth, meta


def _background(network, tpl, config, rng, all_days, incident_day, t_s, t_e):
    injected: dict[str, float] = {}
    taps = []
    if config.background_rate <= 0:
        return taps, injected
    iv = config.interval
    taus = range(int(BACKGROUND_START // iv), int(math.ceil(BACKGROUND_END / iv)))
    window = [tau for tau in taus if tau * iv < t_e and (tau + 1) * iv > t_s]
    bypass = set(tpl.bypass)
    modes = {s: ("rail" if any(network.lines[l].mode == RAIL and s in network.lines[l].stations
                               for l in network.lines) else "bus") for s in network.stations}
    serial = 0
    for d in all_days:
        for sid in sorted(network.stations):
            for tau in taus:
                rate = config.background_rate
                if d == incident_day and sid in bypass and tau in window:
                    rate *= 1.0 + config.injection
                n = int(rng.poisson(rate))
                for _ in range(n):
                    minute = tau * iv + float(rng.uniform(0, iv))
                    minute = min(round(minute * 60) / 60, (tau + 1) * iv - 1 / 60)
                    taps.append(TapEvent(f"bg{serial:07d}", _at(d, minute), sid, modes[sid],
                                         "pay-as-you-go", False))
                    serial += 1
    for sid in sorted(bypass):
        injected[sid] = config.background_rate * config.injection * len(window)
    return taps, injected


def _sales(meta, rng, year) -> list[SaleTransaction]:
    out = []
    amounts = np.array([5.0, 10.0, 20.0, 25.0, 40.0, 50.0, 100.0])
    start = dt.datetime(year - 1, 7, 1)
    for card in sorted(meta):
        n = 1 + int(rng.poisson(25))
        for _ in range(n):
            ts = start + dt.timedelta(minutes=int(rng.integers(0, 540 * 24 * 60)))
            out.append(SaleTransaction(card, ts, float(rng.choice(amounts))))
    out.sort(key=lambda s: (s.timestamp, s.card_id, s.amount))
    return out


def generate_choice_observations(n: int, coefficients: dict, rng_or_seed) -> list[ChoiceObservation]:
    """Feature vectors shaped like the field sample and choices drawn from a logit.

    ``coefficients`` maps ``"ASC"`` and feature names (in the model's scaled
    units: $1000/year, 100 times/year, $1000) to true values.
    """
    from .choice import DEFAULT_FEATURES

    rng = rng_or_seed if isinstance(rng_or_seed, np.random.Generator) else np.random.default_rng(rng_or_seed)
    scales = {f.name: f.scale for f in DEFAULT_FEATURES}
    total = np.clip(rng.normal(917.7, 367.8, n), 20, None).round(2)
    freq = np.clip(rng.normal(31.4, 20.0, n).round(), 1, None).astype(int)
    biggest = np.clip(rng.normal(66.0, 37.6, n), 5, None).round(2)
    u = rng.random(n)
    high = (u < 0.093).astype(int)
    low = ((u >= 0.093) & (u < 0.106)).astype(int)
    pass_user = (rng.random(n) < 0.374).astype(int)
    reduced = (rng.random(n) < 0.087).astype(int)
    red = np.where(rng.random(n) < 0.8, 1.0, rng.uniform(0, 1, n).round(4))
    downtown = (rng.random(n) < 0.635).astype(int)
    raw = {
        "total_added_value": total,
        "add_value_frequency": freq,
        "max_added_value": biggest,
        "high_income": high,
        "low_income": low,
        "pass_user": pass_user,
        "reduced_fare": reduced,
        "od_redundancy": red,
        "downtown_destination": downtown,
    }
    v = np.full(n, float(coefficients.get("ASC", 0.0)))
    for name, beta in coefficients.items():
        if name == "ASC":
            continue
        if name not in raw:
            raise InfeasibleConfigError(f"unknown coefficient {name!r}")
        v = v + float(beta) * raw[name] / scales[name]
    y = rng.random(n) < expit(v)
    return [
        ChoiceObservation(
            card_id=f"o{i:06d}",
            choice=TRANSIT if y[i] else OTHER,
            total_added_value=float(total[i]),
            add_value_frequency=int(freq[i]),
            max_added_value=float(biggest[i]),
            high_income=int(high[i]),
            low_income=int(low[i]),
            pass_user=int(pass_user[i]),
            reduced_fare=int(reduced[i]),
            downtown_destination=int(downtown[i]),
            od_redundancy=float(red[i]),
            trip_ordinal=1,
        )
        for i in range(n)
    ]


def write_scenario(scenario: Scenario, out_dir) -> list[Path]:
    """Write every scenario file under ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    written = [
        atomic_write(out / "network.yaml", dumps_yaml(scenario.network_doc)),
        atomic_write(out / "incident.yaml", dumps_yaml(scenario.incident_doc)),
        atomic_write(out / "incident_log.csv", write_incident_log(scenario.incident_log)),
        atomic_write(out / "avl.csv", write_avl(scenario.avl)),
        atomic_write(out / "sales.csv", write_sales(scenario.sales)),
        atomic_write(out / "ground_truth.json", dumps_json(scenario.truth.to_dict())),
        atomic_write(out / "run.yaml", dumps_yaml(scenario.run_config)),
        atomic_write(out / "config.yaml", dumps_yaml(dataclasses.asdict(scenario.config))),
    ]
    for day, taps in sorted(scenario.afc.items()):
        written.append(atomic_write(out / "afc" / f"{day}.csv", write_afc(taps)))
    if scenario.observations:
        written.append(atomic_write(out / "observations.csv", write_observations(scenario.observations)))
    return written


def demand_feed(
    seed: int,
    stations: list[str],
    normal_days: list[dt.date],
    incident_day: dt.date,
    window: tuple[float, float],
    rate: float = 200.0,
    shift: float = 0.4,
    injected: tuple[str, ...] = (),
    control: bool = False,
    interval: float = 15.0,
    span: tuple[float, float] = (BACKGROUND_START, BACKGROUND_END),
):
    """Tap feed with per-cell Poisson counts and a known injected shift.

    Injected stations get rate ``(1 + shift)`` in intervals overlapping
    ``window`` on the incident day. With ``control`` the incident day instead
    repeats the rounded normal-day mean of every cell, so it never leaves the
    2-sigma band. Returns (taps, injected cells as {(station, tau)}).
    """
    rng = np.random.default_rng(seed)
    taus = list(range(int(span[0] // interval), int(math.ceil(span[1] / interval))))
    in_window = {tau for tau in taus if tau * interval < window[1] and (tau + 1) * interval > window[0]}
    counts: dict[tuple, int] = {}
    for d in normal_days:
        for s in stations:
            for tau in taus:
                counts[(d, s, tau)] = int(rng.poisson(rate))
    cells = set()
    for s in stations:
        for tau in taus:
            if control:
                counts[(incident_day, s, tau)] = int(round(np.mean([counts[(d, s, tau)] for d in normal_days])))
            elif s in injected and tau in in_window:
                counts[(incident_day, s, tau)] = int(rng.poisson(rate * (1 + shift)))
                cells.add((s, tau))
            else:
                counts[(incident_day, s, tau)] = int(rng.poisson(rate))
    taps = []
    serial = 0
    for (d, s, tau), n in sorted(counts.items()):
        for i in range(n):
            minute = tau * interval + interval * (i + 0.5) / (n + 1)
            taps.append(TapEvent(f"f{serial:08d}", _at(d, minute), s, "rail"))
            serial += 1
    return taps, cells
