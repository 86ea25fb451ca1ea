"""Regular-passenger detection, incident-day choice labels and choice features.

Times are minutes since the start of the service day. The incident window is
the closed interval [start, end].
"""

from __future__ import annotations

import datetime as dt
import math
import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

from .errors import UndefinedODError
from .flows import TapEvent
from .network import IncidentSpec, TransitNetwork
from .timeutil import minute_of_day

TRANSIT = "Transit"
OTHER = "Other"
UNLABELED = "Unlabeled"

HIGH_INCOME = 120_000.0
LOW_INCOME = 25_000.0

# slack on the closed +/- sigma band, in minutes
BAND_SLACK = 1e-9


@dataclass(frozen=True)
class TripRecord:
    origin: str
    destination: str | None
    time: float
    ordinal: int
    destination_source: str = "observed"  # or "heuristic"


@dataclass
class PassengerPanel:
    card_id: str
    normal: dict[dt.date, list[TripRecord]]
    incident: list[TripRecord]
    taps: list[TapEvent] = field(default_factory=list, repr=False)
    has_observed_destinations: bool = False

    @property
    def trip_count(self) -> int | None:
        counts = {len(t) for t in self.normal.values()}
        return counts.pop() if len(counts) == 1 else None

    def reference_day(self) -> list[TripRecord]:
        return self.normal[min(self.normal)]

    def mean_times(self) -> list[float]:
        n = self.trip_count or 0
        return [statistics.fmean(self.normal[d][i].time for d in self.normal) for i in range(n)]

    def std_times(self) -> list[float]:
        n = self.trip_count or 0
        if len(self.normal) < 2:
            return [0.0] * n
        return [statistics.stdev([self.normal[d][i].time for d in self.normal]) for i in range(n)]


def _trips_for_day(taps: list[TapEvent], heuristic: bool) -> list[TripRecord]:
    taps = sorted(taps, key=lambda t: (t.timestamp, t.location))
    out = []
    for n, tap in enumerate(taps, start=1):
        dest, source = tap.destination, "observed"
        if dest is None and heuristic:
            source = "heuristic"
            if n < len(taps):
                dest = taps[n].location
            elif len(taps) > 1:
                # last trip of the day returns to where the day started
                dest = taps[0].location
        out.append(TripRecord(tap.location, dest, minute_of_day(tap.timestamp), n, source if dest else "missing"))
    return out


def build_panels(
    taps: Iterable[TapEvent],
    normal_days: Iterable[dt.date],
    incident_day: dt.date,
    destination_heuristic: bool = True,
) -> dict[str, PassengerPanel]:
    """Group taps by card into per-day trip sequences.

    Destinations come from the tap's destination column when present;
    otherwise, with ``destination_heuristic``, from the origin of the next trip
    that day (the last trip returns to the first trip's origin).
    """
    normal_days = sorted(set(normal_days))
    wanted = set(normal_days) | {incident_day}
    by_card: dict[str, dict[dt.date, list[TapEvent]]] = defaultdict(lambda: defaultdict(list))
    for tap in taps:
        day = tap.timestamp.date()
        if day in wanted:
            by_card[tap.card_id][day].append(tap)
    panels = {}
    for card in sorted(by_card):
        days = by_card[card]
        observed = any(t.destination is not None for ts in days.values() for t in ts)
        normal = {d: _trips_for_day(days.get(d, []), destination_heuristic) for d in normal_days}
        panels[card] = PassengerPanel(
            card_id=card,
            normal=normal,
            incident=_trips_for_day(days.get(incident_day, []), destination_heuristic),
            taps=[t for d in sorted(days) for t in days[d]],
            has_observed_destinations=observed,
        )
    return panels


def is_regular(panel: PassengerPanel, compare_destinations: bool | None = None) -> bool:
    """Same trip count, origins (and observed destinations), times within 1 sigma, every normal day."""
    if len(panel.normal) < 2:
        return False
    n = panel.trip_count
    if not n:
        return False
    if compare_destinations is None:
        compare_destinations = panel.has_observed_destinations
    days = sorted(panel.normal)
    ref = panel.normal[days[0]]
    for d in days[1:]:
        for a, b in zip(ref, panel.normal[d]):
            if a.origin != b.origin:
                return False
            if compare_destinations and a.destination != b.destination:
                return False
    for i, (mean, std) in enumerate(zip(panel.mean_times(), panel.std_times())):
        for d in days:
            if abs(panel.normal[d][i].time - mean) > std + BAND_SLACK:
                return False
    return True


def find_regular_passengers(
    panels: dict[str, PassengerPanel], compare_destinations: bool | None = None
) -> set[str]:
    return {card for card, p in panels.items() if is_regular(p, compare_destinations)}


def _window(incident: IncidentSpec) -> tuple[float, float]:
    t0 = minute_of_day(incident.start)
    return t0, t0 + incident.duration


def incident_trips(panel: PassengerPanel, incident: IncidentSpec) -> tuple[list[TripRecord], list[TripRecord]]:
    """(normal-day trips whose mean start is in the window, incident-day trips in the window)."""
    t0, t1 = _window(incident)
    ref = panel.reference_day()
    normal = [trip for trip, mean in zip(ref, panel.mean_times()) if t0 <= mean <= t1]
    during = [trip for trip in panel.incident if t0 <= trip.time <= t1]
    return normal, during


def label_choice(panel: PassengerPanel, incident: IncidentSpec) -> str:
    """Transit if extra trips or a changed tap-in station; Other if trips vanish."""
    normal, during = incident_trips(panel, incident)
    if len(during) > len(normal):
        return TRANSIT
    if any(a.origin != b.origin for a, b in zip(normal, during)):
        return TRANSIT
    if len(during) < len(normal):
        return OTHER
    return UNLABELED


@dataclass(frozen=True)
class SaleTransaction:
    card_id: str
    timestamp: dt.datetime
    amount: float


@dataclass(frozen=True)
class ChoiceObservation:
    card_id: str
    choice: str
    total_added_value: float
    add_value_frequency: int
    max_added_value: float
    high_income: int
    low_income: int
    pass_user: int
    reduced_fare: int
    downtown_destination: int
    od_redundancy: float
    trip_ordinal: int
    origin: str = ""
    destination: str = ""
    destination_source: str = "observed"

    def to_row(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Dropped:
    card_id: str
    reason: str


def sales_summary(sales: Iterable[SaleTransaction], year: int) -> dict[str, tuple[float, int, float]]:
    """card -> (total added, number of add-value transactions, max single) in ``year``."""
    acc: dict[str, list[float]] = defaultdict(list)
    for s in sales:
        if s.timestamp.year == year:
            acc[s.card_id].append(s.amount)
    return {card: (math.fsum(v), len(v), max(v)) for card, v in acc.items()}


def extract_features(
    panel: PassengerPanel,
    label: str,
    sales: dict[str, tuple[float, int, float]],
    network: TransitNetwork,
    incident: IncidentSpec,
    od_redundancy: Callable[[str, str], float],
) -> ChoiceObservation | Dropped:
    """Proxy demographics and trip attributes for one labelled regular passenger."""
    if label not in (TRANSIT, OTHER):
        return Dropped(panel.card_id, "unlabeled")
    t0, t1 = _window(incident)
    ref = panel.reference_day()
    means = panel.mean_times()
    star = next((i for i, m in enumerate(means) if t0 <= m <= t1), None)
    if star is None:
        return Dropped(panel.card_id, "no-incident-trip")
    trip = ref[star]
    if trip.destination is None:
        return Dropped(panel.card_id, "missing-destination")
    if trip.destination == trip.origin:
        return Dropped(panel.card_id, "degenerate-od")
    home = ref[0].origin
    if home not in network.income:
        return Dropped(panel.card_id, "missing-income")
    if trip.origin not in network.stations or trip.destination not in network.stations:
        return Dropped(panel.card_id, "unknown-location")
    try:
        rod = od_redundancy(trip.origin, trip.destination)
    except UndefinedODError:
        return Dropped(panel.card_id, "no-baseline-path")
    income = network.income[home]
    total, freq, biggest = sales.get(panel.card_id, (0.0, 0, 0.0))
    taps_in = [t for t in panel.taps if t.timestamp.date() == incident.day]
    fare_source = taps_in or [t for t in panel.taps if t.timestamp.date() == max(panel.normal)] or panel.taps
    return ChoiceObservation(
        card_id=panel.card_id,
        choice=label,
        total_added_value=total,
        add_value_frequency=freq,
        max_added_value=biggest,
        high_income=int(income > HIGH_INCOME),
        low_income=int(income < LOW_INCOME),
        pass_user=int(fare_source[0].fare_type == "pass"),
        reduced_fare=int(any(t.reduced_fare for t in panel.taps)),
        downtown_destination=int(trip.destination in network.downtown),
        od_redundancy=rod,
        trip_ordinal=star + 1,
        origin=trip.origin,
        destination=trip.destination,
        destination_source=trip.destination_source,
    )


@dataclass
class CohortResult:
    regular: set[str]
    labels: dict[str, str]
    observations: list[ChoiceObservation]
    dropped: list[Dropped]

    def label_counts(self) -> dict[str, int]:
        out = {TRANSIT: 0, OTHER: 0, UNLABELED: 0}
        for v in self.labels.values():
            out[v] += 1
        return out


def infer_cohort(
    taps: Iterable[TapEvent],
    sales: Iterable[SaleTransaction],
    network: TransitNetwork,
    incident: IncidentSpec,
    normal_days: Sequence[dt.date],
    od_redundancy: Callable[[str, str], float],
    year: int | None = None,
    destination_heuristic: bool = True,
) -> CohortResult:
    """Panels -> regular set -> labels -> observations, in one pass."""
    panels = build_panels(taps, normal_days, incident.day, destination_heuristic)
    regular = find_regular_passengers(panels)
    summary = sales_summary(sales, incident.day.year if year is None else year)
    labels, obs, dropped = {}, [], []
    for card in sorted(regular):
        lab = label_choice(panels[card], incident)
        labels[card] = lab
        res = extract_features(panels[card], lab, summary, network, incident, od_redundancy)
        (obs if isinstance(res, ChoiceObservation) else dropped).append(res)
    return CohortResult(regular, labels, obs, dropped)
