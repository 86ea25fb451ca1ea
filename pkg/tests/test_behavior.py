import datetime as dt

import pytest

from transit_incident.behavior import (
    OTHER,
    TRANSIT,
    UNLABELED,
    Dropped,
    SaleTransaction,
    build_panels,
    extract_features,
    find_regular_passengers,
    infer_cohort,
    is_regular,
    label_choice,
    sales_summary,
)
from transit_incident.errors import UndefinedODError
from transit_incident.flows import TapEvent
from transit_incident.network import IncidentSpec, load_incident, load_network
from transit_incident.synth import ScenarioConfig, generate

from support import paper_example_doc

DAY = dt.date(2019, 11, 8)
NORMAL = [DAY - dt.timedelta(weeks=w) for w in (4, 3, 2, 1)]
INCIDENT = IncidentSpec(frozenset({"s1"}), dt.datetime(2019, 11, 8, 8, 30), dt.datetime(2019, 11, 8, 9, 30))


def tap(card, day, minute, loc, fare="cash", reduced=False):
    ts = dt.datetime.combine(day, dt.time()) + dt.timedelta(minutes=minute)
    return TapEvent(card, ts, loc, "rail", fare, reduced)


def commuter(card="c", times=((540, "O"), (1050, "D")), jitter=(0, 1, 0, 1), days=NORMAL):
    return [tap(card, d, t + j, loc) for d, j in zip(days, jitter) for t, loc in times]


def panel(taps, incident_taps=()):
    return build_panels(list(taps) + list(incident_taps), NORMAL, DAY)["c"]


def test_regular_commuter_detected():
    p = panel(commuter())
    assert p.trip_count == 2
    assert [t.destination for t in p.reference_day()] == ["D", "O"]
    assert is_regular(p)


@pytest.mark.parametrize(
    "taps",
    [
        commuter(days=NORMAL[:3], jitter=(0, 1, -1)),  # missing day
        commuter() + [tap("c", NORMAL[0], 700, "X")],  # extra trip one day
        commuter()[:-2] + [tap("c", NORMAL[3], 541, "X"), tap("c", NORMAL[3], 1050, "D")],  # origin changed
        commuter(jitter=(0, 1, -1, 30)),  # outlier time
    ],
    ids=["missing-day", "count-change", "origin-change", "time-outlier"],
)
def test_irregular_kinds(taps):
    assert not is_regular(panel(taps))


def test_sigma_band_is_closed():
    p = panel(commuter(jitter=(0, 0, 0, 0)))
    assert is_regular(p)
    p = panel(commuter(jitter=(0, 0, 2, 2)))
    # mean 1, std = sqrt(4/3): each point is 1 minute away
    assert is_regular(p)


def test_observed_destinations_compared_when_present():
    taps = commuter()
    taps = [TapEvent(t.card_id, t.timestamp, t.location, t.mode, destination="D" if t.location == "O" else "O")
            for t in taps]
    taps[-2] = TapEvent("c", taps[-2].timestamp, "O", "rail", destination="X")
    assert not is_regular(panel(taps))
    assert is_regular(panel(taps), compare_destinations=False)


def test_labels():
    base = commuter()
    assert label_choice(panel(base, [tap("c", DAY, 540, "O"), tap("c", DAY, 560, "X"), tap("c", DAY, 1050, "D")]),
                        INCIDENT) == TRANSIT
    assert label_choice(panel(base, [tap("c", DAY, 541, "X"), tap("c", DAY, 1050, "D")]), INCIDENT) == TRANSIT
    assert label_choice(panel(base, [tap("c", DAY, 1050, "D")]), INCIDENT) == OTHER
    assert label_choice(panel(base, [tap("c", DAY, 542, "O"), tap("c", DAY, 1050, "D")]), INCIDENT) == UNLABELED


def test_window_edges_are_inclusive():
    p = panel(commuter(times=((510, "O"), (1050, "D")), jitter=(0, 0, 0, 0)), [tap("c", DAY, 1050, "D")])
    assert label_choice(p, INCIDENT) == OTHER


def _network():
    doc = paper_example_doc()
    doc["income"] = {"O": 20000}
    doc["downtown"] = ["D"]
    return load_network(doc)


def test_features_and_drop_reasons():
    net = _network()
    p = panel(commuter(), [tap("c", DAY, 1050, "D")])
    sales = {"c": (100.0, 2, 60.0)}
    obs = extract_features(p, OTHER, sales, net, INCIDENT, lambda o, d: 0.75)
    assert obs.low_income == 1 and obs.high_income == 0
    assert obs.downtown_destination == 1 and obs.od_redundancy == 0.75
    assert (obs.origin, obs.destination, obs.trip_ordinal) == ("O", "D", 1)
    assert obs.total_added_value == 100.0 and obs.add_value_frequency == 2
    assert extract_features(p, UNLABELED, sales, net, INCIDENT, lambda o, d: 1.0) == Dropped("c", "unlabeled")

    def undefined(o, d):
        raise UndefinedODError("no path", "x")

    assert extract_features(p, OTHER, sales, net, INCIDENT, undefined).reason == "no-baseline-path"
    late = panel(commuter(times=((700, "O"), (1050, "D"))), [])
    assert extract_features(late, OTHER, sales, net, INCIDENT, lambda o, d: 1.0).reason == "no-incident-trip"
    doc = paper_example_doc()
    doc.pop("income")
    plain = load_network(doc)
    assert extract_features(p, OTHER, sales, plain, INCIDENT, lambda o, d: 1.0).reason == "missing-income"
    single = panel(commuter(times=((540, "O"),)), [])
    assert extract_features(single, OTHER, sales, net, INCIDENT, lambda o, d: 1.0).reason == "missing-destination"


def test_pass_flag_and_reduced_fare():
    net = _network()
    taps = [tap("c", d, t + j, loc, fare="pass", reduced=True) for d, j in zip(NORMAL, (0, 1, 0, 1))
            for t, loc in ((540, "O"), (1050, "D"))]
    p = panel(taps, [tap("c", DAY, 1050, "D", fare="pass")])
    obs = extract_features(p, OTHER, {}, net, INCIDENT, lambda o, d: 1.0)
    assert obs.pass_user == 1 and obs.reduced_fare == 1 and obs.total_added_value == 0.0


def test_sales_summary_filters_year():
    s = [SaleTransaction("a", dt.datetime(2019, 1, 1), 20.0), SaleTransaction("a", dt.datetime(2019, 5, 1), 50.0),
         SaleTransaction("a", dt.datetime(2018, 5, 1), 500.0)]
    assert sales_summary(s, 2019) == {"a": (70.0, 2, 50.0)}


@pytest.mark.parametrize("template", ["two-parallel-lines", "single-line", "paper-example"])
def test_synthetic_cohort_recovered_exactly(template):
    sc = generate(ScenarioConfig(seed=3, template=template, n_cards=300))
    net = load_network(sc.network_doc)
    inc = load_incident(sc.incident_doc, net)
    taps = [t for day in sc.afc.values() for t in day]
    normal = [dt.date.fromisoformat(d) for d in sc.truth.normal_days]
    cohort = infer_cohort(taps, sc.sales, net, inc, normal, lambda o, d: 0.5)
    want_regular = {c for c, r in sc.truth.regular.items() if r}
    panels = build_panels(taps, normal, inc.day)
    assert find_regular_passengers({c: panels[c] for c in sc.truth.regular}) == want_regular
    assert {c: cohort.labels[c] for c in sc.truth.labels} == sc.truth.labels


def test_sales_arithmetic_and_income_flags():
    s = [SaleTransaction("a", dt.datetime(2019, 3, i + 1), 50.0) for i in range(10)]
    assert sales_summary(s, 2019) == {"a": (500.0, 10, 50.0)}
    doc = paper_example_doc()
    doc["income"] = {"O": 130000}
    net = load_network(doc)
    obs = extract_features(panel(commuter(), [tap("c", DAY, 1050, "D")]), OTHER, {}, net, INCIDENT, lambda o, d: 1.0)
    assert (obs.high_income, obs.low_income) == (1, 0)


def test_cohort_features_match_raw_reaggregation():
    sc = generate(ScenarioConfig(seed=11, template="two-parallel-lines", n_cards=200))
    net = load_network(sc.network_doc)
    inc = load_incident(sc.incident_doc, net)
    taps = [t for day in sc.afc.values() for t in day]
    normal = [dt.date.fromisoformat(d) for d in sc.truth.normal_days]
    cohort = infer_cohort(taps, sc.sales, net, inc, normal, lambda o, d: 0.5)
    assert cohort.observations
    for o in cohort.observations:
        amounts = [s.amount for s in sc.sales if s.card_id == o.card_id and s.timestamp.year == inc.day.year]
        assert o.total_added_value == pytest.approx(sum(amounts), abs=1e-9)
        assert o.add_value_frequency == len(amounts)
        assert o.max_added_value == (max(amounts) if amounts else 0.0)
        mine = sorted((t for t in taps if t.card_id == o.card_id), key=lambda t: t.timestamp)
        home = min((t for t in mine if t.timestamp.date() == min(normal)), key=lambda t: t.timestamp).location
        assert o.low_income == int(net.income[home] < 25_000)
        assert o.high_income == int(net.income[home] > 120_000)
        assert o.reduced_fare == int(any(t.reduced_fare for t in mine))
        assert o.downtown_destination == int(o.destination in net.downtown)
