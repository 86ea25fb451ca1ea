"""Shared fixtures data and brute-force oracles for the test suite.

The oracles deliberately share no code with the package: they re-derive
results by exhaustive enumeration or exact rational arithmetic.
"""

from __future__ import annotations

import datetime as dt
import itertools
import math
from collections import defaultdict
from fractions import Fraction

import numpy as np

from transit_incident.headway import VehicleEvent

FEED_DAY = dt.date(2019, 11, 8)


def paper_example_doc() -> dict:
    """One OD, a fast rail path and a slow bus path (H=30, C=200, L=20 / 60)."""
    return {
        "stations": [{"id": s} for s in ("O", "X", "Y", "D")],
        "segments": [{"id": "s1", "from": "O", "to": "X"}, {"id": "s2", "from": "X", "to": "D"}],
        "lines": [
            {"id": "P1", "mode": "rail", "stations": ["O", "X", "D"], "segments": ["s1", "s2"],
             "headway": 30, "capacity": 200, "travel_times": [10, 10]},
            {"id": "P2", "mode": "bus", "stations": ["O", "Y", "D"],
             "headway": 30, "capacity": 200, "travel_times": [30, 30]},
        ],
        "ods": [["O", "D"]],
        "income": {"O": 50000},
    }


def incident_doc(blocked, start="2019-11-08T08:30:00", minutes=60, **extra) -> dict:
    t0 = dt.datetime.fromisoformat(start)
    return {
        "blocked_segments": list(blocked),
        "start": t0.isoformat(),
        "end": (t0 + dt.timedelta(minutes=minutes)).isoformat(),
        **extra,
    }


def random_network_doc(rng: np.random.Generator, max_stations: int = 30) -> dict:
    """Small random network: a few two-way rail lines, bus lines and walks."""
    n = int(rng.integers(4, max_stations + 1))
    ids = [f"s{i}" for i in range(n)]
    doc = {"stations": [{"id": s} for s in ids], "segments": [], "lines": [], "transfers": []}
    for r in range(int(rng.integers(1, 4))):
        m = int(rng.integers(2, min(8, n) + 1))
        seq = [ids[i] for i in rng.choice(n, size=m, replace=False)]
        segs = []
        for a, b in zip(seq, seq[1:]):
            sid = f"R{r}:{a}-{b}"
            doc["segments"].append({"id": sid, "from": a, "to": b, "track": f"R{r}"})
            segs.append(sid)
        times = [float(rng.integers(1, 8)) for _ in segs]
        hw, cap = float(rng.choice([4, 6, 8, 10, 15])), float(rng.choice([400, 600, 800]))
        doc["lines"].append({"id": f"R{r}-out", "route": f"R{r}", "mode": "rail", "stations": seq,
                             "segments": segs, "headway": hw, "capacity": cap, "travel_times": times})
        doc["lines"].append({"id": f"R{r}-in", "route": f"R{r}", "mode": "rail", "stations": seq[::-1],
                             "segments": segs[::-1], "headway": hw, "capacity": cap, "travel_times": times[::-1]})
    for b in range(int(rng.integers(0, 3))):
        m = int(rng.integers(2, min(6, n) + 1))
        seq = [ids[i] for i in rng.choice(n, size=m, replace=False)]
        doc["lines"].append({"id": f"B{b}", "mode": "bus", "stations": seq,
                             "headway": float(rng.choice([10, 15, 20, 30])), "capacity": float(rng.choice([40, 60, 80])),
                             "travel_times": [float(rng.integers(2, 12)) for _ in seq[1:]]})
    for _ in range(int(rng.integers(0, 4))):
        a, b = rng.choice(n, size=2, replace=False)
        doc["transfers"].append({"from": ids[a], "to": ids[b], "walk": float(rng.integers(1, 6))})
    return doc


# -- path oracle --------------------------------------------------------------------------------


def oracle_paths(network, origin, destination, k, max_transfers, ratio, excluded=(), reference=None):
    """Exhaustive DFS over simple leg sequences; same admissibility rules as the engine.

    Returns [(travel_time, key, headway, capacity)] sorted and cut to k.
    """
    excluded = set(excluded)
    walks = defaultdict(list)
    for t in network.transfers:
        walks[t.origin].append((t.destination, t.walk_time))
    out = []

    def rides_from(station):
        for lid, line in network.lines.items():
            if lid in excluded or station not in line.stations:
                continue
            i = line.stations.index(station)
            for j in range(i + 1, len(line.stations)):
                yield lid, line.stations[i : j + 1], sum(line.travel_times[i:j])

    def dfs(station, visited, legs, time, last_line):
        if len(legs) > max_transfers + 1:
            return
        for lid, passed, ride in rides_from(station):
            if lid == last_line or any(s in visited for s in passed[1:]) or destination in passed[1:-1]:
                continue
            leg = (lid, passed[0], passed[-1])
            new_legs = legs + [leg]
            if len(new_legs) > max_transfers + 1:
                continue
            if passed[-1] == destination:
                out.append((time + ride, tuple(new_legs)))
                continue
            seen = visited | set(passed)
            dfs(passed[-1], seen, new_legs, time + ride, lid)
            for nxt, w in walks[passed[-1]]:
                if nxt in seen or nxt == destination:
                    continue
                dfs(nxt, seen | {nxt}, new_legs, time + ride + w, lid)

    dfs(origin, {origin}, [], 0.0, None)
    if not out:
        return []
    best = min(t for t, _ in out) if reference is None else reference
    keep = [(t, key) for t, key in out if t <= best * ratio + 1e-9]
    keep.sort(key=lambda x: (round(x[0], 9), x[1]))
    rows = []
    for t, key in keep[:k]:
        lines = [network.lines[l] for l, _, _ in key]
        rows.append((t, key, max(l.headway for l in lines), min(l.capacity for l in lines)))
    return rows


# -- throughput oracle ------------------------------------------------------------------------------


def oracle_throughput(H, L, C, D) -> float:
    """Vehicle-by-vehicle sum of the partial-credit definition, per hour."""
    total = 0.0
    for k in range(1, int(math.floor(D / H + 1e-9)) + 1):
        total += min(D - (k - 1) * H, L) / L * C
    return total / D * 60.0


def oracle_index(network, report_sets, D):
    """Straight-line index from path sets: sum of clamped during over sum of before."""
    num = den = 0.0
    for ps in report_sets.values():
        if not ps.affected:
            continue
        before = sum(oracle_throughput(p.headway, p.travel_time, p.capacity, D) for p in ps.baseline)
        during = sum(oracle_throughput(p.headway, p.travel_time, p.capacity, D) for p in ps.incident)
        num += min(during, before)
        den += before
    return num / den


# -- AVL feeds -------------------------------------------------------------------------------------


def at(day, seconds):
    return dt.datetime.combine(day, dt.time()) + dt.timedelta(seconds=int(seconds))


def random_feed(rng, days=2, stations=4):
    events = []
    for d in range(days):
        day = FEED_DAY - dt.timedelta(weeks=d)
        t = 5 * 3600 + int(rng.integers(0, 600))
        for trip in range(int(rng.integers(3, 40))):
            t += int(rng.integers(30, 1500))
            off = 0
            for s in range(stations):
                off += int(rng.integers(60, 400))
                if rng.random() < 0.9:
                    events.append(VehicleEvent(f"t{d}-{trip}", "L", f"s{s}", at(day, t + off)))
    rng.shuffle(events)
    return events


def regular_feed(headway_min, days, stations=5, start=6 * 60, end=10 * 60):
    events = []
    for day in days:
        t, n = start, 0
        while t < end:
            for s in range(stations):
                events.append(VehicleEvent(f"{day}-{n}", "L", f"s{s}", at(day, (t + 3 * s) * 60)))
            t += headway_min
            n += 1
    return events



# -- headway oracle -------------------------------------------------------------------------------


def oracle_line_headway(events, line, interval, mode="sentinel"):
    """{(day, tau): Fraction headway} from first principles with exact arithmetic.

    Arrival times are whole seconds, so minutes are exact Fractions.
    """
    by_station = defaultdict(list)
    for e in events:
        if e.line == line:
            by_station[(e.arrival.date(), e.station)].append(e.arrival)
    sums, trips, zeros = defaultdict(Fraction), defaultdict(int), defaultdict(int)
    interval = Fraction(interval)
    for (day, _), arrivals in by_station.items():
        arrivals.sort()
        prev = None
        for a in arrivals:
            minute = Fraction(a.hour * 3600 + a.minute * 60 + a.second, 60)
            tau = math.floor(minute / interval)
            h = Fraction(0) if prev is None else Fraction(int((a - prev).total_seconds()), 60)
            sums[(day, tau)] += h
            trips[(day, tau)] += 1
            zeros[(day, tau)] += prev is None
            prev = a
    out = {}
    for key in sums:
        den = trips[key] - (1 if mode == "verbatim" else zeros[key])
        out[key] = sums[key] / den if den > 0 else None
    return out


def brute_force_normal_days(incident, log, window, buffer):
    """Every same-weekday candidate checked against every logged incident, minute by minute."""
    day = incident.start.date()
    keep = []
    for w in range(1, window + 1):
        d = day - dt.timedelta(weeks=w)
        lo = dt.datetime.combine(d, incident.start.time()) - dt.timedelta(minutes=buffer)
        hi = dt.datetime.combine(d, incident.end.time()) + dt.timedelta(minutes=buffer)
        clash = False
        for inc in log:
            related = not incident.lines or not inc.lines or bool(set(incident.lines) & set(inc.lines))
            if not related:
                continue
            t = lo
            while t <= hi:
                if inc.start <= t <= inc.end:
                    clash = True
                    break
                t += dt.timedelta(minutes=1)
            if not clash and (lo <= inc.start <= hi or lo <= inc.end <= hi):
                clash = True
            if clash:
                break
        if not clash:
            keep.append(d)
    return sorted(keep)


def subsets(items):
    items = list(items)
    return itertools.chain.from_iterable(itertools.combinations(items, r) for r in range(len(items) + 1))
