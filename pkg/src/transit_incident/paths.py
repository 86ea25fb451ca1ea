"""Candidate path enumeration over the integrated network.

A path is a sequence of ride legs. Each leg rides one line-direction from a
boarding station to a later alighting station; consecutive legs meet at the
same station or are joined by a declared walking transfer. Paths are simple:
no station (including stations passed through mid-leg) is visited twice.

Enumeration is a best-first search over partial paths ordered by travel time
plus an admissible lower bound (reverse Dijkstra on the station graph), so
complete paths come off the queue in nondecreasing travel time.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Iterable

from .errors import IntegrityError, SchemaError
from .network import IncidentSpec, TransitNetwork, blocked_line_directions

# Paths whose travel times differ by less than this are treated as ties.
TIME_EPS = 1e-9


@dataclass(frozen=True)
class PathFilter:
    k: int = 5
    max_transfers: int = 3
    max_detour_ratio: float = 3.0

    def __post_init__(self):
        if self.k < 1:
            raise SchemaError("k must be >= 1", "paths.filter")
        if self.max_transfers < 0:
            raise SchemaError("max_transfers must be >= 0", "paths.filter")
        if self.max_detour_ratio < 1.0:
            raise SchemaError("max_detour_ratio must be >= 1", "paths.filter")


@dataclass(frozen=True)
class Leg:
    line: str
    board: str
    alight: str
    ride_time: float
    stations: tuple[str, ...]
    segments: tuple[str, ...]

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.line, self.board, self.alight)


@dataclass(frozen=True)
class Path:
    legs: tuple[Leg, ...]
    walks: tuple[float, ...]  # walk before legs[i + 1]; 0.0 for a same-station transfer
    headway: float
    capacity: float
    travel_time: float

    @property
    def transfer_count(self) -> int:
        return len(self.legs) - 1

    @property
    def origin(self) -> str:
        return self.legs[0].board

    @property
    def destination(self) -> str:
        return self.legs[-1].alight

    @property
    def key(self) -> tuple[tuple[str, str, str], ...]:
        return tuple(leg.key for leg in self.legs)

    @property
    def lines(self) -> tuple[str, ...]:
        return tuple(leg.line for leg in self.legs)

    def label(self) -> str:
        return " > ".join(f"{l.line}:{l.board}-{l.alight}" for l in self.legs)

    def sort_key(self):
        return (round(self.travel_time, 9), self.key)


@dataclass(frozen=True)
class PathSet:
    od: tuple[str, str]
    baseline: tuple[Path, ...]
    incident: tuple[Path, ...]
    affected: bool
    blocked_lines: frozenset[str] = frozenset()


def build_path(network: TransitNetwork, legs: Iterable[Leg], walks: Iterable[float], use_available_capacity: bool = False) -> Path:
    legs = tuple(legs)
    walks = tuple(walks)
    lines = [network.lines[leg.line] for leg in legs]
    if use_available_capacity:
        caps = [ln.available_capacity if ln.available_capacity is not None else ln.capacity for ln in lines]
    else:
        caps = [ln.capacity for ln in lines]
    return Path(
        legs=legs,
        walks=walks,
        headway=max(ln.headway for ln in lines),
        capacity=min(caps),
        travel_time=math.fsum([leg.ride_time for leg in legs] + list(walks)),
    )


class _Index:
    """Per-network lookup tables, built once per search."""

    def __init__(self, network: TransitNetwork, excluded_lines: frozenset[str]):
        self.network = network
        self.at_station: dict[str, list[tuple[str, int]]] = {}
        for lid in sorted(network.lines):
            if lid in excluded_lines:
                continue
            line = network.lines[lid]
            for pos, sid in enumerate(line.stations[:-1]):
                self.at_station.setdefault(sid, []).append((lid, pos))
        self.walks: dict[str, list[tuple[str, float]]] = {}
        for t in network.transfers:
            self.walks.setdefault(t.origin, []).append((t.destination, t.walk_time))
        for v in self.walks.values():
            v.sort()
        self.excluded = excluded_lines

    def lower_bounds(self, destination: str) -> dict[str, float]:
        # reverse Dijkstra on hop edges
        rev: dict[str, list[tuple[str, float]]] = {}
        for lid, line in self.network.lines.items():
            if lid in self.excluded:
                continue
            for j, t in enumerate(line.travel_times):
                rev.setdefault(line.stations[j + 1], []).append((line.stations[j], t))
        for t in self.network.transfers:
            rev.setdefault(t.destination, []).append((t.origin, t.walk_time))
        dist = {destination: 0.0}
        heap = [(0.0, destination)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist.get(u, math.inf):
                continue
            for v, w in rev.get(u, ()):
                nd = d + w
                if nd < dist.get(v, math.inf):
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        return dist


def _search(
    network: TransitNetwork,
    origin: str,
    destination: str,
    flt: PathFilter,
    excluded_lines: frozenset[str],
    use_available_capacity: bool,
    reference_time: float | None = None,
) -> list[Path]:
    index = _Index(network, excluded_lines)
    bound = index.lower_bounds(destination)
    if origin not in bound:
        return []

    counter = itertools.count()
    # state: (f, g, seq, station, last_line, walked, visited, legs, walks, pending_walk)
    heap = [(bound[origin], 0.0, next(counter), origin, None, False, frozenset([origin]), (), (), 0.0)]
    found: list[Path] = []
    best = reference_time
    while heap:
        f, g, _, here, last_line, walked, visited, legs, walks, pending = heapq.heappop(heap)
        if best is not None and f > best * flt.max_detour_ratio + TIME_EPS:
            break
        if len(found) >= flt.k and f > found[-1].travel_time + TIME_EPS:
            break
        if here == destination:
            path = build_path(network, legs, walks, use_available_capacity)
            found.append(path)
            if best is None:
                best = path.travel_time
            continue
        # ride moves
        if len(legs) <= flt.max_transfers:
            for lid, pos in index.at_station.get(here, ()):
                if lid == last_line:
                    continue
                line = network.lines[lid]
                ride = 0.0
                passed = [here]
                for j in range(pos + 1, len(line.stations)):
                    nxt = line.stations[j]
                    if nxt in visited:
                        break
                    ride += line.travel_times[j - 1]
                    passed.append(nxt)
                    h = bound.get(nxt)
                    if h is not None:
                        leg = Leg(lid, here, nxt, ride, tuple(passed), line.segments[pos:j])
                        new_walks = walks + (pending,) if legs else walks
                        heapq.heappush(
                            heap,
                            (
                                g + ride + h,
                                g + ride,
                                next(counter),
                                nxt,
                                lid,
                                False,
                                visited.union(passed),
                                legs + (leg,),
                                new_walks,
                                0.0,
                            ),
                        )
                    if nxt == destination:
                        break
        # walk moves: only between two rides
        if legs and not walked and len(legs) <= flt.max_transfers:
            for nxt, walk in index.walks.get(here, ()):
                if nxt in visited or nxt == destination:
                    continue
                h = bound.get(nxt)
                if h is None:
                    continue
                heapq.heappush(
                    heap,
                    (g + walk + h, g + walk, next(counter), nxt, last_line, True, visited | {nxt}, legs, walks, walk),
                )

    found = [p for p in found if best is None or p.travel_time <= best * flt.max_detour_ratio + TIME_EPS]
    found.sort(key=Path.sort_key)
    return found[: flt.k]


def k_shortest_paths(
    network: TransitNetwork,
    od: tuple[str, str],
    k: int | None = None,
    flt: PathFilter | None = None,
    excluded_lines: Iterable[str] = (),
    use_available_capacity: bool = False,
    reference_time: float | None = None,
) -> list[Path]:
    """Up to ``k`` loop-free paths for ``od`` sorted by travel time.

    Ties in travel time are broken lexicographically on the leg sequence
    ``(line, board, alight)``. Returns an empty list when no path exists.
    The detour bound is relative to the shortest path found, or to
    ``reference_time`` when given.
    """
    flt = flt or PathFilter()
    if k is not None:
        flt = PathFilter(k=k, max_transfers=flt.max_transfers, max_detour_ratio=flt.max_detour_ratio)
    origin, destination = od
    network.require_station(origin, "paths.unknown-station")
    network.require_station(destination, "paths.unknown-station")
    if origin == destination:
        raise IntegrityError("origin equals destination", "paths.degenerate-od")
    return _search(
        network, origin, destination, flt, frozenset(excluded_lines), use_available_capacity, reference_time
    )


def _merge(first: Iterable[Path], second: Iterable[Path]) -> tuple[Path, ...]:
    seen = {}
    for p in itertools.chain(first, second):
        seen.setdefault(p.key, p)
    return tuple(sorted(seen.values(), key=Path.sort_key))


def incident_path_sets(
    network: TransitNetwork,
    incident: IncidentSpec,
    ods: Iterable[tuple[str, str]] | None = None,
    k: int | None = None,
    flt: PathFilter | None = None,
    incident_k: int | None = None,
    baseline: dict[tuple[str, str], list[Path]] | None = None,
) -> dict[tuple[str, str], PathSet]:
    """Baseline and during-incident path sets for each OD.

    The during-incident set keeps unblocked baseline paths and adds the
    ``incident_k`` shortest paths of the network with blocked line-directions
    removed. The detour bound of that search stays anchored to the baseline
    shortest time, so alternatives are judged against the normal trip.
    ``baseline`` may carry precomputed baseline path lists.
    """
    flt = flt or PathFilter()
    k = flt.k if k is None else k
    incident_k = k if incident_k is None else incident_k
    blocked = blocked_line_directions(network, incident)
    ods = network.od_universe() if ods is None else list(ods)
    out = {}
    for od in ods:
        if baseline is not None and od in baseline:
            base = tuple(baseline[od])
        else:
            base = tuple(k_shortest_paths(network, od, k, flt))
        affected = any(leg.line in blocked for p in base for leg in p.legs)
        if affected:
            kept = [p for p in base if not any(leg.line in blocked for leg in p.legs)]
            extra = k_shortest_paths(
                network, od, incident_k, flt, excluded_lines=blocked, reference_time=base[0].travel_time
            )
            during = _merge(kept, extra)
        else:
            during = base
        out[od] = PathSet(od=od, baseline=base, incident=during, affected=affected, blocked_lines=blocked)
    return out
