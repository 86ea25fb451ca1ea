"""Command line: ``transit-incident <command> [options]``.

Options may come from a YAML run config (``--config``, or the file named by
``$TRANSIT_INCIDENT_CONFIG``); flags given on the command line win. Relative
paths in a config resolve against the config file's directory.

Exit codes: 0 success, 2 usage, 3 missing input, 4 invalid input (schema or
reference), 5 computation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import behavior, choice, flows, headway, synth
from .errors import InfeasibleConfigError, InputMissingError, IntegrityError, SchemaError, TransitIncidentError
from .io import (
    atomic_write,
    dumps_json,
    load_yaml,
    read_afc,
    read_avl,
    read_incident_log,
    read_observations,
    read_sales,
    require_path,
    write_observations,
    write_sweep,
    write_table,
)
from .network import TransitNetwork, load_incident, load_network
from .paths import PathFilter
from .redundancy import ODRedundancyCache, redundancy_report, station_sweep
from .timeutil import parse_date

ENV_CONFIG = "TRANSIT_INCIDENT_CONFIG"
EXIT_OK, EXIT_USAGE, EXIT_MISSING, EXIT_INVALID, EXIT_COMPUTE = 0, 2, 3, 4, 5

PATH_KEYS = ("network", "incident", "incident_log", "avl", "afc", "sales", "observations", "fit")


@dataclass
class RunConfig:
    network: str | None = None
    incident: str | None = None
    incident_log: str | None = None
    avl: str | None = None
    afc: str | None = None
    sales: str | None = None
    observations: str | None = None
    fit: str | None = None
    normal_days: object = "auto"  # "auto" or a list of dates
    window_weeks: int = 8
    buffer: float = 60.0
    interval: float = 15.0
    k: int = 5
    incident_k: int | None = None
    max_transfers: int = 3
    max_detour_ratio: float = 3.0
    duration: float | None = None
    sweep_duration: float = 60.0
    flow_scopes: list = field(default_factory=list)
    lines: list = field(default_factory=list)
    denominator: str = "sentinel"
    destination_heuristic: bool = True
    year: int | None = None

    @classmethod
    def load(cls, path) -> "RunConfig":
        doc = load_yaml(path)
        if not isinstance(doc, dict):
            raise SchemaError(f"{path}: run config must be a mapping")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise SchemaError(f"{path}: unknown run config keys {sorted(unknown)}")
        base = Path(path).resolve().parent
        for key in PATH_KEYS:
            if doc.get(key) is not None:
                doc[key] = str(base / doc[key])
        return cls(**doc)

    def validate(self) -> None:
        for name in ("interval", "buffer", "max_detour_ratio", "sweep_duration"):
            if not getattr(self, name) > 0:
                raise SchemaError(f"{name} must be > 0")
        if self.duration is not None and not self.duration > 0:
            raise SchemaError("duration must be > 0")
        if self.window_weeks < 1 or self.k < 1 or (self.incident_k is not None and self.incident_k < 1):
            raise SchemaError("window_weeks, k and incident_k must be >= 1")

    def path_filter(self) -> PathFilter:
        return PathFilter(k=self.k, max_transfers=self.max_transfers, max_detour_ratio=self.max_detour_ratio)

    def need(self, key: str) -> Path:
        value = getattr(self, key)
        if value is None:
            raise InputMissingError(f"no {key.replace('_', '-')} given (flag or config)")
        return require_path(value)


# -- shared loading ---------------------------------------------------------------------


def _network(cfg: RunConfig) -> TransitNetwork:
    return load_network(cfg.need("network"))


def _incident(cfg: RunConfig, network: TransitNetwork):
    return load_incident(cfg.need("incident"), network)


def _incident_log(cfg: RunConfig):
    return read_incident_log(cfg.need("incident_log")) if cfg.incident_log else []


def _normal_days(cfg: RunConfig, incident, calendar) -> list[dt.date]:
    if cfg.normal_days in (None, "auto"):
        return flows.select_normal_days(calendar, incident, _incident_log(cfg), cfg.window_weeks, cfg.buffer).days
    if isinstance(cfg.normal_days, str):
        days = [parse_date(x) for x in cfg.normal_days.split(",") if x.strip()]
    else:
        days = [parse_date(x) for x in cfg.normal_days]
    if not days:
        raise SchemaError("normal-days list is empty")
    return sorted(days)


# -- command bodies: each returns {relative output name: text} -------------------------------


def compute_redundancy(cfg: RunConfig, ods=None) -> dict:
    network = _network(cfg)
    incident = _incident(cfg, network)
    rep = redundancy_report(network, incident, ods, cfg.path_filter(), cfg.incident_k, cfg.duration)
    doc = rep.to_dict()
    doc["incident"] = incident.id
    return doc


def compute_sweep(cfg: RunConfig) -> str:
    network = _network(cfg)
    rows = station_sweep(
        network, _incident_log(cfg), cfg.sweep_duration, flt=cfg.path_filter(), incident_k=cfg.incident_k
    )
    return write_sweep(rows)


def compute_headway(cfg: RunConfig, network=None, incident=None) -> list[dict]:
    if network is None:
        network = _network(cfg) if cfg.network else None
    if incident is None:
        incident = load_incident(cfg.need("incident"), network)
    events = read_avl(cfg.need("avl"))
    calendar = sorted({e.arrival.date() for e in events})
    normal = _normal_days(cfg, incident, calendar)
    lines = list(cfg.lines) or sorted({e.line for e in events})
    rows = []
    for line in lines:
        series = headway.line_headway_series(
            events, line, cfg.interval, normal, incident.day, denominator=cfg.denominator
        )
        for r in series.rows():
            x, m, s = r["incident_headway"], r["baseline_mean"], r["baseline_std"]
            if x is None or m is None or r["baseline_days"] < flows.MIN_BASELINE_DAYS:
                sig = "insufficient-baseline" if x is not None else ""
            else:
                sig = flows.is_significant(x, m, s)
            rows.append({"line": line, **r, "significant": sig})
    return rows


def _flow_series(cfg: RunConfig, network, incident, taps):
    counts = flows.TapCounts(taps, cfg.interval)
    normal = _normal_days(cfg, incident, counts.days)
    scopes = list(cfg.flow_scopes) or ["system:rail", "system:bus"]
    return [flows.demand_series(counts, s, normal, incident.day, cfg.interval, network) for s in scopes]


def compute_flows(cfg: RunConfig, network=None, incident=None, taps=None):
    network = network or (_network(cfg) if cfg.network else None)
    incident = incident or load_incident(cfg.need("incident"), network)
    taps = read_afc(cfg.need("afc")) if taps is None else taps
    series = _flow_series(cfg, network, incident, taps)
    rows = [r for s in series for r in s.rows()]
    deltas = flows.demand_delta_report(series, incident)
    delta_doc = {
        "ranked": [dataclasses.asdict(d) for d in deltas.ranked],
        "increases": [d.scope for d in deltas.increases],
        "decreases": [d.scope for d in deltas.decreases],
    }
    return rows, delta_doc


def compute_behavior(cfg: RunConfig, network=None, incident=None, taps=None):
    network = network or _network(cfg)
    incident = incident or _incident(cfg, network)
    taps = read_afc(cfg.need("afc")) if taps is None else taps
    sales = read_sales(cfg.need("sales"))
    normal = _normal_days(cfg, incident, sorted({t.timestamp.date() for t in taps}))
    cache = ODRedundancyCache(network, incident, cfg.path_filter(), cfg.incident_k, cfg.duration)
    cohort = behavior.infer_cohort(
        taps, sales, network, incident, normal, cache, cfg.year, cfg.destination_heuristic
    )
    reasons: dict[str, int] = {}
    for d in cohort.dropped:
        reasons[d.reason] = reasons.get(d.reason, 0) + 1
    summary = {
        "normal_days": [d.isoformat() for d in normal],
        "regular_passengers": len(cohort.regular),
        "labels": cohort.label_counts(),
        "observations": len(cohort.observations),
        "dropped": dict(sorted(reasons.items())),
    }
    return cohort, summary


def compute_fit(observations) -> choice.FitResult:
    return choice.fit(choice.LogitSpec(), observations)


def _parse_conditions(items) -> dict[str, float]:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise SchemaError(f"condition {item!r} must look like name=value")
        out[name.strip()] = float(value)
    return out


# -- commands -----------------------------------------------------------------------------------


def _emit(outputs: dict[str, str], out: str | None) -> None:
    """Write all outputs (after every computation succeeded) or print one to stdout."""
    if out is None:
        for text in outputs.values():
            sys.stdout.write(text)
        return
    out_path = Path(out)
    if len(outputs) == 1 and out_path.suffix:
        (text,) = outputs.values()
        atomic_write(out_path, text)
        return
    for name in sorted(outputs):
        atomic_write(out_path / name, outputs[name])


def cmd_redundancy(cfg, args):
    ods = None
    if args.od:
        ods = []
        for item in args.od:
            o, sep, d = item.partition(":")
            if not sep:
                raise SchemaError(f"--od {item!r} must look like ORIGIN:DESTINATION")
            ods.append((o, d))
    return {"redundancy.json": dumps_json(compute_redundancy(cfg, ods))}


def cmd_sweep(cfg, args):
    return {"sweep.csv": compute_sweep(cfg)}


def cmd_headway(cfg, args):
    return {"headway.csv": write_table(compute_headway(cfg))}


def cmd_flows(cfg, args):
    rows, deltas = compute_flows(cfg)
    out = {"flows.csv": write_table(rows)}
    if args.deltas:
        atomic_write(args.deltas, dumps_json(deltas))
    return out


def cmd_behavior(cfg, args):
    cohort, summary = compute_behavior(cfg)
    if args.summary:
        atomic_write(args.summary, dumps_json(summary))
    return {"observations.csv": write_observations(cohort.observations)}


def cmd_fit(cfg, args):
    result = compute_fit(read_observations(cfg.need("observations")))
    if args.table:
        atomic_write(args.table, result.table())
    return {"fit.json": choice.save_fit(result)}


def cmd_sensitivity(cfg, args):
    import json

    result = choice.FitResult.from_dict(json.loads(cfg.need("fit").read_text()))
    obs = read_observations(cfg.need("observations"))
    n = args.points
    grid = [i / (n - 1) for i in range(n)]
    curve = choice.sensitivity_curve(result, obs, args.variable, grid, _parse_conditions(args.condition))
    rows = [{args.variable: g, "probability": p} for g, p in curve]
    return {"sensitivity.csv": write_table(rows)}


def cmd_synth(cfg, args):
    doc = load_yaml(args.scenario) if args.scenario else {}
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.template is not None:
        doc["template"] = args.template
    scenario = synth.generate(synth.ScenarioConfig.from_dict(doc))
    if args.out is None:
        raise SchemaError("synth needs --out DIR")
    synth.write_scenario(scenario, args.out)
    return {}


def build_report(cfg: RunConfig) -> dict[str, str]:
    """Full incident dossier; the choice model failing is recorded, not fatal."""
    network = _network(cfg)
    incident = _incident(cfg, network)
    taps = read_afc(cfg.need("afc"))
    cfg.need("avl")
    cfg.need("sales")
    red = compute_redundancy(cfg)
    head_rows = compute_headway(cfg, network, incident)
    flow_rows, deltas = compute_flows(cfg, network, incident, taps)
    cohort, summary = compute_behavior(cfg, network, incident, taps)
    outputs = {
        "redundancy.json": dumps_json(red),
        "headway.csv": write_table(head_rows),
        "flows.csv": write_table(flow_rows),
        "demand_deltas.json": dumps_json(deltas),
        "cohort.json": dumps_json(summary),
        "observations.csv": write_observations(cohort.observations),
    }
    fit_doc = {"status": "ok"}
    try:
        result = compute_fit(cohort.observations)
    except (TransitIncidentError, ValueError) as exc:
        fit_doc = {"status": "failed", "code": getattr(exc, "code", "choice.error"), "message": str(exc)}
    else:
        outputs["fit.json"] = choice.save_fit(result)
        outputs["fit_table.txt"] = result.table()
        fit_doc["adjusted_rho2"] = result.adjusted_rho2
    head_flags = sorted({r["line"] for r in head_rows if r["significant"] is True})
    outputs["dossier.json"] = dumps_json(
        {
            "incident": incident.id,
            "start": incident.start.isoformat(),
            "end": incident.end.isoformat(),
            "nrui": red["nrui"],
            "vacuous": red["vacuous"],
            "affected_ods": len(red["affected_ods"]),
            "blocked_lines": red["blocked_lines"],
            "headway_lines_flagged": head_flags,
            "demand_increases": deltas["increases"],
            "demand_decreases": deltas["decreases"],
            "cohort": summary,
            "fit": fit_doc,
            "files": sorted(outputs) + ["dossier.json"],
        }
    )
    return outputs


def cmd_report(cfg, args):
    if args.out is None:
        raise SchemaError("report needs --out DIR")
    outputs = build_report(cfg)
    for name in sorted(outputs):
        atomic_write(Path(args.out) / name, outputs[name])
    return {}


COMMANDS = {
    "redundancy": cmd_redundancy,
    "sweep": cmd_sweep,
    "headway": cmd_headway,
    "flows": cmd_flows,
    "behavior": cmd_behavior,
    "fit": cmd_fit,
    "sensitivity": cmd_sensitivity,
    "synth": cmd_synth,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transit-incident", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *keys):
        p.add_argument("--config", help=f"YAML run config (default ${ENV_CONFIG})")
        p.add_argument("--out", help="output file, or directory for several outputs (default stdout)")
        for key in keys:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)

    def paths_opts(p):
        p.add_argument("--k", type=int)
        p.add_argument("--incident-k", type=int, dest="incident_k")
        p.add_argument("--max-transfers", type=int, dest="max_transfers")
        p.add_argument("--max-detour-ratio", type=float, dest="max_detour_ratio")

    def days_opts(p):
        p.add_argument("--normal-days", dest="normal_days", help="'auto' or comma-separated dates")
        p.add_argument("--window-weeks", type=int, dest="window_weeks")
        p.add_argument("--buffer", type=float)
        p.add_argument("--interval", type=float)

    p = sub.add_parser("redundancy", help="redundancy index of one incident (JSON)")
    common(p, "network", "incident")
    paths_opts(p)
    p.add_argument("--duration", type=float, help="override incident duration (minutes)")
    p.add_argument("--od", action="append", help="restrict to ORIGIN:DESTINATION (repeatable)")

    p = sub.add_parser("sweep", help="hypothetical block at every station track (CSV)")
    common(p, "network", "incident_log")
    paths_opts(p)
    p.add_argument("--sweep-duration", type=float, dest="sweep_duration")

    p = sub.add_parser("headway", help="line headway series vs normal days (CSV)")
    common(p, "network", "incident", "incident_log", "avl")
    days_opts(p)
    p.add_argument("--line", action="append", dest="lines", help="line-direction id (repeatable)")
    p.add_argument("--denominator", choices=headway.DENOMINATORS)

    p = sub.add_parser("flows", help="tap-in demand series vs normal days (CSV)")
    common(p, "network", "incident", "incident_log", "afc")
    days_opts(p)
    p.add_argument("--scope", action="append", dest="flow_scopes", help="system:<mode>, line:<route> or station:<id>")
    p.add_argument("--deltas", help="also write window demand deltas (JSON) here")

    p = sub.add_parser("behavior", help="regular passengers, labels and choice observations (CSV)")
    common(p, "network", "incident", "incident_log", "afc", "sales")
    days_opts(p)
    paths_opts(p)
    p.add_argument("--summary", help="also write a cohort summary (JSON) here")

    p = sub.add_parser("fit", help="estimate the binary logit (JSON)")
    common(p, "observations")
    p.add_argument("--table", help="also write the plain-text estimation table here")

    p = sub.add_parser("sensitivity", help="choice probability over a variable (CSV)")
    common(p, "fit", "observations")
    p.add_argument("--variable", default="od_redundancy")
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--condition", action="append", help="pin a feature, e.g. high_income=1 (repeatable)")

    p = sub.add_parser("synth", help="generate a seeded scenario directory")
    p.add_argument("--config", dest="scenario", help="scenario YAML")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--template", choices=synth.TEMPLATES)

    p = sub.add_parser("report", help="full incident dossier into --out DIR")
    common(p, "network", "incident", "incident_log", "avl", "afc", "sales")
    days_opts(p)
    paths_opts(p)
    return parser


def resolve_config(args) -> RunConfig:
    path = getattr(args, "config", None) or os.environ.get(ENV_CONFIG)
    cfg = RunConfig.load(path) if path else RunConfig()
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    cfg.validate()
    return cfg


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (InputMissingError, FileNotFoundError)):
        return EXIT_MISSING
    if isinstance(exc, (SchemaError, IntegrityError, InfeasibleConfigError)):
        return EXIT_INVALID
    return EXIT_COMPUTE


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig() if args.command == "synth" else resolve_config(args)
        outputs = COMMANDS[args.command](cfg, args)
        if outputs:
            _emit(outputs, args.out)
    except (TransitIncidentError, FileNotFoundError) as exc:
        code = getattr(exc, "code", "io.missing-input")
        print(f"transit-incident: error [{code}]: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
