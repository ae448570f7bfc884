"""Identification from an early-terminated study and three-case verification."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dataset import OperatingVariant, features_for_run, schema_hash
from .dynsim import (ContingencySpec, SimConfig, Trajectory, run_simulation,
                     validate_contingency, write_events_csv)
from .forest import RandomForestModel, SchemaError
from .gridcase import CaseError, PowerCase, load_case_file
from .relaysim import RelayPlacementPolicy, RelaySet, instantiate_relays, zone_circles

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


class IdentificationAborted(RuntimeError):
    """The early study diverged before the feature window closed."""


def resolve_case_path(name_or_path) -> Path:
    """A file path, or the name of a bundled case such as ``ieee39``."""
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = resources.files("critrelay") / "data" / f"{name_or_path}.toml"
    if bundled.is_file():
        return Path(str(bundled))
    raise CaseError(f"case file {name_or_path!r} not found")


def load_case(name_or_path) -> PowerCase:
    return load_case_file(resolve_case_path(name_or_path))


# ---------------------------------------------------------------- contingency files

_CONT_KEYS = {"id", "kind", "target", "fault_location", "t_fault", "clearing_cycles",
              "post_clear_removals", "pre_outages", "operating_variant"}


def _contingency(entry: dict, case: PowerCase, where: str) -> ContingencySpec:
    bad = set(entry) - _CONT_KEYS
    if bad:
        raise CaseError(f"{where}: unknown field(s) {sorted(bad)}")
    if "kind" not in entry:
        raise CaseError(f"{where}: missing 'kind'")
    op = None
    if "operating_variant" in entry:
        v = entry["operating_variant"]
        extra = set(v) - {"load_scale", "min_load_mw", "compensate_with", "redispatch"}
        if extra:
            raise CaseError(f"{where} operating_variant: unknown field(s) {sorted(extra)}")
        for mid in list(v.get("compensate_with", ())) + list(v.get("redispatch", {})):
            if mid not in case.machine_index:
                raise CaseError(f"{where} operating_variant: unknown machine {mid!r}")
        op = OperatingVariant(
            load_scale=float(v.get("load_scale", 0.0)),
            min_load_mw=float(v.get("min_load_mw", 0.0)),
            compensate_with=tuple(v.get("compensate_with", ())),
            redispatch=tuple(sorted((k, float(x)) for k, x in v.get("redispatch", {}).items())),
        ).resolve(case)
    try:
        c = ContingencySpec(
            kind=entry["kind"], target=str(entry.get("target", "")),
            fault_location=float(entry.get("fault_location", 0.5)),
            t_fault=float(entry.get("t_fault", 1.0)),
            clearing_cycles=float(entry.get("clearing_cycles", 4.0)),
            post_clear_removals=frozenset(entry.get("post_clear_removals", ())),
            pre_outages=frozenset(entry.get("pre_outages", ())),
            operating_variant=op, id=str(entry.get("id", "")))
    except ValueError as exc:
        raise CaseError(f"{where}: {exc}") from None
    validate_contingency(case, c)
    return c


def load_contingencies(text: str, case: PowerCase) -> list[ContingencySpec]:
    """Contingency file (TOML): one top-level contingency or ``[[contingency]]`` entries::

        id = "demo-1"
        kind = "line_fault"            # bus_fault | line_fault | machine_outage
        target = "L16-17"
        fault_location = 0.5
        t_fault = 1.0
        clearing_cycles = 4
        post_clear_removals = ["L16-17"]
        pre_outages = []
        [operating_variant]            # optional, same fields as in suite files
        load_scale = 0.2
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise CaseError(f"contingency file parse error: {exc}") from None
    if "contingency" in doc:
        if set(doc) != {"contingency"}:
            raise CaseError("contingency file mixes [[contingency]] entries with top-level fields")
        entries = doc["contingency"]
    else:
        entries = [doc]
    out = [_contingency(e, case, f"contingency[{i}]") for i, e in enumerate(entries)]
    ids = [c.label for c in out]
    if len(set(ids)) != len(ids):
        raise CaseError("duplicate contingency ids")
    return out


def load_contingency_file(path, case: PowerCase) -> list[ContingencySpec]:
    return load_contingencies(Path(path).read_text(), case)


# ---------------------------------------------------------------- identification

def policy_for(kv_floor: float | None) -> RelayPlacementPolicy:
    if kv_floor is None:
        return RelayPlacementPolicy()
    return RelayPlacementPolicy(per_line_min_kv=kv_floor,
                                monitor_kv_window=(min(100.0, kv_floor), kv_floor))


def scored_relays(relays: RelaySet, line_only: bool) -> RelaySet:
    """Relays the classifier is asked about; ``line_only`` keeps three-zone relays."""
    if not line_only:
        return relays
    return relays.subset(r.id for r in relays if r.kind == "line")


@dataclass
class IdentificationResult:
    contingency_id: str
    critical: list                    # [(relay id, vote fraction)] in relay order
    n_relays: int
    process1_s: float
    process2_s: float
    process3_s: float
    total_s: float
    votes: dict = field(default_factory=dict)   # every scored relay -> vote fraction

    @property
    def critical_ids(self) -> list[str]:
        return [rid for rid, _ in self.critical]

    @property
    def critical_fraction(self) -> float:
        return len(self.critical) / self.n_relays if self.n_relays else 0.0

    def as_dict(self) -> dict:
        """Deterministic part of the result (timings are kept apart)."""
        return {
            "contingency_id": self.contingency_id,
            "critical_relays": [{"relay_id": rid, "vote_fraction": round(v, 6)}
                                for rid, v in self.critical],
            "n_critical": len(self.critical),
            "n_relays": self.n_relays,
            "critical_fraction": self.critical_fraction,
        }

    def timing(self) -> dict:
        return {"contingency_id": self.contingency_id, "process1_s": self.process1_s,
                "process2_s": self.process2_s, "process3_s": self.process3_s,
                "total_s": self.total_s}


def identify(case: PowerCase, contingency: ContingencySpec, model: RandomForestModel,
             cfg: SimConfig, relays: RelaySet) -> IdentificationResult:
    """Relay-free study to one cycle after the fault, feature extraction, batch prediction."""
    f = case.system_frequency
    expected = schema_hash(cfg.dt, f)
    if model.schema_hash and model.schema_hash != expected:
        raise SchemaError(f"model was trained on feature schema {model.schema_hash}, the engine "
                          f"produces {expected} (check --dt)")
    window_end = contingency.t_fault + 1.0 / f
    early = SimConfig(dt=cfg.dt, t_end=max(cfg.t_end, window_end), early_stop=window_end,
                      integrator=cfg.integrator, network_tol=cfg.network_tol,
                      divergence_voltage_floor=cfg.divergence_voltage_floor,
                      current_floor=cfg.current_floor, fault_admittance=cfg.fault_admittance)
    t0 = time.perf_counter()
    traj = run_simulation(case, contingency, RelaySet(), early, monitor=relays)
    t1 = time.perf_counter()
    if traj.termination == "diverged":
        raise IdentificationAborted(
            f"contingency {contingency.label}: early study diverged at "
            f"{traj.termination_t:.4f} s, before the feature window closed")
    X = features_for_run(traj, relays, contingency.t_fault, f, cfg.dt)
    t2 = time.perf_counter()
    cls, frac = model.predict(X, expected if model.schema_hash else None)
    t3 = time.perf_counter()
    votes = {r.id: float(v) for r, v in zip(relays, frac)}
    critical = [(r.id, float(v)) for r, c, v in zip(relays, cls, frac) if c == 1]
    return IdentificationResult(contingency.label, critical, len(relays),
                                t1 - t0, t2 - t1, t3 - t2, time.perf_counter() - t0, votes)


# ---------------------------------------------------------------- verification

@dataclass
class CaseComparison:
    contingency_id: str
    trajectories: dict               # "case1" | "case2" | "case3" -> Trajectory
    critical: list
    case3_relays: list
    event_match: bool
    false_negatives: list            # relays operating in case 2 but absent from case 3
    max_angle_deviation: float       # case 3 vs case 2, radians (inf if lengths differ)
    critical_fraction: float

    def summary(self) -> dict:
        def events(tr):
            return [[e.relay_id, e.zone, round(e.breaker_open_t, 6)]
                    for e in sorted(tr.relay_events, key=lambda e: round(e.breaker_open_t, 9))]
        dev = self.max_angle_deviation
        return {
            "contingency_id": self.contingency_id,
            "critical_relays": list(self.critical),
            "critical_fraction": self.critical_fraction,
            "case3_relays": list(self.case3_relays),
            "event_match": self.event_match,
            "false_negatives": list(self.false_negatives),
            "mismatch_flag": bool(self.false_negatives) or not self.event_match,
            "max_angle_deviation_rad": dev if np.isfinite(dev) else "inf",
            "case1_events": events(self.trajectories["case1"]),
            "case2_events": events(self.trajectories["case2"]),
            "case3_events": events(self.trajectories["case3"]),
            "termination": {k: [tr.termination, tr.termination_t]
                            for k, tr in self.trajectories.items()},
        }


def _event_key(tr: Trajectory):
    return sorted((e.relay_id, e.zone, round(e.pickup_t, 9), round(e.trip_t, 9),
                   round(e.breaker_open_t, 9)) for e in tr.relay_events)


def angle_deviation(a: Trajectory, b: Trajectory) -> float:
    if len(a.times) != len(b.times):
        return float("inf")
    if len(a.times) == 0:
        return 0.0
    return float(np.max(np.abs(a.relative_angles() - b.relative_angles())))


def verify(case: PowerCase, contingency: ContingencySpec, model: RandomForestModel,
           cfg: SimConfig, relays: RelaySet, line_only: bool = False) -> CaseComparison:
    """Case 1 without relays, Case 2 with all relays, Case 3 with monitor relays plus the
    relays identified as critical."""
    scored = scored_relays(relays, line_only)
    result = identify(case, contingency, model, cfg, scored)
    critical = set(result.critical_ids)
    keep = [r.id for r in relays if r.kind == "monitor" or r.id in critical]
    case3 = relays.subset(keep)
    trajs = {
        "case1": run_simulation(case, contingency, RelaySet(), cfg, monitor=relays),
        "case2": run_simulation(case, contingency, relays, cfg, monitor=relays),
        "case3": run_simulation(case, contingency, case3, cfg, monitor=relays),
    }
    operated = []
    for e in trajs["case2"].relay_events:
        if e.relay_id not in operated:
            operated.append(e.relay_id)
    fn = [rid for rid in operated if rid not in set(keep)]
    return CaseComparison(
        contingency.label, trajs, result.critical_ids, keep,
        _event_key(trajs["case2"]) == _event_key(trajs["case3"]), fn,
        angle_deviation(trajs["case3"], trajs["case2"]), result.critical_fraction)


def write_angles_csv(traj: Trajectory, fh) -> None:
    """Wide relative rotor angles (radians, centre-of-inertia reference)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["time", *traj.machine_ids])
    rel = traj.relative_angles() if len(traj.times) else np.zeros((0, len(traj.machine_ids)))
    for t, row in zip(traj.times, rel):
        w.writerow([f"{t:.6f}", *(repr(float(x)) for x in row)])


def write_relay_z_csv(traj: Trajectory, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    header = ["time"]
    for rid in traj.relay_ids:
        header += [f"R_{rid}", f"X_{rid}"]
    w.writerow(header)
    for t, zs in zip(traj.times, traj.relay_z):
        row = [f"{t:.6f}"]
        for z in zs:
            row += [repr(float(z.real)), repr(float(z.imag))]
        w.writerow(row)


def write_comparison(cmp: CaseComparison, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, tr in cmp.trajectories.items():
        with (out / f"{name}_events.csv").open("w", newline="") as fh:
            write_events_csv(tr.relay_events, fh)
        with (out / f"{name}_angles.csv").open("w", newline="") as fh:
            write_angles_csv(tr, fh)
        with (out / f"{name}_relay_z.csv").open("w", newline="") as fh:
            write_relay_z_csv(tr, fh)
    (out / "summary.json").write_text(json.dumps(cmp.summary(), indent=2) + "\n")
    return out


# ---------------------------------------------------------------- report

RX_HEADER = ["record", "t", "r", "x", "zone", "center_r", "center_x", "radius"]


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def report(in_dir, out_dir, relays: RelaySet) -> list[Path]:
    """Tidy angle CSVs per case and one R-X CSV per relay per case from a verify directory."""
    src = Path(in_dir)
    cases = sorted(p.name[:-len("_angles.csv")] for p in src.glob("*_angles.csv"))
    if not cases:
        raise FileNotFoundError(f"{src}: no *_angles.csv inputs (run verify first)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in cases:
        with (src / f"{name}_angles.csv").open(newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd, None)
            if header is None:
                raise CaseError(f"{src}/{name}_angles.csv: empty file")
            rows = list(rd)
        path = out / f"angles_{name}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["case", "t", "machine", "angle_rad"])
            for rec in rows:
                for mid, val in zip(header[1:], rec[1:]):
                    w.writerow([name, rec[0], mid, val])
        written.append(path)

        zpath = src / f"{name}_relay_z.csv"
        if not zpath.exists():
            continue
        with zpath.open(newline="") as fh:
            rd = csv.reader(fh)
            zheader = next(rd, None) or ["time"]
            zrows = list(rd)
        ids = [h[2:] for h in zheader[1::2]]
        rx_dir = out / f"rx_{name}"
        rx_dir.mkdir(exist_ok=True)
        by_id = {r.id: r for r in relays}
        for j, rid in enumerate(ids):
            path = rx_dir / f"{_safe(rid)}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(RX_HEADER)
                if zrows and rid in by_id:
                    for k, cr, cx, rad in zone_circles(by_id[rid]):
                        w.writerow(["zone", "", "", "", k, repr(cr), repr(cx), repr(rad)])
                for rec in zrows:
                    w.writerow(["trajectory", rec[0], rec[1 + 2 * j], rec[2 + 2 * j],
                                "", "", "", ""])
            written.append(path)
    return written


def default_relays(case: PowerCase, kv_floor: float | None = None) -> RelaySet:
    return instantiate_relays(case, policy_for(kv_floor))
