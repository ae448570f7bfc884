"""Contingency suites, first-cycle impedance features and the labeled corpus.

Suite files are TOML::

    seed = 7
    t_fault = 1.0
    clearing_cycles = 4
    max_contingencies = 0            # >0: seeded subsample of the expansion

    [bus_faults]
    targets = ["4", "16"]            # list, "all"
    count = 0                        # >0: seeded subsample of targets
    nk_removals = [0, 1]             # k incident lines removed at clearing, or explicit id lists

    [[line_faults]]                  # one table, or several groups
    targets = "relayed"              # list, "all", "relayed"
    count = 0
    locations = [0.5]                # fraction along the branch from its from-bus
    random_locations = 0             # extra seeded locations per target
    nk_removals = [1, 2]             # 1 = faulted line only, 2 = plus one adjacent line

    [machine_outages]
    targets = ["G38"]

    [[operating_variants]]
    load_scale = 0.0
    [[operating_variants]]
    load_scale = 0.2
    min_load_mw = 100.0
    compensate_with = ["G38", "G32"] # split the increase equally; or redispatch = { G38 = 30.0 }

    [[topology_variants]]
    pre_outages = []
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynsim import (ENGINE_VERSION, ContingencySpec, SimConfig, Trajectory, is_far,
                     run_simulation)
from .gridcase import CaseError, PowerCase, compensating_redispatch, islands
from .relaysim import RelayPlacementPolicy, RelaySet, instantiate_relays

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

CLIP = 100.0


@dataclass(frozen=True)
class OperatingVariant:
    load_scale: float = 0.0
    min_load_mw: float = 0.0
    compensate_with: tuple = ()
    redispatch: tuple = ()          # ((machine id, dMW), ...)

    def resolve(self, case: PowerCase):
        if self.load_scale == 0 and not self.redispatch:
            return None
        red = dict(self.redispatch)
        if self.compensate_with:
            for mid, dp in compensating_redispatch(case, self.load_scale, self.compensate_with,
                                                   self.min_load_mw).items():
                red[mid] = red.get(mid, 0.0) + dp
        return (self.load_scale, red, self.min_load_mw)


@dataclass(frozen=True)
class LineFaultGroup:
    targets: object = ()
    count: int = 0
    nk_removals: tuple = (1,)
    locations: tuple = (0.5,)
    random_locations: int = 0


@dataclass(frozen=True)
class SuiteSpec:
    bus_fault_targets: object = ()
    machine_outage_targets: object = ()
    bus_fault_count: int = 0
    machine_outage_count: int = 0
    bus_nk_removals: tuple = (0,)
    line_fault_groups: tuple = ()
    clearing_cycles: float = 4.0
    operating_variants: tuple = (OperatingVariant(),)
    topology_variants: tuple = ((),)
    t_fault: float = 1.0
    seed: int = 0
    max_contingencies: int = 0

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=list)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


_SUITE_KEYS = {"seed", "t_fault", "clearing_cycles", "max_contingencies", "bus_faults",
               "line_faults", "machine_outages", "operating_variants", "topology_variants"}


def _targets(v):
    if isinstance(v, str):
        return v
    return tuple(str(x) for x in v)


def _removals(v):
    out = []
    for r in v:
        out.append(int(r) if isinstance(r, int) else tuple(str(x) for x in r))
    return tuple(out)


def load_suite(text: str) -> SuiteSpec:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise CaseError(f"suite parse error: {exc}") from None
    bad = set(doc) - _SUITE_KEYS
    if bad:
        raise CaseError(f"suite: unknown field(s) {sorted(bad)}")

    def section(name, allowed):
        sec = doc.get(name, {})
        extra = set(sec) - allowed
        if extra:
            raise CaseError(f"suite [{name}]: unknown field(s) {sorted(extra)}")
        return sec

    bf = section("bus_faults", {"targets", "count", "nk_removals"})
    raw_lf = doc.get("line_faults", [])
    if isinstance(raw_lf, dict):
        raw_lf = [raw_lf]
    groups = []
    for i, lf in enumerate(raw_lf):
        extra = set(lf) - {"targets", "count", "nk_removals", "locations", "random_locations"}
        if extra:
            raise CaseError(f"suite line_faults[{i}]: unknown field(s) {sorted(extra)}")
        groups.append(LineFaultGroup(
            targets=_targets(lf.get("targets", ())),
            count=int(lf.get("count", 0)),
            nk_removals=_removals(lf.get("nk_removals", [1])),
            locations=tuple(float(x) for x in lf.get("locations", [0.5])),
            random_locations=int(lf.get("random_locations", 0))))
    mo = section("machine_outages", {"targets", "count"})
    variants = []
    for i, v in enumerate(doc.get("operating_variants", [{}])):
        extra = set(v) - {"load_scale", "min_load_mw", "compensate_with", "redispatch"}
        if extra:
            raise CaseError(f"suite operating_variants[{i}]: unknown field(s) {sorted(extra)}")
        variants.append(OperatingVariant(
            load_scale=float(v.get("load_scale", 0.0)),
            min_load_mw=float(v.get("min_load_mw", 0.0)),
            compensate_with=tuple(str(x) for x in v.get("compensate_with", ())),
            redispatch=tuple(sorted((str(k), float(x)) for k, x in v.get("redispatch", {}).items()))))
    topologies = []
    for i, tv in enumerate(doc.get("topology_variants", [{}])):
        extra = set(tv) - {"pre_outages"}
        if extra:
            raise CaseError(f"suite topology_variants[{i}]: unknown field(s) {sorted(extra)}")
        topologies.append(tuple(sorted(str(x) for x in tv.get("pre_outages", ()))))
    return SuiteSpec(
        bus_fault_targets=_targets(bf.get("targets", ())),
        machine_outage_targets=_targets(mo.get("targets", ())),
        bus_fault_count=int(bf.get("count", 0)),
        machine_outage_count=int(mo.get("count", 0)),
        bus_nk_removals=_removals(bf.get("nk_removals", [0])),
        line_fault_groups=tuple(groups),
        clearing_cycles=float(doc.get("clearing_cycles", 4.0)),
        operating_variants=tuple(variants),
        topology_variants=tuple(topologies),
        t_fault=float(doc.get("t_fault", 1.0)),
        seed=int(doc.get("seed", 0)),
        max_contingencies=int(doc.get("max_contingencies", 0)),
    )


def load_suite_file(path) -> SuiteSpec:
    return load_suite(Path(path).read_text())


# ---------------------------------------------------------------- expansion

def _select(rule, universe: list[str], count: int, rng, what: str) -> list[str]:
    if isinstance(rule, str):
        if rule not in ("all", "relayed"):
            raise CaseError(f"suite: unknown {what} target rule {rule!r}")
        chosen = list(universe)
    else:
        chosen = list(rule)
    if count and count < len(chosen):
        picks = sorted(rng.choice(len(chosen), size=count, replace=False).tolist())
        chosen = [chosen[i] for i in picks]
    return chosen


def _incident(case: PowerCase, bus: str, out: set) -> list[str]:
    return [br.id for br in case.branches
            if br.in_service and br.id not in out and bus in (br.from_bus, br.to_bus)]


def _keeps_connected(case: PowerCase, removed) -> bool:
    return len(islands(case, removed)) == 1


def _pick_removals(case, candidates, k, base_removed, rng, connected=None):
    """Seeded choice of k branches from candidates that keeps the network in one piece."""
    if connected is None:
        def connected(removed):
            return _keeps_connected(case, removed)
    chosen = []
    pool = list(candidates)
    while len(chosen) < k:
        ok = [b for b in pool if connected(set(base_removed) | set(chosen) | {b})]
        if not ok:
            return None
        b = ok[int(rng.integers(len(ok)))]
        chosen.append(b)
        pool.remove(b)
    return chosen


def expand_suite(case: PowerCase, spec: SuiteSpec,
                 policy: RelayPlacementPolicy | None = None) -> list[ContingencySpec]:
    """Deterministic cross product of targets x removal rules x variants x topologies."""
    rng = np.random.default_rng(spec.seed)
    relayed = sorted({r.branch for r in instantiate_relays(case, policy)},
                     key=case.branch_index.get)
    bus_ids = [b.id for b in case.buses]
    in_service = [br.id for br in case.branches if br.in_service]
    bus_targets = _select(spec.bus_fault_targets, bus_ids, spec.bus_fault_count, rng, "bus")
    group_targets = [_select(g.targets, relayed if g.targets == "relayed" else in_service,
                             g.count, rng, "line") for g in spec.line_fault_groups]
    mach_targets = _select(spec.machine_outage_targets, [m.id for m in case.machines],
                           spec.machine_outage_count, rng, "machine")
    for b in bus_targets:
        if b not in case.bus_index:
            raise CaseError(f"suite: unknown bus target {b!r}")
    for b in (lt for targets in group_targets for lt in targets):
        if b not in case.branch_index:
            raise CaseError(f"suite: unknown branch target {b!r}")
    for m in mach_targets:
        if m not in case.machine_index:
            raise CaseError(f"suite: unknown machine target {m!r}")
    for topo in spec.topology_variants:
        for b in topo:
            if b not in case.branch_index:
                raise CaseError(f"suite: unknown pre-outage branch {b!r}")
    for v in spec.operating_variants:
        for mid in list(v.compensate_with) + [k for k, _ in v.redispatch]:
            if mid not in case.machine_index:
                raise CaseError(f"suite: unknown machine {mid!r} in operating variant")

    locations = {}
    for gi, g in enumerate(spec.line_fault_groups):
        for lt in group_targets[gi]:
            extra = rng.uniform(0.05, 0.95, size=g.random_locations).round(3).tolist()
            locations[gi, lt] = list(g.locations) + extra

    topologies = [frozenset(t) for t in spec.topology_variants]
    for pre in topologies:
        if pre and not _keeps_connected(case, pre):
            raise CaseError(f"suite: topology variant {sorted(pre)} disconnects the network")
    all_pre = frozenset().union(*topologies)

    def ok_everywhere(removed):
        return all(_keeps_connected(case, pre | set(removed)) for pre in topologies)

    # Removal sets belong to the contingency and are drawn once, so every
    # operating point and topology sees the same post-clearing network.
    bus_removals = {}
    for bus in bus_targets:
        for ri, rule in enumerate(spec.bus_nk_removals):
            if isinstance(rule, int):
                rem = _pick_removals(case, _incident(case, bus, all_pre), rule, (), rng,
                                     ok_everywhere)
            else:
                rem = list(rule)
            bus_removals[bus, ri] = rem
    line_removals = {}
    for gi, g in enumerate(spec.line_fault_groups):
        for lt in group_targets[gi]:
            br = case.branch(lt)
            for li in range(len(locations[gi, lt])):
                for ri, rule in enumerate(g.nk_removals):
                    if isinstance(rule, int):
                        if rule == 0:
                            rem = []
                        else:
                            adj = _incident(case, br.from_bus, all_pre | {lt}) \
                                + _incident(case, br.to_bus, all_pre | {lt})
                            adj = list(dict.fromkeys(adj))
                            more = _pick_removals(case, adj, rule - 1, (lt,), rng, ok_everywhere)
                            rem = None if more is None or not ok_everywhere([lt]) \
                                else [lt] + more
                    else:
                        rem = [lt] + [b for b in rule if b != lt]
                    line_removals[gi, lt, li, ri] = rem

    out = []
    for vi, variant in enumerate(spec.operating_variants):
        op = variant.resolve(case)
        for ti, pre in enumerate(topologies):
            common = dict(t_fault=spec.t_fault, clearing_cycles=spec.clearing_cycles,
                          pre_outages=pre, operating_variant=op)
            tag = f"V{vi}T{ti}"
            for bus in bus_targets:
                for ri in range(len(spec.bus_nk_removals)):
                    rem = bus_removals[bus, ri]
                    if rem is None:
                        continue
                    out.append(ContingencySpec(
                        "bus_fault", bus, post_clear_removals=frozenset(rem),
                        id=f"BF-{bus}-N{len(rem)}-{tag}", **common))
            for gi, g in enumerate(spec.line_fault_groups):
                for lt in group_targets[gi]:
                    if lt in pre:
                        continue
                    for li, loc in enumerate(locations[gi, lt]):
                        for ri in range(len(g.nk_removals)):
                            rem = line_removals[gi, lt, li, ri]
                            if rem is None:
                                continue
                            out.append(ContingencySpec(
                                "line_fault", lt, fault_location=loc,
                                post_clear_removals=frozenset(rem),
                                id=f"LF-{lt}@{loc:.3f}-N{len(rem)}-{tag}", **common))
            for mid in mach_targets:
                out.append(ContingencySpec("machine_outage", mid,
                                           id=f"MO-{mid}-{tag}", **common))
    seen = set()
    for c in out:
        if c.id in seen:
            raise CaseError(f"suite: contingency {c.id} is generated twice")
        seen.add(c.id)
        bad = c.post_clear_removals - set(case.branch_index)
        if bad:
            raise CaseError(f"suite: contingency {c.id} removes unknown branch(es) {sorted(bad)}")
    if spec.max_contingencies and spec.max_contingencies < len(out):
        keep = sorted(rng.choice(len(out), size=spec.max_contingencies, replace=False).tolist())
        out = [out[i] for i in keep]
    return out


# ---------------------------------------------------------------- features

def feature_names(samples: int = 6) -> list[str]:
    return [f"f{i}" for i in range(2 * samples)]


def sample_steps(dt: float, frequency: float) -> list[int]:
    """Step offsets from fault inception: one pre-fault sample, then through one cycle."""
    per_cycle = int(round(1.0 / (frequency * dt)))
    return list(range(-1, per_cycle + 1))


def schema_descriptor(dt: float, frequency: float, clip: float = CLIP) -> str:
    n = len(sample_steps(dt, frequency))
    return f"{','.join(feature_names(n))}|dt={dt!r}|f={frequency!r}|clip={clip!r}"


def schema_hash(dt: float, frequency: float, clip: float = CLIP) -> str:
    return hashlib.sha256(schema_descriptor(dt, frequency, clip).encode()).hexdigest()[:16]


def extract_features(traj: Trajectory, relay, t_fault: float, frequency: float,
                     clip: float = CLIP, dt: float | None = None) -> np.ndarray:
    """[R(t0-), R(t0), ..., R(t0+1 cycle), X(t0-), ..., X(t0+1 cycle)] / |line_z|, clipped.

    Far (open or currentless) impedances map to ``+clip``.
    """
    if dt is None:
        if len(traj.times) < 2:
            raise ValueError("trajectory too short to infer its time step")
        dt = float(traj.times[1] - traj.times[0])
    k0 = int(round((t_fault - traj.times[0]) / dt))
    offsets = sample_steps(dt, frequency)
    idx = [k0 + o for o in offsets]
    if idx[0] < 0 or idx[-1] >= len(traj.times):
        raise ValueError(
            f"trajectory [{traj.times[0]:.4f}, {traj.times[-1]:.4f}] s does not cover the "
            f"feature window around t_fault={t_fault}")
    assert traj.times[idx[-1]] <= t_fault + 1.0 / frequency + 1e-9
    z = traj.relay_series(relay.id)[idx]
    scale = abs(relay.line_z)
    far = is_far(z)
    r = np.where(far, clip, np.clip(z.real / scale, -clip, clip))
    x = np.where(far, clip, np.clip(z.imag / scale, -clip, clip))
    return np.concatenate([r, x])


# ---------------------------------------------------------------- corpus

@dataclass
class FeatureRow:
    contingency_id: str
    relay_id: str
    features: np.ndarray
    label: int


@dataclass
class Dataset:
    schema: list
    rows: list
    provenance: dict = field(default_factory=dict)

    @property
    def X(self) -> np.ndarray:
        return np.array([r.features for r in self.rows], dtype=float).reshape(len(self.rows), -1)

    @property
    def y(self) -> np.ndarray:
        return np.array([r.label for r in self.rows], dtype=int)

    @property
    def schema_hash(self) -> str:
        return self.provenance.get("schema_hash", "")

    def subset(self, idx) -> "Dataset":
        return Dataset(self.schema, [self.rows[i] for i in idx], dict(self.provenance))


def _simulate_one(case, contingency, relays, cfg):
    try:
        return run_simulation(case, contingency, relays, cfg)
    except Exception as exc:  # power-flow failure of a variant etc.
        return exc


_WORKER = {}


def _worker_init(case, relays, cfg):
    _WORKER.update(case=case, relays=relays, cfg=cfg)


def _worker_run(contingency):
    return _simulate_one(_WORKER["case"], contingency, _WORKER["relays"], _WORKER["cfg"])


def build_dataset(case: PowerCase, suite: SuiteSpec, cfg: SimConfig,
                  policy: RelayPlacementPolicy | None = None, jobs: int = 1,
                  contingencies=None) -> Dataset:
    """Reference runs with every relay modeled; one labeled row per (contingency, relay)."""
    relays = instantiate_relays(case, policy)
    if contingencies is None:
        contingencies = expand_suite(case, suite, policy)
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_worker_init,
                                 initargs=(case, relays, cfg)) as pool:
            results = list(pool.map(_worker_run, contingencies, chunksize=4))
    else:
        results = [_simulate_one(case, c, relays, cfg) for c in contingencies]

    f = case.system_frequency
    names = feature_names(len(sample_steps(cfg.dt, f)))
    rows = []
    skipped = []
    for c, traj in zip(contingencies, results):
        if isinstance(traj, Exception):
            log.warning("contingency %s skipped: %s", c.label, traj)
            skipped.append(c.label)
            continue
        window_end = c.t_fault + 1.0 / f
        if traj.termination == "diverged" and traj.termination_t <= window_end + 1e-9:
            log.warning("contingency %s skipped: diverged at %.3f s before the feature window "
                        "closed", c.label, traj.termination_t)
            skipped.append(c.label)
            continue
        operated = {ev.relay_id for ev in traj.relay_events}
        for r in relays:
            rows.append(FeatureRow(c.label, r.id,
                                   extract_features(traj, r, c.t_fault, f, dt=cfg.dt),
                                   int(r.id in operated)))
    labels = [r.label for r in rows]
    prov = {
        "suite_hash": suite.digest() if suite is not None else "",
        "engine_version": ENGINE_VERSION,
        "case": case.name,
        "schema_hash": schema_hash(cfg.dt, f),
        "dt": cfg.dt,
        "t_end": cfg.t_end,
        "frequency": f,
        "n_contingencies": len(contingencies) - len(skipped),
        "skipped": skipped,
        "n_relays": len(relays),
        "class_counts": [labels.count(0), labels.count(1)],
    }
    if labels:
        log.info("dataset: %d rows, class-1 share %.3f", len(rows), labels.count(1) / len(rows))
    return Dataset(names, rows, prov)


def write_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["contingency_id", "relay_id", *ds.schema, "label"])
    for r in ds.rows:
        w.writerow([r.contingency_id, r.relay_id, *(repr(float(x)) for x in r.features), r.label])
    path.write_text(buf.getvalue())
    provenance_path(path).write_text(json.dumps(ds.provenance, indent=2, sort_keys=True) + "\n")


def provenance_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".provenance.json")


def read_dataset(path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        rd = csv.reader(fh)
        try:
            header = next(rd)
        except StopIteration:
            raise CaseError(f"{path}: empty dataset file") from None
        if header[:2] != ["contingency_id", "relay_id"] or header[-1] != "label":
            raise CaseError(f"{path}: unexpected dataset header")
        schema = header[2:-1]
        rows = []
        seen = set()
        for ln, rec in enumerate(rd, start=2):
            if len(rec) != len(header):
                raise CaseError(f"{path}:{ln}: expected {len(header)} fields, got {len(rec)}")
            key = (rec[0], rec[1])
            if key in seen:
                raise CaseError(f"{path}:{ln}: duplicate row {key}")
            seen.add(key)
            try:
                feats = np.array([float(x) for x in rec[2:-1]])
                label = int(rec[-1])
            except ValueError as exc:
                raise CaseError(f"{path}:{ln}: {exc}") from None
            if label not in (0, 1):
                raise CaseError(f"{path}:{ln}: label must be 0 or 1")
            rows.append(FeatureRow(rec[0], rec[1], feats, label))
    prov = {}
    pp = provenance_path(path)
    if pp.exists():
        prov = json.loads(pp.read_text())
    return Dataset(schema, rows, prov)


def features_for_run(traj: Trajectory, relays: RelaySet, t_fault: float, frequency: float,
                     dt: float) -> np.ndarray:
    return np.array([extract_features(traj, r, t_fault, frequency, dt=dt) for r in relays])

