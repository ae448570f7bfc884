"""Static network cases: parsing, validation, admittance matrix and power flow.

Case files are TOML.  Top-level keys:

    system   = { name, frequency, base_mva }
    buses    = [ { id, kv, kind = "slack"|"pv"|"pq", v } ]        # v on slack/pv
    branches = [ { id, from, to, r, x, b, in_service } ]          # b, in_service optional
    machines = [ { id, bus, p_mw, h, xdp, d, mva_base, p_max_mw } ]  # d, p_max_mw optional
    loads    = [ { id, bus, p_mw, q_mvar } ]

Impedances are per-unit on the system base.  Machine ``h``, ``xdp`` and ``d``
are given on the machine's own ``mva_base`` and converted to system base on
load.  Unknown fields are rejected.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

BUS_KINDS = ("slack", "pv", "pq")


class CaseError(ValueError):
    """Malformed or inconsistent case data."""


class PowerFlowError(RuntimeError):
    def __init__(self, msg, max_mismatch=float("nan"), iterations=0):
        super().__init__(msg)
        self.max_mismatch = max_mismatch
        self.iterations = iterations


@dataclass(frozen=True)
class Bus:
    id: str
    kv_level: float
    kind: str
    v_setpoint: float | None = None
    p_load: float = 0.0
    q_load: float = 0.0


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: str
    to_bus: str
    r: float
    x: float
    b_shunt: float = 0.0
    in_service: bool = True

    @property
    def z(self) -> complex:
        return complex(self.r, self.x)


@dataclass(frozen=True)
class Machine:
    """Classical machine; all parameters on system base."""

    id: str
    bus: str
    h: float
    xdp: float
    d: float
    mva_base: float
    p_gen: float = 0.0
    p_max: float | None = None


@dataclass(frozen=True)
class Load:
    id: str
    bus: str
    p: float
    q: float


@dataclass(frozen=True)
class PowerCase:
    system_frequency: float
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    machines: tuple[Machine, ...]
    loads: tuple[Load, ...] = ()
    name: str = ""

    @cached_property
    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def branch_index(self) -> dict[str, int]:
        return {br.id: i for i, br in enumerate(self.branches)}

    @cached_property
    def machine_index(self) -> dict[str, int]:
        return {m.id: i for i, m in enumerate(self.machines)}

    @property
    def slack(self) -> Bus:
        return next(b for b in self.buses if b.kind == "slack")

    def branch(self, branch_id: str) -> Branch:
        return self.branches[self.branch_index[branch_id]]

    def machine(self, machine_id: str) -> Machine:
        return self.machines[self.machine_index[machine_id]]

    def bus(self, bus_id: str) -> Bus:
        return self.buses[self.bus_index[bus_id]]

    def active_branch_ids(self, removed=()) -> list[str]:
        removed = set(removed)
        return [br.id for br in self.branches if br.in_service and br.id not in removed]


@dataclass(frozen=True)
class PFSolution:
    v: np.ndarray
    injections: np.ndarray
    converged: bool
    iterations: int
    max_mismatch: float
    mismatch_history: tuple[float, ...] = field(default=(), repr=False)


# ---------------------------------------------------------------- parsing

_FIELDS = {
    "system": ({"frequency", "base_mva"}, {"name"}),
    "buses": ({"id", "kv", "kind"}, {"v"}),
    "branches": ({"id", "from", "to", "r", "x"}, {"b", "in_service"}),
    "machines": ({"id", "bus", "h", "xdp", "mva_base"}, {"p_mw", "d", "p_max_mw"}),
    "loads": ({"id", "bus", "p_mw"}, {"q_mvar"}),
}


def _check_fields(where: str, entry: dict, section: str) -> None:
    if not isinstance(entry, dict):
        raise CaseError(f"{where}: expected a table, got {type(entry).__name__}")
    required, optional = _FIELDS[section]
    unknown = set(entry) - required - optional
    if unknown:
        raise CaseError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = required - set(entry)
    if missing:
        raise CaseError(f"{where}: missing field(s) {sorted(missing)}")


def _num(where: str, entry: dict, key: str, default=None) -> float:
    val = entry.get(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise CaseError(f"{where}: field '{key}' must be a number, got {val!r}")
    return float(val)


def load_case(source: str) -> PowerCase:
    """Parse and validate case-file text."""
    try:
        doc = tomllib.loads(source)
    except tomllib.TOMLDecodeError as exc:
        raise CaseError(f"case parse error: {exc}") from None
    unknown = set(doc) - set(_FIELDS)
    if unknown:
        raise CaseError(f"unknown section(s) {sorted(unknown)}")
    for sec in ("system", "buses", "branches"):
        if sec not in doc:
            raise CaseError(f"missing section '{sec}'")

    sysd = doc["system"]
    _check_fields("system", sysd, "system")
    freq = _num("system", sysd, "frequency")
    base = _num("system", sysd, "base_mva")
    if freq <= 0 or base <= 0:
        raise CaseError("system: frequency and base_mva must be positive")

    raw_buses = []
    for i, e in enumerate(doc["buses"]):
        where = f"buses[{i}]"
        _check_fields(where, e, "buses")
        kind = e["kind"]
        if kind not in BUS_KINDS:
            raise CaseError(f"{where}: kind must be one of {BUS_KINDS}, got {kind!r}")
        v = _num(where, e, "v") if "v" in e else None
        raw_buses.append((str(e["id"]), _num(where, e, "kv"), kind, v))

    branches = []
    for i, e in enumerate(doc["branches"]):
        where = f"branches[{i}]"
        _check_fields(where, e, "branches")
        in_service = e.get("in_service", True)
        if not isinstance(in_service, bool):
            raise CaseError(f"{where}: in_service must be a boolean")
        branches.append(Branch(
            id=str(e["id"]), from_bus=str(e["from"]), to_bus=str(e["to"]),
            r=_num(where, e, "r"), x=_num(where, e, "x"),
            b_shunt=_num(where, e, "b", 0.0), in_service=in_service))

    machines = []
    for i, e in enumerate(doc.get("machines", [])):
        where = f"machines[{i}]"
        _check_fields(where, e, "machines")
        mbase = _num(where, e, "mva_base")
        if mbase <= 0:
            raise CaseError(f"{where}: mva_base must be positive")
        ratio = mbase / base
        pmax = e.get("p_max_mw")
        machines.append(Machine(
            id=str(e["id"]), bus=str(e["bus"]),
            h=_num(where, e, "h") * ratio,
            xdp=_num(where, e, "xdp") / ratio,
            d=_num(where, e, "d", 0.0) * ratio,
            mva_base=mbase,
            p_gen=_num(where, e, "p_mw", 0.0) / base,
            p_max=None if pmax is None else _num(where, e, "p_max_mw") / base))

    loads = []
    for i, e in enumerate(doc.get("loads", [])):
        where = f"loads[{i}]"
        _check_fields(where, e, "loads")
        loads.append(Load(id=str(e["id"]), bus=str(e["bus"]),
                          p=_num(where, e, "p_mw") / base,
                          q=_num(where, e, "q_mvar", 0.0) / base))

    case = _assemble(freq, base, raw_buses, branches, machines, loads,
                     name=str(sysd.get("name", "")))
    validate_case(case)
    return case


def load_case_file(path) -> PowerCase:
    return load_case(Path(path).read_text())


def _assemble(freq, base, raw_buses, branches, machines, loads, name="") -> PowerCase:
    p_load: dict[str, float] = {}
    q_load: dict[str, float] = {}
    for ld in loads:
        p_load[ld.bus] = p_load.get(ld.bus, 0.0) + ld.p
        q_load[ld.bus] = q_load.get(ld.bus, 0.0) + ld.q
    buses = tuple(Bus(bid, kv, kind, v, p_load.get(bid, 0.0), q_load.get(bid, 0.0))
                  for bid, kv, kind, v in raw_buses)
    return PowerCase(freq, base, buses, tuple(branches), tuple(machines), tuple(loads), name)


def validate_case(case: PowerCase) -> None:
    def dupes(items, what):
        seen = set()
        for it in items:
            if it.id in seen:
                raise CaseError(f"duplicate {what} id {it.id!r}")
            seen.add(it.id)

    dupes(case.buses, "bus")
    dupes(case.branches, "branch")
    dupes(case.machines, "machine")
    dupes(case.loads, "load")

    ids = case.bus_index
    for b in case.buses:
        if b.kv_level <= 0:
            raise CaseError(f"bus {b.id!r}: kv must be positive")
        if b.kind in ("slack", "pv"):
            if b.v_setpoint is None:
                raise CaseError(f"bus {b.id!r}: {b.kind} bus needs a voltage setpoint 'v'")
            if not 0.5 < b.v_setpoint < 1.5:
                raise CaseError(f"bus {b.id!r}: voltage setpoint {b.v_setpoint} outside (0.5, 1.5)")
    n_slack = sum(b.kind == "slack" for b in case.buses)
    if n_slack != 1:
        raise CaseError(f"case must have exactly one slack bus, found {n_slack}")
    for br in case.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in ids:
                raise CaseError(f"branch {br.id!r} references unknown bus {end!r}")
        if br.from_bus == br.to_bus:
            raise CaseError(f"branch {br.id!r} connects bus {br.from_bus!r} to itself")
        if br.x == 0:
            raise CaseError(f"branch {br.id!r} has zero reactance")
    for m in case.machines:
        if m.bus not in ids:
            raise CaseError(f"machine {m.id!r} references unknown bus {m.bus!r}")
        if m.h <= 0 or m.xdp <= 0 or m.d < 0:
            raise CaseError(f"machine {m.id!r}: need h > 0, xdp > 0, d >= 0")
    for ld in case.loads:
        if ld.bus not in ids:
            raise CaseError(f"load {ld.id!r} references unknown bus {ld.bus!r}")
    check_connected(case)


# ---------------------------------------------------------------- topology

class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def islands(case: PowerCase, removed=()) -> list[list[str]]:
    """Connected bus groups over in-service, non-removed branches."""
    idx = case.bus_index
    uf = _UnionFind(len(case.buses))
    removed = set(removed)
    for br in case.branches:
        if br.in_service and br.id not in removed:
            uf.union(idx[br.from_bus], idx[br.to_bus])
    groups: dict[int, list[str]] = {}
    for b in case.buses:
        groups.setdefault(uf.find(idx[b.id]), []).append(b.id)
    return list(groups.values())


def check_connected(case: PowerCase, removed=()) -> None:
    groups = islands(case, removed)
    if len(groups) > 1:
        slack = case.slack.id
        stray = [g for g in groups if slack not in g]
        raise CaseError(
            f"network is not connected: {len(stray)} island(s) separated from slack bus "
            f"{slack!r}, e.g. buses {stray[0][:5]}")


# ---------------------------------------------------------------- network

def build_ybus(case: PowerCase, removed=()) -> np.ndarray:
    """Dense complex bus admittance matrix over in-service, non-removed branches."""
    n = len(case.buses)
    idx = case.bus_index
    y = np.zeros((n, n), dtype=complex)
    removed = set(removed)
    for br in case.branches:
        if not br.in_service or br.id in removed:
            continue
        i, j = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / br.z
        ysh = 0.5j * br.b_shunt
        y[i, i] += ys + ysh
        y[j, j] += ys + ysh
        y[i, j] -= ys
        y[j, i] -= ys
    return y


def bus_generation(case: PowerCase) -> np.ndarray:
    """Scheduled machine active power per bus, per-unit."""
    p = np.zeros(len(case.buses))
    for m in case.machines:
        p[case.bus_index[m.bus]] += m.p_gen
    return p


def solve_power_flow(case: PowerCase, removed=(), tol: float = 1e-8,
                     max_iter: int = 20) -> PFSolution:
    """Newton-Raphson power flow in polar form from a flat start."""
    removed = set(removed)
    check_connected(case, removed)
    ybus = build_ybus(case, removed)
    n = len(case.buses)
    kinds = [b.kind for b in case.buses]
    pv = [i for i, k in enumerate(kinds) if k == "pv"]
    pq = [i for i, k in enumerate(kinds) if k == "pq"]
    non_slack = sorted(pv + pq)

    p_load = np.array([b.p_load for b in case.buses])
    q_load = np.array([b.q_load for b in case.buses])
    p_spec = bus_generation(case) - p_load
    q_spec = -q_load

    vm = np.ones(n)
    va = np.zeros(n)
    for i, b in enumerate(case.buses):
        if b.kind in ("slack", "pv"):
            vm[i] = b.v_setpoint

    history: list[float] = []
    it = 0
    while True:
        v = vm * np.exp(1j * va)
        s = v * np.conj(ybus @ v)
        dp = s.real - p_spec
        dq = s.imag - q_spec
        mis = np.concatenate([dp[non_slack], dq[pq]])
        max_mis = float(np.max(np.abs(mis))) if mis.size else 0.0
        history.append(max_mis)
        if max_mis < tol:
            break
        if it >= max_iter:
            raise PowerFlowError(
                f"power flow did not converge in {max_iter} iterations "
                f"(max mismatch {max_mis:.3e} pu)", max_mis, it)
        jac = _jacobian(ybus, v, non_slack, pq)
        try:
            dx = np.linalg.solve(jac, -mis)
        except np.linalg.LinAlgError:
            raise PowerFlowError("singular power-flow Jacobian", max_mis, it) from None
        na = len(non_slack)
        va[non_slack] += dx[:na]
        vm[pq] += dx[na:]
        it += 1

    v = vm * np.exp(1j * va)
    inj = v * np.conj(ybus @ v)
    return PFSolution(v=v, injections=inj, converged=True, iterations=it,
                      max_mismatch=max_mis, mismatch_history=tuple(history))


def _jacobian(ybus, v, non_slack, pq):
    # derivatives of S = V conj(Y V) w.r.t. angle and magnitude
    i_bus = ybus @ v
    vn = v / np.abs(v)
    d_va = 1j * np.diag(v) @ np.conj(np.diag(i_bus) - ybus @ np.diag(v))
    d_vm = np.diag(v) @ np.conj(ybus @ np.diag(vn)) + np.diag(np.conj(i_bus) * vn)
    j11 = d_va.real[np.ix_(non_slack, non_slack)]
    j12 = d_vm.real[np.ix_(non_slack, pq)]
    j21 = d_va.imag[np.ix_(pq, non_slack)]
    j22 = d_vm.imag[np.ix_(pq, pq)]
    return np.block([[j11, j12], [j21, j22]])


def machine_outputs(case: PowerCase, pf: PFSolution) -> np.ndarray:
    """Complex power delivered by each machine at the power-flow point.

    Bus generation (injection plus local load) is shared among the bus's
    machines: active power in proportion to scheduled output (or rating when
    none is scheduled), reactive power in proportion to rating.
    """
    out = np.zeros(len(case.machines), dtype=complex)
    by_bus: dict[str, list[int]] = {}
    for k, m in enumerate(case.machines):
        by_bus.setdefault(m.bus, []).append(k)
    for bus_id, ks in by_bus.items():
        i = case.bus_index[bus_id]
        b = case.buses[i]
        s_gen = pf.injections[i] + complex(b.p_load, b.q_load)
        pg = np.array([case.machines[k].p_gen for k in ks])
        rating = np.array([case.machines[k].mva_base for k in ks])
        p_share = pg / pg.sum() if pg.sum() != 0 else rating / rating.sum()
        q_share = rating / rating.sum()
        for k, ps, qs in zip(ks, p_share, q_share):
            out[k] = complex(s_gen.real * ps, s_gen.imag * qs)
    return out


# ---------------------------------------------------------------- operating point

def scale_operating_point(case: PowerCase, load_scale: float, redispatch=None,
                          min_load_mw: float = 0.0) -> PowerCase:
    """Scale loads of at least ``min_load_mw`` by ``1 + load_scale`` and shift
    machine dispatch by ``redispatch`` (machine id -> delta MW).

    The slack machine absorbs whatever the redispatch leaves unbalanced.
    """
    redispatch = dict(redispatch or {})
    for mid in redispatch:
        if mid not in case.machine_index:
            raise CaseError(f"redispatch references unknown machine {mid!r}")
    if load_scale == 0 and not redispatch:
        return case
    floor = min_load_mw / case.base_mva
    loads = tuple(
        dataclasses.replace(ld, p=ld.p * (1 + load_scale), q=ld.q * (1 + load_scale))
        if ld.p >= floor else ld
        for ld in case.loads)
    machines = []
    for m in case.machines:
        if m.id in redispatch:
            p_new = m.p_gen + redispatch[m.id] / case.base_mva
            if m.p_max is not None and p_new > m.p_max + 1e-12:
                raise CaseError(
                    f"redispatch of machine {m.id!r} to {p_new * case.base_mva:.1f} MW "
                    f"exceeds its limit {m.p_max * case.base_mva:.1f} MW")
            m = dataclasses.replace(m, p_gen=p_new)
        machines.append(m)
    delta_load = sum(a.p - b.p for a, b in zip(loads, case.loads)) * case.base_mva
    delta_gen = sum(redispatch.values())
    if abs(delta_load - delta_gen) > 1e-6:
        log.debug("redispatch leaves %.3f MW to the slack", delta_load - delta_gen)
    raw = [(b.id, b.kv_level, b.kind, b.v_setpoint) for b in case.buses]
    return _assemble(case.system_frequency, case.base_mva, raw, case.branches,
                     machines, loads, case.name)


def compensating_redispatch(case: PowerCase, load_scale: float, machine_ids,
                            min_load_mw: float = 0.0) -> dict[str, float]:
    """Split the load increase of a uniform scale equally over ``machine_ids`` (MW)."""
    machine_ids = list(machine_ids)
    if not machine_ids:
        return {}
    floor = min_load_mw / case.base_mva
    increase = sum(ld.p * load_scale for ld in case.loads if ld.p >= floor) * case.base_mva
    return {mid: increase / len(machine_ids) for mid in machine_ids}


def with_outages(case: PowerCase, branch_ids) -> PowerCase:
    """Copy of ``case`` with the given branches marked out of service."""
    branch_ids = set(branch_ids)
    for bid in branch_ids:
        if bid not in case.branch_index:
            raise CaseError(f"unknown branch {bid!r}")
    branches = tuple(dataclasses.replace(br, in_service=False) if br.id in branch_ids else br
                     for br in case.branches)
    return dataclasses.replace(case, branches=branches)
