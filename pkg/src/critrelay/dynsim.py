"""Classical-model transient stability engine.

Machines are constant EMFs behind transient reactance driven by the swing
equation; loads are constant admittances fixed at the power-flow point.  The
network is linear for a given topology, so each configuration (removed
branches, fault, tripped machines) is factorized once and reused for every
integration stage until the next event.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .gridcase import (CaseError, PFSolution, PowerCase, check_connected,
                       machine_outputs, scale_operating_point, solve_power_flow,
                       with_outages)
from .relaysim import RelayEvent, RelaySet

log = logging.getLogger(__name__)

ENGINE_VERSION = "critrelay-classical-1"

# Apparent impedance reported when a relay sees (almost) no current or its branch is open.
FAR_IMPEDANCE = complex(1e6, 1e6)
CONTINGENCY_KINDS = ("bus_fault", "line_fault", "machine_outage", "none")


def is_far(z) -> np.ndarray | bool:
    return np.real(z) >= FAR_IMPEDANCE.real


class Divergence(RuntimeError):
    """The network solution failed or collapsed."""


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0 / 240.0
    t_end: float = 5.0
    early_stop: float | None = None
    integrator: str = "rk4"
    network_tol: float = 1e-10
    divergence_voltage_floor: float = 0.01
    current_floor: float = 1e-6
    fault_admittance: complex = -1e6j

    def __post_init__(self):
        if self.integrator not in ("rk4", "trapezoidal"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.early_stop is not None and self.early_stop > self.t_end + 1e-12:
            raise ValueError("early_stop must not exceed t_end")

    @classmethod
    def for_case(cls, case: PowerCase, **kw) -> "SimConfig":
        """Config with a quarter-cycle step at the case frequency."""
        kw.setdefault("dt", 1.0 / (4.0 * case.system_frequency))
        cfg = cls(**kw)
        if cfg.dt > 1.0 / case.system_frequency + 1e-15:
            raise ValueError("dt must not exceed one cycle")
        return cfg

    def steps(self, t: float) -> int:
        return int(round(t / self.dt))


@dataclass(frozen=True)
class ContingencySpec:
    kind: str
    target: str = ""
    fault_location: float = 0.5
    t_fault: float = 1.0
    clearing_cycles: float = 4.0
    post_clear_removals: frozenset = frozenset()
    pre_outages: frozenset = frozenset()
    operating_variant: tuple | None = None   # (load_scale, {machine: dMW}, min_load_mw)
    fault_admittance: complex | None = None
    id: str = ""

    def __post_init__(self):
        if self.kind not in CONTINGENCY_KINDS:
            raise ValueError(f"unknown contingency kind {self.kind!r}")
        if self.clearing_cycles < 0:
            raise ValueError("clearing_cycles must be >= 0")
        if not 0.0 <= self.fault_location <= 1.0:
            raise ValueError("fault_location must lie in [0, 1]")
        object.__setattr__(self, "post_clear_removals", frozenset(self.post_clear_removals))
        object.__setattr__(self, "pre_outages", frozenset(self.pre_outages))

    @property
    def label(self) -> str:
        return self.id or f"{self.kind}:{self.target}"


@dataclass(frozen=True)
class Fault:
    kind: str                 # "bus" | "line"
    target: str
    location: float
    admittance: complex


@dataclass(frozen=True)
class DynState:
    t: float
    delta: np.ndarray
    omega: np.ndarray
    eprime: np.ndarray
    pm: np.ndarray
    active_topology: frozenset = frozenset()
    fault: Fault | None = None
    machines_off: frozenset = frozenset()


@dataclass
class Trajectory:
    times: np.ndarray
    delta: np.ndarray          # (T, machines)
    omega: np.ndarray
    v: np.ndarray              # (T, buses)
    relay_ids: list
    relay_z: np.ndarray        # (T, monitored relays)
    relay_events: list = field(default_factory=list)
    termination: str = "completed"      # completed | diverged | early_stop
    termination_t: float | None = None
    machine_ids: list = field(default_factory=list)
    bus_ids: list = field(default_factory=list)
    inertia: np.ndarray | None = None
    machines_on: np.ndarray | None = None   # (T, machines) bool

    def relay_series(self, relay_id: str) -> np.ndarray:
        return self.relay_z[:, self.relay_ids.index(relay_id)]

    def relative_angles(self) -> np.ndarray:
        """Rotor angles relative to the inertia-weighted center of inertia (radians).

        Machines with unbounded inertia, when present, define the reference alone.
        Tripped machines are excluded from the reference and reported as NaN.
        """
        on = self.machines_on if self.machines_on is not None else np.ones_like(self.delta, bool)
        h = np.broadcast_to(self.inertia, self.delta.shape)
        inf = np.isinf(h)
        w = np.where(on, np.where(inf.any(axis=1, keepdims=True),
                                  inf.astype(float), np.where(inf, 0.0, h)), 0.0)
        coi = (w * self.delta).sum(axis=1) / w.sum(axis=1)
        rel = self.delta - coi[:, None]
        return np.where(on, rel, np.nan)


# ---------------------------------------------------------------- network model

@dataclass
class _Config:
    """Factorized network for one (topology, fault, machine set) combination."""
    zg: np.ndarray            # node voltages per unit machine Norton injection (nodes, machines)
    yred: np.ndarray          # machine current = yred @ E
    relay_v: np.ndarray       # relay end voltage per E
    relay_i: np.ndarray       # relay end current per E
    relay_open: np.ndarray    # bool per monitored relay
    energized: np.ndarray     # bool per original bus
    on: np.ndarray            # bool per machine
    singular: bool = False


class DynamicModel:
    """A case prepared for time-domain simulation around one power-flow point."""

    def __init__(self, case: PowerCase, pf: PFSolution, monitor=()):
        if not pf.converged:
            raise ValueError("power flow not converged")
        self.case = case
        self.pf = pf
        self.n = len(case.buses)
        self.m = len(case.machines)
        self.omega_s = 2 * math.pi * case.system_frequency
        self.h = np.array([mc.h for mc in case.machines], dtype=float)
        self.d = np.array([mc.d for mc in case.machines], dtype=float)
        self.xdp = np.array([mc.xdp for mc in case.machines], dtype=float)
        self.y_norton = 1.0 / (1j * self.xdp)
        self.machine_bus = np.array([case.bus_index[mc.bus] for mc in case.machines], dtype=int)
        vmag2 = np.abs(pf.v) ** 2
        s_load = np.array([complex(b.p_load, b.q_load) for b in case.buses])
        self.y_load = np.conj(s_load) / vmag2
        self.monitor = list(monitor)     # [(relay id, branch id, end)]
        self._cache: dict = {}

    # -- configuration assembly
    def _config(self, removed: frozenset, fault: Fault | None, off: frozenset) -> _Config:
        key = (removed, fault, off)
        cfg = self._cache.get(key)
        if cfg is None:
            cfg = self._build(removed, fault, off)
            self._cache[key] = cfg
        return cfg

    def _build(self, removed, fault, off) -> _Config:
        case = self.case
        n = self.n
        idx = case.bus_index
        split = None
        if fault is not None and fault.kind == "line":
            split = fault.target
        nodes = n + (1 if split is not None else 0)
        y = np.zeros((nodes, nodes), dtype=complex)
        edges = []
        # relay current coefficients: I_end = a * V_end + b * V_other
        sections = {}
        for br in case.branches:
            if not br.in_service or br.id in removed:
                continue
            i, j = idx[br.from_bus], idx[br.to_bus]
            if br.id == split:
                f = fault.location
                parts = [(i, n, f), (n, j, 1.0 - f)]
            else:
                parts = [(i, j, 1.0)]
            for a, b, frac in parts:
                ys = 1.0 / (br.z * frac)
                ysh = 0.5j * br.b_shunt * frac
                y[a, a] += ys + ysh
                y[b, b] += ys + ysh
                y[a, b] -= ys
                y[b, a] -= ys
                edges.append((a, b))
            first, last = parts[0], parts[-1]
            sections[br.id] = {
                "from": (first[0], first[1], 1.0 / (br.z * first[2]), 0.5j * br.b_shunt * first[2]),
                "to": (last[1], last[0], 1.0 / (br.z * last[2]), 0.5j * br.b_shunt * last[2]),
            }
        y[np.arange(n), np.arange(n)] += self.y_load
        on = np.array([mc.id not in off for mc in case.machines])
        yn = np.where(on, self.y_norton, 0.0)
        np.add.at(y, (self.machine_bus, self.machine_bus), yn)
        if fault is not None:
            node = n if fault.kind == "line" else idx[fault.target]
            y[node, node] += fault.admittance

        # energized nodes: connected to an in-service machine
        if edges:
            ea = np.array(edges)
            graph = coo_matrix((np.ones(len(ea)), (ea[:, 0], ea[:, 1])), shape=(nodes, nodes))
            _, labels = connected_components(graph, directed=False)
        else:
            labels = np.arange(nodes)
        live_labels = set(labels[self.machine_bus[on]].tolist())
        energized = np.array([lab in live_labels for lab in labels])
        live = np.flatnonzero(energized)

        zg = np.zeros((nodes, self.m), dtype=complex)
        singular = False
        if live.size:
            pos = {int(k): p for p, k in enumerate(live)}
            rhs = np.zeros((live.size, self.m), dtype=complex)
            for k in np.flatnonzero(on):
                rhs[pos[int(self.machine_bus[k])], k] = yn[k]
            try:
                sub = y[np.ix_(live, live)]
                lu = scipy.linalg.lu_factor(sub, check_finite=True)
                if np.any(np.abs(np.diag(lu[0])) < 1e-300):
                    raise np.linalg.LinAlgError("singular network matrix")
                zg[live] = scipy.linalg.lu_solve(lu, rhs)
                if not np.all(np.isfinite(zg)):
                    raise np.linalg.LinAlgError("non-finite network solution")
            except (np.linalg.LinAlgError, ValueError):
                singular = True
        # zg maps machine EMFs (not Norton currents) to node voltages
        vb = zg[self.machine_bus]                       # (machines, machines)
        yred = np.diag(yn) - yn[:, None] * vb

        nm = len(self.monitor)
        rv = np.zeros((nm, self.m), dtype=complex)
        ri = np.zeros((nm, self.m), dtype=complex)
        ropen = np.zeros(nm, dtype=bool)
        for r, (_, bid, end) in enumerate(self.monitor):
            sec = sections.get(bid)
            if sec is None:
                ropen[r] = True
                continue
            a, b, ys, ysh = sec[end]
            rv[r] = zg[a]
            ri[r] = (ys + ysh) * zg[a] - ys * zg[b]
        return _Config(zg=zg[:n], yred=yred, relay_v=rv, relay_i=ri, relay_open=ropen,
                       energized=energized[:n], on=on, singular=singular)

    # -- state
    def initial_state(self) -> DynState:
        case = self.case
        s_m = machine_outputs(case, self.pf)
        vt = self.pf.v[self.machine_bus]
        if np.any(np.abs(vt) < 1e-6):
            raise ValueError("machine terminal voltage is ~0; terminal current undefined")
        it = np.conj(s_m / vt)
        e = vt + 1j * self.xdp * it
        state = DynState(t=0.0, delta=np.angle(e), omega=np.zeros(self.m),
                         eprime=np.abs(e), pm=np.zeros(self.m))
        pe = self.electrical_power(state)
        return replace(state, pm=pe)

    def _emf(self, state: DynState, delta=None) -> np.ndarray:
        d = state.delta if delta is None else delta
        return state.eprime * np.exp(1j * d)

    def electrical_power(self, state: DynState, delta=None) -> np.ndarray:
        cfg = self._config(state.active_topology, state.fault, state.machines_off)
        if cfg.singular:
            raise Divergence("network solution failed")
        e = self._emf(state, delta)
        return (e * np.conj(cfg.yred @ e)).real

    def network_solve(self, state: DynState):
        """Bus voltages and machine electrical power for ``state``."""
        cfg = self._config(state.active_topology, state.fault, state.machines_off)
        if cfg.singular:
            raise Divergence("network solution failed")
        e = self._emf(state)
        v = cfg.zg @ e
        pe = (e * np.conj(cfg.yred @ e)).real
        return v, pe

    def relay_impedances(self, state: DynState, floor: float) -> np.ndarray:
        cfg = self._config(state.active_topology, state.fault, state.machines_off)
        e = self._emf(state)
        vr = cfg.relay_v @ e
        ir = cfg.relay_i @ e
        small = cfg.relay_open | (np.abs(ir) < floor)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = vr / np.where(small, 1.0, ir)
        return np.where(small, FAR_IMPEDANCE, z)

    # -- integration
    def _deriv(self, state, delta, omega):
        cfg = self._config(state.active_topology, state.fault, state.machines_off)
        if cfg.singular:
            raise Divergence("network solution failed")
        e = state.eprime * np.exp(1j * delta)
        pe = (e * np.conj(cfg.yred @ e)).real
        acc = np.where(cfg.on, (state.pm - pe - self.d * omega) / (2.0 * self.h), 0.0)
        return self.omega_s * omega, acc

    def step(self, state: DynState, cfg: SimConfig) -> DynState:
        """Advance the swing equations by one ``cfg.dt``."""
        dt = cfg.dt
        d0, w0 = state.delta, state.omega
        if cfg.integrator == "rk4":
            k1d, k1w = self._deriv(state, d0, w0)
            k2d, k2w = self._deriv(state, d0 + 0.5 * dt * k1d, w0 + 0.5 * dt * k1w)
            k3d, k3w = self._deriv(state, d0 + 0.5 * dt * k2d, w0 + 0.5 * dt * k2w)
            k4d, k4w = self._deriv(state, d0 + dt * k3d, w0 + dt * k3w)
            d1 = d0 + dt / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d)
            w1 = w0 + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
        else:
            fd, fw = self._deriv(state, d0, w0)
            d1, w1 = d0 + dt * fd, w0 + dt * fw
            for _ in range(50):
                gd, gw = self._deriv(state, d1, w1)
                nd = d0 + 0.5 * dt * (fd + gd)
                nw = w0 + 0.5 * dt * (fw + gw)
                change = max(np.max(np.abs(nd - d1)), np.max(np.abs(nw - w1)))
                d1, w1 = nd, nw
                if change < cfg.network_tol:
                    break
        return replace(state, t=state.t + dt, delta=d1, omega=w1)


def init_dynamics(case: PowerCase, pf: PFSolution, monitor=()) -> tuple[DynamicModel, DynState]:
    model = DynamicModel(case, pf, monitor)
    return model, model.initial_state()


def network_solve(model: DynamicModel, state: DynState):
    return model.network_solve(state)


def step(model: DynamicModel, state: DynState, cfg: SimConfig) -> DynState:
    return model.step(state, cfg)


def apparent_impedance(voltages: np.ndarray, state: DynState, case: PowerCase,
                       relay_point: tuple[str, str], current_floor: float = 1e-6) -> complex:
    """V/I seen at one end of a branch from a full set of bus voltages.

    The current is the one leaving the relay's bus into the branch (series
    plus that end's half of the line charging).  Open branches and currents
    below ``current_floor`` give :data:`FAR_IMPEDANCE`.
    """
    branch_id, end = relay_point
    br = case.branch(branch_id)
    if not br.in_service or branch_id in state.active_topology:
        return FAR_IMPEDANCE
    vf = voltages[case.bus_index[br.from_bus]]
    vt = voltages[case.bus_index[br.to_bus]]
    a, b = (vf, vt) if end == "from" else (vt, vf)
    current = (a - b) / br.z + a * 0.5j * br.b_shunt
    if abs(current) < current_floor:
        return FAR_IMPEDANCE
    return a / current


# ---------------------------------------------------------------- simulation

def prepare_case(case: PowerCase, contingency: ContingencySpec) -> PowerCase:
    """Apply a contingency's operating variant and pre-outages to the base case."""
    variant = contingency.operating_variant
    if variant:
        load_scale, redispatch = variant[0], dict(variant[1])
        min_mw = variant[2] if len(variant) > 2 else 0.0
        case = scale_operating_point(case, load_scale, redispatch, min_mw)
    if contingency.pre_outages:
        case = with_outages(case, contingency.pre_outages)
        check_connected(case)
    return case


def validate_contingency(case: PowerCase, c: ContingencySpec) -> None:
    if c.kind == "bus_fault" and c.target not in case.bus_index:
        raise CaseError(f"contingency {c.label}: unknown bus {c.target!r}")
    if c.kind == "line_fault":
        if c.target not in case.branch_index:
            raise CaseError(f"contingency {c.label}: unknown branch {c.target!r}")
        if not case.branch(c.target).in_service or c.target in c.pre_outages:
            raise CaseError(f"contingency {c.label}: faulted branch {c.target!r} is out of service")
    if c.kind == "machine_outage" and c.target not in case.machine_index:
        raise CaseError(f"contingency {c.label}: unknown machine {c.target!r}")
    for bid in c.post_clear_removals | c.pre_outages:
        if bid not in case.branch_index:
            raise CaseError(f"contingency {c.label}: unknown branch {bid!r}")
    if c.t_fault < 0:
        raise CaseError(f"contingency {c.label}: t_fault must be >= 0")


def run_simulation(case: PowerCase, contingency: ContingencySpec, relays: RelaySet | None,
                   cfg: SimConfig, monitor: RelaySet | None = None,
                   pf: PFSolution | None = None) -> Trajectory:
    """Simulate one contingency.

    ``relays`` are the active relays whose trips open breakers; ``monitor``
    (default: the active relays) lists the relay points whose apparent
    impedance is recorded every step.  Passing an empty ``relays`` with a
    full ``monitor`` gives the relay-free study used for identification.
    """
    validate_contingency(case, contingency)
    relays = relays.fresh() if relays is not None else RelaySet()
    monitor = relays if monitor is None else monitor
    case = prepare_case(case, contingency)
    if pf is None:
        pf = solve_power_flow(case)
    points = [(r.id, r.branch, r.end) for r in monitor]
    model = DynamicModel(case, pf, points)
    state = model.initial_state()

    dt = cfg.dt
    k_fault = cfg.steps(contingency.t_fault)
    k_clear = cfg.steps(contingency.t_fault + contingency.clearing_cycles / case.system_frequency)
    k_end = cfg.steps(cfg.t_end)
    early = False
    if cfg.early_stop is not None and cfg.steps(cfg.early_stop) < k_end:
        k_end = cfg.steps(cfg.early_stop)
        early = True

    fault = None
    if contingency.kind in ("bus_fault", "line_fault"):
        y_f = contingency.fault_admittance if contingency.fault_admittance is not None \
            else cfg.fault_admittance
        loc = contingency.fault_location
        if contingency.kind == "line_fault" and loc in (0.0, 1.0):
            br = case.branch(contingency.target)
            fault = Fault("bus", br.from_bus if loc == 0.0 else br.to_bus, loc, y_f)
        elif contingency.kind == "line_fault":
            fault = Fault("line", contingency.target, loc, y_f)
        else:
            fault = Fault("bus", contingency.target, 0.0, y_f)

    active_index = {r.id: i for i, r in enumerate(relays)}
    monitor_index = {r.id: i for i, r in enumerate(monitor)}
    active_cols = np.array([monitor_index.get(r.id, -1) for r in relays], dtype=int)
    extra_points = [r for r in relays if r.id not in monitor_index]
    extra_model = None
    if extra_points:
        # active relays that are not monitored still need their impedance
        extra_model = DynamicModel(case, pf, [(r.id, r.branch, r.end) for r in extra_points])

    breaker_steps: dict[int, set] = {}
    events: list[RelayEvent] = []
    times, deltas, omegas, volts, zs, ons = [], [], [], [], [], []
    termination, term_t = "completed", None
    low_count = 0
    removed = set()
    off = set()

    k = 0
    while True:
        t = k * dt
        changed = False
        if fault is not None and k == k_fault and k_clear > k_fault:
            state = replace(state, fault=fault)
        if k == k_fault and contingency.kind == "machine_outage":
            off.add(contingency.target)
            changed = True
        if k == k_clear and fault is not None:
            state = replace(state, fault=None)
            removed |= contingency.post_clear_removals
            changed = True
        if k in breaker_steps:
            removed |= breaker_steps.pop(k)
            changed = True
        if changed:
            state = replace(state, active_topology=frozenset(removed), machines_off=frozenset(off),
                            pm=np.where([mc.id in off for mc in case.machines], 0.0, state.pm))
        state = replace(state, t=t)

        try:
            v, _ = model.network_solve(state)
        except Divergence:
            termination, term_t = "diverged", t
            break
        cfg_net = model._config(state.active_topology, state.fault, state.machines_off)
        energized_v = np.abs(v[cfg_net.energized])
        fault_on = state.fault is not None
        if not np.all(np.isfinite(v)):
            termination, term_t = "diverged", t
            break
        if not fault_on and energized_v.size and energized_v.min() < cfg.divergence_voltage_floor:
            low_count += 1
        else:
            low_count = 0
        if low_count >= 2:
            termination, term_t = "diverged", t
            break

        z_mon = model.relay_impedances(state, cfg.current_floor)
        times.append(t)
        deltas.append(state.delta)
        omegas.append(state.omega)
        volts.append(v)
        zs.append(z_mon)
        ons.append([mc.id not in off for mc in case.machines])

        if len(relays):
            z_act = np.empty(len(relays), dtype=complex)
            have = active_cols >= 0
            z_act[have] = z_mon[active_cols[have]]
            if extra_model is not None:
                z_extra = extra_model.relay_impedances(state, cfg.current_floor)
                for j, r in enumerate(extra_points):
                    z_act[active_index[r.id]] = z_extra[j]
            for sig in relays.sweep(z_act, t, open_branches=removed):
                events.append(RelayEvent(sig.relay_id, sig.branch, sig.zone, sig.pickup_t,
                                         sig.trip_t, sig.breaker_open_t))
                kb = k + max(1, cfg.steps(sig.breaker_delay))
                breaker_steps.setdefault(kb, set()).add(sig.branch)

        if k >= k_end:
            if early:
                termination, term_t = "early_stop", t
            break
        try:
            state = model.step(state, cfg)
        except Divergence:
            termination, term_t = "diverged", (k + 1) * dt
            break
        k += 1

    nr = len(monitor)
    return Trajectory(
        times=np.array(times),
        delta=np.array(deltas).reshape(len(times), model.m),
        omega=np.array(omegas).reshape(len(times), model.m),
        v=np.array(volts).reshape(len(times), model.n),
        relay_ids=[r.id for r in monitor],
        relay_z=np.array(zs, dtype=complex).reshape(len(times), nr),
        relay_events=events,
        termination=termination,
        termination_t=term_t,
        machine_ids=[mc.id for mc in case.machines],
        bus_ids=[b.id for b in case.buses],
        inertia=model.h.copy(),
        machines_on=np.array(ons, dtype=bool).reshape(len(times), model.m),
    )


# ---------------------------------------------------------------- export

def write_trajectory_csv(traj: Trajectory, fh) -> None:
    """Wide CSV: time, rotor angles, speeds, bus voltage magnitudes, relay R and X."""
    w = csv.writer(fh, lineterminator="\n")
    header = ["time"]
    header += [f"delta_{m}" for m in traj.machine_ids]
    header += [f"omega_{m}" for m in traj.machine_ids]
    header += [f"vmag_{b}" for b in traj.bus_ids]
    for rid in traj.relay_ids:
        header += [f"R_{rid}", f"X_{rid}"]
    w.writerow(header)
    for k, t in enumerate(traj.times):
        row = [_fmt(t)]
        row += [repr(float(x)) for x in traj.delta[k]]
        row += [repr(float(x)) for x in traj.omega[k]]
        row += [repr(float(x)) for x in np.abs(traj.v[k])]
        for z in traj.relay_z[k]:
            row += [repr(float(z.real)), repr(float(z.imag))]
        w.writerow(row)


def write_events_csv(events, fh) -> None:
    """Relay-event table sorted by breaker-open time (stable on ties)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["relay_id", "branch", "zone", "pickup_t", "trip_t", "breaker_t"])
    for ev in sorted(events, key=lambda e: round(e.breaker_open_t, 9)):
        w.writerow([ev.relay_id, ev.branch, ev.zone, f"{ev.pickup_t:.3f}",
                    f"{ev.trip_t:.3f}", f"{ev.breaker_open_t:.3f}"])


def _fmt(t: float) -> str:
    return f"{t:.6f}"
