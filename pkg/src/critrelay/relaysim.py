"""Distance relays: mho zones, zone timers, trip signals and placement."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .gridcase import CaseError, PowerCase

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

BREAKER_DELAY = 0.05
# comparisons of elapsed time against a delay tolerate float noise from t = k*dt
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class ZoneSetting:
    reach_fraction: float
    delay: float

    def __post_init__(self):
        if not self.reach_fraction > 0:
            raise ValueError("zone reach_fraction must be positive")
        if not self.delay >= 0:
            raise ValueError("zone delay must be non-negative")


LINE_ZONES = (ZoneSetting(0.8, 0.0), ZoneSetting(1.2, 0.2), ZoneSetting(2.2, 0.3))
MONITOR_ZONES = LINE_ZONES[:2]


def zone_contains(z: complex, line_z: complex, zone: ZoneSetting) -> bool:
    """Inclusive membership in the mho circle through the origin whose diameter
    is ``reach_fraction * line_z``."""
    cr = zone.reach_fraction * line_z.real
    ci = zone.reach_fraction * line_z.imag
    return z.real * (z.real - cr) + z.imag * (z.imag - ci) <= 0.0


def zone_circle(line_z: complex, zone: ZoneSetting) -> tuple[complex, float]:
    """(center, radius) of a zone's mho circle in the R-X plane."""
    reach = zone.reach_fraction * line_z
    return reach / 2, abs(reach) / 2


@dataclass(frozen=True)
class TripSignal:
    relay_id: str
    branch: str
    zone: int          # 1-based
    pickup_t: float
    trip_t: float
    breaker_delay: float = BREAKER_DELAY

    @property
    def breaker_open_t(self) -> float:
        return self.trip_t + self.breaker_delay


@dataclass(frozen=True)
class RelayEvent:
    relay_id: str
    branch: str
    zone: int
    pickup_t: float
    trip_t: float
    breaker_open_t: float


@dataclass
class DistanceRelay:
    id: str
    branch: str
    end: str           # "from" | "to"
    line_z: complex
    zones: tuple[ZoneSetting, ...] = LINE_ZONES
    breaker_delay: float = BREAKER_DELAY
    kind: str = "line"  # "line" (three-zone) | "monitor" (two-zone)
    zone_timers: list = field(default_factory=list)
    tripped: bool = False

    def __post_init__(self):
        reaches = [zn.reach_fraction for zn in self.zones]
        if any(b <= a for a, b in zip(reaches, reaches[1:])):
            raise ValueError(f"relay {self.id}: zone reaches must strictly increase")
        if self.line_z == 0:
            raise ValueError(f"relay {self.id}: zero line impedance")
        if not self.zone_timers:
            self.zone_timers = [None] * len(self.zones)

    @property
    def point(self) -> tuple[str, str]:
        return self.branch, self.end

    def reset(self) -> None:
        self.zone_timers = [None] * len(self.zones)
        self.tripped = False

    def update(self, z: complex, t: float, inside=None) -> TripSignal | None:
        """Advance zone timers with the impedance seen at time ``t``.

        A timer starts when ``z`` enters its zone and clears when it leaves.
        The first zone whose timer reaches its delay trips the relay, after
        which the relay is inert.
        """
        if self.tripped:
            return None
        if inside is None:
            inside = [zone_contains(z, self.line_z, zn) for zn in self.zones]
        signal = None
        for k, zn in enumerate(self.zones):
            if inside[k]:
                if self.zone_timers[k] is None:
                    self.zone_timers[k] = t
                entry = self.zone_timers[k]
                if signal is None and t - entry >= zn.delay - _TIME_EPS:
                    signal = TripSignal(self.id, self.branch, k + 1, entry, t,
                                        self.breaker_delay)
            else:
                self.zone_timers[k] = None
        if signal is not None:
            self.tripped = True
        return signal


def update_relay(relay: DistanceRelay, z: complex, t: float):
    """Functional form of :meth:`DistanceRelay.update` returning ``(relay, signal)``."""
    signal = relay.update(z, t)
    return relay, signal


class RelaySet:
    """Ordered relay collection with a vectorized zone test for the per-step sweep."""

    def __init__(self, relays=()):
        self.relays: list[DistanceRelay] = list(relays)
        ids = [r.id for r in self.relays]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate relay ids")
        nz = max((len(r.zones) for r in self.relays), default=0)
        self._cr = np.full((len(self.relays), nz), np.nan)
        self._ci = np.full((len(self.relays), nz), np.nan)
        for i, r in enumerate(self.relays):
            for k, zn in enumerate(r.zones):
                self._cr[i, k] = zn.reach_fraction * r.line_z.real
                self._ci[i, k] = zn.reach_fraction * r.line_z.imag

    def __len__(self):
        return len(self.relays)

    def __iter__(self):
        return iter(self.relays)

    def __getitem__(self, i):
        return self.relays[i]

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.relays]

    def by_id(self, relay_id: str) -> DistanceRelay:
        for r in self.relays:
            if r.id == relay_id:
                return r
        raise KeyError(relay_id)

    def subset(self, keep) -> "RelaySet":
        keep = set(keep)
        return RelaySet(replace(r, zone_timers=[], tripped=False)
                        for r in self.relays if r.id in keep)

    def fresh(self) -> "RelaySet":
        return RelaySet(replace(r, zone_timers=[], tripped=False) for r in self.relays)

    def inside_matrix(self, z: np.ndarray) -> np.ndarray:
        zr = z.real[:, None]
        zi = z.imag[:, None]
        with np.errstate(invalid="ignore"):
            return zr * (zr - self._cr) + zi * (zi - self._ci) <= 0.0

    def sweep(self, impedances, t: float, open_branches=()) -> list[TripSignal]:
        """Apply one time step to every armed relay; returns signals emitted at ``t``.

        Relays whose branch is in ``open_branches`` are disarmed.
        """
        z = np.asarray(impedances, dtype=complex)
        inside = self.inside_matrix(z)
        signals = []
        for i, r in enumerate(self.relays):
            if r.tripped or r.branch in open_branches:
                continue
            row = inside[i]
            if not row.any() and all(tm is None for tm in r.zone_timers):
                continue
            sig = r.update(z[i], t, inside=row[:len(r.zones)])
            if sig is not None:
                signals.append(sig)
        return signals


def relay_sweep(relays: RelaySet, impedances, t: float, open_branches=()) -> list[TripSignal]:
    return relays.sweep(impedances, t, open_branches)


@dataclass(frozen=True)
class RelayPlacementPolicy:
    per_line_min_kv: float = 345.0
    monitor_kv_window: tuple[float, float] = (100.0, 345.0)

    def __post_init__(self):
        lo, hi = self.monitor_kv_window
        if lo > hi:
            raise ValueError("monitor window must satisfy min <= max")
        if hi > self.per_line_min_kv:
            raise ValueError("monitor window overlaps the per-line band")


def relay_id(branch_id: str, end: str) -> str:
    return f"{branch_id}@{end}"


def instantiate_relays(case: PowerCase, policy: RelayPlacementPolicy | None = None) -> RelaySet:
    """Two relays (one per end) on each in-service branch in a relayed kV band.

    Branches with both terminals at or above ``per_line_min_kv`` get three-zone
    line relays; branches with both terminals inside the monitor window get
    two-zone monitor relays.  Anything else (including transformers between
    bands) is unprotected.
    """
    policy = policy or RelayPlacementPolicy()
    lo, hi = policy.monitor_kv_window
    relays = []
    for br in case.branches:
        if not br.in_service:
            continue
        kv_a = case.bus(br.from_bus).kv_level
        kv_b = case.bus(br.to_bus).kv_level
        if min(kv_a, kv_b) >= policy.per_line_min_kv:
            zones, kind = LINE_ZONES, "line"
        elif lo <= kv_a < hi and lo <= kv_b < hi:
            zones, kind = MONITOR_ZONES, "monitor"
        else:
            continue
        for end in ("from", "to"):
            relays.append(DistanceRelay(relay_id(br.id, end), br.id, end, br.z,
                                        zones=zones, kind=kind))
    return RelaySet(relays)


def load_settings_overlay(text: str) -> dict:
    """Parse a relay settings overlay.

    Format (TOML)::

        [[relay]]
        branch = "L16-19"
        end = "from"                 # "from" | "to"
        reaches = [0.85, 1.25, 2.0]  # optional
        delays = [0.0, 0.25, 0.35]   # optional
        breaker_delay = 0.05         # optional

    Returns a mapping relay id -> override dict.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise CaseError(f"overlay parse error: {exc}") from None
    unknown = set(doc) - {"relay"}
    if unknown:
        raise CaseError(f"overlay: unknown section(s) {sorted(unknown)}")
    out = {}
    allowed = {"branch", "end", "reaches", "delays", "breaker_delay"}
    for i, e in enumerate(doc.get("relay", [])):
        bad = set(e) - allowed
        if bad:
            raise CaseError(f"overlay relay[{i}]: unknown field(s) {sorted(bad)}")
        if "branch" not in e or e.get("end") not in ("from", "to"):
            raise CaseError(f"overlay relay[{i}]: needs 'branch' and end = 'from'|'to'")
        out[relay_id(str(e["branch"]), e["end"])] = e
    return out


def apply_settings_overlay(relays: RelaySet, overlay: dict) -> RelaySet:
    unknown = set(overlay) - set(relays.ids)
    if unknown:
        raise CaseError(f"overlay references unknown relay(s) {sorted(unknown)}")
    out = []
    for r in relays:
        o = overlay.get(r.id)
        if o is None:
            out.append(replace(r, zone_timers=[], tripped=False))
            continue
        reaches = o.get("reaches", [zn.reach_fraction for zn in r.zones])
        delays = o.get("delays", [zn.delay for zn in r.zones])
        if len(reaches) != len(delays):
            raise CaseError(f"overlay for {r.id}: reaches and delays differ in length")
        zones = tuple(ZoneSetting(float(a), float(b)) for a, b in zip(reaches, delays))
        out.append(replace(r, zones=zones, zone_timers=[], tripped=False,
                           breaker_delay=float(o.get("breaker_delay", r.breaker_delay))))
    return RelaySet(out)


def load_settings_overlay_file(path) -> dict:
    return load_settings_overlay(Path(path).read_text())


def zone_circles(relay: DistanceRelay) -> list[tuple[int, float, float, float]]:
    """[(zone index, center R, center X, radius)] for plotting overlays."""
    rows = []
    for k, zn in enumerate(relay.zones, start=1):
        c, rad = zone_circle(relay.line_z, zn)
        rows.append((k, c.real, c.imag, rad))
    return rows
