"""Building models producing controllable net electrical loads.

Each building carries a base-demand series, a PV series, and a battery.
The single control input per building is a scalar in [-1, 1] dispatching
the battery (positive charges, i.e. adds demand). Round-trip losses split
symmetrically: sqrt(eta) applies on charge, 1/sqrt(eta) on discharge.
"""

from __future__ import annotations

import csv
import math
import pathlib
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from bgcosim import textdoc


class FleetError(ValueError):
    """Invalid fleet definition or building step."""


@dataclass(frozen=True)
class BuildingModel:
    id: str
    base_load_kw: tuple[float, ...]
    pv_kw: tuple[float, ...]
    battery_capacity_kwh: float = 0.0
    battery_max_kw: float = 0.0
    round_trip_efficiency: float = 0.9
    power_factor: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "base_load_kw", tuple(self.base_load_kw))
        object.__setattr__(self, "pv_kw", tuple(self.pv_kw))
        if len(self.base_load_kw) != len(self.pv_kw):
            raise FleetError(f"building {self.id}: series lengths differ")
        if any(v < 0 for v in self.pv_kw):
            raise FleetError(f"building {self.id}: pv_kw must be nonnegative")
        if not 0 < self.round_trip_efficiency <= 1:
            raise FleetError(f"building {self.id}: efficiency must be in (0, 1]")
        if not 0.8 < self.power_factor <= 1:
            raise FleetError(f"building {self.id}: power_factor must be in (0.8, 1]")
        if self.battery_capacity_kwh < 0 or self.battery_max_kw < 0:
            raise FleetError(f"building {self.id}: negative battery parameters")
        if self.battery_max_kw > self.battery_capacity_kwh and self.battery_capacity_kwh > 0:
            raise FleetError(
                f"building {self.id}: battery_max_kw exceeds capacity per hour-step"
            )
        if self.battery_capacity_kwh == 0 and self.battery_max_kw > 0:
            raise FleetError(f"building {self.id}: battery power without capacity")

    @property
    def horizon(self) -> int:
        return len(self.base_load_kw)


@dataclass(frozen=True)
class BuildingState:
    soc_kwh: float = 0.0
    last_net_load_kw: float = 0.0


@dataclass(frozen=True)
class MappingEntry:
    bus: int
    building: str
    replication: int = 1

    def __post_init__(self):
        if self.replication < 1 or not isinstance(self.replication, int):
            raise FleetError("replication count must be an integer >= 1")


@dataclass(frozen=True)
class BusMapping:
    entries: tuple[MappingEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def buses(self) -> tuple[int, ...]:
        return tuple(sorted({e.bus for e in self.entries}))

    def building_ids(self) -> tuple[str, ...]:
        return tuple(sorted({e.building for e in self.entries}))

    def bus_of(self, building_id: str) -> int:
        for e in self.entries:
            if e.building == building_id:
                return e.bus
        raise FleetError(f"building {building_id} not mapped to any bus")


def step_building(
    model: BuildingModel,
    state: BuildingState,
    action: float,
    t: int,
    dt_hours: float = 1.0,
) -> tuple[BuildingState, float]:
    """Advance one step: dispatch the battery and return the net load.

    Battery terminal power is action x battery_max_kw (positive charges),
    clamped so the state of charge stays within [0, capacity] after
    efficiency: SoC gains p*sqrt(eta)*dt on charge and pays |p|*dt/sqrt(eta)
    on discharge. net_load = base - pv + terminal power.
    """
    if not 0 <= t < model.horizon:
        raise FleetError(f"horizon exceeded: step {t} of {model.horizon}")
    if not 0 <= state.soc_kwh <= model.battery_capacity_kwh + 1e-12:
        raise FleetError(f"building {model.id}: state of charge out of range")
    action = min(1.0, max(-1.0, float(action)))

    sqrt_eta = math.sqrt(model.round_trip_efficiency)
    p = action * model.battery_max_kw
    if p > 0:
        headroom = model.battery_capacity_kwh - state.soc_kwh
        p = min(p, headroom / (sqrt_eta * dt_hours))
        soc = state.soc_kwh + p * sqrt_eta * dt_hours
    elif p < 0:
        available = state.soc_kwh * sqrt_eta
        p = max(p, -available / dt_hours)
        soc = state.soc_kwh + p * dt_hours / sqrt_eta
    else:
        soc = state.soc_kwh
    soc = min(max(soc, 0.0), model.battery_capacity_kwh)

    net = model.base_load_kw[t] - model.pv_kw[t] + p
    return BuildingState(soc_kwh=soc, last_net_load_kw=net), net


def aggregate_bus_loads(
    fleet: Mapping[str, BuildingModel],
    net_loads_kw: Mapping[str, float],
    mapping: BusMapping,
) -> dict[int, tuple[float, float]]:
    """Per-bus (P_mw, Q_mvar) from building net loads and replication counts.

    Q follows each building's fixed power factor with the sign of P, so net
    exporters also export reactive power at that factor.
    """
    out: dict[int, tuple[float, float]] = {}
    for entry in mapping.entries:
        model = fleet.get(entry.building)
        if model is None:
            raise FleetError(f"mapping references unknown building {entry.building}")
        if entry.building not in net_loads_kw:
            raise FleetError(f"no net load for building {entry.building}")
        p_kw = net_loads_kw[entry.building] * entry.replication
        p_mw = p_kw / 1000.0
        tan_phi = math.tan(math.acos(model.power_factor))
        q_mvar = p_mw * tan_phi
        p0, q0 = out.get(entry.bus, (0.0, 0.0))
        out[entry.bus] = (p0 + p_mw, q0 + q_mvar)
    return out


def expand_instances(
    fleet: Mapping[str, BuildingModel], mapping: BusMapping
) -> tuple[dict[str, BuildingModel], BusMapping]:
    """One independent building instance per (model, bus) mapping entry.

    A model mapped to several buses is the replication-based simplification:
    the profile is shared, but each bus's copies keep their own battery state
    and see their own bus voltage. Instance ids are the model id, suffixed
    with ``@bus`` when a model appears at more than one bus.
    """
    count: dict[str, int] = {}
    for entry in mapping.entries:
        count[entry.building] = count.get(entry.building, 0) + 1
    seen = set()
    instances: dict[str, BuildingModel] = {}
    entries = []
    for entry in mapping.entries:
        if (entry.building, entry.bus) in seen:
            raise FleetError(
                f"building {entry.building} mapped to bus {entry.bus} twice"
            )
        seen.add((entry.building, entry.bus))
        model = fleet.get(entry.building)
        if model is None:
            raise FleetError(f"mapping references unknown building {entry.building}")
        name = (
            entry.building if count[entry.building] == 1
            else f"{entry.building}@{entry.bus}"
        )
        instances[name] = model
        entries.append(
            MappingEntry(bus=entry.bus, building=name, replication=entry.replication)
        )
    return instances, BusMapping(tuple(entries))


# ---------------------------------------------------------------------------
# synthetic profiles

def diurnal_profile(horizon: int, dt_hours: float, peak_kw: float,
                    noise_kw: float = 0.0, seed: int = 0) -> tuple[float, ...]:
    """Smooth daily demand curve peaking at 18:00, floored at 30% of peak."""
    rng = np.random.default_rng(seed)
    out = []
    for t in range(horizon):
        h = (t * dt_hours) % 24.0
        shape = 0.5 + 0.5 * math.cos(2.0 * math.pi * (h - 18.0) / 24.0)
        value = peak_kw * (0.3 + 0.7 * shape)
        if noise_kw:
            value += float(rng.normal(0.0, noise_kw))
        out.append(max(value, 0.0))
    return tuple(out)


def evening_peak_profile(horizon: int, dt_hours: float, peak_kw: float,
                         noise_kw: float = 0.0, seed: int = 0) -> tuple[float, ...]:
    """Demand concentrated in a Gaussian bump around 18:30."""
    rng = np.random.default_rng(seed)
    out = []
    for t in range(horizon):
        h = (t * dt_hours) % 24.0
        bump = math.exp(-(((h - 18.5) / 2.5) ** 2))
        value = peak_kw * (0.1 + 0.9 * bump)
        if noise_kw:
            value += float(rng.normal(0.0, noise_kw))
        out.append(max(value, 0.0))
    return tuple(out)


def clear_sky_pv_profile(horizon: int, dt_hours: float, peak_kw: float) -> tuple[float, ...]:
    """Bell-shaped generation between 06:00 and 18:00, peaking at noon."""
    out = []
    for t in range(horizon):
        h = (t * dt_hours) % 24.0
        if 6.0 < h < 18.0:
            out.append(peak_kw * math.sin(math.pi * (h - 6.0) / 12.0) ** 2)
        else:
            out.append(0.0)
    return tuple(out)


def constant_profile(horizon: int, value_kw: float) -> tuple[float, ...]:
    return tuple([value_kw] * horizon)


# ---------------------------------------------------------------------------
# fleet file

_BUILDING_KEYS = {
    "id", "battery_capacity_kwh", "battery_max_kw", "round_trip_efficiency",
    "power_factor", "base_profile", "base_peak_kw", "base_noise_kw",
    "base_csv", "base_series", "pv_profile", "pv_peak_kw", "pv_csv",
    "pv_series", "profile_seed",
}
_MAPPING_KEYS = {"bus", "buses", "building", "replication"}


def _profile_from_csv(path: pathlib.Path, horizon: int) -> tuple[float, ...]:
    """Profile CSV columns: step, kw."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["step", "kw"]:
            raise FleetError(f"{path}: profile CSV must have columns step,kw")
        values = {int(row["step"]): float(row["kw"]) for row in reader}
    missing = [t for t in range(horizon) if t not in values]
    if missing:
        raise FleetError(f"{path}: profile missing steps {missing[:5]}")
    return tuple(values[t] for t in range(horizon))


def _build_series(entry: dict, which: str, horizon: int, dt_hours: float,
                  base_dir: pathlib.Path) -> tuple[float, ...]:
    kind = entry.get(f"{which}_profile", "none" if which == "pv" else "constant")
    seed = int(entry.get("profile_seed", 0))
    if f"{which}_series" in entry:
        series = tuple(float(v) for v in entry[f"{which}_series"])
        if len(series) != horizon:
            raise FleetError(
                f"building {entry.get('id')}: {which}_series length "
                f"{len(series)} != horizon {horizon}"
            )
        return series
    if f"{which}_csv" in entry:
        return _profile_from_csv(base_dir / entry[f"{which}_csv"], horizon)
    peak = float(entry.get(f"{which}_peak_kw", 0.0))
    noise = float(entry.get(f"{which}_noise_kw", 0.0)) if which == "base" else 0.0
    if kind == "diurnal":
        return diurnal_profile(horizon, dt_hours, peak, noise, seed)
    if kind == "evening_peak":
        return evening_peak_profile(horizon, dt_hours, peak, noise, seed)
    if kind == "clear_sky":
        return clear_sky_pv_profile(horizon, dt_hours, peak)
    if kind == "constant":
        return constant_profile(horizon, peak)
    if kind == "none":
        return constant_profile(horizon, 0.0)
    raise FleetError(f"unknown {which} profile kind {kind!r}")


def parse_fleet(text: str, horizon: int, dt_hours: float,
                base_dir: pathlib.Path | None = None
                ) -> tuple[dict[str, BuildingModel], BusMapping]:
    """Parse a fleet file; profiles are materialized for the given horizon."""
    base_dir = base_dir or pathlib.Path(".")
    doc = textdoc.loads(text)
    unknown = sorted(set(doc) - {"building", "mapping"})
    if unknown:
        raise FleetError(f"unknown keys in fleet file: {', '.join(unknown)}")

    fleet: dict[str, BuildingModel] = {}
    for entry in doc.get("building", []):
        bad = sorted(set(entry) - _BUILDING_KEYS)
        if bad:
            raise FleetError(f"unknown keys in building entry: {', '.join(bad)}")
        bid = str(entry["id"])
        if bid in fleet:
            raise FleetError(f"duplicate building id {bid}")
        fleet[bid] = BuildingModel(
            id=bid,
            base_load_kw=_build_series(entry, "base", horizon, dt_hours, base_dir),
            pv_kw=_build_series(entry, "pv", horizon, dt_hours, base_dir),
            battery_capacity_kwh=float(entry.get("battery_capacity_kwh", 0.0)),
            battery_max_kw=float(entry.get("battery_max_kw", 0.0)),
            round_trip_efficiency=float(entry.get("round_trip_efficiency", 0.9)),
            power_factor=float(entry.get("power_factor", 0.95)),
        )

    entries = []
    for entry in doc.get("mapping", []):
        bad = sorted(set(entry) - _MAPPING_KEYS)
        if bad:
            raise FleetError(f"unknown keys in mapping entry: {', '.join(bad)}")
        buses = entry.get("buses", [entry["bus"]] if "bus" in entry else None)
        if buses is None:
            raise FleetError("mapping entry needs 'bus' or 'buses'")
        building = str(entry["building"])
        if building not in fleet:
            raise FleetError(f"mapping references unknown building {building}")
        for bus in buses:
            entries.append(
                MappingEntry(
                    bus=int(bus),
                    building=building,
                    replication=int(entry.get("replication", 1)),
                )
            )
    return fleet, BusMapping(tuple(entries))


def load_fleet(path, horizon: int, dt_hours: float
               ) -> tuple[dict[str, BuildingModel], BusMapping]:
    p = pathlib.Path(path)
    with open(p, "r", encoding="utf-8") as fh:
        return parse_fleet(fh.read(), horizon, dt_hours, base_dir=p.parent)
