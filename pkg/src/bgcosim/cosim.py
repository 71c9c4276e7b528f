"""Building-grid co-simulation loop.

Each step: building actions are applied, the resulting net loads are mapped
onto buses, an AC power flow runs, and the voltage-deviation reward is
computed from the fresh voltages. The observation handed to the next
decision carries exactly those voltages (one-step feedback delay; step 0
observes v_ref everywhere).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from bgcosim.analysis import SecurityLimits
from bgcosim.buildings import (
    BuildingModel,
    BuildingState,
    BusMapping,
    aggregate_bus_loads,
    expand_instances,
    step_building,
)
from bgcosim.network import PowerFlowOptions, PowerNetwork, solve_power_flow


class CosimError(ValueError):
    """Co-simulation configuration or stepping failure."""


NET_LOAD_BIN_EDGES = (-3.0, -1.0, 1.0, 3.0, 5.0, 7.0, 9.0, 11.0, 13.0)  # kW
VOLTAGE_BIN_WIDTH = 0.01  # p.u.

OVER_VOLTAGE = "over_voltage"
UNDER_VOLTAGE = "under_voltage"
NOMINAL = "nominal"
REGIMES = (OVER_VOLTAGE, UNDER_VOLTAGE, NOMINAL)


@dataclass(frozen=True)
class SimulationConfig:
    horizon_steps: int
    dt_hours: float = 1.0
    v_ref: float = 1.0
    alpha: float | Mapping[int, float] = 10.0  # 0.1 p.u. deviation zeroes a term
    limits: SecurityLimits = field(default_factory=SecurityLimits)
    seed: int = 0
    divergence_reward: float = 0.0  # reward floor on solver divergence
    pf_options: PowerFlowOptions = field(default_factory=PowerFlowOptions)

    def __post_init__(self):
        if self.horizon_steps <= 0:
            raise CosimError("horizon_steps must be positive")
        if self.v_ref <= 0:
            raise CosimError("v_ref must be positive")
        if isinstance(self.alpha, Mapping):
            if any(a <= 0 for a in self.alpha.values()):
                raise CosimError("alpha values must be positive")
        elif self.alpha <= 0:
            raise CosimError("alpha must be positive")

    def alpha_for(self, bus: int) -> float:
        if isinstance(self.alpha, Mapping):
            try:
                return float(self.alpha[bus])
            except KeyError:
                raise CosimError(f"no alpha for bus {bus}") from None
        return float(self.alpha)


@dataclass(frozen=True)
class BuildingObs:
    building: str
    bus: int
    soc_fraction: float
    base_load_kw: float
    pv_kw: float


@dataclass(frozen=True)
class Observation:
    step: int
    hour_of_day: float
    v_ref: float
    buildings: tuple[BuildingObs, ...]
    bus_voltages: dict[int, float]  # magnitudes from the previous solve


@dataclass(frozen=True)
class StepRecord:
    step: int
    bus_voltages: dict[int, float]
    line_flow_mva: dict[int, float]
    net_loads_kw: dict[str, float]
    actions: dict[str, float]
    reward: float
    diverged: bool


def reward(
    voltages: Mapping[int, float],
    config: SimulationConfig,
    bus_ids: tuple[int, ...] | None = None,
) -> float:
    """Mean over buses of v_ref - (alpha_i (V_i - v_ref))^2."""
    if bus_ids is None:
        bus_ids = tuple(sorted(voltages))
    if not bus_ids:
        raise CosimError("no buses to reward over")
    total = 0.0
    for bus in bus_ids:
        if bus not in voltages:
            raise CosimError(f"missing voltage for bus {bus}")
        dev = config.alpha_for(bus) * (voltages[bus] - config.v_ref)
        total += config.v_ref - dev * dev
    return total / len(bus_ids)


def classify_step_voltage_regime(record: StepRecord, config: SimulationConfig) -> str:
    """over_voltage if any bus exceeds v_max; else under_voltage if any bus
    is below v_min; else nominal. Over-voltage takes precedence."""
    limits = config.limits
    values = record.bus_voltages.values()
    if any(v > limits.v_max for v in values):
        return OVER_VOLTAGE
    if any(v < limits.v_min for v in values):
        return UNDER_VOLTAGE
    return NOMINAL


class CoSimEnv:
    """Stateful episode environment; pure inputs make runs reproducible.

    A model mapped to several buses is expanded into one instance per bus
    (see buildings.expand_instances), so every instance carries its own
    battery state and observes its own bus.
    """

    def __init__(
        self,
        net: PowerNetwork,
        fleet: Mapping[str, BuildingModel],
        mapping: BusMapping,
        config: SimulationConfig,
    ):
        for entry in mapping.entries:
            if entry.bus not in net.bus_index:
                raise CosimError(f"mapping references unknown bus {entry.bus}")
            if entry.building not in fleet:
                raise CosimError(f"mapping references unknown building {entry.building}")
        try:
            instances, instance_mapping = expand_instances(fleet, mapping)
        except Exception as exc:
            raise CosimError(str(exc)) from exc
        for name, model in instances.items():
            if model.horizon != config.horizon_steps:
                raise CosimError(
                    f"building {name}: profile horizon {model.horizon} "
                    f"!= config horizon {config.horizon_steps}"
                )
        self.net = net
        self.fleet = dict(sorted(instances.items()))
        self.mapping = instance_mapping
        self.config = config
        self._bus_of = {e.building: e.bus for e in instance_mapping.entries}
        self.reset()

    def reset(self) -> Observation:
        # batteries start half full so step-0 decisions can go either way
        self._states = {
            bid: BuildingState(soc_kwh=m.battery_capacity_kwh / 2.0)
            for bid, m in self.fleet.items()
        }
        self._step = 0
        self._last_voltages = {b: self.config.v_ref for b in self.net.bus_ids}
        return self._observe()

    @property
    def finished(self) -> bool:
        return self._step >= self.config.horizon_steps

    def _observe(self) -> Observation:
        t = self._step
        obs_buildings = []
        for bid, model in self.fleet.items():
            cap = model.battery_capacity_kwh
            soc_frac = self._states[bid].soc_kwh / cap if cap > 0 else 0.0
            idx = min(t, model.horizon - 1)
            obs_buildings.append(
                BuildingObs(
                    building=bid,
                    bus=self._bus_of.get(bid, self.net.slack_bus.id),
                    soc_fraction=soc_frac,
                    base_load_kw=model.base_load_kw[idx],
                    pv_kw=model.pv_kw[idx],
                )
            )
        return Observation(
            step=t,
            hour_of_day=(t * self.config.dt_hours) % 24.0,
            v_ref=self.config.v_ref,
            buildings=tuple(obs_buildings),
            bus_voltages=dict(self._last_voltages),
        )

    def step(self, actions: Mapping[str, float]) -> tuple[Observation, float, StepRecord]:
        if self.finished:
            raise CosimError("episode finished")
        t = self._step
        cfg = self.config

        net_loads: dict[str, float] = {}
        for bid, model in self.fleet.items():
            state, net_kw = step_building(
                model, self._states[bid], actions.get(bid, 0.0), t, cfg.dt_hours
            )
            self._states[bid] = state
            net_loads[bid] = net_kw

        bus_loads = aggregate_bus_loads(self.fleet, net_loads, self.mapping)
        result = solve_power_flow(self.net, bus_loads, cfg.pf_options)
        voltages = result.voltage_magnitudes()

        if result.converged:
            r = reward(voltages, cfg, self.net.bus_ids)
        else:
            r = cfg.divergence_reward

        record = StepRecord(
            step=t,
            bus_voltages=voltages,
            line_flow_mva=dict(result.line_flow_mva),
            net_loads_kw=net_loads,
            actions={bid: float(actions.get(bid, 0.0)) for bid in self.fleet},
            reward=r,
            diverged=not result.converged,
        )
        self._last_voltages = voltages
        self._step += 1
        return self._observe(), r, record


@dataclass(frozen=True)
class Histogram:
    edges: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def mass(self) -> tuple[float, ...]:
        """Fractions per bin; all-zero when the histogram is empty."""
        total = self.total
        if total == 0:
            return tuple(0.0 for _ in self.counts)
        return tuple(c / total for c in self.counts)

    def bin_mass(self, low: float, high: float) -> float:
        for i, (a, b) in enumerate(zip(self.edges, self.edges[1:])):
            if a == low and b == high:
                return self.mass()[i]
        raise CosimError(f"no bin [{low}, {high})")


def _net_load_histogram(samples) -> Histogram:
    edges = NET_LOAD_BIN_EDGES
    counts = [0] * (len(edges) - 1)
    for value in samples:
        # clamp into the edge bins so every sample is counted
        if value < edges[0]:
            counts[0] += 1
            continue
        if value >= edges[-1]:
            counts[-1] += 1
            continue
        for i in range(len(counts)):
            if edges[i] <= value < edges[i + 1]:
                counts[i] += 1
                break
    return Histogram(edges=edges, counts=tuple(counts))


def _voltage_histogram(samples) -> Histogram:
    lo = math.floor(min(samples) / VOLTAGE_BIN_WIDTH) * VOLTAGE_BIN_WIDTH
    hi = math.ceil(max(samples) / VOLTAGE_BIN_WIDTH) * VOLTAGE_BIN_WIDTH
    if hi <= lo:
        hi = lo + VOLTAGE_BIN_WIDTH
    n = max(1, round((hi - lo) / VOLTAGE_BIN_WIDTH))
    edges = tuple(lo + i * VOLTAGE_BIN_WIDTH for i in range(n + 1))
    counts = [0] * n
    for v in samples:
        i = min(int((v - lo) / VOLTAGE_BIN_WIDTH), n - 1)
        counts[i] += 1
    return Histogram(edges=edges, counts=tuple(counts))


@dataclass(frozen=True)
class KpiSummary:
    mean_voltage: float
    min_voltage: float
    max_voltage: float
    voltage_std: float
    cumulative_reward: float
    over_voltage_steps: int
    under_voltage_steps: int
    nominal_steps: int
    diverged_steps: int
    voltage_violation_samples: int  # bus-step samples outside limits
    mean_voltage_series: tuple[float, ...]
    voltage_histogram: Histogram
    net_load_histogram: Histogram
    net_load_by_regime: dict[str, Histogram]


@dataclass(frozen=True)
class EpisodeTrace:
    records: tuple[StepRecord, ...]
    config: SimulationConfig
    kpis: KpiSummary


def _compute_kpis(records, config: SimulationConfig) -> KpiSummary:
    v_samples = [v for rec in records for v in rec.bus_voltages.values()]
    n = len(v_samples)
    mean_v = sum(v_samples) / n
    var = sum((v - mean_v) ** 2 for v in v_samples) / n
    limits = config.limits

    regimes = [classify_step_voltage_regime(rec, config) for rec in records]
    load_samples = {regime: [] for regime in REGIMES}
    all_loads = []
    for rec, regime in zip(records, regimes):
        for value in rec.net_loads_kw.values():
            load_samples[regime].append(value)
            all_loads.append(value)

    return KpiSummary(
        mean_voltage=mean_v,
        min_voltage=min(v_samples),
        max_voltage=max(v_samples),
        voltage_std=math.sqrt(var),
        cumulative_reward=sum(rec.reward for rec in records),
        over_voltage_steps=regimes.count(OVER_VOLTAGE),
        under_voltage_steps=regimes.count(UNDER_VOLTAGE),
        nominal_steps=regimes.count(NOMINAL),
        diverged_steps=sum(1 for rec in records if rec.diverged),
        voltage_violation_samples=sum(
            1 for v in v_samples if not limits.v_min <= v <= limits.v_max
        ),
        mean_voltage_series=tuple(
            sum(rec.bus_voltages.values()) / len(rec.bus_voltages) for rec in records
        ),
        voltage_histogram=_voltage_histogram(v_samples),
        net_load_histogram=_net_load_histogram(all_loads),
        net_load_by_regime={
            regime: _net_load_histogram(load_samples[regime]) for regime in REGIMES
        },
    )


def run_episode(env: CoSimEnv, policy) -> EpisodeTrace:
    """Roll a full episode under ``policy`` (an object with act(obs))."""
    obs = env.reset()
    records = []
    while not env.finished:
        actions = policy.act(obs)
        obs, _, record = env.step(actions)
        records.append(record)
    return EpisodeTrace(
        records=tuple(records),
        config=env.config,
        kpis=_compute_kpis(records, env.config),
    )


# ---------------------------------------------------------------------------
# CSV serialization

def write_trace_csvs(trace: EpisodeTrace, net: PowerNetwork, out_dir) -> list[str]:
    """Emit voltages.csv (step x bus), line_loading.csv (step x line, percent
    of rating), net_load.csv (step x building), kpi_summary.csv (key,value).
    Returns the file names written."""
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    bus_ids = net.bus_ids
    rows = ["step," + ",".join(f"bus_{b}" for b in bus_ids)]
    for rec in trace.records:
        rows.append(
            f"{rec.step}," + ",".join(repr(rec.bus_voltages[b]) for b in bus_ids)
        )
    (out / "voltages.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    written.append("voltages.csv")

    lines = sorted(net.in_service_lines(), key=lambda l: l.id)
    rating = {l.id: l.rating_mva for l in lines}
    rows = ["step," + ",".join(f"line_{l.id}" for l in lines)]
    for rec in trace.records:
        rows.append(
            f"{rec.step},"
            + ",".join(
                repr(100.0 * rec.line_flow_mva.get(l.id, 0.0) / rating[l.id])
                for l in lines
            )
        )
    (out / "line_loading.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    written.append("line_loading.csv")

    buildings = sorted(trace.records[0].net_loads_kw) if trace.records else []
    rows = ["step," + ",".join(buildings)]
    for rec in trace.records:
        rows.append(
            f"{rec.step}," + ",".join(repr(rec.net_loads_kw[b]) for b in buildings)
        )
    (out / "net_load.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    written.append("net_load.csv")

    kpi = trace.kpis
    rows = ["key,value"]
    for key in (
        "mean_voltage",
        "min_voltage",
        "max_voltage",
        "voltage_std",
        "cumulative_reward",
        "over_voltage_steps",
        "under_voltage_steps",
        "nominal_steps",
        "diverged_steps",
        "voltage_violation_samples",
    ):
        rows.append(f"{key},{getattr(kpi, key)!r}")
    (out / "kpi_summary.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    written.append("kpi_summary.csv")
    return written
