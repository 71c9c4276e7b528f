"""Grid-side security metrics: limit screening, N-1 resilience, fault currents.

All operations are pure; n_minus_1 solves each contingency on an independent
network copy, so the per-line outcomes are the same under any evaluation
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from bgcosim.network import (
    PowerFlowOptions,
    PowerFlowResult,
    PowerNetwork,
    assemble_ybus,
    reachable_buses,
    solve_power_flow,
)


class AnalysisError(ValueError):
    """Grid-analysis precondition failure."""


@dataclass(frozen=True)
class SecurityLimits:
    v_min: float = 0.95
    v_max: float = 1.05
    loading_threshold: float = 1.0  # fraction of rating_mva treated as the limit

    def __post_init__(self):
        if not 0 < self.v_min < self.v_max:
            raise AnalysisError("need 0 < v_min < v_max")
        if not 0 < self.loading_threshold <= 1.5:
            raise AnalysisError("loading_threshold must be in (0, 1.5]")

    @classmethod
    def from_voltage_tolerance(
        cls, tolerance_pu: float, loading_threshold: float = 1.0
    ) -> "SecurityLimits":
        """Bounds [1 - tol, 1 + tol], e.g. tolerance 0.05 -> [0.95, 1.05]."""
        return cls(1.0 - tolerance_pu, 1.0 + tolerance_pu, loading_threshold)


@dataclass(frozen=True)
class VoltageViolation:
    bus: int
    v_pu: float
    bound: float  # the violated bound (v_min or v_max)


@dataclass(frozen=True)
class LoadingViolation:
    line: int
    s_mva: float
    limit_mva: float  # loading_threshold x rating


@dataclass(frozen=True)
class ScreeningReport:
    voltage_violations: tuple[VoltageViolation, ...]
    loading_violations: tuple[LoadingViolation, ...]

    @property
    def admissible(self) -> bool:
        return not self.voltage_violations and not self.loading_violations


SAFE = "safe"
UNSAFE = "unsafe"

ISLANDING = "islanding"
DIVERGENCE = "divergence"
VOLTAGE_VIOLATION = "voltage_violation"
LOADING_VIOLATION = "loading_violation"
NONE = "none"


@dataclass(frozen=True)
class ContingencyOutcome:
    outage_line: int
    classification: str  # safe | unsafe
    cause: str  # islanding | divergence | voltage_violation | loading_violation | none

    def __post_init__(self):
        if (self.classification == SAFE) != (self.cause == NONE):
            raise AnalysisError("classification=safe iff cause=none")


@dataclass(frozen=True)
class TheveninEquivalent:
    bus: int
    r_th_ohm: float
    x_th_ohm: float

    @property
    def z_th_ohm(self) -> complex:
        return complex(self.r_th_ohm, self.x_th_ohm)


def screen(
    result: PowerFlowResult, net: PowerNetwork, limits: SecurityLimits
) -> ScreeningReport:
    """Check bus voltages against [v_min, v_max] and line flows against
    loading_threshold x rating. Pure predicate over a converged result."""
    if not result.converged:
        raise AnalysisError("cannot screen diverged state")
    v_viol = []
    for bus_id in result.bus_ids:
        v = result.voltage_magnitude(bus_id)
        if v < limits.v_min:
            v_viol.append(VoltageViolation(bus_id, v, limits.v_min))
        elif v > limits.v_max:
            v_viol.append(VoltageViolation(bus_id, v, limits.v_max))
    l_viol = []
    for line in net.in_service_lines():
        limit = limits.loading_threshold * line.rating_mva
        s = result.line_flow_mva.get(line.id, 0.0)
        if s > limit:
            l_viol.append(LoadingViolation(line.id, s, limit))
    return ScreeningReport(tuple(v_viol), tuple(l_viol))


def n_minus_1(
    net: PowerNetwork,
    loads: Mapping[int, tuple[float, float]] | None = None,
    limits: SecurityLimits | None = None,
    options: PowerFlowOptions | None = None,
) -> tuple[int, tuple[ContingencyOutcome, ...]]:
    """Single-line outage sweep.

    For every in-service line: islanding (reachability from the slack) is
    checked before solving; otherwise the contingency power flow runs and the
    post-contingency state is screened. Returns (number of unsafe outcomes,
    per-line outcomes ordered by line id). When a contingency violates both
    voltage and loading limits the cause is reported as voltage_violation.
    """
    if limits is None:
        limits = SecurityLimits()
    if loads is None:
        loads = net.nominal_load_map()
    base = solve_power_flow(net, loads, options)
    if not base.converged:
        raise AnalysisError("base case infeasible")

    outcomes = []
    all_ids = set(net.bus_ids)
    for line in sorted(net.in_service_lines(), key=lambda l: l.id):
        contingency = net.with_line_in_service(line.id, False)
        if set(reachable_buses(contingency)) != all_ids:
            outcomes.append(ContingencyOutcome(line.id, UNSAFE, ISLANDING))
            continue
        result = solve_power_flow(contingency, loads, options)
        if not result.converged:
            outcomes.append(ContingencyOutcome(line.id, UNSAFE, DIVERGENCE))
            continue
        report = screen(result, contingency, limits)
        if report.voltage_violations:
            outcomes.append(ContingencyOutcome(line.id, UNSAFE, VOLTAGE_VIOLATION))
        elif report.loading_violations:
            outcomes.append(ContingencyOutcome(line.id, UNSAFE, LOADING_VIOLATION))
        else:
            outcomes.append(ContingencyOutcome(line.id, SAFE, NONE))
    unsafe = sum(1 for o in outcomes if o.classification == UNSAFE)
    return unsafe, tuple(outcomes)


def thevenin_at(net: PowerNetwork, bus: int) -> TheveninEquivalent:
    """Driving-point impedance of the passive network seen from ``bus``.

    Lines, shunts, and the external-grid source impedance at the slack form
    the augmented admittance matrix; the impedance is its inverse's diagonal
    entry, converted to ohms on the bus's voltage base.
    """
    if net.external_grid is None or (
        net.external_grid.source_r_ohm == 0 and net.external_grid.source_x_ohm == 0
    ):
        raise AnalysisError("external grid source impedance required")
    index = net.bus_index
    if bus not in index:
        raise AnalysisError(f"unknown bus {bus}")
    Y = assemble_ybus(net, include_source=True)
    try:
        Z = np.linalg.inv(Y)
    except np.linalg.LinAlgError:
        raise AnalysisError("floating network") from None
    if not np.all(np.isfinite(Z)):
        raise AnalysisError("floating network")
    kv = net.bus(bus).nominal_kv
    z_base = kv * kv / net.base_mva
    z = complex(Z[index[bus], index[bus]]) * z_base
    return TheveninEquivalent(bus=bus, r_th_ohm=z.real, x_th_ohm=z.imag)


def short_circuit_current(thev: TheveninEquivalent, u_nom_kv: float) -> float:
    """Initial symmetrical short-circuit current magnitude in kA:
    |I| = U_nom / (sqrt(3) |R_th + jX_th|)."""
    z_mag = abs(thev.z_th_ohm)
    if z_mag == 0:
        raise AnalysisError("bolted fault at source")
    return u_nom_kv / (math.sqrt(3.0) * z_mag)


def screening_to_csv(report: ScreeningReport, result: PowerFlowResult,
                     net: PowerNetwork, limits: SecurityLimits) -> str:
    """CSV with columns (entity_id, metric_value, limit, violated).

    One row per bus and per in-service line. The limit column carries the
    violated bound for violations, else the nearer bound (buses) or the
    loading limit (lines).
    """
    violated_bus = {v.bus: v for v in report.voltage_violations}
    violated_line = {v.line: v for v in report.loading_violations}
    rows = ["entity_id,metric_value,limit,violated"]
    for bus_id in result.bus_ids:
        v = result.voltage_magnitude(bus_id)
        if bus_id in violated_bus:
            bound = violated_bus[bus_id].bound
            flag = "true"
        else:
            bound = limits.v_min if abs(v - limits.v_min) <= abs(v - limits.v_max) else limits.v_max
            flag = "false"
        rows.append(f"bus_{bus_id},{v!r},{bound!r},{flag}")
    for line in net.in_service_lines():
        s = result.line_flow_mva.get(line.id, 0.0)
        limit = limits.loading_threshold * line.rating_mva
        flag = "true" if line.id in violated_line else "false"
        rows.append(f"line_{line.id},{s!r},{limit!r},{flag}")
    return "\n".join(rows) + "\n"


def contingencies_to_csv(outcomes: tuple[ContingencyOutcome, ...]) -> str:
    """CSV with columns (line_id, classification, cause)."""
    rows = ["line_id,classification,cause"]
    for o in outcomes:
        rows.append(f"{o.outage_line},{o.classification},{o.cause}")
    return "\n".join(rows) + "\n"
