"""Electrical network model, admittance assembly, and AC power flow.

Conventions (documented once, used everywhere):
  * units at the model boundary are kV, ohm, MW, MVAr, MVA; all solver math
    is per-unit on (base_mva, nominal_kv)
  * loads are consumer-sign: positive p_mw/q_mvar consumes
  * shunts are consumer-sign constant admittances: q_mvar < 0 injects
    reactive power into the bus (capacitive)
  * line flow is reported as max(sending-end, receiving-end) apparent power
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

import numpy as np

from bgcosim._kernels import newton_solve


class NetworkError(ValueError):
    """Invalid network data."""


class DegenerateBranchError(NetworkError):
    """A line with zero series impedance."""


class IslandedNetworkError(NetworkError):
    """Buses unreachable from the slack over in-service lines."""

    def __init__(self, unreachable: Iterable[int]):
        self.unreachable = tuple(sorted(unreachable))
        super().__init__(f"islanded bus set: {list(self.unreachable)}")


SLACK = "slack"
LOAD = "load"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str = LOAD
    nominal_kv: float = 12.66
    v_min: float = 0.9
    v_max: float = 1.1

    def __post_init__(self):
        if self.kind not in (SLACK, LOAD):
            raise NetworkError(f"bus {self.id}: unknown kind {self.kind!r}")
        if self.nominal_kv <= 0:
            raise NetworkError(f"bus {self.id}: nominal_kv must be positive")
        if not 0 < self.v_min < self.v_max:
            raise NetworkError(f"bus {self.id}: need 0 < v_min < v_max")


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    r_ohm: float
    x_ohm: float
    rating_mva: float = 5.0
    in_service: bool = True

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise NetworkError(f"line {self.id}: from_bus equals to_bus")
        if self.x_ohm < 0:
            raise NetworkError(f"line {self.id}: x_ohm must be nonnegative")
        if self.rating_mva <= 0:
            raise NetworkError(f"line {self.id}: rating_mva must be positive")


@dataclass(frozen=True)
class Shunt:
    bus: int
    q_mvar: float  # consumer sign: negative injects (capacitive)


@dataclass(frozen=True)
class ExternalGrid:
    bus: int
    v_setpoint_pu: float = 1.0
    source_r_ohm: float = 0.0
    source_x_ohm: float = 0.0

    def __post_init__(self):
        if not 0.9 <= self.v_setpoint_pu <= 1.1:
            raise NetworkError("external grid v_setpoint_pu outside [0.9, 1.1]")


@dataclass(frozen=True)
class Load:
    """Nominal load attached to a bus (consumer sign)."""

    bus: int
    p_mw: float
    q_mvar: float


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    shunts: tuple[Shunt, ...] = ()
    external_grid: ExternalGrid | None = None
    base_mva: float = 10.0
    nominal_loads: tuple[Load, ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "shunts", tuple(self.shunts))
        object.__setattr__(self, "nominal_loads", tuple(self.nominal_loads))
        self.validate()

    def validate(self) -> None:
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise NetworkError("duplicate bus ids")
        id_set = set(ids)
        slacks = [b.id for b in self.buses if b.kind == SLACK]
        if len(slacks) != 1:
            raise NetworkError(f"expected exactly one slack bus, found {len(slacks)}")
        line_ids = [l.id for l in self.lines]
        if len(set(line_ids)) != len(line_ids):
            raise NetworkError("duplicate line ids")
        for line in self.lines:
            if line.from_bus not in id_set or line.to_bus not in id_set:
                raise NetworkError(f"line {line.id}: endpoint not in network")
        for shunt in self.shunts:
            if shunt.bus not in id_set:
                raise NetworkError(f"shunt at unknown bus {shunt.bus}")
        for load in self.nominal_loads:
            if load.bus not in id_set:
                raise NetworkError(f"load at unknown bus {load.bus}")
        if self.external_grid is not None and self.external_grid.bus != slacks[0]:
            raise NetworkError("external grid must sit at the slack bus")
        if self.base_mva <= 0:
            raise NetworkError("base_mva must be positive")

    @property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    @property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def slack_bus(self) -> Bus:
        return next(b for b in self.buses if b.kind == SLACK)

    @property
    def slack_voltage_pu(self) -> float:
        if self.external_grid is not None:
            return self.external_grid.v_setpoint_pu
        return 1.0

    def bus(self, bus_id: int) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise NetworkError(f"unknown bus {bus_id}")

    def line(self, line_id: int) -> Line:
        for l in self.lines:
            if l.id == line_id:
                return l
        raise NetworkError(f"unknown line {line_id}")

    def in_service_lines(self) -> tuple[Line, ...]:
        return tuple(l for l in self.lines if l.in_service)

    def with_line_in_service(self, line_id: int, in_service: bool) -> "PowerNetwork":
        """Value-semantic copy with one line's service flag changed."""
        found = False
        lines = []
        for l in self.lines:
            if l.id == line_id:
                lines.append(replace(l, in_service=in_service))
                found = True
            else:
                lines.append(l)
        if not found:
            raise NetworkError(f"unknown line {line_id}")
        return replace(self, lines=tuple(lines))

    def with_shunt(self, shunt: Shunt) -> "PowerNetwork":
        return replace(self, shunts=self.shunts + (shunt,))

    def nominal_load_map(self) -> dict[int, tuple[float, float]]:
        out: dict[int, tuple[float, float]] = {}
        for load in self.nominal_loads:
            p, q = out.get(load.bus, (0.0, 0.0))
            out[load.bus] = (p + load.p_mw, q + load.q_mvar)
        return out


def scale_loads(
    loads: Mapping[int, tuple[float, float]], factor: float
) -> dict[int, tuple[float, float]]:
    return {bus: (p * factor, q * factor) for bus, (p, q) in loads.items()}


def reachable_buses(net: PowerNetwork, from_bus: int | None = None) -> set[int]:
    """Bus ids reachable from the slack (or ``from_bus``) over in-service lines."""
    adjacency: dict[int, list[int]] = {b.id: [] for b in net.buses}
    for line in net.in_service_lines():
        adjacency[line.from_bus].append(line.to_bus)
        adjacency[line.to_bus].append(line.from_bus)
    start = net.slack_bus.id if from_bus is None else from_bus
    seen = {start}
    stack = [start]
    while stack:
        node = stack.pop()
        for nxt in adjacency[node]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def _line_admittance_pu(net: PowerNetwork, line: Line, kv: float) -> complex:
    z_base = kv * kv / net.base_mva
    z = complex(line.r_ohm, line.x_ohm) / z_base
    if z == 0:
        raise DegenerateBranchError(
            f"degenerate branch: line {line.id} has zero impedance"
        )
    return 1.0 / z


def assemble_ybus(net: PowerNetwork, include_source: bool = False) -> np.ndarray:
    """Dense per-unit bus admittance matrix, ordered like ``net.buses``.

    ``include_source`` adds the external-grid source admittance at the slack
    diagonal (the augmented matrix used for Thevenin reduction).
    """
    index = net.bus_index
    kv_of = {b.id: b.nominal_kv for b in net.buses}
    n = len(net.buses)
    Y = np.zeros((n, n), dtype=complex)
    for line in net.in_service_lines():
        if kv_of[line.from_bus] != kv_of[line.to_bus]:
            raise NetworkError(
                f"line {line.id} connects buses of different nominal_kv"
            )
        y = _line_admittance_pu(net, line, kv_of[line.from_bus])
        i = index[line.from_bus]
        j = index[line.to_bus]
        Y[i, i] += y
        Y[j, j] += y
        Y[i, j] -= y
        Y[j, i] -= y
    for shunt in net.shunts:
        # consumer-sign constant admittance: S = jq at 1 pu -> y = -j q_pu
        q_pu = shunt.q_mvar / net.base_mva
        Y[index[shunt.bus], index[shunt.bus]] += complex(0.0, -q_pu)
    if include_source:
        if net.external_grid is None:
            raise NetworkError("network has no external grid")
        grid = net.external_grid
        kv = kv_of[grid.bus]
        z_base = kv * kv / net.base_mva
        z_src = complex(grid.source_r_ohm, grid.source_x_ohm) / z_base
        if z_src == 0:
            raise NetworkError("external grid source impedance is zero")
        Y[index[grid.bus], index[grid.bus]] += 1.0 / z_src
    return Y


@dataclass(frozen=True)
class PowerFlowOptions:
    tolerance: float = 1e-8
    max_iterations: int = 50


@dataclass(frozen=True, eq=False)
class PowerFlowResult:
    bus_ids: tuple[int, ...]
    vm: np.ndarray  # per-unit magnitudes, aligned with bus_ids
    va: np.ndarray  # angles in radians
    line_flow_mva: dict[int, float]  # max(sending, receiving) apparent power
    converged: bool
    iterations: int
    max_mismatch: float

    def __post_init__(self):
        self.vm.setflags(write=False)
        self.va.setflags(write=False)

    def voltage(self, bus_id: int) -> complex:
        i = self.bus_ids.index(bus_id)
        return cmath.rect(float(self.vm[i]), float(self.va[i]))

    def voltage_magnitude(self, bus_id: int) -> float:
        return float(self.vm[self.bus_ids.index(bus_id)])

    def voltage_magnitudes(self) -> dict[int, float]:
        return {bus: float(v) for bus, v in zip(self.bus_ids, self.vm)}

    def line_flow(self, line_id: int) -> float:
        return self.line_flow_mva[line_id]


def _injections_pu(
    net: PowerNetwork, loads: Mapping[int, tuple[float, float]]
) -> tuple[np.ndarray, np.ndarray]:
    index = net.bus_index
    n = len(net.buses)
    p = np.zeros(n)
    q = np.zeros(n)
    for bus, (p_mw, q_mvar) in loads.items():
        if bus not in index:
            raise NetworkError(f"load at unknown bus {bus}")
        p[index[bus]] -= p_mw / net.base_mva
        q[index[bus]] -= q_mvar / net.base_mva
    return p, q


def solve_power_flow(
    net: PowerNetwork,
    loads: Mapping[int, tuple[float, float]] | None = None,
    options: PowerFlowOptions | None = None,
) -> PowerFlowResult:
    """Newton-Raphson AC power flow.

    ``loads`` maps bus id to (p_mw, q_mvar), consumer sign; ``None`` uses the
    network's nominal loads. Divergence is reported via ``converged=False``
    (contingency sweeps consume diverged states); a disconnected network
    raises IslandedNetworkError.
    """
    if loads is None:
        loads = net.nominal_load_map()
    if options is None:
        options = PowerFlowOptions()

    unreachable = set(net.bus_ids) - reachable_buses(net)
    if unreachable:
        raise IslandedNetworkError(unreachable)

    Y = assemble_ybus(net)
    p_spec, q_spec = _injections_pu(net, loads)
    slack_idx = net.bus_index[net.slack_bus.id]

    vm, va, converged, iterations, max_mis = newton_solve(
        np.ascontiguousarray(Y.real),
        np.ascontiguousarray(Y.imag),
        p_spec,
        q_spec,
        slack_idx,
        net.slack_voltage_pu,
        options.tolerance,
        options.max_iterations,
    )

    index = net.bus_index
    kv_of = {b.id: b.nominal_kv for b in net.buses}
    V = vm * np.exp(1j * va)
    flows: dict[int, float] = {}
    for line in net.lines:
        if not line.in_service:
            flows[line.id] = 0.0
            continue
        y = _line_admittance_pu(net, line, kv_of[line.from_bus])
        vf = V[index[line.from_bus]]
        vt = V[index[line.to_bus]]
        s_from = vf * np.conj((vf - vt) * y)
        s_to = vt * np.conj((vt - vf) * y)
        flows[line.id] = float(max(abs(s_from), abs(s_to)) * net.base_mva)

    return PowerFlowResult(
        bus_ids=net.bus_ids,
        vm=np.asarray(vm, dtype=float),
        va=np.asarray(va, dtype=float),
        line_flow_mva=flows,
        converged=bool(converged),
        iterations=int(iterations),
        max_mismatch=float(max_mis),
    )


def build_ieee33(include_tie_lines: bool = False) -> PowerNetwork:
    """The standard 33-bus, 32-line radial test feeder (12.66 kV).

    The dataset ships as an embedded network file; nominal loads total
    3.715 MW / 2.3 MVAr. With ``include_tie_lines`` the five normally-open
    tie switches are kept as out-of-service lines (close one with
    ``with_line_in_service`` for meshed studies).
    """
    from bgcosim import netfile

    net = netfile.load_embedded_network("ieee33")
    if not include_tie_lines:
        net = replace(net, lines=tuple(l for l in net.lines if l.in_service))
    return net
