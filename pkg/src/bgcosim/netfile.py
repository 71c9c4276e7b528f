"""Reading and writing the plain-text network file format.

A network file is a structured text document (see textdoc) with a top-level
header plus [[bus]], [[line]], [[shunt]], [[load]] entries and an
[external_grid] table. Field names match the domain types one-to-one; units
are kV, ohm, MW, MVAr, MVA. Sign conventions: loads and shunts are
consumer-sign, so a shunt with q_mvar = -1.2 injects 1.2 MVAr (capacitive).
"""

from __future__ import annotations

from importlib import resources

from bgcosim import textdoc
from bgcosim.network import (
    Bus,
    ExternalGrid,
    Line,
    Load,
    NetworkError,
    PowerNetwork,
    Shunt,
)

FORMAT = "bgcosim-network/1"

_BUS_KEYS = {"id", "kind", "nominal_kv", "v_min", "v_max"}
_LINE_KEYS = {"id", "from_bus", "to_bus", "r_ohm", "x_ohm", "rating_mva", "in_service"}
_SHUNT_KEYS = {"bus", "q_mvar"}
_LOAD_KEYS = {"bus", "p_mw", "q_mvar"}
_GRID_KEYS = {"bus", "v_setpoint_pu", "source_r_ohm", "source_x_ohm"}
_TOP_KEYS = {"format", "name", "base_mva", "bus", "line", "shunt", "load", "external_grid"}


def _check_keys(entry: dict, allowed: set[str], what: str) -> None:
    unknown = sorted(set(entry) - allowed)
    if unknown:
        raise NetworkError(f"unknown keys in {what}: {', '.join(unknown)}")


def parse_network(text: str) -> PowerNetwork:
    doc = textdoc.loads(text)
    _check_keys(doc, _TOP_KEYS, "network file")
    if doc.get("format") != FORMAT:
        raise NetworkError(f"unsupported network file format: {doc.get('format')!r}")

    buses = []
    for entry in doc.get("bus", []):
        _check_keys(entry, _BUS_KEYS, f"bus entry {entry.get('id')}")
        buses.append(
            Bus(
                id=int(entry["id"]),
                kind=entry.get("kind", "load"),
                nominal_kv=float(entry["nominal_kv"]),
                v_min=float(entry.get("v_min", 0.9)),
                v_max=float(entry.get("v_max", 1.1)),
            )
        )

    lines = []
    for entry in doc.get("line", []):
        _check_keys(entry, _LINE_KEYS, f"line entry {entry.get('id')}")
        lines.append(
            Line(
                id=int(entry["id"]),
                from_bus=int(entry["from_bus"]),
                to_bus=int(entry["to_bus"]),
                r_ohm=float(entry["r_ohm"]),
                x_ohm=float(entry["x_ohm"]),
                rating_mva=float(entry.get("rating_mva", 5.0)),
                in_service=bool(entry.get("in_service", True)),
            )
        )

    shunts = []
    for entry in doc.get("shunt", []):
        _check_keys(entry, _SHUNT_KEYS, "shunt entry")
        shunts.append(Shunt(bus=int(entry["bus"]), q_mvar=float(entry["q_mvar"])))

    loads = []
    for entry in doc.get("load", []):
        _check_keys(entry, _LOAD_KEYS, "load entry")
        loads.append(
            Load(
                bus=int(entry["bus"]),
                p_mw=float(entry["p_mw"]),
                q_mvar=float(entry["q_mvar"]),
            )
        )

    grid = None
    if "external_grid" in doc:
        entry = doc["external_grid"]
        _check_keys(entry, _GRID_KEYS, "external_grid")
        grid = ExternalGrid(
            bus=int(entry["bus"]),
            v_setpoint_pu=float(entry.get("v_setpoint_pu", 1.0)),
            source_r_ohm=float(entry.get("source_r_ohm", 0.0)),
            source_x_ohm=float(entry.get("source_x_ohm", 0.0)),
        )

    return PowerNetwork(
        buses=tuple(buses),
        lines=tuple(lines),
        shunts=tuple(shunts),
        external_grid=grid,
        base_mva=float(doc.get("base_mva", 10.0)),
        nominal_loads=tuple(loads),
        name=str(doc.get("name", "")),
    )


def format_network(net: PowerNetwork) -> str:
    doc: dict = {"format": FORMAT}
    if net.name:
        doc["name"] = net.name
    doc["base_mva"] = float(net.base_mva)
    if net.external_grid is not None:
        g = net.external_grid
        doc["external_grid"] = {
            "bus": g.bus,
            "v_setpoint_pu": float(g.v_setpoint_pu),
            "source_r_ohm": float(g.source_r_ohm),
            "source_x_ohm": float(g.source_x_ohm),
        }
    doc["bus"] = [
        {
            "id": b.id,
            "kind": b.kind,
            "nominal_kv": float(b.nominal_kv),
            "v_min": float(b.v_min),
            "v_max": float(b.v_max),
        }
        for b in net.buses
    ]
    doc["line"] = [
        {
            "id": l.id,
            "from_bus": l.from_bus,
            "to_bus": l.to_bus,
            "r_ohm": float(l.r_ohm),
            "x_ohm": float(l.x_ohm),
            "rating_mva": float(l.rating_mva),
            "in_service": l.in_service,
        }
        for l in net.lines
    ]
    if net.shunts:
        doc["shunt"] = [{"bus": s.bus, "q_mvar": float(s.q_mvar)} for s in net.shunts]
    if net.nominal_loads:
        doc["load"] = [
            {"bus": l.bus, "p_mw": float(l.p_mw), "q_mvar": float(l.q_mvar)}
            for l in net.nominal_loads
        ]
    return textdoc.dumps(doc)


def load_network(path) -> PowerNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_network(fh.read())


def save_network(net: PowerNetwork, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_network(net))


def embedded_network_text(name: str) -> str:
    resource = resources.files("bgcosim") / "data" / f"{name}.grid"
    try:
        return resource.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise NetworkError(f"no embedded network named {name!r}") from None


def load_embedded_network(name: str) -> PowerNetwork:
    return parse_network(embedded_network_text(name))
