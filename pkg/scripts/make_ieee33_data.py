"""Regenerate src/bgcosim/data/ieee33.grid from the standard dataset tables.

Baran-Wu 33-bus feeder: 12.66 kV, loads total 3715 kW / 2300 kvar, five
normally-open tie switches (ids 33-37). Uniform 5 MVA default line rating
(the published dataset carries no ratings).
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from bgcosim import netfile
from bgcosim.network import Bus, ExternalGrid, Line, Load, PowerNetwork

# from_bus, to_bus, r_ohm, x_ohm, p_kw, q_kvar (load at to_bus)
BRANCHES = [
    (1, 2, 0.0922, 0.0470, 100, 60),
    (2, 3, 0.4930, 0.2511, 90, 40),
    (3, 4, 0.3660, 0.1864, 120, 80),
    (4, 5, 0.3811, 0.1941, 60, 30),
    (5, 6, 0.8190, 0.7070, 60, 20),
    (6, 7, 0.1872, 0.6188, 200, 100),
    (7, 8, 0.7114, 0.2351, 200, 100),
    (8, 9, 1.0300, 0.7400, 60, 20),
    (9, 10, 1.0440, 0.7400, 60, 20),
    (10, 11, 0.1966, 0.0650, 45, 30),
    (11, 12, 0.3744, 0.1238, 60, 35),
    (12, 13, 1.4680, 1.1550, 60, 35),
    (13, 14, 0.5416, 0.7129, 120, 80),
    (14, 15, 0.5910, 0.5260, 60, 10),
    (15, 16, 0.7463, 0.5450, 60, 20),
    (16, 17, 1.2890, 1.7210, 60, 20),
    (17, 18, 0.7320, 0.5740, 90, 40),
    (2, 19, 0.1640, 0.1565, 90, 40),
    (19, 20, 1.5042, 1.3554, 90, 40),
    (20, 21, 0.4095, 0.4784, 90, 40),
    (21, 22, 0.7089, 0.9373, 90, 40),
    (3, 23, 0.4512, 0.3083, 90, 50),
    (23, 24, 0.8980, 0.7091, 420, 200),
    (24, 25, 0.8960, 0.7011, 420, 200),
    (6, 26, 0.2030, 0.1034, 60, 25),
    (26, 27, 0.2842, 0.1447, 60, 25),
    (27, 28, 1.0590, 0.9337, 60, 20),
    (28, 29, 0.8042, 0.7006, 120, 70),
    (29, 30, 0.5075, 0.2585, 200, 600),
    (30, 31, 0.9744, 0.9630, 150, 70),
    (31, 32, 0.3105, 0.3619, 210, 100),
    (32, 33, 0.3410, 0.5302, 60, 40),
]

# normally-open tie switches: from, to, r_ohm, x_ohm
TIES = [
    (8, 21, 2.0, 2.0),
    (9, 15, 2.0, 2.0),
    (12, 22, 2.0, 2.0),
    (18, 33, 0.5, 0.5),
    (25, 29, 0.5, 0.5),
]

KV = 12.66
RATING = 5.0


def build() -> PowerNetwork:
    buses = [Bus(id=1, kind="slack", nominal_kv=KV)]
    buses += [Bus(id=i, kind="load", nominal_kv=KV) for i in range(2, 34)]
    lines = [
        Line(id=k + 1, from_bus=f, to_bus=t, r_ohm=r, x_ohm=x, rating_mva=RATING)
        for k, (f, t, r, x, _, _) in enumerate(BRANCHES)
    ]
    lines += [
        Line(
            id=33 + k,
            from_bus=f,
            to_bus=t,
            r_ohm=r,
            x_ohm=x,
            rating_mva=RATING,
            in_service=False,
        )
        for k, (f, t, r, x) in enumerate(TIES)
    ]
    loads = [
        Load(bus=t, p_mw=p / 1000.0, q_mvar=q / 1000.0)
        for (_, t, _, _, p, q) in BRANCHES
    ]
    grid = ExternalGrid(bus=1, v_setpoint_pu=1.0, source_r_ohm=0.1, source_x_ohm=1.0)
    return PowerNetwork(
        buses=tuple(buses),
        lines=tuple(lines),
        shunts=(),
        external_grid=grid,
        base_mva=10.0,
        nominal_loads=tuple(loads),
        name="ieee33",
    )


if __name__ == "__main__":
    net = build()
    out = pathlib.Path(__file__).resolve().parents[1] / "src/bgcosim/data/ieee33.grid"
    out.write_text(netfile.format_network(net), encoding="utf-8")
    total_p = sum(l.p_mw for l in net.nominal_loads)
    total_q = sum(l.q_mvar for l in net.nominal_loads)
    print(f"wrote {out} ({len(net.buses)} buses, {len(net.lines)} lines, "
          f"{total_p:.3f} MW / {total_q:.3f} MVAr)")
