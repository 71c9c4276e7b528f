"""Benchmark the compiled Newton-Raphson kernel against the numpy fallback.

Times the raw kernel on the 33-bus feeder and on random radial networks of
several sizes, then times a full N-1 sweep through the public API with
whichever backend is active. Run from a built tree:

    python benchmarks/bench_power_flow.py [--repeats N]
"""

import argparse
import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from bgcosim import _kernels, _pf_python
from bgcosim.analysis import SecurityLimits, n_minus_1
from bgcosim.network import assemble_ybus, build_ieee33

try:
    from bgcosim import _pf_core
except ImportError:
    _pf_core = None


def kernel_args(net, loads=None):
    Y = assemble_ybus(net)
    loads = loads if loads is not None else net.nominal_load_map()
    n = len(net.buses)
    p = np.zeros(n)
    q = np.zeros(n)
    for bus, (pm, qm) in loads.items():
        i = net.bus_index[bus]
        p[i] -= pm / net.base_mva
        q[i] -= qm / net.base_mva
    return (
        np.ascontiguousarray(Y.real),
        np.ascontiguousarray(Y.imag),
        p,
        q,
        net.bus_index[net.slack_bus.id],
        net.slack_voltage_pu,
        1e-8,
        50,
    )


def time_kernel(solver, args, repeats):
    solver(*args)  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        vm, va, ok, iters, mis = solver(*args)
    elapsed = time.perf_counter() - start
    assert ok
    return elapsed / repeats


def random_radial(rng, n):
    from bgcosim.network import Bus, ExternalGrid, Line, Load, PowerNetwork

    buses = [Bus(id=1, kind="slack", nominal_kv=12.66)]
    buses += [Bus(id=i, nominal_kv=12.66) for i in range(2, n + 1)]
    lines = [
        Line(i - 1, int(rng.integers(1, i)), i,
             float(rng.uniform(0.1, 0.9)), float(rng.uniform(0.1, 0.9)))
        for i in range(2, n + 1)
    ]
    loads = [Load(i, float(rng.uniform(0.0, 0.2)), float(rng.uniform(0.0, 0.08)))
             for i in range(2, n + 1)]
    return PowerNetwork(
        buses=tuple(buses), lines=tuple(lines),
        external_grid=ExternalGrid(bus=1, source_r_ohm=0.1, source_x_ohm=1.0),
        nominal_loads=tuple(loads),
    )


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    print(f"active backend: {_kernels.BACKEND}")
    if _pf_core is None:
        print("compiled kernel not built; benchmarking the fallback only")

    rng = np.random.default_rng(5)
    cases = [("ieee33 (33 buses)", build_ieee33())]
    for n in (10, 40, 100):
        cases.append((f"random radial ({n} buses)", random_radial(rng, n)))

    print(f"\n{'case':<28} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for label, net in cases:
        kargs = kernel_args(net)
        t_py = time_kernel(_pf_python.newton_solve, kargs, args.repeats)
        if _pf_core is not None:
            t_c = time_kernel(_pf_core.newton_solve, kargs, args.repeats)
            print(f"{label:<28} {t_py * 1e3:>10.3f}ms {t_c * 1e3:>10.3f}ms "
                  f"{t_py / t_c:>8.1f}x")
        else:
            print(f"{label:<28} {t_py * 1e3:>10.3f}ms {'-':>12} {'-':>9}")

    # close one tie switch so most contingencies need an actual re-solve
    net = build_ieee33(include_tie_lines=True).with_line_in_service(36, True)
    wide = SecurityLimits(v_min=0.5, v_max=1.4, loading_threshold=1.5)
    start = time.perf_counter()
    count, outcomes = n_minus_1(net, limits=wide)
    sweep = time.perf_counter() - start
    print(f"\nN-1 sweep via public API ({_kernels.BACKEND} backend): "
          f"{sweep * 1e3:.1f}ms for {len(outcomes)} contingencies")


if __name__ == "__main__":
    main()
