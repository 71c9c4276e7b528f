from bgcosim.analysis import screen
from bgcosim.buildings import aggregate_bus_loads
from bgcosim.network import solve_power_flow


def screen_worst_snapshot(trace, network, fleet, bus_mapping, simulation_config):
    worst = min(trace.records, key=lambda rec: min(rec.bus_voltages.values()))
    loads = aggregate_bus_loads(fleet, worst.net_loads_kw, bus_mapping)
    result = solve_power_flow(network, loads)
    return screen(result, network, simulation_config.limits)
