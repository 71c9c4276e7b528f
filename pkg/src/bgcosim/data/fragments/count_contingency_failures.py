from bgcosim.analysis import n_minus_1
from bgcosim.buildings import aggregate_bus_loads


def count_contingency_failures(trace, network, fleet, bus_mapping, simulation_config):
    worst = min(trace.records, key=lambda rec: min(rec.bus_voltages.values()))
    loads = aggregate_bus_loads(fleet, worst.net_loads_kw, bus_mapping)
    unsafe, outcomes = n_minus_1(network, loads, simulation_config.limits)
    return {"unsafe": unsafe, "outcomes": outcomes}
