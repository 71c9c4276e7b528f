from bgcosim.analysis import short_circuit_current, thevenin_at


def estimate_fault_currents(network, buses):
    out = {}
    for bus in buses:
        thev = thevenin_at(network, bus)
        out[bus] = short_circuit_current(thev, network.bus(bus).nominal_kv)
    return out
