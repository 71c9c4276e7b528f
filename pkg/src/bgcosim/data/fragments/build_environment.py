from bgcosim.cosim import CoSimEnv


def build_environment(network, fleet, bus_mapping, simulation_config):
    return CoSimEnv(network, fleet, bus_mapping, simulation_config)
