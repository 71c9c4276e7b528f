from bgcosim.cosim import run_episode


def run_simulation_episode(environment, policy):
    return run_episode(environment, policy)
