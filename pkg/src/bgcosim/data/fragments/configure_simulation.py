from bgcosim.analysis import SecurityLimits
from bgcosim.cosim import SimulationConfig


def configure_simulation(params):
    limits = SecurityLimits.from_voltage_tolerance(
        params.get("voltage_tolerance_pu", 0.05),
        params.get("loading_threshold", 1.0),
    )
    return SimulationConfig(
        horizon_steps=params["horizon_steps"],
        dt_hours=params.get("dt_hours", 1.0),
        v_ref=params.get("v_ref", 1.0),
        alpha=params.get("alpha", 10.0),
        limits=limits,
        seed=params.get("seed", 0),
    )
