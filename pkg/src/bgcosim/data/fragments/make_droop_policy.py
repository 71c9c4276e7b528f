from bgcosim.policy import DroopPolicy, PolicyParams, no_control


def make_droop_policy(params):
    if params.get("control") == "none":
        return DroopPolicy(no_control())
    return DroopPolicy(
        PolicyParams(
            deadband_pu=params.get("deadband_pu", 0.01),
            slope=params.get("slope", 10.0),
            mode=params.get("mode", "decentralized"),
        )
    )
