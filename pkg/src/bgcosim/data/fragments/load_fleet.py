from bgcosim.buildings import load_fleet


def load_buildings(params):
    fleet, mapping = load_fleet(
        params["fleet"], params["horizon_steps"], params["dt_hours"]
    )
    return fleet, mapping
