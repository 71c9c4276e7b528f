from bgcosim.policy import TrainerConfig


def configure_trainer(params):
    return TrainerConfig(
        population_size=params.get("population_size", 12),
        elite_fraction=params.get("elite_fraction", 0.25),
        iterations=params.get("iterations", 5),
        episodes_per_candidate=params.get("episodes_per_candidate", 1),
        seed=params.get("seed", 0),
    )
