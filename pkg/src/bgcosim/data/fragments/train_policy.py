from bgcosim.policy import DroopPolicy, train


def train_policy(environment_factory, trainer_config, mode="decentralized"):
    result = train(environment_factory, trainer_config, mode=mode)
    return DroopPolicy(result.params)
