import math

import numpy as np
import pytest

from bgcosim.buildings import BuildingModel, BusMapping, MappingEntry, constant_profile
from bgcosim.cosim import (
    BuildingObs,
    CoSimEnv,
    Observation,
    SimulationConfig,
    StepRecord,
    run_episode,
)
from bgcosim.policy import (
    DroopPolicy,
    PolicyError,
    PolicyParams,
    TrainerConfig,
    act,
    no_control,
    params_from_text,
    params_to_text,
    train,
)


def obs_with(voltages, buildings, v_ref=1.0):
    return Observation(
        step=0,
        hour_of_day=0.0,
        v_ref=v_ref,
        buildings=tuple(buildings),
        bus_voltages=dict(voltages),
    )


def bobs(bid, bus):
    return BuildingObs(building=bid, bus=bus, soc_fraction=0.5, base_load_kw=1.0, pv_kw=0.0)


class TestAct:
    def test_zero_at_reference(self):
        params = PolicyParams(deadband_pu=0.01, slope=20.0)
        obs = obs_with({1: 1.0, 2: 1.0}, [bobs("h1", 2)])
        assert act(params, obs) == {"h1": 0.0}

    def test_zero_inside_deadband(self):
        params = PolicyParams(deadband_pu=0.02, slope=20.0)
        obs = obs_with({2: 1.015}, [bobs("h1", 2)])
        assert act(params, obs) == {"h1": 0.0}

    def test_soft_threshold_arithmetic(self):
        # slope 20, deadband 0.01, deviation 0.06 -> clamp(20 * 0.05) = 1.0
        params = PolicyParams(deadband_pu=0.01, slope=20.0)
        obs = obs_with({2: 1.06}, [bobs("h1", 2)])
        assert act(params, obs) == {"h1": 1.0}

    def test_direction_matches_voltage_sign(self):
        params = PolicyParams(deadband_pu=0.0, slope=5.0)
        high = act(params, obs_with({2: 1.04}, [bobs("h1", 2)]))
        low = act(params, obs_with({2: 0.96}, [bobs("h1", 2)]))
        assert high["h1"] > 0 > low["h1"]

    def test_antisymmetric_outside_deadband(self):
        params = PolicyParams(deadband_pu=0.01, slope=3.0)  # small slope: no clamp
        for d in (0.02, 0.05, 0.09):
            up = act(params, obs_with({2: 1.0 + d}, [bobs("h1", 2)]))["h1"]
            down = act(params, obs_with({2: 1.0 - d}, [bobs("h1", 2)]))["h1"]
            assert up == pytest.approx(-down)

    def test_deterministic_and_stateless(self):
        params = PolicyParams(deadband_pu=0.005, slope=7.0)
        obs = obs_with({2: 1.03, 3: 0.97}, [bobs("a", 2), bobs("b", 3)])
        assert act(params, obs) == act(params, obs)

    def test_centralized_uses_building_bus_mean(self):
        params = PolicyParams(deadband_pu=0.0, slope=10.0, mode="centralized")
        obs = obs_with({1: 1.0, 2: 1.04, 3: 0.98}, [bobs("a", 2), bobs("b", 3)])
        actions = act(params, obs)
        expected = 10.0 * ((1.04 + 0.98) / 2 - 1.0)
        assert actions["a"] == pytest.approx(expected)
        assert actions["a"] == actions["b"]

    def test_modes_coincide_on_shared_bus(self):
        buildings = [bobs("a", 5), bobs("b", 5)]
        obs = obs_with({1: 1.0, 5: 1.03}, buildings)
        dec = act(PolicyParams(0.005, 8.0, "decentralized"), obs)
        cen = act(PolicyParams(0.005, 8.0, "centralized"), obs)
        assert dec == cen

    def test_no_control_is_all_zero(self):
        obs = obs_with({2: 1.2}, [bobs("h1", 2)])
        assert act(no_control(), obs) == {"h1": 0.0}


class TestParamsValidation:
    def test_negative_rejected(self):
        with pytest.raises(PolicyError):
            PolicyParams(deadband_pu=-0.1)
        with pytest.raises(PolicyError):
            PolicyParams(slope=-1.0)
        with pytest.raises(PolicyError):
            PolicyParams(mode="psychic")

    def test_trainer_validation(self):
        with pytest.raises(PolicyError):
            TrainerConfig(population_size=1)
        with pytest.raises(PolicyError):
            TrainerConfig(elite_fraction=1.5)


class StubEnv:
    """One-step environment with a known optimal action.

    The observation exposes a +0.05 p.u. deviation at the building's bus and
    the step reward is -(a - a_opt)^2, so the best droop satisfies
    slope * (0.05 - deadband) = a_opt.
    """

    A_OPT = 0.6

    def __init__(self):
        self.config = SimulationConfig(horizon_steps=1)
        self.reset()

    def reset(self):
        self._done = False
        return obs_with({1: 1.05}, [bobs("h1", 1)])

    @property
    def finished(self):
        return self._done

    def step(self, actions):
        a = actions.get("h1", 0.0)
        r = -((a - self.A_OPT) ** 2)
        self._done = True
        rec = StepRecord(0, {1: 1.05}, {}, {"h1": 0.0}, dict(actions), r, False)
        return obs_with({1: 1.05}, [bobs("h1", 1)]), r, rec


class TestTrain:
    def test_flat_objective_no_spurious_improvement(self):
        class FlatEnv(StubEnv):
            def step(self, actions):
                obs, _, rec = super().step(actions)
                from dataclasses import replace

                rec = replace(rec, reward=0.5)
                return obs, 0.5, rec

        result = train(FlatEnv, TrainerConfig(population_size=6, iterations=3, seed=1))
        assert result.best_reward == pytest.approx(0.5)
        assert all(h == pytest.approx(0.5) for h in result.elite_mean_history)

    def test_recovers_known_optimum_vs_grid_search(self):
        trainer = TrainerConfig(
            population_size=24, elite_fraction=0.25, iterations=12, seed=3
        )
        result = train(StubEnv, trainer)

        # exhaustive grid-search oracle over the same parameter family
        best = -math.inf
        for deadband in np.linspace(0.0, 0.04, 41):
            for slope in np.linspace(0.0, 40.0, 161):
                a = min(1.0, max(-1.0, slope * max(0.0, 0.05 - deadband)))
                best = max(best, -((a - StubEnv.A_OPT) ** 2))
        assert result.best_reward >= best - 1e-4

    def test_elite_mean_is_monotone(self):
        result = train(
            StubEnv, TrainerConfig(population_size=10, iterations=8, seed=11)
        )
        history = result.elite_mean_history
        assert len(history) == 8
        assert all(b >= a - 1e-15 for a, b in zip(history, history[1:]))

    def test_seeded_runs_identical(self):
        trainer = TrainerConfig(population_size=8, iterations=4, seed=9)
        a = train(StubEnv, trainer)
        b = train(StubEnv, trainer)
        assert a == b

    def test_all_candidates_non_finite_raises(self):
        class NanEnv(StubEnv):
            def step(self, actions):
                obs, _, rec = super().step(actions)
                from dataclasses import replace

                return obs, math.nan, replace(rec, reward=math.nan)

        with pytest.raises(PolicyError, match="non-finite"):
            train(NanEnv, TrainerConfig(population_size=4, iterations=2, seed=0))

    def test_improves_over_baseline_on_pv_feeder(self, ieee33):
        horizon = 6
        model = BuildingModel(
            id="pv_house",
            base_load_kw=constant_profile(horizon, 0.5),
            pv_kw=constant_profile(horizon, 8.0),
            battery_capacity_kwh=36.0,
            battery_max_kw=6.0,
        )
        mapping = BusMapping(
            tuple(MappingEntry(b, "pv_house", 12) for b in ieee33.bus_ids if b != 1)
        )
        config = SimulationConfig(horizon_steps=horizon)

        def factory():
            return CoSimEnv(ieee33, {"pv_house": model}, mapping, config)

        baseline = run_episode(factory(), DroopPolicy(no_control()))
        result = train(
            factory, TrainerConfig(population_size=8, iterations=3, seed=5)
        )
        trained = run_episode(factory(), DroopPolicy(result.params))
        assert baseline.kpis.max_voltage > 1.05  # scenario really stresses the grid
        assert (
            trained.kpis.cumulative_reward > baseline.kpis.cumulative_reward
        )


class TestParamsFile:
    def test_roundtrip(self):
        params = PolicyParams(deadband_pu=0.012, slope=17.5, mode="centralized")
        assert params_from_text(params_to_text(params)) == params

    def test_unknown_key(self):
        with pytest.raises(PolicyError, match="gain"):
            params_from_text("gain = 3.0\n")
