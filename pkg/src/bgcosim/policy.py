"""Control policies: voltage-droop rules and a derivative-free trainer.

The droop family has two parameters (deadband half-width, slope). Positive
voltage deviation beyond the deadband yields a positive action (charge,
i.e. raise demand), negative yields discharge; the response is antisymmetric
before clamping to [-1, 1]. A zero-slope policy is the no-control baseline.

Training is a cross-entropy search with elite carry-over, so the logged
elite-mean trajectory is non-decreasing by construction on deterministic
environments.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from bgcosim import textdoc
from bgcosim.cosim import CoSimEnv, Observation, run_episode

log = logging.getLogger(__name__)

CENTRALIZED = "centralized"
DECENTRALIZED = "decentralized"


class PolicyError(ValueError):
    """Invalid policy or trainer configuration."""


@dataclass(frozen=True)
class PolicyParams:
    deadband_pu: float = 0.0
    slope: float = 0.0
    mode: str = DECENTRALIZED

    def __post_init__(self):
        if self.deadband_pu < 0:
            raise PolicyError("deadband_pu must be nonnegative")
        if self.slope < 0:
            raise PolicyError("slope must be nonnegative")
        if self.mode not in (CENTRALIZED, DECENTRALIZED):
            raise PolicyError(f"unknown mode {self.mode!r}")


def no_control(mode: str = DECENTRALIZED) -> PolicyParams:
    return PolicyParams(deadband_pu=0.0, slope=0.0, mode=mode)


def act(params: PolicyParams, obs: Observation) -> dict[str, float]:
    """Per-building droop actions from the observed voltages.

    Decentralized mode reads each building's own bus voltage; centralized
    mode reads the mean voltage over the buildings' buses (so both modes
    coincide when every building shares one bus). The deadband soft-
    thresholds the deviation before the slope applies.
    """
    central_v = None
    if params.mode == CENTRALIZED and obs.buildings:
        central_v = sum(
            obs.bus_voltages[b.bus] for b in obs.buildings
        ) / len(obs.buildings)
    actions: dict[str, float] = {}
    for b in obs.buildings:
        v = central_v if central_v is not None else obs.bus_voltages[b.bus]
        dev = v - obs.v_ref
        mag = abs(dev) - params.deadband_pu
        if mag <= 0:
            actions[b.building] = 0.0
        else:
            raw = math.copysign(params.slope * mag, dev)
            actions[b.building] = min(1.0, max(-1.0, raw))
    return actions


class DroopPolicy:
    """Adapter giving PolicyParams the act(obs) protocol run_episode expects."""

    def __init__(self, params: PolicyParams):
        self.params = params

    def act(self, obs: Observation) -> dict[str, float]:
        return act(self.params, obs)


@dataclass(frozen=True)
class TrainerConfig:
    population_size: int = 12
    elite_fraction: float = 0.25
    iterations: int = 5
    episodes_per_candidate: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise PolicyError("population_size must be >= 2")
        if not 0 < self.elite_fraction < 1:
            raise PolicyError("elite_fraction must be in (0, 1)")
        if self.elite_count < 1:
            raise PolicyError("elite count must be >= 1")
        if self.iterations < 1 or self.episodes_per_candidate < 1:
            raise PolicyError("iterations and episodes_per_candidate must be >= 1")

    @property
    def elite_count(self) -> int:
        return max(1, math.ceil(self.population_size * self.elite_fraction))


@dataclass(frozen=True)
class TrainResult:
    params: PolicyParams
    elite_mean_history: tuple[float, ...]
    best_reward: float


# initial sampling distribution over (deadband_pu, slope); slope prior sits
# near 1/deviation-scale (saturation at a few hundredths p.u.)
_INIT_MEAN = (0.01, 15.0)
_INIT_STD = (0.02, 15.0)
_STD_FLOOR = 1e-3


def _evaluate(env_factory: Callable[[], CoSimEnv], candidate: PolicyParams,
              episodes: int) -> float:
    total = 0.0
    for _ in range(episodes):
        env = env_factory()
        trace = run_episode(env, DroopPolicy(candidate))
        total += trace.kpis.cumulative_reward
    return total / episodes


def train(
    env_factory: Callable[[], CoSimEnv],
    trainer: TrainerConfig,
    mode: str = DECENTRALIZED,
) -> TrainResult:
    """Cross-entropy search over (deadband_pu, slope).

    Samples a population, scores each candidate by mean cumulative reward,
    refits the sampling distribution to the elite fraction, and repeats.
    Elites carry over into the next population (with cached scores), which
    makes the elite-mean trajectory monotone on deterministic environments.
    Fully seeded; returns the best candidate ever evaluated.
    """
    rng = np.random.default_rng(trainer.seed)
    mean = np.array(_INIT_MEAN)
    std = np.array(_INIT_STD)
    n_elite = trainer.elite_count

    scored: list[tuple[float, PolicyParams]] = []
    history: list[float] = []
    for iteration in range(trainer.iterations):
        population = [params for _, params in scored[:n_elite]]
        cache = {params: score for score, params in scored[:n_elite]}
        mean_candidate = PolicyParams(
            deadband_pu=float(max(0.0, mean[0])),
            slope=float(max(0.0, mean[1])),
            mode=mode,
        )
        if mean_candidate not in cache and len(population) < trainer.population_size:
            population.append(mean_candidate)
        while len(population) < trainer.population_size:
            sample = rng.normal(mean, std)
            population.append(
                PolicyParams(
                    deadband_pu=float(max(0.0, sample[0])),
                    slope=float(max(0.0, sample[1])),
                    mode=mode,
                )
            )
        scored = []
        for candidate in population:
            if candidate in cache:
                scored.append((cache[candidate], candidate))
                continue
            score = _evaluate(env_factory, candidate, trainer.episodes_per_candidate)
            if not math.isfinite(score):
                log.warning(
                    "discarding candidate %s with non-finite reward %r",
                    candidate, score,
                )
                continue
            scored.append((score, candidate))
        if not scored:
            raise PolicyError("every candidate produced non-finite reward")
        scored.sort(key=lambda item: (-item[0], item[1].deadband_pu, item[1].slope))
        elites = scored[:n_elite]
        history.append(sum(score for score, _ in elites) / len(elites))
        points = np.array([(p.deadband_pu, p.slope) for _, p in elites])
        mean = points.mean(axis=0)
        std = np.maximum(points.std(axis=0), _STD_FLOOR)

    best_score, best_params = scored[0]
    return TrainResult(
        params=best_params,
        elite_mean_history=tuple(history),
        best_reward=best_score,
    )


# ---------------------------------------------------------------------------
# params file

def params_to_text(params: PolicyParams) -> str:
    return textdoc.dumps(
        {
            "deadband_pu": float(params.deadband_pu),
            "slope": float(params.slope),
            "mode": params.mode,
        }
    )


def params_from_text(text: str) -> PolicyParams:
    doc = textdoc.loads(text)
    unknown = sorted(set(doc) - {"deadband_pu", "slope", "mode"})
    if unknown:
        raise PolicyError(f"unknown keys in params file: {', '.join(unknown)}")
    return PolicyParams(
        deadband_pu=float(doc.get("deadband_pu", 0.0)),
        slope=float(doc.get("slope", 0.0)),
        mode=str(doc.get("mode", DECENTRALIZED)),
    )


def load_params(path) -> PolicyParams:
    with open(path, "r", encoding="utf-8") as fh:
        return params_from_text(fh.read())


def save_params(params: PolicyParams, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(params_to_text(params))
