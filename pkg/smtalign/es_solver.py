"""
(mu, lambda) evolution strategy for the placement problem.

Each generation, mu uniformly chosen parents emit lambda offspring each by Gaussian mutation.
Infeasible offspring are redrawn up to resample_cap times and otherwise replaced by a copy of
their parent. The best mu of the offspring pool become the next parents (parents do not
compete), and the step size follows the 1/5 success rule.

Step sizes are fractions of the bound width per dimension, so one setting serves um and degrees.
"""

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from smtalign.domain import PlacementSetting
from smtalign.placement_nlp import Bounds, Evaluation, NlpProblem

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["generation", "best", "population_best", "mean", "sigma_frac", "success_rate"]

# Spawn-key prefixes of the random streams.
INIT_STREAM, SELECTION_STREAM, OFFSPRING_STREAM = 0, 1, 2


class InfeasibleProblemError(ValueError):
    """No feasible starting point was found; worst_slack is the margin of the closest draw."""

    def __init__(self, message: str, worst_slack: float):
        super().__init__(message)
        self.worst_slack = worst_slack


@dataclass(frozen=True)
class EsConfig:
    mu: int = 5
    lambda_offspring: int = 10
    sigma0: float = 0.5
    generations: int = 10
    success_factor: float = 0.85
    resample_cap: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.mu < 1:
            raise ValueError(f"mu must be at least 1, got {self.mu}")
        if self.lambda_offspring < 1:
            raise ValueError(f"lambda_offspring must be at least 1, got {self.lambda_offspring}")
        if not 0 < self.success_factor < 1:
            raise ValueError(f"success_factor must lie in (0, 1), got {self.success_factor}")
        if not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")
        if self.generations < 1:
            raise ValueError(f"generations must be at least 1, got {self.generations}")
        if self.resample_cap < 1:
            raise ValueError(f"resample_cap must be at least 1, got {self.resample_cap}")


@dataclass(frozen=True)
class Solution:
    chi: PlacementSetting
    objective_value: float
    feasible: bool
    generation_found: int
    predictions: Optional[tuple[float, float, float]] = None
    slacks: Optional[tuple[float, float, float]] = None

    def to_dict(self) -> dict:
        return {
            "chi": asdict(self.chi),
            "objective_value": self.objective_value,
            "feasible": self.feasible,
            "generation_found": self.generation_found,
            "predictions": list(self.predictions) if self.predictions is not None else None,
            "slacks": list(self.slacks) if self.slacks is not None else None,
        }


@dataclass(frozen=True)
class TraceRow:
    generation: int
    best: float
    population_best: float
    mean: float
    sigma_frac: float
    success_rate: float


@dataclass(frozen=True)
class EsResult:
    """best is the best solution ever seen; final_best is the best of the final population."""

    best: Solution
    final_best: Solution
    trace: tuple[TraceRow, ...]

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.trace], columns=TRACE_COLUMNS)

    def write_trace(self, path) -> None:
        self.trace_frame().to_csv(Path(path), index=False)
        logger.info("Wrote ES trace to %s", path)


@dataclass(frozen=True)
class _Individual:
    chi: np.ndarray
    evaluation: Evaluation
    generation: int

    @property
    def objective(self) -> float:
        return self.evaluation.objective

    def solution(self) -> Solution:
        return Solution(
            chi=PlacementSetting.from_array(self.chi),
            objective_value=self.objective,
            feasible=self.evaluation.verdict.feasible,
            generation_found=self.generation,
            predictions=self.evaluation.predictions,
            slacks=self.evaluation.verdict.slacks,
        )


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _mutate_array(parent: np.ndarray, sigma_frac: float, widths: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    return parent + rng.normal(0.0, sigma_frac * widths)


def mutate(parent: PlacementSetting, sigma_frac: float, bounds: Bounds,
           rng: np.random.Generator) -> PlacementSetting:
    """child_d = parent_d + N(0, sigma_frac * (U_d - L_d)) per dimension; not feasibility-checked."""
    child = _mutate_array(parent.as_array(), sigma_frac, bounds.widths, rng)
    return PlacementSetting.from_array(child)


def _initial_population(problem: NlpProblem, config: EsConfig) -> list[_Individual]:
    rng = _stream(config.seed, INIT_STREAM)
    lower, upper = np.asarray(problem.bounds.lower), np.asarray(problem.bounds.upper)
    population: list[Optional[_Individual]] = []
    closest = -np.inf
    for _ in range(config.mu):
        found = None
        for _ in range(config.resample_cap):
            chi = rng.uniform(lower, upper)
            evaluation = problem.evaluate(chi)
            if evaluation.verdict.feasible:
                found = _Individual(chi, evaluation, 0)
                break
            closest = max(closest, evaluation.verdict.worst_slack)
        population.append(found)

    feasible = [individual for individual in population if individual is not None]
    if not feasible:
        raise InfeasibleProblemError(
            f"No feasible placement in {config.mu * config.resample_cap} initial draws "
            f"(worst slack of the closest draw: {closest:.4g})",
            worst_slack=float(closest),
        )
    if len(feasible) < config.mu:
        logger.warning("Only %d of %d initial parents are feasible; filling with copies",
                       len(feasible), config.mu)
        population = [feasible[k % len(feasible)] for k in range(config.mu)]
    return population


def _offspring(problem: NlpProblem, parent: _Individual, sigma_frac: float, widths: np.ndarray,
               config: EsConfig, generation: int, rng: np.random.Generator) -> _Individual:
    for _ in range(config.resample_cap):
        chi = _mutate_array(parent.chi, sigma_frac, widths, rng)
        evaluation = problem.evaluate(chi)
        if evaluation.verdict.feasible:
            return _Individual(chi, evaluation, generation)
    return _Individual(parent.chi.copy(), parent.evaluation, parent.generation)


def _adapt_sigma(sigma_frac: float, successes: int, trials: int, factor: float) -> float:
    """1/5 success rule, compared in integers so a rate of exactly 1/5 keeps sigma."""
    if successes * 5 > trials:
        return sigma_frac / factor
    if successes * 5 < trials:
        return sigma_frac * factor
    return sigma_frac


def optimize(problem: NlpProblem, config: Optional[EsConfig] = None) -> EsResult:
    """
    Run config.generations generations and return the best-ever feasible solution, the best of
    the final population and a per-generation trace. Random streams are keyed by
    (generation, parent slot, offspring index), so results depend on the seed only.
    """
    config = config or EsConfig()
    widths = problem.bounds.widths
    parents = _initial_population(problem, config)
    best = min(parents, key=lambda individual: individual.objective)
    sigma_frac = config.sigma0
    trace = []

    for generation in range(1, config.generations + 1):
        chosen = _stream(config.seed, SELECTION_STREAM, generation).integers(0, config.mu, size=config.mu)
        pool = []
        successes = 0
        for slot, parent_index in enumerate(chosen):
            parent = parents[int(parent_index)]
            for k in range(config.lambda_offspring):
                rng = _stream(config.seed, OFFSPRING_STREAM, generation, slot, k)
                child = _offspring(problem, parent, sigma_frac, widths, config, generation, rng)
                if child.objective < parent.objective:
                    successes += 1
                pool.append(child)

        ranked = sorted(range(len(pool)), key=lambda i: (pool[i].objective, i))
        parents = [pool[i] for i in ranked[:config.mu]]
        if parents[0].objective < best.objective:
            best = parents[0]

        trials = len(pool)
        trace.append(TraceRow(
            generation=generation,
            best=best.objective,
            population_best=parents[0].objective,
            mean=float(np.mean([child.objective for child in pool])),
            sigma_frac=sigma_frac,
            success_rate=successes / trials,
        ))
        logger.debug("Generation %d: best %.4g, population best %.4g, sigma %.4g, success rate %.2f",
                     generation, best.objective, parents[0].objective, sigma_frac, successes / trials)
        sigma_frac = _adapt_sigma(sigma_frac, successes, trials, config.success_factor)

    check = problem.evaluate(best.chi)
    if not (check.verdict.feasible and problem.bounds.contains(best.chi)):
        raise RuntimeError(f"ES returned an infeasible placement {best.chi.tolist()}")
    logger.info("ES finished after %d generations: best objective %.4g (generation %d)",
                config.generations, best.objective, best.generation)
    return EsResult(best=best.solution(), final_best=parents[0].solution(), trace=tuple(trace))
