"""Simulated annealing over discrete configuration spaces.

The search seeds itself with the two workload-split extremes (all work on
the CPU, all work on the accelerator) when the space has a complement
parameter, then walks single-parameter neighbor moves under a geometric
cooling schedule, accepting worse candidates with probability
exp(delta / T), where delta is the value change normalized by the incumbent
best magnitude. The loop runs while the temperature exceeds 1.

Evaluations are memoized per run: re-proposing an already evaluated
configuration consumes no budget.
"""
from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from typing import Any, Callable

from .space import Configuration, NoNeighborError, ParameterSpace

#: Floor for the normalization scale, guarding against a zero incumbent.
SCALE_EPSILON = 1e-9

#: Loop continues while the temperature is above this bound.
TEMPERATURE_FLOOR = 1.0


class SearchAborted(RuntimeError):
    """An evaluator failed mid-search; carries the partial trace."""

    def __init__(self, message: str, trace: "SearchTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class AnnealParams:
    """Annealing schedule knobs.

    When evaluation_budget is set, the cooling factor is derived as
    initial_temperature ** (-1 / budget) so the schedule crosses the
    temperature floor after exactly `budget` steps.
    """

    initial_temperature: float = 1000.0
    cooling_factor: float = 0.95
    evaluation_budget: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.initial_temperature > TEMPERATURE_FLOOR:
            raise ValueError("initial_temperature must exceed 1")
        if not 0 < self.cooling_factor < 1:
            raise ValueError("cooling_factor must be in (0, 1)")
        if self.evaluation_budget is not None and self.evaluation_budget < 1:
            raise ValueError("evaluation_budget must be at least 1")

    @property
    def effective_cooling_factor(self) -> float:
        if self.evaluation_budget is None:
            return self.cooling_factor
        return derived_cooling_factor(self.initial_temperature, self.evaluation_budget)


@dataclass(frozen=True)
class SearchStep:
    """One annealing step: the proposed candidate and the accept decision."""

    index: int
    temperature: float
    candidate: Configuration
    value: float
    accepted: bool
    acceptance_probability: float


@dataclass(frozen=True)
class SearchTrace:
    """Complete record of one annealing run."""

    steps: tuple[SearchStep, ...]
    seed_evaluations: tuple[tuple[Configuration, float], ...]
    winner_config: Configuration | None
    winner_value: float | None
    evaluations_used: int


def acceptance_probability(
    current_value: float,
    candidate_value: float,
    temperature: float,
    best_value: float,
) -> float:
    """Probability of moving to the candidate.

    Improvements (and ties) are always accepted. For a worse candidate the
    probability is exp(delta / temperature) with delta the value change
    normalized by max(|best_value|, 1e-9).
    """
    for name, value in (
        ("current_value", current_value),
        ("candidate_value", candidate_value),
        ("temperature", temperature),
        ("best_value", best_value),
    ):
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    scale = max(abs(best_value), SCALE_EPSILON)
    delta = (candidate_value - current_value) / scale
    if delta >= 0:
        return 1.0
    return min(1.0, math.exp(delta / temperature))


def cooling_step(temperature: float, cooling_factor: float) -> float:
    """Geometric cooling: the next temperature."""
    if not 0 < cooling_factor < 1:
        raise ValueError("cooling_factor must be in (0, 1)")
    return temperature * cooling_factor


def derived_cooling_factor(initial_temperature: float, budget: int) -> float:
    """Cooling factor whose schedule lasts exactly `budget` steps."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if not initial_temperature > TEMPERATURE_FLOOR:
        raise ValueError("initial_temperature must exceed 1")
    return initial_temperature ** (-1.0 / budget)


def anneal(space: ParameterSpace, evaluator: Any, params: AnnealParams) -> SearchTrace:
    """Run one seeded annealing search and return its trace.

    `evaluator` must expose evaluate(config) -> float. The winner is the
    first configuration reaching the maximal observed value, boundary seeds
    included. An evaluator exception aborts the run with the partial trace
    attached to the raised SearchAborted.
    """
    rng = random.Random(params.seed)
    cache: dict[tuple[Any, ...], float] = {}
    steps: list[SearchStep] = []
    seed_evaluations: list[tuple[Configuration, float]] = []
    winner: tuple[Configuration | None, float | None] = (None, None)

    def partial_trace() -> SearchTrace:
        return SearchTrace(
            tuple(steps), tuple(seed_evaluations), winner[0], winner[1], len(cache)
        )

    def evaluate(config: Configuration) -> tuple[float, bool]:
        """Returns (value, was_cached)."""
        key = space.config_key(config)
        if key in cache:
            return cache[key], True
        try:
            value = float(evaluator.evaluate(config))
        except Exception as exc:
            raise SearchAborted(
                f"evaluator failed on {config!r}: {exc}", partial_trace()
            ) from exc
        cache[key] = value
        return value, False

    def observe(config: Configuration, value: float) -> None:
        nonlocal winner
        if winner[1] is None or value > winner[1]:
            winner = (config, value)

    # Boundary seeds: both extremes of the first workload-split parameter.
    sources = space.complement_sources()
    if sources:
        source = space.parameter(sources[0])
        base = space.random_config(rng)
        free_names = [p.name for p in space.free_parameters]
        for boundary in (source.domain[-1], source.domain[0]):
            assignment = {name: base[name] for name in free_names}
            assignment[source.name] = boundary
            config = space.make_config(assignment)
            value, _ = evaluate(config)
            seed_evaluations.append((config, value))
            observe(config, value)

    current_config = space.random_config(rng)
    current_value, _ = evaluate(current_config)
    seed_evaluations.append((current_config, current_value))
    observe(current_config, current_value)

    mutable = [p for p in space.free_parameters if p.size > 1]
    if mutable:
        budget = params.evaluation_budget
        alpha = params.effective_cooling_factor
        temperature = params.initial_temperature
        index = 0
        loop_evaluations = 0
        while temperature > TEMPERATURE_FLOOR:
            if budget is not None and loop_evaluations >= budget:
                break
            candidate = space.neighbor(current_config, rng)
            value, was_cached = evaluate(candidate)
            if not was_cached:
                loop_evaluations += 1
            probability = acceptance_probability(
                current_value, value, temperature, winner[1]
            )
            accepted = rng.random() < probability
            steps.append(
                SearchStep(index, temperature, candidate, value, accepted, probability)
            )
            if accepted:
                current_config, current_value = candidate, value
            observe(candidate, value)
            temperature = cooling_step(temperature, alpha)
            index += 1

    return partial_trace()


def trace_to_rows(trace: SearchTrace, space: ParameterSpace) -> list[list[Any]]:
    """Tabulate a trace: one row per step, parameter values as columns."""
    rows = []
    for step in trace.steps:
        rows.append(
            [step.index, step.temperature]
            + [step.candidate[name] for name in space.names]
            + [step.value, step.acceptance_probability, int(step.accepted)]
        )
    return rows


def write_trace_csv(path: str, trace: SearchTrace, space: ParameterSpace) -> None:
    """Export a trace as delimiter-separated text with a header row."""
    header = (
        ["step", "temperature"]
        + list(space.names)
        + ["value", "acceptance_probability", "accepted"]
    )
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(trace_to_rows(trace, space))
