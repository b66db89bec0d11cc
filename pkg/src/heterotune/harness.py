"""Campaign runner: exhaustive and annealed searches, training, comparison.

Two search methods share one report shape. EM ("exhaustive measurement")
evaluates every configuration; AML ("annealing + machine learning") runs
the simulated-annealing search, normally against a trained surrogate.
Reports serialize to JSON with a stable field order; wall time is the one
field excluded on demand so byte-identical golden runs stay possible.
"""
from __future__ import annotations

import json
import math
import random
import statistics
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from . import metrics
from .annealing import AnnealParams, SearchStep, SearchTrace, anneal
from .metrics import RawMeasurement, read_measurement_log, write_measurement_log
from .space import Configuration, ParameterSpace
from .surrogate import (
    BoostedModel,
    Dataset,
    Hyperparameters,
    ModelMetrics,
    fit_boosted,
    kfold_cv,
    predict_boosted_batch,
    r2_score,
    save_model,
    split_train_test,
)

METHOD_EM = "EM"
METHOD_AML = "AML"

MIN_TRAINING_ROWS = 10


class CampaignError(RuntimeError):
    """A campaign failed midway; the partial report is attached."""

    def __init__(self, message: str, partial_report: "CampaignReport"):
        super().__init__(message)
        self.partial_report = partial_report


def _step_to_doc(step: SearchStep) -> dict[str, Any]:
    return {
        "index": step.index,
        "temperature": step.temperature,
        "candidate": dict(step.candidate),
        "value": step.value,
        "accepted": step.accepted,
        "acceptance_probability": step.acceptance_probability,
    }


def _step_from_doc(doc: Mapping[str, Any]) -> SearchStep:
    return SearchStep(
        index=int(doc["index"]),
        temperature=float(doc["temperature"]),
        candidate=dict(doc["candidate"]),
        value=float(doc["value"]),
        accepted=bool(doc["accepted"]),
        acceptance_probability=float(doc["acceptance_probability"]),
    )


def _trace_to_doc(trace: SearchTrace) -> dict[str, Any]:
    return {
        "seed_evaluations": [
            {"config": dict(config), "value": value}
            for config, value in trace.seed_evaluations
        ],
        "steps": [_step_to_doc(s) for s in trace.steps],
        "winner_config": None if trace.winner_config is None else dict(trace.winner_config),
        "winner_value": trace.winner_value,
        "evaluations_used": trace.evaluations_used,
    }


def _trace_from_doc(doc: Mapping[str, Any]) -> SearchTrace:
    return SearchTrace(
        steps=tuple(_step_from_doc(s) for s in doc["steps"]),
        seed_evaluations=tuple(
            (dict(entry["config"]), float(entry["value"]))
            for entry in doc["seed_evaluations"]
        ),
        winner_config=None if doc["winner_config"] is None else dict(doc["winner_config"]),
        winner_value=None if doc["winner_value"] is None else float(doc["winner_value"]),
        evaluations_used=int(doc["evaluations_used"]),
    )


@dataclass(frozen=True)
class CampaignReport:
    """Outcome of one search campaign over a configuration space."""

    method: str
    space_name: str
    evaluator: str
    best_config: Configuration | None
    best_value: float | None
    evaluations_used: int
    records: tuple[tuple[Configuration, float], ...]
    budget: int | None = None
    budget_fraction: float | None = None
    seed: int | None = None
    anneal_params: dict[str, Any] | None = None
    trace: SearchTrace | None = None
    wall_time_s: float | None = None

    def __post_init__(self) -> None:
        if self.method not in (METHOD_EM, METHOD_AML):
            raise ValueError(f"method must be {METHOD_EM} or {METHOD_AML}")
        if self.records:
            top = max(value for _, value in self.records)
            if self.best_value is None or self.best_value != top:
                raise ValueError(
                    f"best value {self.best_value!r} is not the maximum over "
                    f"the records ({top!r})"
                )
        if len(self.records) != self.evaluations_used:
            raise ValueError(
                f"{len(self.records)} records but evaluations_used = "
                f"{self.evaluations_used}"
            )

    def to_dict(self, include_wall_time: bool = True) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "method": self.method,
            "space": self.space_name,
            "evaluator": self.evaluator,
            "best_config": None if self.best_config is None else dict(self.best_config),
            "best_value_mb_per_j": self.best_value,
            "evaluations_used": self.evaluations_used,
            "budget": self.budget,
            "budget_fraction": self.budget_fraction,
            "seed": self.seed,
            "anneal_params": self.anneal_params,
            "records": [
                {"config": dict(config), "value": value}
                for config, value in self.records
            ],
            "trace": None if self.trace is None else _trace_to_doc(self.trace),
        }
        if include_wall_time:
            doc["wall_time_s"] = self.wall_time_s
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "CampaignReport":
        return cls(
            method=doc["method"],
            space_name=doc["space"],
            evaluator=doc["evaluator"],
            best_config=None if doc["best_config"] is None else dict(doc["best_config"]),
            best_value=doc["best_value_mb_per_j"],
            evaluations_used=int(doc["evaluations_used"]),
            records=tuple(
                (dict(entry["config"]), entry["value"]) for entry in doc["records"]
            ),
            budget=doc.get("budget"),
            budget_fraction=doc.get("budget_fraction"),
            seed=doc.get("seed"),
            anneal_params=doc.get("anneal_params"),
            trace=None if doc.get("trace") is None else _trace_from_doc(doc["trace"]),
            wall_time_s=doc.get("wall_time_s"),
        )

    def save(self, path: str, include_wall_time: bool = True) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(include_wall_time), handle, indent=2)
            handle.write("\n")

    @classmethod
    def load(cls, path: str) -> "CampaignReport":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


def run_em(space: ParameterSpace, evaluator: Any) -> CampaignReport:
    """Evaluate every configuration; the first maximum wins.

    An evaluator failure raises CampaignError with the partial report (the
    configurations finished so far) attached.
    """
    started = time.perf_counter()
    records: list[tuple[Configuration, float]] = []
    best_config: Configuration | None = None
    best_value: float | None = None

    def report() -> CampaignReport:
        return CampaignReport(
            method=METHOD_EM,
            space_name=space.name,
            evaluator=evaluator.describe() if hasattr(evaluator, "describe") else repr(evaluator),
            best_config=best_config,
            best_value=best_value,
            evaluations_used=len(records),
            records=tuple(records),
            wall_time_s=time.perf_counter() - started,
        )

    for config in space.enumerate_all():
        try:
            value = evaluator.evaluate(config)
        except Exception as exc:
            raise CampaignError(
                f"evaluator failed on {config!r} after {len(records)} "
                f"evaluations: {exc}",
                report(),
            ) from exc
        records.append((config, value))
        if best_value is None or value > best_value:
            best_config, best_value = config, value
    return report()


def run_aml(
    space: ParameterSpace, evaluator: Any, params: AnnealParams
) -> CampaignReport:
    """Run the annealing search and package its trace as a report.

    The report's records hold the distinct evaluations in first-evaluation
    order (memoized repeats collapse onto their first occurrence), so
    len(records) equals the trace's evaluation count.
    """
    started = time.perf_counter()
    trace = anneal(space, evaluator, params)

    seen: set[tuple[Any, ...]] = set()
    records: list[tuple[Configuration, float]] = []
    for config, value in trace.seed_evaluations:
        key = space.config_key(config)
        if key not in seen:
            seen.add(key)
            records.append((config, value))
    for step in trace.steps:
        key = space.config_key(step.candidate)
        if key not in seen:
            seen.add(key)
            records.append((step.candidate, step.value))
    if len(records) != trace.evaluations_used:
        raise RuntimeError(
            f"trace inconsistency: {len(records)} distinct configurations vs "
            f"{trace.evaluations_used} evaluations"
        )

    return CampaignReport(
        method=METHOD_AML,
        space_name=space.name,
        evaluator=evaluator.describe() if hasattr(evaluator, "describe") else repr(evaluator),
        best_config=trace.winner_config,
        best_value=trace.winner_value,
        evaluations_used=trace.evaluations_used,
        records=tuple(records),
        budget=params.evaluation_budget,
        budget_fraction=trace.evaluations_used / space.cardinality(),
        seed=params.seed,
        anneal_params={
            "initial_temperature": params.initial_temperature,
            "cooling_factor": params.effective_cooling_factor,
            "evaluation_budget": params.evaluation_budget,
            "seed": params.seed,
        },
        trace=trace,
        wall_time_s=time.perf_counter() - started,
    )


# ----- dataset generation and model training ----------------------------------


def gen_dataset(
    space: ParameterSpace,
    oracle: Any,
    *,
    sample: int | None = None,
    seed: int = 0,
    path: str | None = None,
) -> list[RawMeasurement]:
    """Measure every configuration, or a seeded distinct random sample.

    The oracle must expose measure(config) -> RawMeasurement. With `path`
    the rows are also written as a measurement log.
    """
    if not hasattr(oracle, "measure"):
        raise TypeError(
            f"{type(oracle).__name__} cannot produce raw measurements; "
            "dataset generation needs a measuring evaluator"
        )
    configs = list(space.enumerate_all())
    if sample is not None:
        if not 1 <= sample <= len(configs):
            raise ValueError(
                f"sample size must be in [1, {len(configs)}], got {sample}"
            )
        configs = random.Random(seed).sample(configs, sample)
    rows = [oracle.measure(config) for config in configs]
    if path is not None:
        write_measurement_log(path, space, rows)
    return rows


def dataset_from_measurements(
    space: ParameterSpace, rows: Sequence[RawMeasurement]
) -> Dataset:
    """Encode measurements into a training dataset (target: MB/J)."""
    return Dataset.from_rows(
        space.names,
        [(space.encode(m.config), metrics.energy_efficiency(m)) for m in rows],
    )


def dataset_from_log(path: str, space: ParameterSpace) -> Dataset:
    return dataset_from_measurements(space, read_measurement_log(path, space))


def parse_validation_spec(spec: str) -> tuple[str, Any]:
    """Parse "kfold:K", "split:FRACTION" or "none"."""
    if spec == "none":
        return "none", None
    kind, sep, argument = spec.partition(":")
    if sep and kind == "kfold":
        try:
            k = int(argument)
        except ValueError:
            k = 0
        if k >= 2:
            return "kfold", k
        raise ValueError(f"kfold needs an integer fold count >= 2, got {argument!r}")
    if sep and kind == "split":
        try:
            fraction = float(argument)
        except ValueError:
            fraction = -1.0
        if 0 < fraction < 1:
            return "split", fraction
        raise ValueError(
            f"split needs a training fraction in (0, 1), got {argument!r}"
        )
    raise ValueError(
        f"validation spec {spec!r} must be kfold:K, split:FRACTION or none"
    )


@dataclass(frozen=True)
class TrainingResult:
    """A trained model plus how it validated."""

    model: BoostedModel
    validation: ModelMetrics | None
    n_rows: int
    seed: int


def train_model(
    log_path: str,
    space: ParameterSpace,
    *,
    hyper: Hyperparameters | None = None,
    validation: str = "kfold:10",
    seed: int = 0,
    model_path: str | None = None,
) -> TrainingResult:
    """Train a boosted surrogate from a measurement log.

    Validation (cross-validation or a holdout split) runs first on its own
    seeded generator; the returned model is then fitted on all rows with a
    fresh generator, so the persisted bytes depend only on the log and the
    seed.
    """
    scheme, argument = parse_validation_spec(validation)
    rows = read_measurement_log(log_path, space)
    if len(rows) < MIN_TRAINING_ROWS:
        raise ValueError(
            f"training needs at least {MIN_TRAINING_ROWS} measurement rows, "
            f"got {len(rows)}"
        )
    data = dataset_from_measurements(space, rows)
    hyper = hyper or Hyperparameters()

    outcome: ModelMetrics | None = None
    if scheme == "kfold":
        outcome = kfold_cv(
            data, argument, np.random.default_rng(seed), hyper=hyper
        )
    elif scheme == "split":
        rng = np.random.default_rng(seed)
        train, test = split_train_test(data, argument, rng)
        held_out_model = fit_boosted(
            train,
            rng,
            n_estimators=hyper.n_estimators,
            max_depth=hyper.max_depth,
            min_samples_leaf=hyper.min_samples_leaf,
            learning_rate=hyper.learning_rate,
        )
        predictions = predict_boosted_batch(held_out_model, test.features)
        outcome = ModelMetrics(
            r2=r2_score(predictions, test.targets),
            n_samples=len(test),
            scheme=(
                f"holdout split (train={len(train)}, test={len(test)})"
            ),
        )

    model = fit_boosted(
        data,
        np.random.default_rng(seed),
        n_estimators=hyper.n_estimators,
        max_depth=hyper.max_depth,
        min_samples_leaf=hyper.min_samples_leaf,
        learning_rate=hyper.learning_rate,
    )
    if model_path is not None:
        save_model(model, model_path)
    return TrainingResult(model=model, validation=outcome, n_rows=len(rows), seed=seed)


# ----- comparison --------------------------------------------------------------


@dataclass(frozen=True)
class CompareRow:
    """One EM-vs-AML line: values, absolute gap, and AML as a share of EM."""

    label: str
    em_value: float
    aml_value: float
    abs_difference: float = field(init=False)
    aml_fraction_percent: float | None = field(init=False)

    def __post_init__(self) -> None:
        for name, value in (("em_value", self.em_value), ("aml_value", self.aml_value)):
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        object.__setattr__(self, "abs_difference", abs(self.em_value - self.aml_value))
        object.__setattr__(
            self,
            "aml_fraction_percent",
            100.0 * self.aml_value / self.em_value if self.em_value > 0 else None,
        )


def compare(
    em: CampaignReport, aml: CampaignReport, label: str | None = None
) -> CompareRow:
    """Line up an exhaustive report against an annealed one."""
    if em.space_name != aml.space_name:
        raise ValueError(
            f"reports cover different spaces: {em.space_name!r} vs {aml.space_name!r}"
        )
    if em.best_value is None or aml.best_value is None:
        raise ValueError("both reports need a best value to compare")
    return CompareRow(
        label=label if label is not None else em.space_name,
        em_value=em.best_value,
        aml_value=aml.best_value,
    )


def summarize(rows: Sequence[CompareRow]) -> dict[str, Any]:
    """Aggregate comparison rows: worst and mean gaps, fraction statistics."""
    if not rows:
        raise ValueError("nothing to summarize")
    differences = [row.abs_difference for row in rows]
    fractions = [
        row.aml_fraction_percent for row in rows if row.aml_fraction_percent is not None
    ]
    summary: dict[str, Any] = {
        "rows": len(rows),
        "max_abs_difference": max(differences),
        "mean_abs_difference": sum(differences) / len(differences),
    }
    if fractions:
        summary["min_fraction_percent"] = min(fractions)
        summary["median_fraction_percent"] = statistics.median(fractions)
    return summary


def compare_table(rows: Sequence[CompareRow]) -> str:
    """Monospace table of comparison rows plus a summary line."""
    header = f"{'label':<16} {'EM':>10} {'AML':>10} {'|diff|':>10} {'AML/EM':>9}"
    lines = [header, "-" * len(header)]
    for row in rows:
        fraction = (
            f"{row.aml_fraction_percent:.2f}%"
            if row.aml_fraction_percent is not None
            else "n/a"
        )
        lines.append(
            f"{row.label:<16} {row.em_value:>10.3f} {row.aml_value:>10.3f} "
            f"{row.abs_difference:>10.5f} {fraction:>9}"
        )
    summary = summarize(rows)
    lines.append(
        f"max |diff| {summary['max_abs_difference']:.5f}, "
        f"mean |diff| {summary['mean_abs_difference']:.5f}"
        + (
            f", min AML/EM {summary['min_fraction_percent']:.2f}%"
            if "min_fraction_percent" in summary
            else ""
        )
    )
    return "\n".join(lines)
