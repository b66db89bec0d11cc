"""heterotune: energy-efficiency autotuning for heterogeneous systems.

Searches discrete configuration spaces (workload splits, thread counts,
affinities) for the best energy efficiency in MB/J, either by exhaustive
measurement or by simulated annealing over a boosted-regression-tree
surrogate trained on measurement logs.
"""

from .annealing import (
    AnnealParams,
    SearchAborted,
    SearchStep,
    SearchTrace,
    acceptance_probability,
    anneal,
    cooling_step,
    derived_cooling_factor,
    trace_to_rows,
    write_trace_csv,
)
from .evaluators import (
    AmbiguousLogError,
    CommandEvaluator,
    CommandExecutionError,
    Evaluator,
    ModelEvaluator,
    NotRecordedError,
    PatternMatchOracle,
    PccOracle,
    ReplayEvaluator,
    make_evaluator,
    make_oracle,
)
from .harness import (
    CampaignError,
    CampaignReport,
    CompareRow,
    TrainingResult,
    compare,
    compare_table,
    dataset_from_log,
    dataset_from_measurements,
    gen_dataset,
    parse_validation_spec,
    run_aml,
    run_em,
    summarize,
    train_model,
)
from .metrics import (
    DerivedMetrics,
    InvalidMeasurementError,
    MeasurementLogError,
    PowerBreakdown,
    RawMeasurement,
    UndefinedEfficiencyError,
    append_measurement,
    derive_all,
    energy,
    energy_efficiency,
    exec_time,
    power,
    read_measurement_log,
    throughput,
    unit_throughputs,
    write_measurement_log,
)
from .space import (
    Configuration,
    EncodingError,
    FeatureVector,
    NoNeighborError,
    Parameter,
    ParameterSpace,
    SpaceDefinitionError,
    bundled_data_path,
    bundled_space,
    bundled_space_names,
    load_space,
    space_from_dict,
)
from .surrogate import (
    BoostedModel,
    Dataset,
    Hyperparameters,
    ModelFormatError,
    ModelMetrics,
    RegressionTree,
    UndefinedScoreError,
    fit_boosted,
    fit_tree,
    kfold_cv,
    kfold_indices,
    load_model,
    model_from_dict,
    model_to_dict,
    model_to_json,
    predict_boosted,
    predict_boosted_batch,
    predict_tree,
    predict_tree_batch,
    r2_score,
    save_model,
    split_train_test,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguousLogError",
    "AnnealParams",
    "BoostedModel",
    "CampaignError",
    "CampaignReport",
    "CommandEvaluator",
    "CommandExecutionError",
    "CompareRow",
    "Configuration",
    "Dataset",
    "DerivedMetrics",
    "EncodingError",
    "Evaluator",
    "FeatureVector",
    "Hyperparameters",
    "InvalidMeasurementError",
    "MeasurementLogError",
    "ModelEvaluator",
    "ModelFormatError",
    "ModelMetrics",
    "NoNeighborError",
    "NotRecordedError",
    "Parameter",
    "ParameterSpace",
    "PatternMatchOracle",
    "PccOracle",
    "PowerBreakdown",
    "RawMeasurement",
    "RegressionTree",
    "ReplayEvaluator",
    "SearchAborted",
    "SearchStep",
    "SearchTrace",
    "SpaceDefinitionError",
    "TrainingResult",
    "UndefinedEfficiencyError",
    "UndefinedScoreError",
    "acceptance_probability",
    "anneal",
    "append_measurement",
    "bundled_data_path",
    "bundled_space",
    "bundled_space_names",
    "compare",
    "compare_table",
    "cooling_step",
    "dataset_from_log",
    "dataset_from_measurements",
    "derive_all",
    "derived_cooling_factor",
    "energy",
    "energy_efficiency",
    "exec_time",
    "fit_boosted",
    "fit_tree",
    "gen_dataset",
    "kfold_cv",
    "kfold_indices",
    "load_model",
    "load_space",
    "make_evaluator",
    "make_oracle",
    "model_from_dict",
    "model_to_dict",
    "model_to_json",
    "parse_validation_spec",
    "power",
    "predict_boosted",
    "predict_boosted_batch",
    "predict_tree",
    "predict_tree_batch",
    "r2_score",
    "read_measurement_log",
    "run_aml",
    "run_em",
    "save_model",
    "space_from_dict",
    "split_train_test",
    "summarize",
    "throughput",
    "trace_to_rows",
    "train_model",
    "unit_throughputs",
    "write_measurement_log",
    "write_trace_csv",
]
