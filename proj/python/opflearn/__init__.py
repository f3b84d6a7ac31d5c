"""AC OPF dataset generation and learning benchmarks."""

from ._core import (
    AcOpfSolution,
    Dataset,
    Model,
    NetworkModel,
    OpflearnError,
    TrainConfig,
    create_dataset,
    cross_experiment,
    dual_labels,
    evaluate,
    load_case,
    load_model,
    max_load,
    parse_case,
    read_csv,
    solve_acopf,
    solve_relaxed,
    split,
    train,
    typical_dataset,
)

__all__ = [
    "AcOpfSolution",
    "Dataset",
    "Model",
    "NetworkModel",
    "OpflearnError",
    "TrainConfig",
    "create_dataset",
    "cross_experiment",
    "dual_labels",
    "evaluate",
    "load_case",
    "load_model",
    "max_load",
    "parse_case",
    "read_csv",
    "solve_acopf",
    "solve_relaxed",
    "split",
    "train",
    "typical_dataset",
]
