"""Multimodal information extraction via multi-choice QA prompting.

The package decomposes four multimodal extraction tasks (entity recognition,
relation extraction, image- and text-centric event detection) into span
extraction plus multi-choice classification prompts, dispatches them to
pluggable generation backends, parses outputs into structured predictions
with none-of-the-above filtering, and scores with micro-F1 and robustness
statistics.
"""

from .model import (
    Dataset,
    ImageRef,
    LabeledSpan,
    LabelSchema,
    MieInstance,
    RelationGold,
    Sentence,
    Span,
    TaskKind,
    load_schema,
    read_dataset,
    validate_instance,
    write_dataset,
)
from .pipeline import Method, PipelineConfig, run_instance
from .runner import run_dataset
from .evaluation import (
    EvalReport,
    Prediction,
    PredictionItem,
    aggregate_stats,
    evaluate_run,
    match_predictions,
    micro_f1,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "EvalReport",
    "ImageRef",
    "LabelSchema",
    "LabeledSpan",
    "Method",
    "MieInstance",
    "PipelineConfig",
    "Prediction",
    "PredictionItem",
    "RelationGold",
    "Sentence",
    "Span",
    "TaskKind",
    "aggregate_stats",
    "evaluate_run",
    "load_schema",
    "match_predictions",
    "micro_f1",
    "read_dataset",
    "run_dataset",
    "run_instance",
    "validate_instance",
    "write_dataset",
]
