"""Matching, micro-F1 scoring, and robustness aggregation statistics.

Matching conventions:

* MNER / MTED: per-instance multiset matching on (surface string, label)
  pairs. Generations carry no offsets, so surface identity is the
  comparability assumption; each gold item matches at most one prediction.
* MRE / MIED: instances whose gold label is NOTA are excluded from counting
  entirely, except that predicting a label on such an instance is a false
  positive. A wrong label on a gold-labeled instance counts one FP (for the
  predicted class) and one FN (for the gold class).

Metrics are exact rationals; display rounding is half-up to one decimal in
percent, matching the published tables.
"""

from __future__ import annotations

import statistics
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .errors import DataError
from .model import MieInstance, TaskKind

NOTA_POLICY_BY_TASK = {
    TaskKind.MNER: "joint_span",
    TaskKind.MTED: "joint_span",
    TaskKind.MRE: "exclude_gold_nota",
    TaskKind.MIED: "exclude_gold_nota",
}


@dataclass(frozen=True)
class PredictionItem:
    """One emitted prediction: a typed span, or a bare label for MRE/MIED."""

    label: str
    surface: Optional[str] = None
    char_start: int = -1
    provenance: str = ""


@dataclass(frozen=True)
class Prediction:
    instance_id: str
    task: TaskKind
    items: tuple[PredictionItem, ...] = ()


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    per_class: dict[str, ClassCounts] = field(default_factory=dict)

    def _cls(self, label: str) -> ClassCounts:
        return self.per_class.setdefault(label, ClassCounts())

    def add_tp(self, label: str, n: int = 1) -> None:
        self.tp += n
        self._cls(label).tp += n

    def add_fp(self, label: str, n: int = 1) -> None:
        self.fp += n
        self._cls(label).fp += n

    def add_fn(self, label: str, n: int = 1) -> None:
        self.fn += n
        self._cls(label).fn += n


@dataclass(frozen=True)
class Metrics:
    precision: Fraction
    recall: Fraction
    f1: Fraction

    def to_dict(self) -> dict:
        return {
            "precision": float(self.precision),
            "recall": float(self.recall),
            "f1": float(self.f1),
            "precision_exact": str(self.precision),
            "recall_exact": str(self.recall),
            "f1_exact": str(self.f1),
            "percent": {
                "precision": percent(self.precision),
                "recall": percent(self.recall),
                "f1": percent(self.f1),
            },
        }


@dataclass(frozen=True)
class AggregateStats:
    mean: float
    sample_std: float  # n-1 denominator
    n: int

    def display(self) -> str:
        return f"{round_half_up(self.mean)} ± {round_half_up(self.sample_std)}"


def round_half_up(value: float | Fraction, places: int = 1) -> str:
    """Decimal half-up rounding, as the published tables round (62.45 -> 62.5)."""
    if isinstance(value, Fraction):
        dec = Decimal(value.numerator) / Decimal(value.denominator)
    else:
        dec = Decimal(repr(value))
    quantum = Decimal(1).scaleb(-places)
    return str(dec.quantize(quantum, rounding=ROUND_HALF_UP))


def percent(value: Fraction | float, places: int = 1) -> str:
    if isinstance(value, Fraction):
        return round_half_up(value * 100, places)
    return round_half_up(value * 100.0, places)


def _match_span_instance(
    gold_items: Sequence, pred_items: Sequence[PredictionItem], counts: MatchCounts
) -> None:
    """Multiset matching on (surface, label) within one instance."""
    remaining = Counter((g.surface, g.label) for g in gold_items)
    for item in pred_items:
        key = (item.surface, item.label)
        if remaining[key] > 0:
            remaining[key] -= 1
            counts.add_tp(item.label)
        else:
            counts.add_fp(item.label)
    for (_, label), n in remaining.items():
        if n:
            counts.add_fn(label, n)


def _single_label(pred: Prediction, task: TaskKind) -> Optional[str]:
    if len(pred.items) > 1:
        raise DataError(
            f"{task.value} prediction for {pred.instance_id!r} has "
            f"{len(pred.items)} items; at most one label is allowed"
        )
    return pred.items[0].label if pred.items else None


def match_predictions(
    instances: Sequence[MieInstance],
    predictions: Sequence[Prediction],
    task: TaskKind,
    nota_policy: str | None = None,
    *,
    nota_label: str = "none",
    surface_only: bool = False,
) -> MatchCounts:
    """Pool TP/FP/FN over a dataset. Instances without a prediction count as empty.

    ``surface_only`` ignores labels in span matching (trigger-identification
    diagnostics for MTED).
    """
    policy = nota_policy or NOTA_POLICY_BY_TASK[task]
    by_id: dict[str, Prediction] = {}
    known = {inst.id for inst in instances}
    for pred in predictions:
        if pred.instance_id not in known:
            raise DataError(f"prediction for unknown instance id {pred.instance_id!r}")
        if pred.instance_id in by_id:
            raise DataError(f"duplicate prediction for instance id {pred.instance_id!r}")
        by_id[pred.instance_id] = pred

    counts = MatchCounts()
    empty = Prediction(instance_id="", task=task)

    for inst in instances:
        pred = by_id.get(inst.id, empty)
        if task in (TaskKind.MNER, TaskKind.MTED):
            if policy != "joint_span" and not surface_only:
                raise DataError(f"unknown NOTA policy {policy!r} for {task.value}")
            gold_items = inst.gold
            pred_items = pred.items
            if surface_only:
                gold_items = [type(g)(surface=g.surface, label="_span_") for g in gold_items]
                pred_items = [
                    PredictionItem(label="_span_", surface=p.surface) for p in pred_items
                ]
            _match_span_instance(gold_items, pred_items, counts)
        else:
            if policy != "exclude_gold_nota":
                raise DataError(f"unknown NOTA policy {policy!r} for {task.value}")
            gold_label = inst.gold.relation if task is TaskKind.MRE else inst.gold
            pred_label = _single_label(pred, task)
            if gold_label == nota_label:
                if pred_label is not None:
                    counts.add_fp(pred_label)
                continue
            if pred_label is None:
                counts.add_fn(gold_label)
            elif pred_label == gold_label:
                counts.add_tp(gold_label)
            else:
                counts.add_fp(pred_label)
                counts.add_fn(gold_label)
    return counts


def micro_f1(counts: MatchCounts) -> Metrics:
    """Micro-averaged P/R/F1: counts pooled before division; 0 on zero denominators."""
    zero = Fraction(0)
    p = Fraction(counts.tp, counts.tp + counts.fp) if counts.tp + counts.fp else zero
    r = Fraction(counts.tp, counts.tp + counts.fn) if counts.tp + counts.fn else zero
    f1 = 2 * p * r / (p + r) if p + r else zero
    return Metrics(precision=p, recall=r, f1=f1)


def aggregate_stats(scores: Sequence[float]) -> AggregateStats:
    """Mean and sample standard deviation (n-1 denominator) over run scores."""
    if len(scores) < 2:
        raise DataError("aggregate_stats needs at least 2 scores")
    values = [float(s) for s in scores]
    return AggregateStats(
        mean=statistics.fmean(values),
        sample_std=statistics.stdev(values),
        n=len(values),
    )


@dataclass(frozen=True)
class EvalReport:
    task: TaskKind
    nota_policy: str
    counts: MatchCounts
    metrics: Metrics
    n_instances: int
    n_predicted_instances: int
    degenerate: bool
    trigger_identification: Optional[Metrics] = None
    diagnostics: Optional[Mapping] = None

    def to_dict(self) -> dict:
        out = {
            "task": self.task.value,
            "nota_policy": self.nota_policy,
            "counts": {"tp": self.counts.tp, "fp": self.counts.fp, "fn": self.counts.fn},
            "per_class": {
                label: {"tp": c.tp, "fp": c.fp, "fn": c.fn}
                for label, c in sorted(self.counts.per_class.items())
            },
            "metrics": self.metrics.to_dict(),
            "n_instances": self.n_instances,
            "n_predicted_instances": self.n_predicted_instances,
            "degenerate": self.degenerate,
        }
        if self.trigger_identification is not None:
            out["trigger_identification"] = self.trigger_identification.to_dict()
        if self.diagnostics is not None:
            out["diagnostics"] = dict(self.diagnostics)
        return out

    def summary_line(self) -> str:
        m = self.metrics
        return (
            f"P={percent(m.precision)} R={percent(m.recall)} F1={percent(m.f1)}"
        )


def evaluate_run(
    instances: Sequence[MieInstance],
    predictions: Sequence[Prediction],
    task: TaskKind,
    nota_policy: str | None = None,
    *,
    nota_label: str = "none",
    diagnostics: Mapping | None = None,
) -> EvalReport:
    """Full report: pooled counts, micro metrics, per-class table, coverage."""
    policy = nota_policy or NOTA_POLICY_BY_TASK[task]
    counts = match_predictions(
        instances, predictions, task, policy, nota_label=nota_label
    )
    metrics = micro_f1(counts)
    trigger_id = None
    if task is TaskKind.MTED:
        tid_counts = match_predictions(
            instances, predictions, task, policy, nota_label=nota_label, surface_only=True
        )
        trigger_id = micro_f1(tid_counts)
    degenerate = counts.tp + counts.fp + counts.fn == 0
    return EvalReport(
        task=task,
        nota_policy=policy,
        counts=counts,
        metrics=metrics,
        n_instances=len(instances),
        n_predicted_instances=sum(1 for p in predictions if p.items),
        degenerate=degenerate,
        trigger_identification=trigger_id,
        diagnostics=diagnostics,
    )
