"""Dataset-level execution, run manifests, and prediction file I/O.

A run produces three artifacts in the output directory:

* ``predictions.jsonl`` - header record + one row per instance, sorted by id.
* ``report.json``       - the evaluation report.
* ``manifest.json``     - config snapshot, template/schema checksums,
  per-instance traces, diagnostics, backend stats, wall-clock timings.

Predictions and report are byte-deterministic for a fixed config and backend
transcript; the manifest carries timings and cache statistics, so it is the
one artifact allowed to differ between identical runs.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .backends import Backend, CachedBackend
from .errors import BackendError, BackendFatalError, DataError
from .evaluation import EvalReport, Prediction, PredictionItem, evaluate_run
from .model import Dataset, LabelSchema, TaskKind
from .pipeline import Method, PipelineConfig, RunDiagnostics, StageTrace, run_instance
from .prompting import template_checksums

PREDICTIONS_FORMAT_VERSION = 1


@dataclass
class RunResult:
    dataset: Dataset
    schema: LabelSchema
    config: PipelineConfig
    predictions: list[Prediction]  # sorted by instance id
    traces: dict[str, StageTrace]
    diagnostics: RunDiagnostics
    backend_stats: dict
    wall_clock_s: float

    def report(self) -> EvalReport:
        return evaluate_run(
            self.dataset.instances,
            self.predictions,
            self.dataset.task,
            nota_label=self.schema.nota_label,
            diagnostics=self.diagnostics.to_dict(),
        )


def run_dataset(
    dataset: Dataset,
    schema: LabelSchema,
    backend: Backend,
    config: PipelineConfig,
    *,
    workers: int = 1,
) -> RunResult:
    """Run the configured pipeline over every instance.

    Instances run concurrently up to ``workers``; results are keyed by id so
    completion order never affects outputs. A retry-exhausted backend error
    marks the instance errored (scored as an empty prediction); fatal backend
    errors abort the run.
    """
    if dataset.task is not schema.task:
        raise DataError(
            f"dataset task {dataset.task.value!r} != schema task {schema.task.value!r}"
        )
    config.validate(dataset.task)
    diagnostics = RunDiagnostics()
    start = time.monotonic()

    def one(instance):
        try:
            return run_instance(instance, schema, backend, config, diagnostics)
        except BackendFatalError:
            raise
        except BackendError:
            diagnostics.record_errored(instance.id)
            empty = Prediction(instance_id=instance.id, task=instance.task)
            return empty, StageTrace(instance_id=instance.id, entries=())

    results: dict[str, tuple[Prediction, StageTrace]] = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for instance, outcome in zip(dataset.instances, pool.map(one, dataset.instances)):
                results[instance.id] = outcome
    else:
        for instance in dataset.instances:
            results[instance.id] = one(instance)

    ordered_ids = sorted(results)
    return RunResult(
        dataset=dataset,
        schema=schema,
        config=config,
        predictions=[results[i][0] for i in ordered_ids],
        traces={i: results[i][1] for i in ordered_ids},
        diagnostics=diagnostics,
        backend_stats=backend.stats(),
        wall_clock_s=time.monotonic() - start,
    )


# ---------------------------------------------------------------------------
# prediction files
# ---------------------------------------------------------------------------


def write_predictions(path: str | Path, result_or_preds, *, task=None, schema_id="", method="") -> None:
    if isinstance(result_or_preds, RunResult):
        preds = result_or_preds.predictions
        task = result_or_preds.dataset.task
        schema_id = result_or_preds.schema.schema_id
        method = result_or_preds.config.method.value
    else:
        preds = result_or_preds
        if task is None:
            raise DataError("task is required when writing a bare prediction list")
    header = {
        "record": "predictions",
        "version": PREDICTIONS_FORMAT_VERSION,
        "task": task.value,
        "schema_id": schema_id,
        "method": method,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, ensure_ascii=False, sort_keys=True) + "\n")
        for pred in sorted(preds, key=lambda p: p.instance_id):
            row = {
                "id": pred.instance_id,
                "items": [
                    {
                        "label": item.label,
                        "surface": item.surface,
                        "char_start": item.char_start,
                        "provenance": item.provenance,
                    }
                    for item in pred.items
                ],
            }
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_predictions(path: str | Path) -> tuple[TaskKind, list[Prediction]]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").split("\n")  # not splitlines(): NEL-safe
    except OSError as exc:
        raise DataError(f"cannot read predictions {path}: {exc}") from exc
    try:
        header = json.loads(lines[0]) if lines else {}
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: bad header line: {exc}") from exc
    if header.get("record") != "predictions":
        raise DataError(f"{path}: first line is not a predictions header")
    task = TaskKind(header["task"])
    preds = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            items = tuple(
                PredictionItem(
                    label=i["label"],
                    surface=i.get("surface"),
                    char_start=i.get("char_start", -1),
                    provenance=i.get("provenance", ""),
                )
                for i in row["items"]
            )
            preds.append(Prediction(instance_id=row["id"], task=task, items=items))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: bad prediction row: {exc}") from exc
    return task, preds


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


def config_snapshot(config: PipelineConfig) -> dict:
    return {
        "method": config.method.value,
        "variant": config.variant,
        "option_seed": config.option_seed,
        "decoding": config.decoding.key_dict(),
        "span_case_sensitive": config.span_case_sensitive,
        "template_fidelity": config.template_fidelity,
        "text_only": config.text_only,
    }


def build_manifest(
    result: RunResult,
    *,
    dataset_path: str = "",
    extra: Optional[dict] = None,
) -> dict:
    used_templates = sorted(
        {entry.template_id for trace in result.traces.values() for entry in trace.entries}
    )
    checks = template_checksums()
    manifest = {
        "record": "run_manifest",
        "dataset": {
            "path": dataset_path,
            "schema_id": result.dataset.schema_id,
            "task": result.dataset.task.value,
            "n_instances": len(result.dataset),
        },
        "schema_checksum": result.schema.checksum,
        "config": config_snapshot(result.config),
        "backend": result.backend_stats,
        "template_checksums": {
            tid: checks.get(f"{tid}.txt", "") for tid in used_templates
        },
        "diagnostics": result.diagnostics.to_dict(),
        "attempted": len(result.dataset) - len(result.diagnostics.errored_instances),
        "wall_clock_s": round(result.wall_clock_s, 3),
        "traces": {
            instance_id: [
                {
                    "prompt_id": e.prompt_id,
                    "template_id": e.template_id,
                    "generation": e.generation,
                    "parse_method": e.parse_method,
                    "parsed": e.parsed,
                }
                for e in trace.entries
            ]
            for instance_id, trace in result.traces.items()
        },
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def write_run_outputs(
    result: RunResult, out_dir: str | Path, *, dataset_path: str = ""
) -> EvalReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = result.report()
    write_predictions(out / "predictions.jsonl", result)
    write_json(out / "report.json", report.to_dict())
    write_json(out / "manifest.json", build_manifest(result, dataset_path=dataset_path))
    return report


__all__ = [
    "RunResult",
    "run_dataset",
    "write_predictions",
    "read_predictions",
    "build_manifest",
    "write_run_outputs",
    "write_json",
    "config_snapshot",
    "CachedBackend",
    "Method",
]
