"""Command-line surface: run, eval, robustness, sample, validate.

Every command is replayable: the run manifest embeds the full config,
template checksums, schema checksum, and seeds. Exit codes: 0 success,
2 configuration error, 3 data error, 4 fatal backend error.
"""

from __future__ import annotations

import functools
import hashlib
import json
import sys
from pathlib import Path

import click

from . import runner as runner_mod
from .backends import (
    Backend,
    CachedBackend,
    DecodingParams,
    RemoteBackend,
    RemoteConfig,
    StaticBackend,
    TranscriptBackend,
)
from .errors import ConfigError, DataError, MieqaError
from .evaluation import aggregate_stats, evaluate_run, percent
from .model import Dataset, LabelSchema, load_schema, read_dataset, validate_dataset
from .oracle import AlwaysNotaBackend, OracleBackend
from .pipeline import Method, PipelineConfig
from .sampling import make_plan, fewshot_sample, med_split


def _fail_with_exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MieqaError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


@click.group()
def main():
    """Multimodal information extraction with multi-choice prompting."""


def _load_pair(dataset_path: str, schema_name: str) -> tuple[Dataset, LabelSchema]:
    dataset = read_dataset(dataset_path)
    schema = load_schema(schema_name)
    if schema.task is not dataset.task:
        raise ConfigError(
            f"schema {schema.schema_id} is for {schema.task.value}, "
            f"dataset is {dataset.task.value}"
        )
    return dataset, schema


def _make_backend(spec: str, dataset: Dataset, schema: LabelSchema) -> Backend:
    if spec == "oracle":
        return OracleBackend(dataset, schema)
    if spec == "always-nota":
        return AlwaysNotaBackend(dataset, schema)
    if spec.startswith("static:"):
        return StaticBackend(spec.split(":", 1)[1])
    if spec.startswith("transcript:"):
        return TranscriptBackend(spec.split(":", 1)[1])
    if spec.startswith("transcript-strict:"):
        return TranscriptBackend(spec.split(":", 1)[1], strict=True)
    if spec.startswith("remote:"):
        return RemoteBackend(RemoteConfig.from_file(spec.split(":", 1)[1]))
    raise ConfigError(
        f"unknown backend spec {spec!r}; expected oracle, always-nota, "
        "static:<text>, transcript:<path>, transcript-strict:<path>, or remote:<config.json>"
    )


def _build_config(method, variant, option_seed, max_new_tokens, case_insensitive_spans,
                  template_fidelity, text_only) -> PipelineConfig:
    return PipelineConfig(
        method=Method(method.replace("-", "_")),
        variant=variant,
        option_seed=option_seed,
        decoding=DecodingParams(max_new_tokens=max_new_tokens),
        span_case_sensitive=not case_insensitive_spans,
        template_fidelity=template_fidelity,
        text_only=text_only,
    )


def _apply_config_file(ctx: click.Context, params: dict) -> dict:
    """Overlay values from --config JSON wherever a flag was left at its default."""
    path = params.pop("config_path", None)
    if path:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"bad config file {path}: {exc}") from exc
        unknown = set(raw) - set(params)
        if unknown:
            raise ConfigError(f"config file {path} has unknown keys: {sorted(unknown)}")
        for key, value in raw.items():
            if ctx.get_parameter_source(key) is click.core.ParameterSource.DEFAULT:
                params[key] = value
    missing = [k for k in ("dataset_path", "schema_name") if not params.get(k)]
    if missing:
        raise ConfigError(f"missing required settings: {missing} (flags or --config)")
    return params


_run_options = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="JSON file holding any of these settings; flags override it."),
    click.option("--dataset", "dataset_path", default=None, type=click.Path(), help="Canonical JSONL dataset."),
    click.option("--schema", "schema_name", default=None, help="Built-in schema name or JSON path."),
    click.option("--backend", "backend_spec", default="oracle", show_default=True),
    click.option("--method", type=click.Choice(["vanilla", "mqa", "mqa-gold-span"]), default="mqa", show_default=True),
    click.option("--variant", type=int, default=1, show_default=True, help="Instruction variant (1..4)."),
    click.option("--option-seed", type=int, default=0, show_default=True, help="Option-order seed (0 = published order)."),
    click.option("--max-new-tokens", type=int, default=64, show_default=True),
    click.option("--case-insensitive-spans", is_flag=True, help="Ground extracted spans case-insensitively."),
    click.option("--template-fidelity", type=click.Choice(["schema", "appendix"]), default="schema", show_default=True),
    click.option("--text-only", is_flag=True, help="Use the single-stage text-only prompt family."),
    click.option("--cache-dir", type=click.Path(), default=None, help="Enable content-addressed response caching."),
    click.option("--workers", type=int, default=1, show_default=True),
]


def _with_options(options):
    def deco(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return deco


@main.command("run")
@_with_options(_run_options)
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.pass_context
@_fail_with_exit_codes
def cmd_run(ctx, out_dir, **params):
    """Run a pipeline over a dataset; write predictions, report, manifest."""
    p = _apply_config_file(ctx, params)
    dataset, schema = _load_pair(p["dataset_path"], p["schema_name"])
    issues = validate_dataset(dataset, schema)
    if issues:
        raise DataError(
            f"dataset failed validation for {len(issues)} instances, "
            f"first: {next(iter(issues.items()))}"
        )
    config = _build_config(
        p["method"], p["variant"], p["option_seed"], p["max_new_tokens"],
        p["case_insensitive_spans"], p["template_fidelity"], p["text_only"],
    )
    config.validate(dataset.task)
    backend = _make_backend(p["backend_spec"], dataset, schema)
    if p["cache_dir"]:
        backend = CachedBackend(backend, p["cache_dir"])
    result = runner_mod.run_dataset(dataset, schema, backend, config, workers=p["workers"])
    report = runner_mod.write_run_outputs(result, out_dir, dataset_path=str(p["dataset_path"]))
    click.echo(
        f"task={dataset.task.value} method={config.method.value} "
        f"variant={config.variant} option_seed={config.option_seed} {report.summary_line()}"
    )


@main.command("eval")
@click.option("--gold", "gold_path", required=True, type=click.Path())
@click.option("--predictions", "pred_path", required=True, type=click.Path())
@click.option("--schema", "schema_name", required=True)
@click.option("--nota-policy", default=None, help="Override the task's default NOTA policy.")
@click.option("--out", "out_path", type=click.Path(), default=None)
@_fail_with_exit_codes
def cmd_eval(gold_path, pred_path, schema_name, nota_policy, out_path):
    """Re-score a predictions file against its gold dataset."""
    dataset, schema = _load_pair(gold_path, schema_name)
    task, preds = runner_mod.read_predictions(pred_path)
    if task is not dataset.task:
        raise DataError(f"predictions are {task.value}, gold is {dataset.task.value}")
    report = evaluate_run(
        dataset.instances, preds, task, nota_policy, nota_label=schema.nota_label
    )
    if out_path:
        runner_mod.write_json(out_path, report.to_dict())
    click.echo(f"task={task.value} {report.summary_line()}"
               + (" [degenerate]" if report.degenerate else ""))


@main.command("robustness")
@_with_options(_run_options)
@click.option("--variants", default="1,2,3,4", show_default=True, help="Comma list of instruction variants.")
@click.option("--orders", default="0", show_default=True, help="Comma list of option-order seeds.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_context
@_fail_with_exit_codes
def cmd_robustness(ctx, variants, orders, out_dir, **params):
    """Sweep instruction variants x option orders; report per-run rows and mean +/- std."""
    p = _apply_config_file(ctx, params)  # --variant/--option-seed are superseded here
    method = p["method"]
    variant_list = [int(v) for v in variants.split(",") if v.strip()]
    order_list = [int(s) for s in orders.split(",") if s.strip()]
    if len(variant_list) * len(order_list) < 2:
        raise ConfigError("robustness needs at least 2 runs (variants x orders)")
    dataset, schema = _load_pair(p["dataset_path"], p["schema_name"])
    rows = []
    for v in variant_list:
        for seed in order_list:
            config = _build_config(
                method, v, seed, p["max_new_tokens"], p["case_insensitive_spans"],
                p["template_fidelity"], p["text_only"],
            )
            config.validate(dataset.task)
            backend = _make_backend(p["backend_spec"], dataset, schema)
            if p["cache_dir"]:
                backend = CachedBackend(backend, p["cache_dir"])
            result = runner_mod.run_dataset(
                dataset, schema, backend, config, workers=p["workers"]
            )
            report = result.report()
            m = report.metrics
            rows.append({
                "variant": v,
                "option_seed": seed,
                "precision": float(m.precision),
                "recall": float(m.recall),
                "f1": float(m.f1),
                "display": {
                    "precision": percent(m.precision),
                    "recall": percent(m.recall),
                    "f1": percent(m.f1),
                },
            })
            click.echo(
                f"variant={v} option_seed={seed} "
                f"P={percent(m.precision)} R={percent(m.recall)} F1={percent(m.f1)}"
            )
    stats = aggregate_stats([row["f1"] * 100.0 for row in rows])
    payload = {
        "record": "robustness_report",
        "task": dataset.task.value,
        "method": method,
        "rows": rows,
        "f1_mean": stats.mean,
        "f1_sample_std": stats.sample_std,
        "n_runs": stats.n,
        "display": stats.display(),
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runner_mod.write_json(out / "robustness.json", payload)
    click.echo(f"F1 over {stats.n} runs: {stats.display()}")


@main.command("sample")
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--schema", "schema_name", required=True)
@click.option("--k", type=int, default=50, show_default=True)
@click.option("--n-val", type=int, default=200, show_default=True, help="Validation size for med-split.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--mode", type=click.Choice(["fewshot", "med-split"]), default="fewshot", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@_fail_with_exit_codes
def cmd_sample(dataset_path, schema_name, k, n_val, seed, mode, out_dir):
    """Distribution-preserving few-shot selection or the train/val/test split."""
    dataset, schema = _load_pair(dataset_path, schema_name)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset_checksum = hashlib.sha256(Path(dataset_path).read_bytes()).hexdigest()

    def write_ids(name: str, ids, plan=None):
        lines = [
            f"# split: {name}",
            f"# dataset: {dataset_path}",
            f"# dataset_sha256: {dataset_checksum}",
            f"# seed: {seed}",
        ]
        if plan is not None:
            lines.append(f"# plan: {json.dumps(dict(sorted(plan.items())))}")
        lines += list(ids)
        (out / f"{name}_ids.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    if mode == "fewshot":
        plan = make_plan(dataset.instances, schema, k, seed)
        ids = fewshot_sample(dataset.instances, schema, plan)
        write_ids("train", ids, plan=plan.per_category)
        click.echo(f"selected {len(ids)} of {len(dataset)} instances -> {out / 'train_ids.txt'}")
    else:
        split = med_split(dataset, schema, k_train=k, n_val=n_val, seed=seed)
        write_ids("train", split.train)
        write_ids("val", split.val)
        write_ids("test", split.test)
        click.echo(
            f"split {len(dataset)} instances into "
            f"{len(split.train)}/{len(split.val)}/{len(split.test)} -> {out}"
        )


@main.command("validate")
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--schema", "schema_name", required=True)
@_fail_with_exit_codes
def cmd_validate(dataset_path, schema_name):
    """Check every instance against the schema invariants."""
    dataset, schema = _load_pair(dataset_path, schema_name)
    issues = validate_dataset(dataset, schema)
    if not issues:
        click.echo(f"{len(dataset)} instances, no violations")
        return
    for instance_id, violations in sorted(issues.items()):
        for violation in violations:
            click.echo(f"{instance_id}: {violation}")
    raise DataError(f"{len(issues)} instances failed validation")


if __name__ == "__main__":
    main()
