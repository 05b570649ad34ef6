#!/usr/bin/env python3
"""Record a transcript from one run, replay it offline, and warm the cache.

The transcript file maps request digests (prompt text + image bytes +
decoding parameters) to completions, so a recorded experiment replays with
zero live backend calls and byte-identical outputs.
"""

import tempfile
from pathlib import Path

from mieqa.backends import CachedBackend, RecordingBackend, TranscriptBackend
from mieqa.model import load_schema, read_dataset
from mieqa.oracle import OracleBackend
from mieqa.pipeline import PipelineConfig
from mieqa.runner import run_dataset, write_run_outputs

FIXTURES = Path(__file__).resolve().parent.parent / "datasets" / "fixtures"


def main() -> None:
    work = Path(tempfile.mkdtemp(prefix="mieqa-cache-demo-"))
    dataset = read_dataset(FIXTURES / "mre.jsonl")
    schema = load_schema("mnre_v2")

    transcript = work / "transcript.jsonl"
    recorder = RecordingBackend(OracleBackend(dataset, schema), transcript)
    run_dataset(dataset, schema, recorder, PipelineConfig())
    print(f"recorded {sum(1 for _ in open(transcript))} rows to {transcript}")

    cache_dir = work / "cache"
    for attempt in ("cold", "warm"):
        inner = TranscriptBackend(transcript, strict=True)
        backend = CachedBackend(inner, cache_dir)
        result = run_dataset(dataset, schema, backend, PipelineConfig())
        report = write_run_outputs(result, work / attempt)
        stats = backend.stats()
        print(
            f"{attempt} run: backend_calls={stats['calls']} cache_hits={stats['cache_hits']} "
            f"{report.summary_line()}"
        )

    cold = (work / "cold" / "predictions.jsonl").read_bytes()
    warm = (work / "warm" / "predictions.jsonl").read_bytes()
    print(f"predictions byte-identical across runs: {cold == warm}")
    print(f"artifacts under {work}")


if __name__ == "__main__":
    main()
