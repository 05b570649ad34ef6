from __future__ import annotations

from pathlib import Path

import pytest

from mieqa.model import Dataset, TaskKind, load_schema, read_dataset

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "datasets" / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"

SCHEMA_BY_TASK = {
    TaskKind.MNER: "twitter17",
    TaskKind.MRE: "mnre_v2",
    TaskKind.MIED: "m2e2_image",
    TaskKind.MTED: "m2e2_text",
}


@pytest.fixture(scope="session")
def fixture_datasets() -> dict[TaskKind, Dataset]:
    return {task: read_dataset(FIXTURES / f"{task.value}.jsonl") for task in TaskKind}


@pytest.fixture(scope="session")
def schemas():
    return {task: load_schema(name) for task, name in SCHEMA_BY_TASK.items()}


def golden_text(name: str) -> str:
    """Golden file contents; files carry exactly one trailing newline."""
    raw = (GOLDEN / name).read_text(encoding="utf-8")
    assert raw.endswith("\n")
    return raw[:-1]
