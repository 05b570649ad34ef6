#!/usr/bin/env python3
"""Regenerate the committed fixture datasets under datasets/fixtures/."""

from pathlib import Path

from mieqa.fixtures import DEFAULT_SEED, write_fixture_tree

ROOT = Path(__file__).resolve().parent.parent / "datasets" / "fixtures"


def main() -> None:
    paths = write_fixture_tree(ROOT, size=60, seed=DEFAULT_SEED)
    for task, path in paths.items():
        print(f"{task.value}: {path}")


if __name__ == "__main__":
    main()
