#!/usr/bin/env python3
"""Recompute templates/checksums.json after editing any template asset."""

import hashlib
import json
from pathlib import Path

TEMPLATES = Path(__file__).resolve().parent.parent / "src" / "mieqa" / "templates"


def main() -> None:
    sums = {}
    for path in sorted(TEMPLATES.glob("*/*/*.txt")):
        rel = path.relative_to(TEMPLATES).as_posix()
        sums[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
    out = TEMPLATES / "checksums.json"
    out.write_text(json.dumps(sums, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{len(sums)} assets -> {out}")


if __name__ == "__main__":
    main()
