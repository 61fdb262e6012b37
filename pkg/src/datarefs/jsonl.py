"""Line-delimited JSON helpers shared by every stage.

All pipeline intermediates are JSONL so they can be inspected and
hand-edited between stages. Writes are deterministic (sorted keys,
fixed separators) so reruns are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator


def dumps(record: Any) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_jsonl(path: str | Path, records: Iterable[Any]) -> int:
    """Write records to path, one JSON object per line. Returns record count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dumps(record) + "\n")
            count += 1
    return count
