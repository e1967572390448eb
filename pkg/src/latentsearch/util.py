"""Small shared helpers: stable hashing, atomic writes, JSONL access."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Iterator


def stable_hash64(*parts: str) -> str:
    """16-hex-char digest of the given parts, stable across runs and processes."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()


def atomic_write_text(path: "Path | str", text: str) -> None:
    """Write via a temp file and rename, so a crash never corrupts the target."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def jsonl_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False) + "\n"


def iter_jsonl(path: Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
