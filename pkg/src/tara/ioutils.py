"""Line-delimited JSON parsing and atomic file writes shared across modules."""

from __future__ import annotations

import json
import os
import tempfile
from typing import Any, Iterable, Iterator


def dumps_record(obj: dict) -> str:
    """Canonical single-line JSON used by every file this package writes."""
    return json.dumps(obj, ensure_ascii=False)


def iter_jsonl(path: str) -> Iterator[tuple[int, Any]]:
    """Yield (line_number, parsed object) for each non-empty line.

    Line numbers are 1-based so error messages point at the actual file line.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed line: {exc.msg}") from exc


def _atomic_writer(path: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    return fd, tmp


def write_bytes_atomic(path: str, data: bytes) -> None:
    """Write via a temp file + rename so readers never see partial output."""
    fd, tmp = _atomic_writer(path)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path: str, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))


def write_jsonl_atomic(path: str, rows: Iterable[dict]) -> None:
    body = "".join(dumps_record(row) + "\n" for row in rows)
    write_text_atomic(path, body)
