"""Bit-exact binary embedding file format with a JSONL id manifest.

Layout (little-endian throughout):

    bytes 0-7    magic "TARAEMB1"
    bytes 8-11   version, u32 = 1
    bytes 12-15  rows, u32
    bytes 16-19  dim, u32
    byte  20     dtype code (0 = IEEE-754 binary32)
    byte  21     normalized flag (0/1)
    bytes 22-23  reserved, zero

The 24-byte header keeps the payload 8-byte aligned. The payload is the
row-major float32 matrix; the manifest is one {"row", "id"} object per line
in row order.
"""

from __future__ import annotations

import struct

import numpy as np

from tara.embeddings import EmbeddingMatrix
from tara.ioutils import iter_jsonl, write_bytes_atomic, write_jsonl_atomic

MAGIC = b"TARAEMB1"
VERSION = 1
DTYPE_F32 = 0
HEADER_SIZE = 24
_HEADER_FMT = "<8sIIIBB2s"


class EmbFileError(ValueError):
    pass


def write_embeddings(m: EmbeddingMatrix, path: str, manifest_path: str) -> None:
    header = struct.pack(
        _HEADER_FMT, MAGIC, VERSION, m.rows, m.dim, DTYPE_F32,
        1 if m.normalized else 0, b"\x00\x00",
    )
    payload = np.ascontiguousarray(m.data, dtype="<f4").tobytes()
    write_bytes_atomic(path, header + payload)
    write_jsonl_atomic(
        manifest_path, ({"row": i, "id": item_id} for i, item_id in enumerate(m.ids))
    )


def _read_manifest(manifest_path: str, rows: int) -> list[str]:
    entries: dict[int, str] = {}
    for lineno, obj in iter_jsonl(manifest_path):
        if not isinstance(obj, dict) or "row" not in obj or "id" not in obj:
            raise EmbFileError(f"{manifest_path}:{lineno}: expected {{'row', 'id'}}")
        row = obj["row"]
        if row in entries:
            raise EmbFileError(f"{manifest_path}: duplicate row index {row}")
        entries[row] = obj["id"]
    missing = [i for i in range(rows) if i not in entries]
    if missing:
        raise EmbFileError(f"{manifest_path}: manifest row gaps, first missing {missing[0]}")
    if len(entries) != rows:
        extra = sorted(set(entries) - set(range(rows)))
        raise EmbFileError(f"{manifest_path}: unexpected row indices {extra[:5]}")
    return [entries[i] for i in range(rows)]


def read_embeddings(path: str, manifest_path: str) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER_SIZE:
        raise EmbFileError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    magic, version, rows, dim, dtype, normalized, _reserved = struct.unpack(
        _HEADER_FMT, blob[:HEADER_SIZE]
    )
    if magic != MAGIC:
        raise EmbFileError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise EmbFileError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise EmbFileError(f"{path}: unsupported dtype code {dtype}")
    expected = rows * dim * 4
    actual = len(blob) - HEADER_SIZE
    if expected != actual:
        raise EmbFileError(
            f"{path}: size mismatch: expected {expected} payload bytes, got {actual}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=HEADER_SIZE).reshape(rows, dim)
    ids = _read_manifest(manifest_path, rows)
    return EmbeddingMatrix(ids, data, normalized=bool(normalized))
