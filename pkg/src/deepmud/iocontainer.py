"""Minimal self-describing binary container for datasets and checkpoints.

Layout (all integers little-endian):

    bytes 0..3   magic b"GFN1"
    bytes 4..7   uint32 header length H
    bytes 8..8+H JSON header, UTF-8, sorted keys
    remainder    raw array blocks, C-order, little-endian dtypes,
                 concatenated in the order listed in header["blocks"]

The header carries ``kind`` (e.g. "dataset", "checkpoint"), ``format_version``,
a free-form ``meta`` dict, and ``blocks``: a list of {name, dtype, shape}
entries. Writing is atomic (temp file + rename) and byte-deterministic for
identical content, which the reproducibility tests rely on.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

MAGIC = b"GFN1"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Malformed or mismatched container file."""


def _canonical_dtype(arr: np.ndarray) -> np.dtype:
    dt = arr.dtype.newbyteorder("<")
    return dt


def write_container(path, kind: str, meta: dict, blocks: dict[str, np.ndarray]) -> None:
    """Write arrays plus JSON metadata atomically; no partial file on failure."""
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"output directory does not exist: {directory}")

    entries = []
    payload = []
    for name, arr in blocks.items():
        arr = np.ascontiguousarray(arr)
        dt = _canonical_dtype(arr)
        arr = arr.astype(dt, copy=False)
        entries.append({"name": name, "dtype": dt.str, "shape": list(arr.shape)})
        payload.append(arr.tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "blocks": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()

    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-container-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(np.uint32(len(header_bytes)).tobytes())
            fh.write(header_bytes)
            for chunk in payload:
                fh.write(chunk)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_container(path, expected_kind: str | None = None):
    """Returns (meta dict, blocks dict of arrays)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ContainerError(f"{path}: not a container file (bad magic)")
        raw_len = fh.read(4)
        if len(raw_len) != 4:
            raise ContainerError(f"{path}: truncated header length")
        header_len = int(np.frombuffer(raw_len, dtype="<u4")[0])
        header_bytes = fh.read(header_len)
        if len(header_bytes) != header_len:
            raise ContainerError(f"{path}: truncated header")
        try:
            header = json.loads(header_bytes.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContainerError(f"{path}: corrupt header: {exc}") from exc
        if header.get("format_version") != FORMAT_VERSION:
            raise ContainerError(f"{path}: unsupported format version "
                                 f"{header.get('format_version')}")
        if expected_kind is not None and header.get("kind") != expected_kind:
            raise ContainerError(f"{path}: expected kind {expected_kind!r}, "
                                 f"found {header.get('kind')!r}")
        blocks: dict[str, np.ndarray] = {}
        for entry in header["blocks"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise ContainerError(f"{path}: truncated block {entry['name']!r}")
            blocks[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        return header["meta"], blocks
