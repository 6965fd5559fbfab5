"""Matrix file I/O: the SAMX binary format and headerless CSV interchange.

SAMX layout, all little-endian:

    bytes 0..3    magic "SAMX"
    bytes 4..7    u32 row count
    bytes 8..11   u32 column count
    bytes 12..15  u32 reserved, written as zero
    bytes 16..    rows*cols float64 values, row-major

The 16-byte header is followed immediately by the payload; readers validate
the magic, the declared shape against the file size, and finiteness.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .linalg import as_matrix

MAGIC = b"SAMX"
_HEADER = struct.Struct("<4sIII")


def write_samx(path, a) -> None:
    """Write a matrix to ``path`` in SAMX format."""
    a = as_matrix(a)
    rows, cols = a.shape
    if rows >= 2**32 or cols >= 2**32:
        raise ValueError(f"shape {a.shape} does not fit the u32 header fields")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols, 0))
        fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_samx(path) -> np.ndarray:
    """Read a SAMX file back into a float64 row-major array."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, rows, cols, _ = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if rows < 1 or cols < 1:
        raise ValueError(f"{path}: declared shape {rows}x{cols} is empty")
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise ValueError(
            f"{path}: size {len(raw)} does not match declared {rows}x{cols}"
            f" payload ({expected} bytes)"
        )
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    out = data.reshape(rows, cols).astype(np.float64)
    return as_matrix(out, str(path))


def write_csv_matrix(path, a) -> None:
    """Write a matrix as headerless CSV with round-trippable float repr."""
    a = as_matrix(a)
    with open(path, "w", newline="") as fh:
        for row in a:
            fh.write(",".join(repr(v) for v in row.tolist()))
            fh.write("\n")


def format_cell(v) -> str:
    """One CSV cell: ints as plain digits, floats via round-trippable repr."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv_table(path, header, rows) -> None:
    """Write a named-column CSV with deterministic formatting."""
    width = len(header)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header))
        fh.write("\n")
        for i, row in enumerate(rows):
            if len(row) != width:
                raise ValueError(
                    f"row {i} has {len(row)} fields, header has {width}")
            fh.write(",".join(format_cell(v) for v in row))
            fh.write("\n")


def read_csv_matrix(path) -> np.ndarray:
    """Read a headerless CSV matrix; every row must have the same width."""
    rows: list[list[float]] = []
    with open(path, "r") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{ln}: unparsable entry") from exc
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    for ln, row in enumerate(rows, 1):
        if len(row) != width:
            raise ValueError(
                f"{path}:{ln}: ragged row (got {len(row)} fields, expected {width})"
            )
    return as_matrix(np.array(rows, dtype=np.float64), str(path))
