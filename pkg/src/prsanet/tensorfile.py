"""Portable binary tensor files.

One file holds a single 2-D float32 matrix: a 16-byte little-endian header
(magic ``PRSF``, u32 rows, u32 cols, u32 flags) followed by the row-major
float32 payload.  The same container backs snippet-feature files, label-map
caches and checkpoint entries; higher-rank tensors are stored flattened to
2-D with their true shape recorded in whatever metadata travels alongside.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

MAGIC = b"PRSF"
HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """Raised when a tensor file is malformed or inconsistent."""


def write_matrix(path_or_fp: Union[str, Path, BinaryIO], matrix: np.ndarray) -> None:
    """Write a 2-D float32 matrix to ``path_or_fp``.

    Non-float32 input is cast; non-finite values are rejected so that a
    written file always round-trips through :func:`read_matrix`.
    """
    arr = np.ascontiguousarray(matrix, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {matrix.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("refusing to write non-finite values")
    header = HEADER.pack(MAGIC, arr.shape[0], arr.shape[1], 0)
    if hasattr(path_or_fp, "write"):
        path_or_fp.write(header)
        path_or_fp.write(arr.tobytes())
    else:
        with open(path_or_fp, "wb") as fp:
            fp.write(header)
            fp.write(arr.tobytes())


def read_matrix(
    path_or_fp: Union[str, Path, BinaryIO],
    expected_rows: int | None = None,
    expected_cols: int | None = None,
) -> np.ndarray:
    """Read a matrix, validating magic, shape and finiteness.

    ``expected_rows``/``expected_cols`` let callers pin the shape declared by
    an external manifest; a mismatch is a :class:`FormatError`.
    """
    if hasattr(path_or_fp, "read"):
        data = path_or_fp.read()
    else:
        data = Path(path_or_fp).read_bytes()
    if len(data) < HEADER.size:
        raise FormatError(f"truncated header: {len(data)} bytes")
    magic, rows, cols, flags = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if flags != 0:
        raise FormatError(f"unsupported flags {flags}")
    if expected_rows is not None and rows != expected_rows:
        raise FormatError(f"expected {expected_rows} rows, header says {rows}")
    if expected_cols is not None and cols != expected_cols:
        raise FormatError(f"expected {expected_cols} cols, header says {cols}")
    payload = data[HEADER.size:]
    nbytes = rows * cols * 4
    if len(payload) != nbytes:
        raise FormatError(
            f"payload is {len(payload)} bytes, header implies {nbytes}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
    if not np.isfinite(arr).all():
        raise FormatError("payload contains non-finite values")
    return arr
