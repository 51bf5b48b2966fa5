"""Binary feature-matrix files.

Layout: 16-byte header (magic ``PLF1``, uint32 rows, uint32 cols, uint32
reserved, all little-endian) followed by row-major float32 payload. The
format is deliberately language-neutral and bit-exact.
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PLF1"
_HEADER = struct.Struct("<4sIII")


def write_matrix(path, matrix):
    """Write a 2-D float array to ``path`` in PLF1 format."""
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, m.shape[0], m.shape[1], 0))
        f.write(m.tobytes())


def read_matrix(path):
    """Read a PLF1 file back as a float32 [rows x cols] array."""
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, rows, cols, _ = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        payload = f.read(rows * cols * 4)
    if len(payload) != rows * cols * 4:
        raise ValueError(f"{path}: truncated payload ({len(payload)} bytes for {rows}x{cols})")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
