"""Binary field files and CSV emission.

Field file layout (little-endian)::

    b"DLF1"                magic
    u32                    d
    u32 * d                points per axis
    f64 * d                box sides
    u8                     domain flag (0 = space, 1 = frequency)
    f64 * 2 * prod(n)      interleaved (re, im), row-major
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import Grid, SpectralField, make_grid, to_frequency, to_space

__all__ = ["MAGIC", "write_field", "read_field", "read_field_raw", "write_csv", "format_float"]

MAGIC = b"DLF1"
SPACE, FREQUENCY = 0, 1


def write_field(path: str | Path, field: SpectralField, domain: str = "frequency") -> None:
    """Write ``field`` to ``path``; ``domain="space"`` stores physical samples instead."""
    if domain not in ("space", "frequency"):
        raise ValueError(f"domain must be 'space' or 'frequency', got {domain!r}")
    grid = field.grid
    data = field.coeffs if domain == "frequency" else to_space(field)
    flag = FREQUENCY if domain == "frequency" else SPACE
    header = MAGIC + struct.pack(f"<I{grid.d}I{grid.d}dB", grid.d, *grid.n, *grid.L, flag)
    body = np.ascontiguousarray(data, dtype="<c16").tobytes()
    Path(path).write_bytes(header + body)


def read_field_raw(path: str | Path) -> tuple[Grid, np.ndarray, str]:
    """Return ``(grid, array, domain)`` exactly as stored."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a field file (bad magic)")
    off = 4
    (d,) = struct.unpack_from("<I", raw, off)
    off += 4
    if not 1 <= d <= 16:
        raise ValueError(f"{path}: implausible dimension {d}")
    n = struct.unpack_from(f"<{d}I", raw, off)
    off += 4 * d
    L = struct.unpack_from(f"<{d}d", raw, off)
    off += 8 * d
    (flag,) = struct.unpack_from("<B", raw, off)
    off += 1
    if flag not in (SPACE, FREQUENCY):
        raise ValueError(f"{path}: unknown domain flag {flag}")
    grid = make_grid(d, n, L)
    count = int(np.prod(n))
    if len(raw) - off != 16 * count:
        raise ValueError(f"{path}: payload has {len(raw) - off} bytes, expected {16 * count}")
    arr = np.frombuffer(raw, dtype="<c16", count=count, offset=off).reshape(n).astype(complex)
    return grid, arr, "frequency" if flag == FREQUENCY else "space"


def read_field(path: str | Path) -> SpectralField:
    """Read a field file as a :class:`SpectralField` whatever the stored domain."""
    grid, arr, domain = read_field_raw(path)
    if domain == "frequency":
        return SpectralField(grid, arr)
    return to_frequency(arr, grid)


def format_float(x) -> str:
    """Shortest round-trip repr; keeps CSV output byte-stable across runs."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: str | Path | None, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Write rows as CSV (``\\n`` line endings) and return the text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
