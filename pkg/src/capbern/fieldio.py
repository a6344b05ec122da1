"""Field serialization: little-endian binary with a small header, and CSV.

Binary layout: magic ``CBFD``, ``u32`` version, ``u32`` dim, ``dim`` x ``u32``
cell counts, ``dim`` x ``f64`` lo, ``dim`` x ``f64`` hi, then node values as
``f64`` in lexicographic (C) order.
"""

from __future__ import annotations

import csv
import io
import struct

import numpy as np

from .errors import BadFieldFile
from .grid import GridSpec, ScalarField

MAGIC = b"CBFD"
VERSION = 1


def to_bytes(f: ScalarField) -> bytes:
    g = f.grid
    head = MAGIC + struct.pack(f"<II{g.dim}I{g.dim}d{g.dim}d", VERSION, g.dim, *g.counts, *g.lo, *g.hi)
    return head + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def from_bytes(data: bytes) -> ScalarField:
    try:
        if data[:4] != MAGIC:
            raise BadFieldFile("missing field-file magic")
        version, dim = struct.unpack_from("<II", data, 4)
        if version != VERSION or dim not in (1, 2, 3):
            raise BadFieldFile(f"unsupported header (version {version}, dim {dim})")
        off = 12
        counts = struct.unpack_from(f"<{dim}I", data, off)
        off += 4 * dim
        lo = struct.unpack_from(f"<{dim}d", data, off)
        off += 8 * dim
        hi = struct.unpack_from(f"<{dim}d", data, off)
        off += 8 * dim
    except struct.error as exc:
        raise BadFieldFile(f"truncated header: {exc}") from exc
    if any(c < 1 for c in counts):
        raise BadFieldFile("cell counts must be positive")
    h = (hi[0] - lo[0]) / counts[0]
    try:
        grid = GridSpec(dim, lo, hi, h)
    except ValueError as exc:
        raise BadFieldFile(str(exc)) from exc
    if grid.counts != tuple(counts):
        raise BadFieldFile("axes do not share a common spacing")
    n = int(np.prod(grid.shape))
    body = data[off:]
    if len(body) != 8 * n:
        raise BadFieldFile(f"expected {8 * n} value bytes, found {len(body)}")
    vals = np.frombuffer(body, dtype="<f8").reshape(grid.shape)
    try:
        return ScalarField(grid, vals)
    except ValueError as exc:
        raise BadFieldFile(str(exc)) from exc


def save(f: ScalarField, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(f))


def load(path) -> ScalarField:
    try:
        with open(path, "rb") as fh:
            return from_bytes(fh.read())
    except OSError as exc:
        raise BadFieldFile(f"cannot read {path}: {exc}") from exc


def to_csv(f: ScalarField) -> str:
    g = f.grid
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{k + 1}" for k in range(g.dim)] + ["value"])
    for p, v in zip(g.points(), f.values.ravel()):
        w.writerow([repr(float(x)) for x in p] + [repr(float(v))])
    return buf.getvalue()
