"""Grid file formats: a self-describing binary, CSV (d <= 2) and 8-bit PGM.

Binary layout: the 8-byte magic ``KTFGRID1``, a little-endian uint32 header
length, a UTF-8 JSON header ``{"dims": [...], "designs": "uniform" | [[...], ...],
"dtype": "float64"}``, then the float64 little-endian payload in
last-axis-fastest order.

CSV: a 2-d grid is written one lattice row (first index) per line with the
second index running along the line; a 1-d grid is a single line.
PGM: binary P5 with maxval 255, values mapped to ``[0, 1]`` by ``v / 255``.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .lattice import GridSignal, LatticeError, LatticeShape

MAGIC = b"KTFGRID1"


class FormatError(ValueError):
    """Malformed grid file."""


def atomic_write(path, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_grid(signal: GridSignal) -> bytes:
    shape = signal.shape
    header = {
        "dims": list(shape.dims),
        "designs": "uniform" if shape.uniform and _default_design(shape) else [z.tolist() for z in shape.designs],
        "dtype": "float64",
    }
    hb = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<I", len(hb)) + hb + signal.values.astype("<f8").tobytes()


def _default_design(shape: LatticeShape) -> bool:
    return all(np.array_equal(z, np.arange(1, N + 1) / N) for z, N in zip(shape.designs, shape.dims))


def decode_grid(data: bytes) -> GridSignal:
    if len(data) < 12 or data[:8] != MAGIC:
        raise FormatError("not a KTF grid file (bad magic)")
    (hlen,) = struct.unpack("<I", data[8:12])
    try:
        header = json.loads(data[12:12 + hlen].decode())
        dims = tuple(int(v) for v in header["dims"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad grid header: {exc}") from exc
    if header.get("dtype", "float64") != "float64":
        raise FormatError("only float64 payloads are supported")
    payload = data[12 + hlen:]
    n = int(np.prod(dims))
    if len(payload) != 8 * n:
        raise FormatError(f"payload holds {len(payload) // 8} values, header says {n}")
    designs = None if header.get("designs", "uniform") == "uniform" else header["designs"]
    values = np.frombuffer(payload, dtype="<f8").astype(float)
    try:
        return GridSignal(LatticeShape(dims, designs), values)
    except LatticeError as exc:
        raise FormatError(str(exc)) from exc


def read_csv(path) -> GridSignal:
    text = Path(path).read_text()
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise FormatError("empty CSV grid")
    try:
        arr = np.array([[float(v) for v in ln.split(",")] for ln in rows])
    except ValueError as exc:
        raise FormatError(f"bad CSV value: {exc}") from exc
    if arr.shape[0] == 1:
        arr = arr[0]
    return GridSignal.from_array(arr)


def format_csv(signal: GridSignal) -> bytes:
    arr = signal.to_array()
    if arr.ndim > 2:
        raise FormatError("CSV grids are limited to d <= 2")
    arr = np.atleast_2d(arr)
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in arr).encode()


def read_pgm(path) -> GridSignal:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError("only binary P5 PGM is supported")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError("only 8-bit PGM is supported")
    pix = np.frombuffer(data[pos + 1:pos + 1 + w * h], dtype=np.uint8)
    if pix.size != w * h:
        raise FormatError("truncated PGM payload")
    return GridSignal.from_array(pix.reshape(h, w).astype(float) / 255.0)


def format_pgm(signal: GridSignal) -> bytes:
    arr = signal.to_array()
    if arr.ndim != 2:
        raise FormatError("PGM needs a 2-d grid")
    pix = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode() + pix.tobytes()


def guess_format(path) -> str:
    suffix = Path(path).suffix.lower()
    return {".csv": "csv", ".pgm": "pgm"}.get(suffix, "bin")


def read_grid(path, fmt: str | None = None) -> GridSignal:
    fmt = fmt or guess_format(path)
    if fmt == "csv":
        return read_csv(path)
    if fmt == "pgm":
        return read_pgm(path)
    if fmt == "bin":
        return decode_grid(Path(path).read_bytes())
    raise FormatError(f"unknown format {fmt!r}")


def write_grid(path, signal: GridSignal, fmt: str | None = None) -> None:
    fmt = fmt or guess_format(path)
    if fmt == "csv":
        data = format_csv(signal)
    elif fmt == "pgm":
        data = format_pgm(signal)
    elif fmt == "bin":
        data = encode_grid(signal)
    else:
        raise FormatError(f"unknown format {fmt!r}")
    atomic_write(path, data)


def bundled(name: str) -> Path:
    """Path of a data file shipped with the package (``sample16.bin``,
    ``synthetic.pgm``, ``report.schema.json``)."""
    from importlib.resources import files

    path = Path(str(files("ktf") / "data" / name))
    if not path.exists():
        raise FileNotFoundError(f"no bundled file {name!r}")
    return path
