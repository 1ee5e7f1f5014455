"""File formats: spectrum traces, absorption images, JSON reports, atomic writes.

Trace files are comma-separated with a typed ``#`` header::

    # kind = transmission
    # stage = instrumented
    # detuning_unit = MHz
    detuning_MHz,value
    -80.0,0.99913
    ...

Images are either portable graymaps (P2 or P5) or delimited matrices; both
carry ``# pixel_um = <size>`` in a comment, and graymaps also carry
``# full_scale = <value>`` mapping the maximum grey level to a transmission.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .constants import TWO_PI
from .lineshape import SpectrumTrace
from .structure import ParseError

DETUNING_UNITS = {"MHz": TWO_PI * 1e6, "rad/s": 1.0}


# -- atomic writes --------------------------------------------------------


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode())


def _clean(obj):
    """Make numpy scalars/arrays JSON-serializable; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


# -- spectrum traces ------------------------------------------------------


def format_spectrum_csv(trace: SpectrumTrace, unit: str = "rad/s") -> str:
    if unit not in DETUNING_UNITS:
        raise ValueError(f"unknown detuning unit {unit!r}")
    scale = DETUNING_UNITS[unit]
    lines = [
        f"# kind = {trace.kind}",
        f"# stage = {trace.stage}",
        f"# detuning_unit = {unit}",
        f"detuning_{unit},value",
    ]
    for d, v in zip(trace.detuning, trace.value):
        lines.append(f"{float(d) / scale!r},{float(v)!r}")
    return "\n".join(lines) + "\n"


def write_spectrum_csv(path, trace: SpectrumTrace, unit: str = "rad/s") -> Path:
    return atomic_write_text(path, format_spectrum_csv(trace, unit))


def parse_spectrum_csv_text(text: str, source: str = "<trace>") -> SpectrumTrace:
    meta = {}
    column_line = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = (s.strip() for s in body.split("=", 1))
                meta[k] = (v, lineno)
            continue
        if column_line is None:
            if "detuning_unit" not in meta:
                raise ParseError(f"{source}:{lineno}: missing '# detuning_unit' header")
            cols = [c.strip() for c in line.split(",")]
            unit, unit_line = meta["detuning_unit"]
            if unit not in DETUNING_UNITS:
                raise ParseError(f"{source}:{unit_line}: unknown detuning unit {unit!r}")
            if len(cols) != 2 or cols[1] != "value" or not cols[0].startswith("detuning"):
                raise ParseError(f"{source}:{lineno}: expected column header 'detuning_<unit>,value'")
            col_unit = cols[0][len("detuning_"):] if cols[0] != "detuning" else unit
            if col_unit != unit:
                raise ParseError(
                    f"{source}:{lineno}: unit mismatch, column says {col_unit!r} "
                    f"but header says {unit!r}"
                )
            column_line = lineno
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"{source}:{lineno}: expected 2 columns, got {len(parts)}")
        try:
            d, v = float(parts[0]), float(parts[1])
        except ValueError:
            raise ParseError(f"{source}:{lineno}: not a number") from None
        if not (math.isfinite(d) and math.isfinite(v)):
            raise ParseError(f"{source}:{lineno}: non-finite value")
        if rows:
            step = d - rows[-1][0]
            if step == 0 or (len(rows) > 1 and (step > 0) != (rows[1][0] > rows[0][0])):
                raise ParseError(f"{source}:{lineno}: detunings are not strictly monotone")
        rows.append((d, v))
    if column_line is None:
        raise ParseError(f"{source}: missing header")
    if len(rows) < 2:
        raise ParseError(f"{source}: need at least 2 data rows")
    unit = meta["detuning_unit"][0]
    kind = meta.get("kind", ("transmission", 0))[0]
    stage = meta.get("stage", ("instrumented", 0))[0]
    arr = np.array(rows)
    try:
        return SpectrumTrace(arr[:, 0] * DETUNING_UNITS[unit], arr[:, 1], kind=kind, stage=stage)
    except ValueError as exc:
        raise ParseError(f"{source}: {exc}") from None


def parse_spectrum_csv(path) -> SpectrumTrace:
    path = Path(path)
    return parse_spectrum_csv_text(path.read_text(), str(path))


# -- absorption images ----------------------------------------------------


def _header_value(comments, key, source):
    for c in comments:
        if "=" in c:
            k, v = (s.strip() for s in c.split("=", 1))
            if k == key:
                try:
                    return float(v)
                except ValueError:
                    raise ParseError(f"{source}: bad {key} value {v!r}") from None
    return None


def format_image_matrix(image: np.ndarray, pixel_um: float) -> str:
    lines = [f"# pixel_um = {float(pixel_um)!r}"]
    for row in np.asarray(image, dtype=float):
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def format_pgm(image: np.ndarray, pixel_um: float, full_scale: float | None = None) -> bytes:
    """Binary 16-bit graymap (P5)."""
    image = np.asarray(image, dtype=float)
    full = float(full_scale if full_scale is not None else image.max())
    grey = np.clip(np.rint(image / full * 65535), 0, 65535).astype(">u2")
    ny, nx = image.shape
    head = f"P5\n# pixel_um = {float(pixel_um)!r}\n# full_scale = {full!r}\n{nx} {ny}\n65535\n"
    return head.encode() + grey.tobytes()


def write_image(path, image, pixel_um: float) -> Path:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return atomic_write_bytes(path, format_pgm(image, pixel_um))
    return atomic_write_text(path, format_image_matrix(image, pixel_um))


def _parse_pgm(data: bytes, source: str):
    tokens, comments = [], []
    pos = 0
    magic = data[:2]
    pos = 2
    # header: magic, width, height, maxval with interleaved comments
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            end = data.index(b"\n", pos)
            comments.append(data[pos + 1:end].decode().strip())
            pos = end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    nx, ny, maxval = tokens
    pos += 1  # single whitespace before raster
    if magic == b"P5":
        dtype = ">u2" if maxval > 255 else "u1"
        raster = np.frombuffer(data, dtype=dtype, count=nx * ny, offset=pos).astype(float)
    else:
        body = data[pos:].decode()
        vals = [line.split("#", 1)[0] for line in body.splitlines()]
        raster = np.array(" ".join(vals).split(), dtype=float)
        if raster.size != nx * ny:
            raise ParseError(f"{source}: expected {nx * ny} grey values, got {raster.size}")
    full = _header_value(comments, "full_scale", source) or 1.0
    return raster.reshape(ny, nx) / maxval * full, comments


def read_image(path) -> tuple[np.ndarray, float]:
    """Return (transmission image, pixel size in metres)."""
    path = Path(path)
    data = path.read_bytes()
    source = str(path)
    if data[:2] in (b"P2", b"P5"):
        try:
            image, comments = _parse_pgm(data, source)
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{source}: malformed graymap ({exc})") from None
    else:
        comments, rows = [], []
        for lineno, raw in enumerate(data.decode().splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                comments.append(line[1:].strip())
                continue
            try:
                rows.append([float(v) for v in line.replace(",", " ").split()])
            except ValueError:
                raise ParseError(f"{source}:{lineno}: not a number") from None
            if len(rows[-1]) != len(rows[0]):
                raise ParseError(f"{source}:{lineno}: ragged matrix row")
        if not rows:
            raise ParseError(f"{source}: empty image")
        image = np.array(rows)
    pixel = _header_value(comments, "pixel_um", source)
    if pixel is None or pixel <= 0:
        raise ParseError(f"{source}: missing or invalid '# pixel_um' header")
    return image, pixel * 1e-6
