"""CSV metric records and PGM images."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import BrwpError, UsageError

CSV_HEADER = ("iter", "metric", "dim", "value")


class OutputError(BrwpError, OSError):
    """Reading or writing a result file failed."""


def format_row(row) -> list:
    it, metric, dim, value = row
    # repr gives the shortest string that round-trips the float exactly
    return [str(int(it)), str(metric), str(int(dim)), repr(float(value))]


class CsvStream:
    """Append metric rows to a CSV file as they are produced."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", newline="")
        except OSError as exc:
            raise OutputError(f"{self.path}: {exc.strerror}") from exc
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(CSV_HEADER)

    def write(self, rows) -> None:
        for row in rows:
            self._writer.writerow(format_row(row))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def emit_csv(rows, path) -> None:
    """Write ``(iter, metric, dim, value)`` rows; an empty list gives a header-only file."""
    with CsvStream(path) as out:
        out.write(rows)


def read_csv(path) -> list:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != CSV_HEADER:
                raise OutputError(f"{path}: unexpected header {header}")
            return [(int(i), m, int(d), float(v)) for i, m, d, v in reader]
    except OSError as exc:
        raise OutputError(f"{path}: {exc.strerror}") from exc


def write_matrix_csv(array, path) -> None:
    """Plain numeric CSV, one row per particle, exact float round trip."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in np.atleast_2d(array):
                w.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise OutputError(f"{path}: {exc.strerror}") from exc


def to_pixels(image, lo: float | None = None, hi: float | None = None, maxval: int = 65535):
    """Scale a float image linearly onto ``0..maxval`` integers, clipping outside ``[lo, hi]``."""
    img = np.asarray(image, dtype=float)
    lo = float(np.min(img)) if lo is None else lo
    hi = float(np.max(img)) if hi is None else hi
    if hi <= lo:
        return np.zeros(img.shape, dtype=np.uint16)
    scaled = np.clip((img - lo) / (hi - lo), 0.0, 1.0) * maxval
    return np.rint(scaled).astype(np.uint16)


def write_pgm(image, path, binary: bool = True, maxval: int = 65535) -> None:
    """Write an integer image as PGM (``P5`` binary or ``P2`` ASCII)."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise UsageError(f"PGM needs a 2-D image, got shape {img.shape}")
    if not np.issubdtype(img.dtype, np.integer):
        raise UsageError("PGM pixels must be integers; use to_pixels for float images")
    if not 0 < maxval < 65536:
        raise UsageError("maxval must lie in 1..65535")
    if img.size and (img.min() < 0 or img.max() > maxval):
        raise UsageError(f"pixel values must lie in 0..{maxval}")
    rows, cols = img.shape
    header = f"{'P5' if binary else 'P2'}\n{cols} {rows}\n{maxval}\n".encode()
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        body = img.astype(dtype).tobytes()
    else:
        body = "\n".join(" ".join(str(int(v)) for v in row) for row in img).encode() + b"\n"
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(header + body)
    except OSError as exc:
        raise OutputError(f"{path}: {exc.strerror}") from exc


def _tokens(data: bytes, count: int, start: int):
    # header tokens, skipping '#' comments; returns tokens and the offset after the last one
    out = []
    i = start
    while len(out) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise UsageError("truncated PGM header")
        out.append(data[i:j])
        i = j
    return out, i


def read_pgm(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OutputError(f"{path}: {exc.strerror}") from exc
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise UsageError(f"{path}: not a PGM file")
    (w, h, mx), off = _tokens(data, 3, 2)
    cols, rows, maxval = int(w), int(h), int(mx)
    if magic == b"P5":
        dtype = ">u2" if maxval > 255 else "u1"
        body = data[off + 1 :]
        img = np.frombuffer(body, dtype=dtype, count=rows * cols)
    else:
        img = np.array(data[off:].split()[: rows * cols], dtype=np.int64)
    if img.size != rows * cols:
        raise UsageError(f"{path}: expected {rows * cols} pixels, found {img.size}")
    return img.reshape(rows, cols).astype(np.uint16 if maxval > 255 else np.uint8)
