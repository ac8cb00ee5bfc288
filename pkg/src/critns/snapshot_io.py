"""Binary snapshot format, CSV norm tables and atomic JSON output.

Snapshot layout (little-endian):

    5 bytes   magic ``CRNS1``
    uint32    n_modes
    float64   box_length
    uint32    number of vector fields F
    complex64 coefficients, F x 3 x n^3, full spectrum, wavenumbers in
              lexicographic order over [-n/2, n/2)^3 (x slowest)

The coefficients are the normalized Fourier coefficients ``fft(u) / n^3``.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import SnapshotFormatError
from .spectral_field import GridSpec, SpectralField, _symmetrize
from .trajectory import Trajectory

MAGIC = b"CRNS1"
_HEADER = struct.Struct("<5sIdI")


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temporary file in the same directory and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: str | os.PathLike, obj) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n")


def _full_spectrum(f: SpectralField) -> np.ndarray:
    """rfft half spectrum -> full spectrum ordered over [-n/2, n/2)^3."""
    n = f.grid.n_modes
    c = f.coeffs
    full = np.empty(c.shape[:-3] + (n, n, n), complex)
    h = n // 2 + 1
    full[..., :h] = c
    # c(-k) = conj c(k) fills the negative kz half
    tail = np.conj(c[..., 1 : n - h + 1][..., ::-1])
    tail = np.roll(np.flip(tail, axis=(-3, -2)), 1, axis=(-3, -2))
    full[..., h:] = tail
    return np.fft.fftshift(full, axes=(-3, -2, -1))


def _half_spectrum(full: np.ndarray, n: int) -> np.ndarray:
    c = np.fft.ifftshift(full, axes=(-3, -2, -1))[..., : n // 2 + 1]
    return _symmetrize(np.ascontiguousarray(c))


def encode_fields(fields: Sequence[SpectralField]) -> bytes:
    if not fields:
        raise ValueError("nothing to export")
    g = fields[0].grid
    for f in fields:
        if f.grid != g or f.comp_shape != (3,):
            raise ValueError("exported fields must be vector fields on one grid")
    body = np.stack([_full_spectrum(f) for f in fields]).astype("<c8")
    body += np.complex64(0)  # -0.0 -> +0.0 so equal values give equal bytes
    return _HEADER.pack(MAGIC, g.n_modes, g.box_length, len(fields)) + body.tobytes()


def decode_fields(data: bytes, dealias_fraction: float = 2.0 / 3.0) -> list[SpectralField]:
    if len(data) < _HEADER.size:
        raise SnapshotFormatError("truncated header")
    magic, n, L, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if n < 4 or n % 2 or not L > 0 or count < 1:
        raise SnapshotFormatError(f"invalid header n={n} L={L} fields={count}")
    expected = _HEADER.size + count * 3 * n**3 * 8
    if len(data) != expected:
        raise SnapshotFormatError(f"payload has {len(data)} bytes, expected {expected}")
    full = np.frombuffer(data, "<c8", offset=_HEADER.size).astype(complex).reshape(count, 3, n, n, n)
    if not np.all(np.isfinite(full)):
        raise SnapshotFormatError("non-finite coefficients")
    g = GridSpec(n, L, dealias_fraction)
    return [SpectralField(g, _half_spectrum(full[i], n)) for i in range(count)]


def export_field(path: str | os.PathLike, f: SpectralField) -> None:
    atomic_write_bytes(path, encode_fields([f]))


def export_fields(path: str | os.PathLike, fields: Sequence[SpectralField]) -> None:
    atomic_write_bytes(path, encode_fields(fields))


def ingest_fields(path: str | os.PathLike) -> list[SpectralField]:
    """Read every field of a snapshot file.

    Raises:
        SnapshotFormatError: on a bad magic, inconsistent header or wrong size.
    """
    return decode_fields(Path(path).read_bytes())


def ingest_field(path: str | os.PathLike) -> SpectralField:
    fields = ingest_fields(path)
    if len(fields) != 1:
        raise SnapshotFormatError(f"expected one field, found {len(fields)}")
    return fields[0]


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def norms_csv(traj: Trajectory) -> str:
    """One row per snapshot with every :class:`NormRecord` column."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = traj.records[0].field_names()
    w.writerow(names)
    for r in traj.records:
        d = r.as_dict()
        w.writerow([_fmt(d[k]) for k in names])
    return buf.getvalue()


def write_norms_csv(path: str | os.PathLike, traj: Trajectory) -> None:
    atomic_write_text(path, norms_csv(traj))


def write_rows_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    atomic_write_text(path, buf.getvalue())


def read_norms_csv(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}
