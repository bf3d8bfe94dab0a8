"""Scalar fields sampled on uniform 2D grids, level quantization and file I/O.

A field with ``nx`` pixels per row and ``ny`` rows is stored as a read-only
``(ny, nx)`` float64 array; ``values[r, c]`` is the sample at the center of
the pixel in row ``r`` and column ``c``.

Native binary layout (all little-endian)::

    8 bytes   magic  b"CHCFLD01"
    8 bytes   nx     uint64
    8 bytes   ny     uint64
    nx*ny*8   values float64, row-major
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ScalarField2D",
    "LevelQuantizer",
    "quantize",
    "read_field",
    "write_field",
    "write_pgm",
    "pgm_bytes",
    "read_pgm",
    "write_csv",
    "FieldFormatError",
    "FieldHeaderError",
    "FieldSizeError",
]

MAGIC = b"CHCFLD01"
_HEADER = struct.Struct("<8sQQ")


class FieldFormatError(ValueError):
    """Base class for unreadable field files."""


class FieldHeaderError(FieldFormatError):
    """The file does not start with a valid field header."""


class FieldSizeError(FieldFormatError):
    """The payload length disagrees with the declared grid size."""


class ScalarField2D:
    """Immutable real-valued samples on an ``nx`` by ``ny`` pixel grid."""

    __slots__ = ("_values",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"field values must be 2D, got shape {arr.shape}")
        ny, nx = arr.shape
        if nx < 1 or ny < 1:
            raise ValueError("field must have at least one pixel")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        arr.flags.writeable = False
        self._values = arr

    @classmethod
    def from_flat(cls, nx: int, ny: int, flat) -> "ScalarField2D":
        flat = np.asarray(flat, dtype=np.float64).ravel()
        if flat.size != nx * ny:
            raise FieldSizeError(f"expected {nx * ny} values for {nx}x{ny}, got {flat.size}")
        return cls(flat.reshape(ny, nx))

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def nx(self) -> int:
        return self._values.shape[1]

    @property
    def ny(self) -> int:
        return self._values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self._values.shape

    def mean(self) -> float:
        return float(self._values.mean())

    def __eq__(self, other):
        if not isinstance(other, ScalarField2D):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._values, other._values))

    def __hash__(self):
        return hash((self.shape, self._values.tobytes()))

    def __repr__(self):
        return f"ScalarField2D(nx={self.nx}, ny={self.ny})"


@dataclass(frozen=True)
class LevelQuantizer:
    """Uniform partition of ``[lo, hi]`` into ``levels`` right-closed bins.

    The thresholds are ``lo + i * (hi - lo) / levels`` for ``i = 1..levels``.
    """

    lo: float = -1.0
    hi: float = 1.0
    levels: int = 256

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got lo={self.lo}, hi={self.hi}")
        if int(self.levels) != self.levels or self.levels < 1:
            raise ValueError(f"levels must be a positive integer, got {self.levels}")

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / self.levels

    def thresholds(self) -> np.ndarray:
        i = np.arange(1, self.levels + 1, dtype=np.float64)
        t = self.lo + i * (self.hi - self.lo) / self.levels
        t[-1] = self.hi
        return t

    def bin_index(self, v) -> np.ndarray:
        """Zero-based index of the smallest threshold ``>= min(v, hi)``."""
        t = self.thresholds()
        v = np.minimum(np.asarray(v, dtype=np.float64), self.hi)
        return np.searchsorted(t, v, side="left")


def quantize(field: ScalarField2D, q: LevelQuantizer) -> ScalarField2D:
    """Replace every value by the smallest threshold it does not exceed.

    Values above ``q.hi`` are clamped to the top threshold; values at or
    below the first threshold (including anything below ``q.lo``) map to it.
    """
    t = q.thresholds()
    return ScalarField2D(t[q.bin_index(field.values)])


# -- native binary format -------------------------------------------------


def write_field(field: ScalarField2D, path) -> None:
    path = Path(path)
    payload = _HEADER.pack(MAGIC, field.nx, field.ny) + field.values.astype("<f8").tobytes()
    _atomic_write(path, payload)


def read_field(path) -> ScalarField2D:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read field file {path}: {exc}") from exc
    if len(data) < _HEADER.size:
        raise FieldHeaderError(f"{path}: truncated header ({len(data)} bytes)")
    magic, nx, ny = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldHeaderError(f"{path}: bad magic {magic!r}")
    if nx < 1 or ny < 1:
        raise FieldHeaderError(f"{path}: invalid grid size {nx}x{ny}")
    body = len(data) - _HEADER.size
    if body != nx * ny * 8:
        raise FieldSizeError(
            f"{path}: declared {nx}x{ny} = {nx * ny} values, found {body / 8:g}"
        )
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    return ScalarField2D.from_flat(nx, ny, values)


# -- visualization exports ------------------------------------------------


def pgm_bytes(values: np.ndarray, lo: float, hi: float) -> bytes:
    """8-bit binary PGM of ``values`` after the affine map ``[lo, hi] -> [0, 255]``."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("PGM export needs a 2D array")
    if not hi > lo:
        raise ValueError("PGM range needs hi > lo")
    scaled = np.floor((values - lo) / (hi - lo) * 255.0)
    pix = np.clip(scaled, 0, 255).astype(np.uint8)
    ny, nx = pix.shape
    return f"P5\n{nx} {ny}\n255\n".encode("ascii") + pix.tobytes()


def write_pgm(field: ScalarField2D, path, lo: float = -1.0, hi: float = 1.0) -> None:
    _atomic_write(Path(path), pgm_bytes(field.values, lo, hi))


def read_pgm(path) -> np.ndarray:
    """Read a P5 image written by :func:`write_pgm` (no comment lines)."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise FieldHeaderError(f"{path}: not a binary PGM")
    nx, ny, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise FieldHeaderError(f"{path}: unsupported maxval {maxval}")
    pix = parts[4]
    if len(pix) != nx * ny:
        raise FieldSizeError(f"{path}: expected {nx * ny} pixels, found {len(pix)}")
    return np.frombuffer(pix, dtype=np.uint8).reshape(ny, nx)


def write_csv(field: ScalarField2D, path) -> None:
    lines = [",".join(repr(float(v)) for v in row) for row in field.values]
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode("ascii"))


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(payload)
    os.replace(tmp, path)
