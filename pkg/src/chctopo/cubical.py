"""Sublevel-set cubical filtrations of pixel fields and their persistence.

Cells of the full cubical complex on an ``nx`` by ``ny`` pixel grid are
addressed in doubled coordinates: the cell at column ``i`` (``0..2nx``) and
row ``j`` (``0..2ny``) has dimension ``i % 2 + j % 2``. Pixel ``(r, c)`` of
the field is the 2-cell ``(i, j) = (2c + 1, 2r + 1)``. Filtration values are
stored as a ``(2ny + 1, 2nx + 1)`` array, so a cell's linear index is the
row-major index ``j * (2nx + 1) + i`` into that array.

Persistence is computed by reducing the Z/2 boundary matrix with cells in
``(value, dimension, linear index)`` order. The reduction kernel is the
compiled ``chctopo._reduce`` extension when it is importable, otherwise the
pure-Python ``chctopo._reduce_py``; set ``CHCTOPO_KERNEL=python`` to force
the fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .diagram import PersistenceDiagram
from .field import ScalarField2D

from . import _reduce_py

if os.environ.get("CHCTOPO_KERNEL", "").lower() == "python":
    _kernel = _reduce_py.reduce_boundary
    KERNEL = "python"
else:
    try:
        from ._reduce import reduce_boundary as _kernel
        KERNEL = "compiled"
    except ImportError:  # pragma: no cover - depends on the build
        _kernel = _reduce_py.reduce_boundary
        KERNEL = "python"

__all__ = [
    "CubicalFiltration",
    "PersistencePair",
    "build_filtration",
    "boundary_matrix",
    "compute_persistence",
    "persistence_pairs",
    "betti_at_level",
    "sublevel_counts",
    "KERNEL",
]


@dataclass(frozen=True)
class PersistencePair:
    dim: int
    birth: float
    death: float


class CubicalFiltration:
    """Filtering function on the full cubical complex of a pixel grid."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        h, w = values.shape
        if h % 2 == 0 or w % 2 == 0 or h < 3 or w < 3:
            raise ValueError(f"doubled-coordinate array must have odd sides >= 3, got {values.shape}")
        values = values.copy()
        values.flags.writeable = False
        self.values = values
        self.ny = (h - 1) // 2
        self.nx = (w - 1) // 2

    @property
    def n_cells(self) -> int:
        return self.values.size

    def dims(self) -> np.ndarray:
        h, w = self.values.shape
        j, i = np.indices((h, w))
        return ((i % 2) + (j % 2)).astype(np.int8)

    def levels(self) -> np.ndarray:
        """Sorted distinct filtration values."""
        return np.unique(self.values)

    def value(self, i: int, j: int) -> float:
        return float(self.values[j, i])

    def is_monotone(self) -> bool:
        """True when every face value is <= the value of each coface."""
        v = self.values
        ok = np.all(v[:, 1::2] >= v[:, 0:-1:2]) and np.all(v[:, 1::2] >= v[:, 2::2])
        ok = ok and np.all(v[1::2, :] >= v[0:-1:2, :]) and np.all(v[1::2, :] >= v[2::2, :])
        return bool(ok)


def build_filtration(field: ScalarField2D) -> CubicalFiltration:
    """Assign every cell the minimum value over the pixels containing it."""
    pix = field.values
    ny, nx = pix.shape
    out = np.full((2 * ny + 1, 2 * nx + 1), np.inf)
    out[1::2, 1::2] = pix
    p = np.pad(pix, ((0, 0), (1, 1)), constant_values=np.inf)
    out[1::2, 0::2] = np.minimum(p[:, :-1], p[:, 1:])
    p = np.pad(pix, ((1, 1), (0, 0)), constant_values=np.inf)
    out[0::2, 1::2] = np.minimum(p[:-1], p[1:])
    p = np.pad(pix, 1, constant_values=np.inf)
    out[0::2, 0::2] = np.minimum(
        np.minimum(p[:-1, :-1], p[:-1, 1:]), np.minimum(p[1:, :-1], p[1:, 1:])
    )
    return CubicalFiltration(out)


def _faces(h: int, w: int) -> np.ndarray:
    """``(h*w, 4)`` array of face linear indices, ``-1`` padded."""
    j, i = np.indices((h, w))
    lin = (j * w + i).ravel()
    i, j = i.ravel(), j.ravel()
    faces = np.full((h * w, 4), -1, dtype=np.int64)
    odd_i = (i % 2) == 1
    odd_j = (j % 2) == 1
    faces[odd_i, 0] = lin[odd_i] - 1
    faces[odd_i, 1] = lin[odd_i] + 1
    faces[odd_j, 2] = lin[odd_j] - w
    faces[odd_j, 3] = lin[odd_j] + w
    return faces


def boundary_matrix(filt: CubicalFiltration):
    """Boundary matrix in filtration order.

    Returns ``(order, indptr, indices, dims)`` where ``order[r]`` is the linear
    index of the cell with rank ``r``, and the CSC arrays refer to ranks.
    """
    h, w = filt.values.shape
    flat = filt.values.ravel()
    dims = filt.dims().ravel()
    lin = np.arange(flat.size)
    order = np.lexsort((lin, dims, flat))
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    faces = _faces(h, w)[order]
    counts = (faces >= 0).sum(axis=1)
    indptr = np.zeros(order.size + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    flat_faces = faces.ravel()
    indices = rank[flat_faces[flat_faces >= 0]]
    return order, indptr, indices, dims[order]


def persistence_pairs(filt: CubicalFiltration, keep_zero: bool = False) -> list[PersistencePair]:
    """All persistence pairs, essential classes carrying ``death = inf``."""
    order, indptr, indices, dims = boundary_matrix(filt)
    births, deaths = _kernel(indptr, indices, dims)
    fv = filt.values.ravel()[order]
    pairs = []
    for b, d in zip(births.tolist(), deaths.tolist()):
        if keep_zero or fv[b] < fv[d]:
            pairs.append(PersistencePair(int(dims[b]), float(fv[b]), float(fv[d])))
    paired = np.zeros(order.size, dtype=bool)
    paired[births] = True
    paired[deaths] = True
    for r in np.flatnonzero(~paired).tolist():
        pairs.append(PersistencePair(int(dims[r]), float(fv[r]), np.inf))
    pairs.sort(key=lambda p: (p.dim, p.birth, p.death))
    return pairs


def compute_persistence(filt: CubicalFiltration) -> tuple[PersistenceDiagram, PersistenceDiagram]:
    """Dimension 0 and dimension 1 persistence diagrams of ``filt``.

    Zero-persistence pairs are dropped. Simultaneous births are resolved by
    the smaller linear cell index surviving.
    """
    pairs = persistence_pairs(filt)
    out = []
    for k in (0, 1):
        pts = [(p.birth, p.death) for p in pairs if p.dim == k]
        out.append(PersistenceDiagram(pts, dim=k))
    return out[0], out[1]


def betti_at_level(diagrams, a: float) -> tuple[int, ...]:
    """Betti numbers of the sublevel complex at ``a``: intervals with birth <= a < death."""
    return tuple(int(np.count_nonzero((D.births <= a) & (a < D.deaths))) for D in diagrams)


def sublevel_counts(filt: CubicalFiltration, a: float) -> tuple[int, int, int]:
    """Numbers of vertices, edges and squares with value ``<= a``."""
    inside = filt.values <= a
    dims = filt.dims()
    return tuple(int(np.count_nonzero(inside & (dims == k))) for k in (0, 1, 2))
