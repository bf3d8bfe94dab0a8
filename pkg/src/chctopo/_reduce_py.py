"""Pure-Python Z/2 boundary-matrix reduction (fallback for ``_reduce.pyx``).

Both kernels share one contract. Cells are identified by their position in
filtration order. ``indptr``/``indices`` hold the boundary matrix in CSC
form: the faces of cell ``j`` are ``indices[indptr[j]:indptr[j + 1]]``,
each face preceding ``j`` in the order. ``dims`` gives each cell's
dimension. The return value is a pair of int64 arrays ``(births, deaths)``
with ``low(deaths[i]) == births[i]`` after reduction.

Columns are reduced dimension by dimension from the top down so that the
clearing (twist) optimization applies: a cell that is already the pivot of
a reduced column in the dimension above is a birth and its own column is
skipped.
"""
import numpy as np


def reduce_boundary(indptr, indices, dims):
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    dims = np.asarray(dims, dtype=np.int8)
    n = len(dims)
    pivot_of = {}  # pivot row -> column whose reduced form ends there
    reduced = {}
    cleared = np.zeros(n, dtype=bool)
    births, deaths = [], []
    top = int(dims.max()) if n else 0
    for d in range(top, 0, -1):
        for j in np.flatnonzero(dims == d).tolist():
            if cleared[j]:
                continue
            col = set(indices[indptr[j]:indptr[j + 1]].tolist())
            while col:
                low = max(col)
                other = pivot_of.get(low)
                if other is None:
                    break
                col ^= reduced[other]
            if col:
                low = max(col)
                pivot_of[low] = j
                reduced[j] = col
                cleared[low] = True
                births.append(low)
                deaths.append(j)
    return np.asarray(births, dtype=np.int64), np.asarray(deaths, dtype=np.int64)
