# distutils: language = c++
# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled Z/2 boundary-matrix reduction with clearing.

Same contract as ``chctopo._reduce_py.reduce_boundary``. Columns are kept
as sorted ``std::vector`` of row ids; the lowest one is ``back()`` and a
column addition is a linear-time symmetric difference merge.
"""
import numpy as np
cimport numpy as cnp
from libcpp.vector cimport vector
from libc.stdint cimport int64_t

cnp.import_array()


cdef inline void _symdiff(vector[int64_t]& a, const vector[int64_t]& b,
                          vector[int64_t]& out) noexcept nogil:
    cdef size_t i = 0, k = 0
    cdef size_t na = a.size(), nb = b.size()
    out.clear()
    while i < na and k < nb:
        if a[i] < b[k]:
            out.push_back(a[i])
            i += 1
        elif b[k] < a[i]:
            out.push_back(b[k])
            k += 1
        else:
            i += 1
            k += 1
    while i < na:
        out.push_back(a[i])
        i += 1
    while k < nb:
        out.push_back(b[k])
        k += 1
    a.swap(out)


cdef inline void _insertion_sort(vector[int64_t]& v) noexcept nogil:
    cdef size_t i, k
    cdef int64_t x
    for i in range(1, v.size()):
        x = v[i]
        k = i
        while k > 0 and v[k - 1] > x:
            v[k] = v[k - 1]
            k -= 1
        v[k] = x


def reduce_boundary(indptr, indices, dims):
    cdef int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef signed char[::1] dm = np.ascontiguousarray(dims, dtype=np.int8)
    cdef int64_t n = dm.shape[0]
    cdef int64_t j, p, low, other
    cdef int d, top = 0
    cdef vector[vector[int64_t]] cols
    cdef vector[int64_t] col, scratch
    cdef vector[int64_t] pivot_of
    cdef vector[char] cleared
    cdef vector[int64_t] births, deaths

    for j in range(n):
        if dm[j] > top:
            top = dm[j]
    cols.resize(n)
    pivot_of.assign(n, -1)
    cleared.assign(n, 0)

    with nogil:
        for d in range(top, 0, -1):
            for j in range(n):
                if dm[j] != d or cleared[j]:
                    continue
                col.clear()
                for p in range(ip[j], ip[j + 1]):
                    col.push_back(ix[p])
                # faces arrive in arbitrary order; keep the column sorted
                _insertion_sort(col)
                while col.size() > 0:
                    low = col.back()
                    other = pivot_of[low]
                    if other < 0:
                        break
                    _symdiff(col, cols[other], scratch)
                if col.size() > 0:
                    low = col.back()
                    pivot_of[low] = j
                    cols[j].swap(col)
                    cleared[low] = 1
                    births.push_back(low)
                    deaths.push_back(j)

    out_b = np.empty(births.size(), dtype=np.int64)
    out_d = np.empty(deaths.size(), dtype=np.int64)
    cdef int64_t[::1] vb = out_b
    cdef int64_t[::1] vd = out_d
    for j in range(<int64_t>births.size()):
        vb[j] = births[j]
        vd[j] = deaths[j]
    return out_b, out_d
