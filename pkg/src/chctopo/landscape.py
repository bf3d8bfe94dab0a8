"""Persistence landscapes as exact piecewise-linear functions.

A landscape is a list of layers ``lambda_1 >= lambda_2 >= ...``; each layer is
stored as strictly increasing breakpoint abscissae ``xs`` with ordinates
``ys`` and is zero outside ``[xs[0], xs[-1]]``. All arithmetic is exact on
merged breakpoint sets, and the L^p distances integrate the piecewise
polynomial differences in closed form.

Text format::

    landscape dim <k> layers <K>
    x_1 y_1 x_2 y_2 ...        (one line per layer)
"""
from __future__ import annotations

import bisect
import math
from typing import Sequence

import numpy as np

from .diagram import PersistenceDiagram

__all__ = [
    "PersistenceLandscape",
    "landscape_from_diagram",
    "evaluate",
    "linear_combination",
    "average",
    "lp_distance",
    "format_landscape",
    "parse_landscape",
    "write_landscape",
    "read_landscape",
]


class PersistenceLandscape:
    def __init__(self, layers=(), dim: int = 0):
        clean = []
        for xs, ys in layers:
            xs, ys = _canonical(np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64))
            clean.append((xs, ys))
        while clean and not np.any(clean[-1][1]):
            clean.pop()
        self.layers: list[tuple[np.ndarray, np.ndarray]] = clean
        self.dim = int(dim)

    def __len__(self):
        return len(self.layers)

    def __repr__(self):
        return f"PersistenceLandscape(dim={self.dim}, layers={len(self.layers)})"

    def __call__(self, k: int, x):
        return evaluate(self, k, x)

    def breakpoints(self) -> np.ndarray:
        if not self.layers:
            return np.empty(0)
        return np.unique(np.concatenate([xs for xs, _ in self.layers]))

    def max_height(self) -> float:
        return max((float(ys.max()) for _, ys in self.layers), default=0.0)

    def scaled(self, c: float) -> "PersistenceLandscape":
        return PersistenceLandscape([(xs, c * ys) for xs, ys in self.layers], self.dim)

    def allclose(self, other: "PersistenceLandscape", atol: float = 1e-12) -> bool:
        if self.dim != other.dim:
            return False
        return lp_distance(self, other, math.inf) <= atol


def _canonical(xs: np.ndarray, ys: np.ndarray):
    """Drop repeated abscissae and interior points on a straight segment."""
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("layer breakpoints need matching 1D x and y arrays")
    if len(xs) == 0:
        return xs, ys
    if np.any(np.diff(xs) < 0):
        raise ValueError("layer abscissae must be non-decreasing")
    keep = np.ones(len(xs), dtype=bool)
    keep[1:] = np.diff(xs) > 0
    xs, ys = xs[keep], ys[keep]
    if len(xs) > 2:
        s = np.diff(ys) / np.diff(xs)
        inner = np.ones(len(xs), dtype=bool)
        inner[1:-1] = s[1:] != s[:-1]
        xs, ys = xs[inner], ys[inner]
    return xs, ys


def _layers_from_points(points: list[tuple[float, float]]) -> list[list[tuple[float, float]]]:
    """Upper-envelope peeling of hat functions, one pass per layer.

    Points are kept sorted by (birth ascending, death descending). Each pass
    traces the envelope of the remaining hats left to right. When a later
    hat crosses the current one, their pointwise minimum is the hat over
    (later birth, current death), which is pushed back for deeper layers.
    """
    key = lambda t: (t[0], -t[1])
    A = sorted(points, key=key)
    keys = [key(t) for t in A]
    layers = []
    while A:
        b, d = A.pop(0)
        keys.pop(0)
        L = [(b, 0.0), ((b + d) / 2, (d - b) / 2)]
        p = 0
        while True:
            q = next((i for i in range(p, len(A)) if A[i][1] > d), None)
            if q is None:
                L.append((d, 0.0))
                break
            b2, d2 = A.pop(q)
            keys.pop(q)
            if b2 > d:
                L.append((d, 0.0))
            if b2 >= d:
                L.append((b2, 0.0))
            else:
                L.append(((b2 + d) / 2, (d - b2) / 2))
                pos = bisect.bisect_left(keys, key((b2, d)), lo=q)
                A.insert(pos, (b2, d))
                keys.insert(pos, key((b2, d)))
            L.append(((b2 + d2) / 2, (d2 - b2) / 2))
            b, d = b2, d2
            p = q
        layers.append(L)
    return layers


def landscape_from_diagram(D: PersistenceDiagram, truncation: float = 1.0) -> PersistenceLandscape:
    """Landscape of ``D`` with infinite deaths replaced by ``truncation``."""
    if len(D) and np.any(D.births > truncation):
        raise ValueError(f"truncation {truncation} lies below a birth of the diagram")
    pts = [(b, truncation if math.isinf(d) else d) for b, d in D]
    pts = [(b, d) for b, d in pts if b < d]
    layers = []
    for L in _layers_from_points(pts):
        arr = np.array(L)
        layers.append((arr[:, 0], arr[:, 1]))
    return PersistenceLandscape(layers, D.dim)


def evaluate(L: PersistenceLandscape, k: int, x):
    """Value of layer ``k`` (1-based) at ``x``; zero beyond the stored layers."""
    if k < 1:
        raise ValueError("layer index starts at 1")
    if k > len(L.layers):
        return np.zeros_like(np.asarray(x, dtype=np.float64)) if np.ndim(x) else 0.0
    xs, ys = L.layers[k - 1]
    if len(xs) == 0:
        return np.zeros_like(np.asarray(x, dtype=np.float64)) if np.ndim(x) else 0.0
    out = np.interp(x, xs, ys, left=0.0, right=0.0)
    return float(out) if np.ndim(out) == 0 else out


def _merged(layers_at_k: list[tuple[np.ndarray, np.ndarray]]):
    xs = np.unique(np.concatenate([lx for lx, _ in layers_at_k]))
    return xs, [
        np.interp(xs, lx, ly, left=0.0, right=0.0) if len(lx) else np.zeros_like(xs)
        for lx, ly in layers_at_k
    ]


def linear_combination(coeffs: Sequence[float], landscapes: Sequence[PersistenceLandscape]) -> PersistenceLandscape:
    if len(landscapes) == 0:
        raise ValueError("linear combination of an empty list")
    if len(coeffs) != len(landscapes):
        raise ValueError("need one coefficient per landscape")
    dim = landscapes[0].dim
    if any(L.dim != dim for L in landscapes):
        raise ValueError("landscapes of different homology dimensions")
    depth = max(len(L.layers) for L in landscapes)
    layers = []
    for k in range(depth):
        terms = [(c, L.layers[k]) for c, L in zip(coeffs, landscapes) if k < len(L.layers)]
        xs, vals = _merged([lay for _, lay in terms])
        ys = np.zeros_like(xs)
        for (c, _), v in zip(terms, vals):
            ys += c * v
        layers.append((xs, ys))
    return PersistenceLandscape(layers, dim)


def average(landscapes: Sequence[PersistenceLandscape]) -> PersistenceLandscape:
    n = len(landscapes)
    if n == 0:
        raise ValueError("average of an empty list")
    dim = landscapes[0].dim
    if any(L.dim != dim for L in landscapes):
        raise ValueError("landscapes of different homology dimensions")
    depth = max(len(L.layers) for L in landscapes)
    empty = (np.empty(0), np.empty(0))
    layers = []
    for k in range(depth):
        xs, vals = _merged([L.layers[k] if k < len(L.layers) else empty for L in landscapes])
        # offsets from the first term keep averages of identical inputs exact
        acc = np.zeros_like(xs)
        for v in vals[1:]:
            acc += v - vals[0]
        layers.append((xs, vals[0] + acc / n))
    return PersistenceLandscape(layers, dim)


def _segment_power_integral(a: np.ndarray, b: np.ndarray, h: np.ndarray, p: float) -> np.ndarray:
    """Exact integral of ``|f|^p`` over segments where f is linear from a to b."""
    if p == 2:
        return h * (a * a + a * b + b * b) / 3.0
    u, v = np.abs(a), np.abs(b)
    cross = (a * b) < 0
    if p == 1:
        same = h * (u + v) / 2.0
        with np.errstate(invalid="ignore", divide="ignore"):
            opp = h * (u * u + v * v) / (2.0 * (u + v))
        return np.where(cross, opp, same)
    q = p + 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        same = h * (v**q - u**q) / (q * (v - u))
        opp = h * (u**q + v**q) / (q * (u + v))
    flat = np.isclose(u, v, rtol=1e-9, atol=0.0)
    same = np.where(flat, h * u**p, same)
    return np.where(cross, opp, same)


def lp_distance(L1: PersistenceLandscape, L2: PersistenceLandscape, p: float = 1.0) -> float:
    """L^p distance on layers x reals (counting measure times Lebesgue)."""
    if not p >= 1:
        raise ValueError(f"L^p exponent must be >= 1, got {p}")
    if L1.dim != L2.dim:
        raise ValueError("landscapes of different homology dimensions")
    depth = max(len(L1.layers), len(L2.layers))
    empty = (np.empty(0), np.empty(0))
    total = 0.0
    for k in range(depth):
        a = L1.layers[k] if k < len(L1.layers) else empty
        b = L2.layers[k] if k < len(L2.layers) else empty
        xs, (va, vb) = _merged([a, b])
        diff = va - vb
        if math.isinf(p):
            total = max(total, float(np.max(np.abs(diff))))
        elif len(xs) > 1:
            total += float(np.sum(_segment_power_integral(diff[:-1], diff[1:], np.diff(xs), p)))
    if math.isinf(p):
        return total
    return total ** (1.0 / p)


# -- text format --------------------------------------------------------------


def format_landscape(L: PersistenceLandscape) -> str:
    lines = [f"landscape dim {L.dim} layers {len(L.layers)}"]
    for xs, ys in L.layers:
        xy = np.column_stack([xs, ys]).ravel()
        lines.append(" ".join(f"{v:.17g}" for v in xy))
    return "\n".join(lines) + "\n"


def parse_landscape(lines: Sequence[str]) -> tuple[PersistenceLandscape, int]:
    """Parse one landscape block; returns the landscape and lines consumed."""
    head = lines[0].split()
    if len(head) != 5 or head[0] != "landscape" or head[1] != "dim" or head[3] != "layers":
        raise ValueError(f"bad landscape header: {lines[0]!r}")
    dim, n = int(head[2]), int(head[4])
    if len(lines) < n + 1:
        raise ValueError(f"landscape declares {n} layers, found {len(lines) - 1}")
    layers = []
    for line in lines[1 : n + 1]:
        vals = np.array(line.split(), dtype=np.float64)
        if vals.size % 2:
            raise ValueError("layer line needs an even number of values")
        layers.append((vals[0::2], vals[1::2]))
    return PersistenceLandscape(layers, dim), n + 1


def write_landscape(L: PersistenceLandscape, path) -> None:
    from .field import _atomic_write
    from pathlib import Path

    _atomic_write(Path(path), format_landscape(L).encode("ascii"))


def read_landscape(path) -> PersistenceLandscape:
    with open(path) as fh:
        lines = fh.read().rstrip("\n").split("\n")
    L, used = parse_landscape(lines)
    if used != len(lines):
        raise ValueError(f"{path}: trailing content after landscape")
    return L
