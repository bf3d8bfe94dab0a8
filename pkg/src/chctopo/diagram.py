"""Persistence diagrams and the bottleneck / p-Wasserstein distances.

Points are compared in the sup-norm, so the distance from ``(b, d)`` to the
diagonal is ``(d - b) / 2``. Both metrics are exact: the bottleneck distance
by bisection over candidate costs with a bipartite-matching feasibility test,
the Wasserstein distance by an optimal assignment on the diagonal-augmented
cost matrix.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

__all__ = [
    "PersistenceDiagram",
    "bottleneck_distance",
    "wasserstein_distance",
    "write_diagrams_csv",
    "read_diagrams_csv",
]


class PersistenceDiagram:
    """Multiset of ``(birth, death)`` points in one homology dimension.

    Multiplicity is expressed by repetition. ``death`` may be ``inf``.
    """

    def __init__(self, points=(), dim: int = 0):
        pts = np.array(list(points), dtype=np.float64).reshape(-1, 2)
        if pts.size and not np.all(pts[:, 0] < pts[:, 1]):
            raise ValueError("every diagram point needs birth < death")
        if pts.size and not np.all(np.isfinite(pts[:, 0])):
            raise ValueError("births must be finite")
        order = np.lexsort((pts[:, 1], pts[:, 0])) if len(pts) else np.arange(0)
        pts = pts[order]
        pts.flags.writeable = False
        self.points = pts
        self.dim = int(dim)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(map(tuple, self.points.tolist()))

    def __eq__(self, other):
        if not isinstance(other, PersistenceDiagram):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.points, other.points)

    def __repr__(self):
        body = ", ".join(f"({b:g}, {d:g})" for b, d in self)
        return f"PersistenceDiagram(dim={self.dim}, [{body}])"

    @property
    def births(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def deaths(self) -> np.ndarray:
        return self.points[:, 1]

    def multiplicities(self) -> Counter:
        return Counter(map(tuple, self.points.tolist()))

    def essential(self) -> "PersistenceDiagram":
        return PersistenceDiagram(self.points[np.isinf(self.deaths)], self.dim)

    def finite(self) -> "PersistenceDiagram":
        return PersistenceDiagram(self.points[np.isfinite(self.deaths)], self.dim)

    def truncate(self, death: float) -> "PersistenceDiagram":
        """Replace infinite deaths by ``death``; points that collapse are dropped."""
        pts = self.points.copy()
        pts[np.isinf(pts[:, 1]), 1] = death
        if np.any(pts[:, 1] < pts[:, 0]):
            raise ValueError(f"truncation value {death} lies below a birth")
        return PersistenceDiagram(pts[pts[:, 0] < pts[:, 1]], self.dim)

    def persistence(self) -> np.ndarray:
        return self.deaths - self.births


def _split(D1: PersistenceDiagram, D2: PersistenceDiagram):
    e1 = np.sort(D1.births[np.isinf(D1.deaths)])
    e2 = np.sort(D2.births[np.isinf(D2.deaths)])
    if len(e1) != len(e2):
        raise ValueError(
            f"diagrams have {len(e1)} and {len(e2)} essential points; "
            "truncate infinite deaths before comparing"
        )
    # 1D matching by sorted order is optimal for every convex cost
    ess = np.abs(e1 - e2)
    X = D1.points[np.isfinite(D1.deaths)]
    Y = D2.points[np.isfinite(D2.deaths)]
    return ess, X, Y


def _augmented_costs(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    n, m = len(X), len(Y)
    C = np.full((n + m, m + n), np.inf)
    if n and m:
        C[:n, :m] = np.max(np.abs(X[:, None, :] - Y[None, :, :]), axis=2)
    C[:n, m:][np.arange(n), np.arange(n)] = (X[:, 1] - X[:, 0]) / 2
    C[n:, :m][np.arange(m), np.arange(m)] = (Y[:, 1] - Y[:, 0]) / 2
    C[n:, m:] = 0.0
    return C


def _has_perfect_matching(mask: np.ndarray) -> bool:
    rows, cols = np.nonzero(mask)
    graph = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=mask.shape)
    match = maximum_bipartite_matching(graph, perm_type="column")
    return bool(np.all(match >= 0))


def bottleneck_distance(D1: PersistenceDiagram, D2: PersistenceDiagram) -> float:
    ess, X, Y = _split(D1, D2)
    best = float(ess.max()) if len(ess) else 0.0
    if len(X) + len(Y) == 0:
        return best
    C = _augmented_costs(X, Y)
    cand = np.unique(C[np.isfinite(C)])
    lo, hi = 0, len(cand) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _has_perfect_matching(C <= cand[mid]):
            hi = mid
        else:
            lo = mid + 1
    return max(best, float(cand[lo]))


def wasserstein_distance(D1: PersistenceDiagram, D2: PersistenceDiagram, p: float = 1.0) -> float:
    if not p >= 1:
        raise ValueError(f"Wasserstein exponent must be >= 1, got {p}")
    if math.isinf(p):
        return bottleneck_distance(D1, D2)
    ess, X, Y = _split(D1, D2)
    total = float(np.sum(ess**p))
    if len(X) + len(Y):
        C = _augmented_costs(X, Y) ** p
        finite = np.isfinite(C)
        C[~finite] = C[finite].sum() + 1.0
        r, c = linear_sum_assignment(C)
        total += float(C[r, c].sum())
    return total ** (1.0 / p)


# -- CSV exchange format ----------------------------------------------------


def write_diagrams_csv(diagrams, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dim", "birth", "death"])
        for D in diagrams:
            for b, d in D:
                w.writerow([D.dim, repr(b), "inf" if math.isinf(d) else repr(d)])


def read_diagrams_csv(path) -> dict[int, PersistenceDiagram]:
    pts: dict[int, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["dim", "birth", "death"]:
            raise ValueError(f"{path}: expected header dim,birth,death")
        for row in reader:
            pts.setdefault(int(row["dim"]), []).append((float(row["birth"]), float(row["death"])))
    return {k: PersistenceDiagram(v, dim=k) for k, v in sorted(pts.items())}
