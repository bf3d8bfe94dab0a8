"""Topological processes and nearest-average-classifier schemes.

A topological process is a time-ordered sequence of snapshots, each holding
one persistence landscape per homology dimension. Classes are summarized by
the position-wise average of their training processes; a query is assigned
to the class whose average is nearest in the summed L^p process distance.

Classification returns a zero-based class index, or ``None`` when the
scheme fails (a tie among the nearest classes).
"""
from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Sequence

import numpy as np

from .landscape import PersistenceLandscape, average, format_landscape, lp_distance, parse_landscape

__all__ = [
    "TopologicalProcess",
    "ClassifierModel",
    "average_process",
    "process_distance",
    "train",
    "class_distances",
    "classify_ck",
    "classify_ca",
    "write_process",
    "read_process",
    "save_model",
    "load_model",
]

PROCESS_MAGIC = "topological-process v1"


class TopologicalProcess:
    """Sequence of per-snapshot landscapes, keyed by homology dimension."""

    def __init__(self, snapshots: Sequence[dict], meta: dict | None = None):
        snapshots = [dict(s) for s in snapshots]
        if not snapshots:
            raise ValueError("a topological process needs at least one snapshot")
        dims = sorted(snapshots[0])
        for i, s in enumerate(snapshots):
            if sorted(s) != dims:
                raise ValueError(f"snapshot {i} has dimensions {sorted(s)}, expected {dims}")
            for k, L in s.items():
                if L.dim != k:
                    raise ValueError(f"snapshot {i}: landscape filed under dim {k} has dim {L.dim}")
        self.snapshots = snapshots
        self.dims = tuple(dims)
        self.meta = dict(meta or {})

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, i) -> dict:
        return self.snapshots[i]

    def landscape(self, i: int, k: int) -> PersistenceLandscape:
        return self.snapshots[i][k]

    def scaled(self, c: float) -> "TopologicalProcess":
        return TopologicalProcess(
            [{k: L.scaled(c) for k, L in s.items()} for s in self.snapshots], self.meta
        )

    def select(self, index: int) -> "TopologicalProcess":
        """Length-one process holding snapshot ``index``."""
        meta = dict(self.meta)
        meta["snapshot_index"] = index
        if "times" in meta:
            meta["times"] = [meta["times"][index]]
        return TopologicalProcess([self.snapshots[index]], meta)


def _check_compatible(processes: Sequence[TopologicalProcess]):
    M, dims = len(processes[0]), processes[0].dims
    for P in processes[1:]:
        if len(P) != M:
            raise ValueError(f"process lengths differ: {len(P)} vs {M}")
        if P.dims != dims:
            raise ValueError(f"process dimensions differ: {P.dims} vs {dims}")
    return M, dims


def average_process(processes: Sequence[TopologicalProcess]) -> TopologicalProcess:
    if not processes:
        raise ValueError("cannot average an empty list of processes")
    M, dims = _check_compatible(processes)
    snaps = [
        {k: average([P.snapshots[i][k] for P in processes]) for k in dims} for i in range(M)
    ]
    return TopologicalProcess(snaps, {"n_averaged": len(processes)})


def process_distance(P: TopologicalProcess, Q: TopologicalProcess, p: float, k: int) -> float:
    """Sum over positions of the L^p distances between dimension-``k`` landscapes."""
    if len(P) != len(Q):
        raise ValueError(f"process lengths differ: {len(P)} vs {len(Q)}")
    if k not in P.dims or k not in Q.dims:
        raise ValueError(f"dimension {k} missing from a process")
    return float(sum(lp_distance(a[k], b[k], p) for a, b in zip(P.snapshots, Q.snapshots)))


class ClassifierModel:
    """Averaged classifier processes, one per class."""

    def __init__(self, averages: Sequence[TopologicalProcess], p: float, labels=None, meta=None):
        if not averages:
            raise ValueError("a classifier needs at least one class")
        self.M, self.dims = _check_compatible(averages)
        self.averages = list(averages)
        self.p = float(p)
        self.labels = list(labels) if labels is not None else list(range(len(averages)))
        if len(self.labels) != len(self.averages):
            raise ValueError("one label per class required")
        self.meta = dict(meta or {})

    @property
    def n_classes(self) -> int:
        return len(self.averages)

    def _check_query(self, P: TopologicalProcess, k=None):
        if len(P) != self.M:
            raise ValueError(f"query has {len(P)} snapshots, model expects {self.M}")
        if k is not None and k not in self.dims:
            raise ValueError(f"dimension {k} not in model dimensions {self.dims}")
        missing = set(self.dims) - set(P.dims)
        if missing:
            raise ValueError(f"query lacks dimensions {sorted(missing)}")


def train(classes: Sequence[Sequence[TopologicalProcess]], p: float, labels=None, meta=None) -> ClassifierModel:
    if not classes:
        raise ValueError("no classes given")
    for n, members in enumerate(classes):
        if not members:
            raise ValueError(f"class {n} has no training processes")
    averages = [average_process(list(members)) for members in classes]
    meta = dict(meta or {})
    meta.setdefault("train_sizes", [len(m) for m in classes])
    return ClassifierModel(averages, p, labels, meta)


def class_distances(model: ClassifierModel, P: TopologicalProcess, k: int) -> np.ndarray:
    model._check_query(P, k)
    return np.array([process_distance(P, C, model.p, k) for C in model.averages])


def classify_ck(model: ClassifierModel, P: TopologicalProcess, k: int):
    """Unique nearest class using dimension ``k`` only, else ``None``."""
    d = class_distances(model, P, k)
    best = np.flatnonzero(d == d.min())
    return int(best[0]) if len(best) == 1 else None


def classify_ca(model: ClassifierModel, P: TopologicalProcess, dims=None):
    """Combine dimensions through the shortest common prefix of the rankings.

    Classes are ranked per dimension by increasing distance. The prefix
    length is the smallest ``l`` for which the first ``l`` classes of every
    ranking share a member; the result is that member when it is unique.
    Fails on a multi-element intersection, or when two classes are tied at
    a rank position that lies inside the prefix (a different tie order
    could then change one of the prefix sets).
    """
    dims = tuple(model.dims if dims is None else dims)
    dist = {k: class_distances(model, P, k) for k in dims}
    N = model.n_classes
    order = {k: np.argsort(dist[k], kind="stable") for k in dims}
    ell, common = None, set()
    for j in range(1, N + 1):
        common = set.intersection(*(set(order[k][:j].tolist()) for k in dims))
        if common:
            ell = j
            break
    for k in dims:
        ranked = dist[k][order[k]]
        for a in range(min(ell, N - 1)):
            if ranked[a] == ranked[a + 1]:
                return None
    if len(common) != 1:
        return None
    return int(common.pop())


# -- serialization -----------------------------------------------------------


def format_process(P: TopologicalProcess) -> str:
    out = [PROCESS_MAGIC]
    for key in sorted(P.meta):
        out.append(f"meta {key} {json.dumps(P.meta[key])}")
    out.append(f"snapshots {len(P)} dims {' '.join(map(str, P.dims))}")
    for i, snap in enumerate(P.snapshots):
        out.append(f"snapshot {i}")
        for k in P.dims:
            out.append(format_landscape(snap[k]).rstrip("\n"))
    return "\n".join(out) + "\n"


def parse_process(text: str, source: str = "<string>") -> TopologicalProcess:
    lines = text.rstrip("\n").split("\n")
    if not lines or lines[0] != PROCESS_MAGIC:
        raise ValueError(f"{source}: not a topological process file")
    meta = {}
    i = 1
    while i < len(lines) and lines[i].startswith("meta "):
        _, key, value = lines[i].split(" ", 2)
        meta[key] = json.loads(value)
        i += 1
    head = lines[i].split()
    if head[0] != "snapshots" or head[2] != "dims":
        raise ValueError(f"{source}: bad snapshot header {lines[i]!r}")
    M, dims = int(head[1]), [int(v) for v in head[3:]]
    i += 1
    snaps = []
    for s in range(M):
        if i >= len(lines) or lines[i] != f"snapshot {s}":
            raise ValueError(f"{source}: expected 'snapshot {s}'")
        i += 1
        snap = {}
        for k in dims:
            L, used = parse_landscape(lines[i:])
            if L.dim != k:
                raise ValueError(f"{source}: snapshot {s} landscape has dim {L.dim}, expected {k}")
            snap[k] = L
            i += used
        snaps.append(snap)
    return TopologicalProcess(snaps, meta)


def write_process(P: TopologicalProcess, path) -> None:
    from .field import _atomic_write

    _atomic_write(Path(path), format_process(P).encode("ascii"))


def read_process(path) -> TopologicalProcess:
    return parse_process(Path(path).read_text(), str(path))


def save_model(model: ClassifierModel, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for n, C in enumerate(model.averages):
        write_process(C, directory / f"class_{n:03d}.proc")
    manifest = {
        "N": model.n_classes,
        "M": model.M,
        "p": "inf" if math.isinf(model.p) else repr(model.p),
        "dims": " ".join(map(str, model.dims)),
        "labels": json.dumps(model.labels),
        "meta": json.dumps(model.meta, sort_keys=True),
    }
    text = "".join(f"{k}={v}\n" for k, v in manifest.items())
    tmp = directory / f".manifest.tmp{os.getpid()}"
    tmp.write_text(text)
    os.replace(tmp, directory / "manifest.txt")


def load_model(directory) -> ClassifierModel:
    directory = Path(directory)
    manifest = read_manifest(directory / "manifest.txt")
    N = int(manifest["N"])
    averages = [read_process(directory / f"class_{n:03d}.proc") for n in range(N)]
    model = ClassifierModel(
        averages,
        float(manifest["p"]),
        json.loads(manifest["labels"]),
        json.loads(manifest.get("meta", "{}")),
    )
    if model.M != int(manifest["M"]):
        raise ValueError(f"{directory}: manifest M={manifest['M']} but classes have M={model.M}")
    return model


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}: malformed manifest line {line!r}")
        out[key.strip()] = value.strip()
    return out
