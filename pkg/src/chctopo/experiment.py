"""Experiment drivers behind the command-line interface.

Everything lives under one run directory::

    config.json               resolved configuration
    manifest.txt              stage log (key=value)
    archives/m###_r###/       snapshot archives, one per (mass, run)
    processes/m###_r###.proc  topological processes
    model/                    averaged classifiers
    labels.csv                predictions for the held-out runs
    report.{csv,txt,json}     evaluation table
    heatmap/                  classifier-distance and time-grid heat maps
    time/                     snapshot-time classification results

Mass ``n`` and run ``r`` map to the RNG seed ``seed * 10**6 + 1000 n + r``.
Runs ``r < train_runs`` are training runs, the rest are classified.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .chc import ChcParams, read_archive, simulate, write_archive
from .cubical import build_filtration, compute_persistence
from .field import LevelQuantizer, _atomic_write, pgm_bytes, quantize
from .landscape import landscape_from_diagram
from .process import (
    TopologicalProcess,
    classify_ca,
    classify_ck,
    load_model,
    process_distance,
    read_manifest,
    read_process,
    save_model,
    train,
    write_process,
)

PRESET_DIR = Path(__file__).parent / "presets"
SCHEMES = ("C0", "C1", "CA")
TIME_SCHEMES = ("C0", "C1")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class DataError(ValueError):
    """Missing or inconsistent intermediate results in a run directory."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    masses: tuple = (0.0,)
    runs: int = 2
    train_runs: int = 1
    snapshots: int = 1
    epsilon: float = 0.01
    sigma: float = 0.001
    K: int = 64
    steps: int = 2000
    grid: int = 128
    transform_grid: int = 0
    levels: int = 256
    lo: float = -1.0
    hi: float = 1.0
    p: float = 1.0
    scheme: str = "CA"
    time_masses: tuple = ()
    seed: int = 0
    wrong_threshold: int = 4
    jobs: int = 1

    def __post_init__(self):
        def bad(msg):
            raise ConfigError(msg)

        if not self.masses:
            bad("masses must be a non-empty list")
        if len(set(self.masses)) != len(self.masses):
            bad("masses must be distinct")
        for mu in self.masses:
            if 3 * mu * mu == 1:
                bad(f"mass {mu} has F''(mu) = 0, end time undefined")
        if not 1 <= self.train_runs <= self.runs:
            bad(f"need 1 <= train_runs <= runs, got train_runs={self.train_runs}, runs={self.runs}")
        if self.runs > 1000 or len(self.masses) > 1000:
            bad("at most 1000 masses and 1000 runs per mass")
        if self.snapshots < 1:
            bad("snapshots must be >= 1")
        if self.p not in (1.0, 2.0, math.inf):
            bad(f"p must be 1, 2 or inf, got {self.p}")
        if self.scheme not in SCHEMES:
            bad(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.wrong_threshold < 1:
            bad("wrong_threshold must be >= 1")
        if self.jobs < 1:
            bad("jobs must be >= 1")
        if self.grid < self.K:
            bad(f"grid {self.grid} smaller than K={self.K}")
        if not set(self.time_masses) <= set(self.masses):
            bad("time_masses must be a subset of masses")
        try:
            LevelQuantizer(self.lo, self.hi, self.levels)
            self.chc_params(0, 0)
        except ValueError as exc:
            bad(str(exc))

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kw = dict(d)
        try:
            for key in ("masses", "time_masses"):
                if key in kw:
                    kw[key] = tuple(float(v) for v in kw[key])
            if "p" in kw:
                kw["p"] = float(kw["p"])
            for key in ("runs", "train_runs", "snapshots", "K", "steps", "grid", "transform_grid",
                        "levels", "seed", "wrong_threshold", "jobs"):
                if key in kw:
                    v = kw[key]
                    if isinstance(v, float) and not v.is_integer():
                        raise ValueError(f"{key} must be an integer")
                    kw[key] = int(v)
            for key in ("epsilon", "sigma", "lo", "hi"):
                if key in kw:
                    kw[key] = float(kw[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["masses"] = list(self.masses)
        d["time_masses"] = list(self.time_masses)
        d["p"] = "inf" if math.isinf(self.p) else self.p
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)

    # -- derived quantities --------------------------------------------------

    @property
    def n_masses(self) -> int:
        return len(self.masses)

    def run_seed(self, n: int, r: int) -> int:
        return self.seed * 10**6 + 1000 * n + r

    def chc_params(self, n: int, r: int) -> ChcParams:
        return ChcParams(
            epsilon=self.epsilon,
            sigma=self.sigma,
            mu=self.masses[n],
            K=self.K,
            steps=self.steps,
            seed=self.run_seed(n, r),
            grid=self.transform_grid,
        )

    def schedule(self, n: int) -> list[float]:
        """Uniform snapshot times ``l / M * T_e`` for ``l = 1..M``."""
        Te = self.chc_params(n, 0).endtime
        M = self.snapshots
        return [Te * (l / M) for l in range(1, M + 1)]

    def quantizer(self) -> LevelQuantizer:
        return LevelQuantizer(self.lo, self.hi, self.levels)

    def units(self):
        return [(n, r) for n in range(self.n_masses) for r in range(self.runs)]


def load_config(source) -> ExperimentConfig:
    """Load a config from a JSON path or a preset name."""
    path = Path(source)
    if not path.exists() and (PRESET_DIR / f"{source}.json").exists():
        path = PRESET_DIR / f"{source}.json"
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {source}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_dict(data)


def parse_override(item: str) -> tuple[str, object]:
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {item!r} is not KEY=VALUE")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def list_presets() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.json"))


# -- run directory helpers --------------------------------------------------------


def unit_name(n: int, r: int) -> str:
    return f"m{n:03d}_r{r:03d}"


def _write_text(path: Path, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _write_text(path, buf.getvalue())


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Ordered map; a process pool when ``jobs > 1``."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *it) for it in items]
        return [f.result() for f in futures]


def update_run_manifest(run_dir: Path, entries: dict) -> None:
    path = run_dir / "manifest.txt"
    current = read_manifest(path) if path.exists() else {}
    current.update({k: str(v) for k, v in entries.items()})
    _write_text(path, "".join(f"{k}={v}\n" for k, v in sorted(current.items())))


def save_config(cfg: ExperimentConfig, run_dir: Path) -> None:
    _write_text(run_dir / "config.json", json.dumps(cfg.to_dict(), indent=2) + "\n")


# -- generate ---------------------------------------------------------------------


def _generate_one(cfg: ExperimentConfig, n: int, r: int, root: str) -> str:
    params = cfg.chc_params(n, r)
    times = cfg.schedule(n)
    fields_ = simulate(params, times, cfg.grid)
    name = unit_name(n, r)
    final = Path(root) / name
    tmp = Path(root) / f".{name}.tmp{os.getpid()}"
    if tmp.exists():
        shutil.rmtree(tmp)
    extra = {"mass_index": n, "run": r, "mu": repr(params.mu), "grid": cfg.grid, "config": cfg.name}
    write_archive(tmp, params, times, fields_, extra)
    if final.exists():
        shutil.rmtree(final)
    os.replace(tmp, final)
    return name


def generate(cfg: ExperimentConfig, run_dir, units=None) -> list[Path]:
    run_dir = Path(run_dir)
    root = run_dir / "archives"
    root.mkdir(parents=True, exist_ok=True)
    units = cfg.units() if units is None else list(units)
    names = _map(_generate_one, [(cfg, n, r, str(root)) for n, r in units], cfg.jobs)
    update_run_manifest(run_dir, {"archives": len(names)})
    return [root / s for s in names]


# -- topology ---------------------------------------------------------------------


def snapshot_landscapes(field_, q: LevelQuantizer) -> dict:
    D0, D1 = compute_persistence(build_filtration(quantize(field_, q)))
    return {0: landscape_from_diagram(D0, q.hi), 1: landscape_from_diagram(D1, q.hi)}


def archive_process(archive, q: LevelQuantizer) -> TopologicalProcess:
    manifest, params, times, fields_ = read_archive(archive)
    meta = {
        "archive": Path(archive).name,
        "mu": params.mu,
        "seed": params.seed,
        "times": times,
        "endtime": params.endtime,
    }
    for key in ("mass_index", "run"):
        if key in manifest:
            meta[key] = int(manifest[key])
    return TopologicalProcess([snapshot_landscapes(f, q) for f in fields_], meta)


def _topology_one(archive: str, out: str, lo: float, hi: float, levels: int) -> str:
    P = archive_process(archive, LevelQuantizer(lo, hi, levels))
    write_process(P, out)
    return out


def topology(cfg: ExperimentConfig, run_dir, archives=None) -> list[Path]:
    run_dir = Path(run_dir)
    root = run_dir / "archives"
    if archives is None:
        archives = sorted(p for p in root.glob("m*_r*") if p.is_dir()) if root.exists() else []
        if not archives:
            raise DataError(f"{root}: no archives; run generate first")
    out_dir = run_dir / "processes"
    out_dir.mkdir(parents=True, exist_ok=True)
    q = cfg.quantizer()
    items = [(str(a), str(out_dir / f"{Path(a).name}.proc"), q.lo, q.hi, q.levels) for a in archives]
    outs = _map(_topology_one, items, cfg.jobs)
    update_run_manifest(run_dir, {"processes": len(list(out_dir.glob("*.proc")))})
    return [Path(o) for o in outs]


def load_processes(cfg: ExperimentConfig, run_dir) -> dict:
    """Map ``(n, r)`` to the stored process; every unit must be present."""
    root = Path(run_dir) / "processes"
    out = {}
    for n, r in cfg.units():
        path = root / f"{unit_name(n, r)}.proc"
        if path.exists():
            P = read_process(path)
            if len(P) != cfg.snapshots:
                raise DataError(f"{path}: {len(P)} snapshots, config expects {cfg.snapshots}")
            out[n, r] = P
    return out


# -- train / classify / evaluate -----------------------------------------------------


def _training_sets(cfg: ExperimentConfig, procs: dict, masses: Sequence[int]) -> list[list]:
    classes = []
    for n in masses:
        members = [procs[n, r] for r in range(cfg.train_runs) if (n, r) in procs]
        if len(members) < cfg.train_runs:
            raise DataError(
                f"mass {cfg.masses[n]} has {len(members)} training processes, need {cfg.train_runs}"
            )
        classes.append(members)
    return classes


def train_model(cfg: ExperimentConfig, run_dir):
    run_dir = Path(run_dir)
    procs = load_processes(cfg, run_dir)
    classes = _training_sets(cfg, procs, range(cfg.n_masses))
    model = train(classes, cfg.p, labels=list(cfg.masses), meta={"config": cfg.to_dict()})
    save_model(model, run_dir / "model")
    update_run_manifest(run_dir, {"model_classes": model.n_classes})
    return model


def predict(model, P: TopologicalProcess) -> dict:
    return {"C0": classify_ck(model, P, 0), "C1": classify_ck(model, P, 1), "CA": classify_ca(model, P)}


def _fmt_pred(v) -> str:
    return "fail" if v is None else str(v)


def _parse_pred(s: str):
    return None if s == "fail" else int(s)


def classify(cfg: ExperimentConfig, run_dir) -> list[dict]:
    run_dir = Path(run_dir)
    if not cfg.train_runs < cfg.runs:
        raise ConfigError("no held-out runs to classify (train_runs == runs)")
    try:
        model = load_model(run_dir / "model")
    except (OSError, KeyError) as exc:
        raise DataError(f"{run_dir / 'model'}: no usable model; run train first ({exc})") from exc
    procs = load_processes(cfg, run_dir)
    rows = []
    for n in range(cfg.n_masses):
        for r in range(cfg.train_runs, cfg.runs):
            if (n, r) not in procs:
                raise DataError(f"missing process {unit_name(n, r)}; run topology first")
            pred = predict(model, procs[n, r])
            rows.append({"process": unit_name(n, r), "mass_index": n, "run": r, "true": n, **pred})
    _write_csv(
        run_dir / "labels.csv",
        ["process", "mass_index", "run", "true", *SCHEMES],
        [[row["process"], row["mass_index"], row["run"], row["true"], *(_fmt_pred(row[s]) for s in SCHEMES)]
         for row in rows],
    )
    update_run_manifest(run_dir, {"classified": len(rows)})
    return rows


def read_labels(path, schemes=SCHEMES) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no labels; run classify first")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["true"] = int(row["true"])
        for s in schemes:
            row[s] = _parse_pred(row[s])
    return rows


def bin_table(true: Sequence[int], pred: Sequence, wrong_threshold: int) -> dict:
    """Counts for Hits, Missed by 1..W and Wrong; failures are kept apart."""
    counts = {"Hits": 0, **{f"Missed by {w}": 0 for w in range(1, wrong_threshold + 1)}, "Wrong": 0}
    failed = 0
    for t, p in zip(true, pred):
        if p is None:
            failed += 1
            continue
        miss = abs(p - t)
        if miss == 0:
            counts["Hits"] += 1
        elif miss <= wrong_threshold:
            counts[f"Missed by {miss}"] += 1
        else:
            counts["Wrong"] += 1
    return {"classified": len(true) - failed, **counts, "Failed": failed}


def _aligned(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths))) for r in cells]
    return "\n".join(lines) + "\n"


def evaluate(cfg: ExperimentConfig, run_dir) -> dict:
    run_dir = Path(run_dir)
    rows = read_labels(run_dir / "labels.csv")
    true = [r["true"] for r in rows]
    table = {s: bin_table(true, [r[s] for r in rows], cfg.wrong_threshold) for s in SCHEMES}
    cols = list(table[SCHEMES[0]])
    header = ["Scheme", *cols]
    body = [[s, *table[s].values()] for s in SCHEMES]
    _write_csv(run_dir / "report.csv", header, body)
    primary = table[cfg.scheme]
    hit_rate = primary["Hits"] / len(rows) if rows else float("nan")
    text = (
        f"Mass classification, {cfg.n_masses} classes, {len(rows)} held-out processes, p = {cfg.p:g}\n\n"
        + _aligned(header, body)
        + f"\nprimary scheme {cfg.scheme}: hit rate {hit_rate:.4f}\n\nconfig:\n"
        + json.dumps(cfg.to_dict(), indent=2)
        + "\n"
    )
    _write_text(run_dir / "report.txt", text)
    report = {"config": cfg.to_dict(), "n_processes": len(rows), "table": table,
              "scheme": cfg.scheme, "hit_rate": hit_rate}
    _write_text(run_dir / "report.json", json.dumps(report, indent=2) + "\n")
    update_run_manifest(run_dir, {"report": "report.csv"})
    return report


# -- heat maps -----------------------------------------------------------------------


def classifier_distance_matrix(model) -> np.ndarray:
    """Sum over dimensions of the process distances between class averages."""
    N = model.n_classes
    D = np.zeros((N, N))
    for n in range(N):
        for m in range(n + 1, N):
            d = sum(process_distance(model.averages[n], model.averages[m], model.p, k) for k in model.dims)
            D[n, m] = D[m, n] = d
    return D


def row_monotonicity(D: np.ndarray) -> tuple[int, int]:
    """(increasing, total) over adjacent comparisons moving away from the diagonal."""
    N = len(D)
    good = total = 0
    for n in range(N):
        for m in range(n + 1, N - 1):
            total += 1
            good += D[n, m + 1] > D[n, m]
        for m in range(n - 1, 0, -1):
            total += 1
            good += D[n, m - 1] > D[n, m]
    return int(good), total


def _write_grid(path_stem: Path, grid: np.ndarray, row_labels, col_labels, lo=None, hi=None, scale=8) -> None:
    _write_csv(
        path_stem.with_suffix(".csv"),
        ["", *col_labels],
        [[rl, *(repr(float(v)) for v in row)] for rl, row in zip(row_labels, grid)],
    )
    lo = float(np.min(grid)) if lo is None else lo
    hi = float(np.max(grid)) if hi is None else hi
    if hi <= lo:
        hi = lo + 1.0
    big = np.kron(grid, np.ones((scale, scale)))
    _atomic_write(path_stem.with_suffix(".pgm"), pgm_bytes(big, lo, hi))


def heatmap(cfg: ExperimentConfig, run_dir) -> dict:
    run_dir = Path(run_dir)
    out = run_dir / "heatmap"
    out.mkdir(parents=True, exist_ok=True)
    result = {}
    model_dir = run_dir / "model"
    if (model_dir / "manifest.txt").exists():
        model = load_model(model_dir)
        D = classifier_distance_matrix(model)
        labels = [f"{m:g}" for m in model.labels]
        _write_grid(out / "classifier_distances", D, labels, labels)
        good, total = row_monotonicity(D)
        result["classifier_distances"] = {"matrix": D.tolist(), "monotone": good, "comparisons": total}
    time_json = run_dir / "time" / "report.json"
    if time_json.exists():
        rep = json.loads(time_json.read_text())
        cols = [str(l) for l in range(1, cfg.snapshots + 1)]
        for s in TIME_SCHEMES:
            for kind in ("hit", "miss1", "miss2"):
                grid = np.array(rep["grids"][s][kind])
                rows = [f"{m:g}" for m in rep["masses"]]
                _write_grid(out / f"time_{s}_{kind}", grid, rows, cols, 0.0, 1.0)
        result["time_grids"] = True
    if not result:
        raise DataError(f"{run_dir}: nothing to plot; run train or time-classify first")
    _write_text(out / "heatmap.json", json.dumps({"config": cfg.to_dict(), **result}, indent=2) + "\n")
    return result


# -- snapshot-time classification ------------------------------------------------------


def time_classify(cfg: ExperimentConfig, run_dir) -> dict:
    run_dir = Path(run_dir)
    if not cfg.train_runs < cfg.runs:
        raise ConfigError("no held-out runs to classify (train_runs == runs)")
    masses = list(cfg.time_masses) or list(cfg.masses)
    idx = [cfg.masses.index(m) for m in masses]
    procs = load_processes(cfg, run_dir)
    M = cfg.snapshots
    rows = []
    hist = {s: np.zeros((len(idx), M, 4)) for s in TIME_SCHEMES}  # hit, miss1, miss2+, fail
    for gi, n in enumerate(idx):
        (members,) = _training_sets(cfg, procs, [n])
        classes = [[P.select(l) for P in members] for l in range(M)]
        model = train(classes, cfg.p, labels=list(range(1, M + 1)))
        for r in range(cfg.train_runs, cfg.runs):
            if (n, r) not in procs:
                raise DataError(f"missing process {unit_name(n, r)}; run topology first")
            P = procs[n, r]
            for l in range(M):
                Q = P.select(l)
                pred = {s: classify_ck(model, Q, int(s[1])) for s in TIME_SCHEMES}
                rows.append([unit_name(n, r), n, r, l, *(_fmt_pred(pred[s]) for s in TIME_SCHEMES)])
                for s in TIME_SCHEMES:
                    p = pred[s]
                    b = 3 if p is None else min(abs(p - l), 2)
                    hist[s][gi, l, b] += 1
    out = run_dir / "time"
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "labels.csv", ["process", "mass_index", "run", "true", *TIME_SCHEMES], rows)
    grids, summary = {}, {}
    frac = np.array([l / M for l in range(1, M + 1)])
    middle = (frac > 0.2 + 1e-12) & (frac <= 0.8 + 1e-12)
    for s in TIME_SCHEMES:
        h = hist[s]
        tot = h.sum(axis=2)
        grids[s] = {k: (h[:, :, b] / tot).tolist() for b, k in enumerate(("hit", "miss1", "miss2", "fail"))}
        mid = h[:, middle, :].sum(axis=(0, 1))
        allc = h.sum(axis=(0, 1))
        summary[s] = {
            "hit_rate": float(allc[0] / allc.sum()),
            "hit_or_miss1_rate": float((allc[0] + allc[1]) / allc.sum()),
            "middle_hit_rate": float(mid[0] / mid.sum()) if mid.sum() else float("nan"),
            "middle_hit_or_miss1_rate": float((mid[0] + mid[1]) / mid.sum()) if mid.sum() else float("nan"),
        }
    long_rows = []
    for s in TIME_SCHEMES:
        for gi, m in enumerate(masses):
            for l in range(M):
                c = hist[s][gi, l]
                long_rows.append([s, m, l + 1, repr(float(frac[l])), int(c.sum()), *map(int, c)])
    _write_csv(out / "report.csv", ["scheme", "mass", "time_index", "t_over_Te", "n",
                                    "hit", "miss1", "miss2plus", "failed"], long_rows)
    text = [f"Snapshot-time classification, M = {M}, masses {masses}, p = {cfg.p:g}\n"]
    for s in TIME_SCHEMES:
        text.append(f"\n{s}: " + ", ".join(f"{k} {v:.4f}" for k, v in summary[s].items()) + "\n")
        text.append(_aligned(["mass", *[str(l) for l in range(1, M + 1)]],
                             [[f"{m:g}", *(f"{v:.2f}" for v in row)] for m, row in zip(masses, grids[s]["hit"])]))
    text.append("\nconfig:\n" + json.dumps(cfg.to_dict(), indent=2) + "\n")
    _write_text(out / "report.txt", "".join(text))
    report = {"config": cfg.to_dict(), "masses": masses, "times": frac.tolist(),
              "grids": grids, "summary": summary}
    _write_text(out / "report.json", json.dumps(report, indent=2) + "\n")
    update_run_manifest(run_dir, {"time_classified": len(rows)})
    return report
