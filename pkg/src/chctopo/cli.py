"""Command-line interface: ``chctopo <command> --run-dir DIR [options]``.

The configuration comes from ``--config FILE`` or ``--preset NAME``, else
from ``DIR/config.json`` written by an earlier command; ``--set KEY=VALUE``
overrides single entries (values parsed as JSON). On failure the process
exits nonzero and prints one JSON object ``{"error": ..., "message": ...}``
to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__, experiment as ex
from .chc import ArchiveError
from .field import FieldFormatError

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DATA = 4


def _resolve_config(args) -> ex.ExperimentConfig:
    run_dir = Path(args.run_dir)
    stored = run_dir / "config.json"
    if args.config and args.preset:
        raise ex.ConfigError("use either --config or --preset, not both")
    source = args.config or args.preset
    if source:
        cfg = ex.load_config(source)
    elif stored.exists():
        cfg = ex.load_config(stored)
    else:
        raise ex.ConfigError(f"no configuration: pass --config or --preset (presets: {', '.join(ex.list_presets())})")
    overrides = dict(ex.parse_override(s) for s in args.set or [])
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if overrides:
        cfg = cfg.replace(**overrides)
    return cfg


def _prepare(args) -> ex.ExperimentConfig:
    cfg = _resolve_config(args)
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    if args.command in ("generate", "run") or not (run_dir / "config.json").exists():
        ex.save_config(cfg, run_dir)
    return cfg


def _log(args, msg: str) -> None:
    if not args.quiet:
        print(msg, flush=True)


def cmd_generate(args, cfg):
    t0 = time.perf_counter()
    paths = ex.generate(cfg, args.run_dir)
    _log(args, f"generate: {len(paths)} archives of {cfg.snapshots} snapshots ({time.perf_counter() - t0:.1f} s)")


def cmd_topology(args, cfg):
    t0 = time.perf_counter()
    archives = getattr(args, "archives", None)
    out = getattr(args, "out", None)
    if archives and out:
        if len(archives) != 1:
            raise ex.ConfigError("--out needs exactly one archive")
        P = ex.archive_process(archives[0], cfg.quantizer())
        ex.write_process(P, out)
        _log(args, f"topology: {out} ({len(P)} snapshots)")
        return
    outs = ex.topology(cfg, args.run_dir, archives or None)
    _log(args, f"topology: {len(outs)} processes ({time.perf_counter() - t0:.1f} s)")


def cmd_train(args, cfg):
    model = ex.train_model(cfg, args.run_dir)
    _log(args, f"train: {model.n_classes} classes, M = {model.M}, p = {model.p:g}")


def cmd_classify(args, cfg):
    rows = ex.classify(cfg, args.run_dir)
    hits = sum(r[cfg.scheme] == r["true"] for r in rows)
    _log(args, f"classify: {len(rows)} processes, {cfg.scheme} hits {hits}")


def cmd_evaluate(args, cfg):
    ex.evaluate(cfg, args.run_dir)
    _log(args, (Path(args.run_dir) / "report.txt").read_text().split("\nconfig:")[0].rstrip())


def cmd_heatmap(args, cfg):
    res = ex.heatmap(cfg, args.run_dir)
    if "classifier_distances" in res:
        c = res["classifier_distances"]
        _log(args, f"heatmap: classifier distances, {c['monotone']}/{c['comparisons']} row comparisons increasing")
    if res.get("time_grids"):
        _log(args, "heatmap: time-classification grids")


def cmd_time_classify(args, cfg):
    rep = ex.time_classify(cfg, args.run_dir)
    for s, summ in rep["summary"].items():
        _log(args, f"time-classify {s}: " + ", ".join(f"{k} {v:.3f}" for k, v in summ.items()))


def cmd_run(args, cfg):
    for fn in (cmd_generate, cmd_topology, cmd_train, cmd_classify, cmd_evaluate, cmd_time_classify, cmd_heatmap):
        fn(args, cfg)


COMMANDS = {
    "generate": (cmd_generate, "simulate snapshot archives for every (mass, run)"),
    "topology": (cmd_topology, "turn archives into topological processes"),
    "train": (cmd_train, "average the training processes into class classifiers"),
    "classify": (cmd_classify, "classify the held-out processes (C0, C1, CA)"),
    "evaluate": (cmd_evaluate, "bin the predictions into Hits / Missed by w / Wrong"),
    "heatmap": (cmd_heatmap, "export distance and time-grid heat maps (CSV + PGM)"),
    "time-classify": (cmd_time_classify, "classify snapshot times at fixed mass"),
    "run": (cmd_run, "all stages in order"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chctopo", description="Topological classification of Cahn-Hilliard-Cook microstructures."
    )
    parser.add_argument("--version", action="version", version=f"chctopo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--run-dir", required=True, help="run directory holding all artifacts")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--preset", help=f"named preset ({', '.join(ex.list_presets())})")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("-q", "--quiet", action="store_true")
        if name == "topology":
            p.add_argument("archives", nargs="*", help="archive directories (default: all in the run)")
            p.add_argument("--out", help="output process file (single archive only)")
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _prepare(args)
        COMMANDS[args.command][0](args, cfg)
    except ex.ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except (ArchiveError, FieldFormatError, ex.DataError) as exc:
        return _fail("data", str(exc), EXIT_DATA)
    except OSError as exc:
        where = f"{exc.filename}: " if exc.filename else ""
        return _fail("io", f"{where}{exc.strerror or exc}", EXIT_IO)
    return 0


if __name__ == "__main__":
    sys.exit(main())
