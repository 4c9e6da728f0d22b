"""Command-line front end.

    ftql run CONFIG [--set key=value ...] [--out DIR] [--workers N]
    ftql replay-example {ex1-i,ex1-ii,ex2-i,ex2-ii}
    ftql reproduce-figure [--out DIR] [--scale S]
    ftql validate-config CONFIG [--set key=value ...]

Exit codes: 0 success, 1 failed example check, 2 bad config, 3 I/O failure.
Errors are printed to stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis
from .experiment import (
    ConfigError,
    ExperimentConfig,
    bundled_config,
    heatmap_document,
    load_config,
    run_batch,
    run_trajectory,
    write_outputs,
)

EXAMPLES = ("ex1-i", "ex1-ii", "ex2-i", "ex2-ii")
FIGURE_ELLS = (0.0, 1.5, 4.0)
FIGURE_TRAJECTORIES = 500
FIGURE_HORIZON = 2000
FIGURE_MID_STAGE = 50

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def _warn_schedule(cfg: ExperimentConfig) -> None:
    _, _, sch, _ = cfg.build()
    msg = sch.warning()
    if msg:
        print(f"warning: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set)
    _warn_schedule(cfg)
    records = run_batch(cfg, workers=args.workers)
    out = Path(args.out or cfg.output.dir)
    written = write_outputs(cfg, records, out)
    summary = json.loads(written["summary.json"].read_text())
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def check_expectation(cfg: ExperimentConfig, rec) -> tuple[bool, str]:
    """Evaluate the config's ``expect`` table against one trajectory."""
    exp = cfg.expect
    g = cfg.build_game()
    if exp.outcome == "frozen":
        same = all(
            np.array_equal(xi, np.broadcast_to(xi[0], xi.shape)) and np.array_equal(fx, xi[0])
            for xi, fx in zip(rec.x, rec.final_x)
        )
        pred = f"x_n == x_1 exactly for n = 1..{rec.horizon + 1}"
        return same, pred
    target = tuple(exp.target)
    by = exp.by_stage or rec.horizon
    verdict = analysis.classify_trajectory(rec, g, exp.eps, dwell=rec.horizon - by + 1)
    ok = verdict.target == target and verdict.entered_at is not None and verdict.entered_at <= by
    pred = (
        f"target {g.profile_label(target)} with eps = {exp.eps} by stage {by} "
        f"(got {g.profile_label(verdict.target) if verdict.target else 'none'}, "
        f"entered at {verdict.entered_at})"
    )
    return ok, pred


def replay_example(name: str) -> tuple[bool, str]:
    if name not in EXAMPLES:
        raise ConfigError(f"unknown example {name!r}; expected one of {EXAMPLES}")
    cfg = load_config(bundled_config(name))
    rec = run_trajectory(cfg, cfg.seed)
    return check_expectation(cfg, rec)


def cmd_replay(args) -> int:
    names = EXAMPLES if args.name == "all" else (args.name,)
    ok_all = True
    for name in names:
        t0 = time.perf_counter()
        ok, pred = replay_example(name)
        dt = time.perf_counter() - t0
        print(f"{name}: {'PASS' if ok else 'FAIL'}: {pred} [{dt:.3f}s]")
        ok_all &= ok
    return EXIT_OK if ok_all else EXIT_FAIL


def figure_config(ell: float, scale: float) -> ExperimentConfig:
    if not 0 < scale <= 1:
        raise ConfigError("scale must lie in (0, 1]")
    base = load_config(bundled_config("fig1"))
    horizon = max(FIGURE_MID_STAGE + 1, int(round(FIGURE_HORIZON * scale)))
    return base.with_overrides(
        {
            "quantizer.error": ell,
            "trajectories": max(1, int(round(FIGURE_TRAJECTORIES * scale))),
            "horizon": horizon,
            "log_stride": FIGURE_MID_STAGE,
            "analysis.dwell": max(1, horizon // 10),
            "output.heatmap_stages": [1, FIGURE_MID_STAGE, horizon],
        }
    )


def reproduce_figure(out_dir, scale: float = 1.0, workers: Optional[int] = None) -> list[Path]:
    """Heat maps of the three quantization regimes at the start, early and at
    the horizon; nine JSON files."""
    out = Path(out_dir)
    docs = {}
    for ell in FIGURE_ELLS:
        cfg = figure_config(ell, scale)
        records = run_batch(cfg, workers=workers)
        for stage in cfg.output.heatmap_stages:
            doc = heatmap_document(records, stage, cfg.output.heatmap_bins, ell, cfg.config_hash)
            docs[f"heatmap_ell{ell:g}_stage{stage}.json"] = json.dumps(doc) + "\n"
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in docs.items():
        (out / name).write_text(text)
        paths.append(out / name)
    return paths


def cmd_figure(args) -> int:
    paths = reproduce_figure(args.out, args.scale, args.workers)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config, args.set)
    _warn_schedule(cfg)
    print(json.dumps(dict(cfg.canonical(), config_hash=cfg.config_hash), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftql", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_set(p):
        p.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE",
            help="override a config value by dotted path, e.g. quantizer.error=4",
        )

    p = sub.add_parser("run", help="run a batch of trajectories from a config file")
    p.add_argument("config")
    add_set(p)
    p.add_argument("--out", help="output directory (default: output.dir from the config)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $FTQL_WORKERS or 1)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay-example", help="replay a deterministic worked example")
    p.add_argument("name", choices=EXAMPLES + ("all",))
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("reproduce-figure", help="heat maps for ell = 0, 1.5, 4")
    p.add_argument("--out", default="figure-out")
    p.add_argument("--scale", type=float, default=1.0,
                   help="scales trajectory count and horizon, in (0, 1]")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("validate-config", help="validate and echo a config in canonical form")
    p.add_argument("config")
    add_set(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _error("config", str(exc), EXIT_CONFIG)
    except OSError as exc:
        return _error("io", str(exc), EXIT_IO)


if __name__ == "__main__":
    sys.exit(main())
