"""Experiment configuration, batch execution and output files.

A config fully determines a batch: trajectory ``k`` uses seed
``seed + k`` and its own generator, so results do not depend on how
trajectories are grouped or on the number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import analysis
from .dynamics import (
    FeedbackChannel,
    NoiseModel,
    Schedule,
    TrajectoryRecord,
    logged_stages,
    simulate,
)
from .game import Game, quantize_game
from .quantize import QuantizationScheme
from .regularizer import Regularizer, get_regularizer, initial_scores_for

CHUNK_SIZE = 50
WORKERS_ENV = "FTQL_WORKERS"
FULL_LOG_HORIZON = 10**4

CONFIG_DIR = Path(__file__).parent / "configs"
SCHEMA_DIR = Path(__file__).parent / "schemas"


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class QuantizerConfig(_Strict):
    rule: Literal["half-away", "even-away", "floor", "identity"] = "identity"
    error: Optional[float] = Field(default=None, ge=0)


class GameConfig(_Strict):
    actions: Optional[list[list[str]]] = None
    payoffs: Optional[list[Any]] = None
    path: Optional[str] = None
    # learn in the quantized game instead of the original one
    quantized: Optional[QuantizerConfig] = None

    @model_validator(mode="after")
    def _one_source(self):
        inline = self.actions is not None or self.payoffs is not None
        if inline == (self.path is not None):
            raise ValueError("give either an inline game (actions, payoffs) or a path")
        if inline and (self.actions is None or self.payoffs is None):
            raise ValueError("inline games need both actions and payoffs")
        return self


class NoiseConfig(_Strict):
    kind: Literal["none", "uniform", "gaussian"] = "none"
    scale: float = Field(default=0.0, ge=0)


class ScheduleConfig(_Strict):
    g0: float = Field(default=1.0, gt=0)
    p: float = Field(default=0.0, ge=0, le=1)
    e0: float = Field(default=1.0, gt=0, le=1)
    q: float = Field(default=0.0, ge=0)


class InitConfig(_Strict):
    scores_uniform: Optional[tuple[float, float]] = Field(default=None, alias="scores-uniform")
    strategy: Optional[list[list[float]]] = None
    scores: Optional[list[list[float]]] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        given = [v is not None for v in (self.scores_uniform, self.strategy, self.scores)]
        if sum(given) != 1:
            raise ValueError("init takes exactly one of 'scores-uniform', 'strategy', 'scores'")
        return self


class AnalysisConfig(_Strict):
    eps: float = Field(default=analysis.DEFAULT_EPS, gt=0, lt=1)
    dwell: Optional[int] = Field(default=None, ge=1)


class OutputConfig(_Strict):
    dir: str = "ftql-out"
    trajectories: bool = False
    heatmap_stages: list[int] = Field(default_factory=list)
    heatmap_bins: int = Field(default=20, ge=1)


class ExpectConfig(_Strict):
    """Qualitative outcome checked by ``replay-example``."""

    outcome: Literal["frozen", "converge"]
    target: Optional[list[int]] = None
    eps: float = Field(default=0.01, gt=0, lt=1)
    by_stage: Optional[int] = Field(default=None, ge=1)
    description: str = ""


class ExperimentConfig(_Strict):
    name: str = ""
    game: GameConfig
    regularizer: Literal["entropic", "euclidean"] = "entropic"
    quantizer: QuantizerConfig = QuantizerConfig()
    feedback: Literal["exact-vector", "quantized-vector", "bandit-iwe"] = "bandit-iwe"
    noise: NoiseConfig = NoiseConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    horizon: int = Field(ge=1)
    trajectories: int = Field(default=1, ge=1)
    init: InitConfig
    seed: int = Field(default=0, ge=0)
    log_stride: int = Field(default=1, ge=1)
    log_scores: bool = False
    analysis: AnalysisConfig = AnalysisConfig()
    output: OutputConfig = OutputConfig()
    expect: Optional[ExpectConfig] = None

    @model_validator(mode="after")
    def _consistent(self):
        # building the domain objects runs their own validation
        self.build()
        logged = set(logged_stages(self.horizon, self.log_stride).tolist())
        missing = [n for n in self.output.heatmap_stages if n not in logged]
        if missing:
            raise ValueError(
                f"heat-map stages {missing} are not logged (stage 1, multiples of "
                f"log_stride={self.log_stride} and the horizon {self.horizon})"
            )
        return self

    # -- domain objects ------------------------------------------------------

    def build_game(self) -> Game:
        if self.game.path is not None:
            raise ConfigError("game paths must be resolved before use (see load_config)")
        g = Game(self.game.actions, self.game.payoffs)
        if self.game.quantized is not None:
            g = quantize_game(
                g, QuantizationScheme.from_config(self.game.quantized.rule, self.game.quantized.error)
            )
        return g

    def build(self) -> tuple[Game, Regularizer, Schedule, FeedbackChannel]:
        g = self.build_game() if self.game.path is None else None
        r = get_regularizer(self.regularizer)
        sch = Schedule(**self.schedule.model_dump())
        q = QuantizationScheme.from_config(self.quantizer.rule, self.quantizer.error)
        ch = FeedbackChannel(self.feedback, q, NoiseModel(self.noise.kind, self.noise.scale))
        if g is not None:
            self._check_init(g, r)
        return g, r, sch, ch

    def _check_init(self, g: Game, r: Regularizer):
        for name in ("strategy", "scores"):
            vals = getattr(self.init, name)
            if vals is None:
                continue
            if [len(v) for v in vals] != list(g.shape):
                raise ValueError(f"init.{name} does not match the game's action counts {g.shape}")
            if name == "strategy":
                for v in vals:
                    initial_scores_for(r, v)

    # -- serialization -------------------------------------------------------

    def canonical(self) -> dict:
        return self.model_dump(mode="json", by_alias=True, exclude_none=True)

    def canonical_json(self) -> str:
        return json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        """Digest of everything that affects results (the output section does not)."""
        data = self.canonical()
        data.pop("output", None)
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        data = self.canonical()
        for key, value in overrides.items():
            set_dotted(data, key, value)
        return parse_config(data)


def parse_config(data: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Validate a raw config mapping; a ``game.path`` is read relative to
    ``base_dir`` and inlined."""
    try:
        data = json.loads(json.dumps(data))
        game = data.get("game")
        if isinstance(game, dict) and "path" in game:
            path = Path(game.pop("path"))
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            try:
                game.update(Game.load(path).to_dict())
            except OSError as exc:
                raise ConfigError(f"cannot read game file {path}: {exc}") from exc
        return ExperimentConfig.model_validate(data)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            return json.loads(raw)
        return tomllib.loads(raw.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


def parse_override(text: str) -> tuple[str, Any]:
    """``key.sub=value``; the value is read as JSON when possible."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return key.strip(), value


def set_dotted(data: dict, key: str, value) -> None:
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key}: {part} is not a table")
    node[parts[-1]] = value


def load_config(path, overrides: Optional[list[str]] = None) -> ExperimentConfig:
    data = read_config_file(path)
    for text in overrides or []:
        key, value = parse_override(text)
        set_dotted(data, key, value)
    return parse_config(data, base_dir=Path(path).parent)


def bundled_config(name: str) -> Path:
    path = CONFIG_DIR / f"{name}.toml"
    if not path.exists():
        known = sorted(p.stem for p in CONFIG_DIR.glob("*.toml"))
        raise ConfigError(f"no bundled config {name!r}; available: {known}")
    return path


# -- running -----------------------------------------------------------------


def _initial_scores(cfg: ExperimentConfig, g: Game, r: Regularizer, rng) -> list[np.ndarray]:
    init = cfg.init
    if init.scores_uniform is not None:
        lo, hi = init.scores_uniform
        return [rng.uniform(lo, hi, size=m) for m in g.shape]
    if init.strategy is not None:
        return [initial_scores_for(r, x) for x in init.strategy]
    return [np.array(y, dtype=float) for y in init.scores]


def run_seeds(cfg: ExperimentConfig, seeds) -> list[TrajectoryRecord]:
    """Simulate the given seeds together and attach convergence verdicts."""
    g, r, sch, ch = cfg.build()
    rngs = [np.random.default_rng(int(s)) for s in seeds]
    inits = [_initial_scores(cfg, g, r, rng) for rng in rngs]
    y0 = [np.stack([y[i] for y in inits]) for i in range(g.num_players)]
    records = simulate(
        g, r, sch, ch, y0, rngs,
        horizon=cfg.horizon,
        log_stride=cfg.log_stride,
        log_scores=cfg.log_scores,
        seeds=seeds,
        config_hash=cfg.config_hash,
    )
    for rec in records:
        rec.verdict = analysis.classify_trajectory(rec, g, cfg.analysis.eps, cfg.analysis.dwell)
    return records


def run_trajectory(cfg: ExperimentConfig, seed: int) -> TrajectoryRecord:
    return run_seeds(cfg, [seed])[0]


def _run_chunk(cfg_json: str, seeds: list[int]) -> list[TrajectoryRecord]:
    return run_seeds(ExperimentConfig.model_validate_json(cfg_json), seeds)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_batch(
    cfg: ExperimentConfig,
    workers: Optional[int] = None,
    chunk_size: int = CHUNK_SIZE,
) -> list[TrajectoryRecord]:
    """All ``cfg.trajectories`` runs, in seed order.

    Seeds are grouped into fixed chunks independent of ``workers``; each
    chunk runs in lockstep in one process.
    """
    workers = default_workers() if workers is None else workers
    seeds = [cfg.seed + k for k in range(cfg.trajectories)]
    chunks = [seeds[i : i + chunk_size] for i in range(0, len(seeds), chunk_size)]
    if workers <= 1 or len(chunks) == 1:
        out = [run_seeds(cfg, c) for c in chunks]
    else:
        blob = cfg.model_dump_json(by_alias=True)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_run_chunk, [blob] * len(chunks), chunks))
    return [rec for chunk in out for rec in chunk]


# -- outputs -----------------------------------------------------------------

VERDICT_FIELDS = ("seed", "target", "entered_at", "final_distance", "nearest")
RATE_FIELDS = ("seed", "target", "p", "slope", "intercept", "r2", "n_points", "conforming")


def _label(g: Game, profile) -> str:
    return "" if profile is None else g.profile_label(profile)


def verdict_rows(g: Game, records) -> list[dict]:
    rows = []
    for rec in records:
        v = rec.verdict
        rows.append(
            {
                "seed": rec.seed,
                "target": _label(g, v.target),
                "entered_at": "" if v.entered_at is None else v.entered_at,
                "final_distance": repr(float(v.final_distance)),
                "nearest": _label(g, v.nearest_profile),
            }
        )
    return rows


def rate_rows(cfg: ExperimentConfig, g: Game, records) -> list[dict]:
    if cfg.regularizer != "entropic":
        return []
    _, r, sch, _ = cfg.build()
    rows = []
    for rec in records:
        if rec.verdict.target is None:
            continue
        try:
            fit = analysis.fit_rate(rec, rec.verdict.target, r, sch, cfg.analysis.eps)
        except ValueError:
            continue
        rows.append(
            {
                "seed": rec.seed,
                "target": _label(g, rec.verdict.target),
                "p": repr(fit.p),
                "slope": repr(fit.slope),
                "intercept": repr(fit.intercept),
                "r2": repr(fit.r2),
                "n_points": fit.n_points,
                "conforming": str(fit.conforming).lower(),
            }
        )
    return rows


def to_csv(rows: list[dict], fields) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def heatmap_document(records, stage: int, bins: int, ell: float, config_hash: str) -> dict:
    counts = analysis.heatmap(records, stage, bins)
    return {
        "stage": int(stage),
        "bins": int(bins),
        "ell": float(ell),
        "trajectories": len(records),
        "x_axis": "x_1[a_1]",
        "y_axis": "x_2[b_1]",
        "config_hash": config_hash,
        "counts": counts.tolist(),
    }


def summarize(cfg: ExperimentConfig, g: Game, records) -> dict:
    sch = Schedule(**cfg.schedule.model_dump())
    attractors: dict[str, int] = {}
    nearest: dict[str, int] = {}
    for rec in records:
        v = rec.verdict
        if v.target is not None:
            key = _label(g, v.target)
            attractors[key] = attractors.get(key, 0) + 1
        key = _label(g, v.nearest_profile)
        nearest[key] = nearest.get(key, 0) + 1
    converged = sum(attractors.values())
    return {
        "name": cfg.name,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "trajectories": len(records),
        "horizon": cfg.horizon,
        "quantizer": cfg.quantizer.model_dump(mode="json"),
        "strict_equilibria": [_label(g, eq) for eq in analysis.enumerate_strict_nash(g)],
        "attractors": dict(sorted(attractors.items())),
        "converged_fraction": converged / len(records),
        "nearest_profiles": dict(sorted(nearest.items())),
        "schedule_valid": sch.valid,
        "schedule_warning": sch.warning(),
    }


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_outputs(cfg: ExperimentConfig, records, out_dir) -> dict[str, Path]:
    """Render every artifact first, then write them; returns name -> path."""
    g = cfg.build_game()
    docs: dict[str, str] = {}
    echo = dict(cfg.canonical(), config_hash=cfg.config_hash)
    docs["config.json"] = json.dumps(echo, indent=2, sort_keys=True) + "\n"
    docs["verdicts.csv"] = to_csv(verdict_rows(g, records), VERDICT_FIELDS)
    rates = rate_rows(cfg, g, records)
    if rates:
        docs["rates.csv"] = to_csv(rates, RATE_FIELDS)
    docs["summary.json"] = json.dumps(summarize(cfg, g, records), indent=2, sort_keys=True) + "\n"
    ell = QuantizationScheme.from_config(cfg.quantizer.rule, cfg.quantizer.error).error
    for stage in cfg.output.heatmap_stages:
        doc = heatmap_document(records, stage, cfg.output.heatmap_bins, ell, cfg.config_hash)
        docs[f"heatmap_stage{stage}.json"] = json.dumps(doc) + "\n"
    if cfg.output.trajectories:
        if cfg.horizon > FULL_LOG_HORIZON and cfg.log_stride == 1:
            raise ConfigError(
                f"full trajectory logs are limited to horizons <= {FULL_LOG_HORIZON}; raise log_stride"
            )
        docs["trajectories.jsonl"] = "".join(json.dumps(rec.to_dict()) + "\n" for rec in records)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, text in docs.items():
        _write_atomic(out / name, text)
        written[name] = out / name
    return written


def load_schema(name: str) -> dict:
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())


def config_json_schema() -> dict:
    """JSON schema of the config file format, derived from the pydantic models."""
    schema = ExperimentConfig.model_json_schema(by_alias=True)
    schema["$schema"] = "https://json-schema.org/draft/2020-12/schema"
    return schema


def write_config_schema() -> Path:
    path = SCHEMA_DIR / "config.schema.json"
    path.write_text(json.dumps(config_json_schema(), indent=2, sort_keys=True) + "\n")
    return path
