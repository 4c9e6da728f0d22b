"""Follow-the-quantized-leader dynamics.

One stage of the process, for every player ``i``:

1. ``x_i = Q(y_i)`` through the regularizer's choice map;
2. feedback ``V_i`` is formed from the payoffs, either as the (possibly
   quantized and noisy) mixed payoff vector, or from a single quantized
   realized payoff through the importance-weighted estimator with explicit
   exploration;
3. ``y_i <- y_i + gamma_n * V_i``.

Scores are only meaningful up to adding a constant to every coordinate (both
choice maps are invariant to it), so the increment is applied as
``gamma_n * (V_i - max_a V_ia)``. This keeps scores bounded from above and
makes a constant payoff vector an exact no-op.

Randomness: every stage consumes a fixed number of uniforms from the
trajectory's generator, in this order: one per player for the action draw
(bandit mode only), then one per noise value (player-major, and
action-major within a player in vector mode). Actions are drawn by inverse
CDF and noise by an affine or probit transform, so a block of uniforms
drawn at once is the same stream as stage-by-stage draws.

The stage functions accept arrays with leading batch axes, which is how
:func:`simulate` runs many trajectories in lockstep.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .game import Game, payoff_vector
from .quantize import QuantizationScheme, quantize_vector
from .regularizer import Regularizer, choice_map

FEEDBACK_MODES = ("exact-vector", "quantized-vector", "bandit-iwe")
NOISE_KINDS = ("none", "uniform", "gaussian")

# Boundary slack for the step-size/exploration validity predicate.
SCHEDULE_TOL = 1e-12

# Stages drawn per call to the generator in :func:`simulate`.
_DRAW_BLOCK = 256


@dataclass(frozen=True)
class Schedule:
    """Step sizes ``gamma_n = g0 * n**-p`` and exploration ``eps_n = e0 * n**-q``."""

    g0: float = 1.0
    p: float = 0.0
    e0: float = 1.0
    q: float = 0.0

    def __post_init__(self):
        if not self.g0 > 0:
            raise ValueError(f"g0 must be positive, got {self.g0}")
        if not 0 <= self.p <= 1:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not 0 < self.e0 <= 1:
            raise ValueError(f"e0 must lie in (0, 1], got {self.e0}")
        if not self.q >= 0:
            raise ValueError(f"q must be >= 0, got {self.q}")

    def step(self, n):
        return self.g0 * np.power(n, -self.p, dtype=float)

    def exploration(self, n):
        return self.e0 * np.power(n, -self.q, dtype=float)

    @property
    def valid(self) -> bool:
        """Whether the polynomial schedule meets the summability conditions
        ``p <= 1``, ``p + q > 1`` and ``2p - 2q > 1``.

        Values within ``SCHEDULE_TOL`` of a boundary count as on it, so e.g.
        ``(0.75, 0.25)`` is invalid despite float rounding.
        """
        p, q = self.p, self.q
        return (
            p <= 1 + SCHEDULE_TOL
            and p + q > 1 + SCHEDULE_TOL
            and 2 * p - 2 * q > 1 + SCHEDULE_TOL
        )

    def warning(self) -> Optional[str]:
        if self.valid:
            return None
        return (
            f"schedule (p={self.p}, q={self.q}) violates p <= 1, p + q > 1, "
            "2p - 2q > 1; convergence guarantees do not apply"
        )


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean additive payoff noise: ``uniform`` on ``[-scale, scale]`` or
    ``gaussian`` with standard deviation ``scale``."""

    kind: str = "none"
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not self.scale >= 0:
            raise ValueError("noise scale must be >= 0")
        if self.kind == "none" and self.scale != 0:
            raise ValueError("noise kind 'none' takes no scale")

    @property
    def active(self) -> bool:
        return self.kind != "none"

    @property
    def variance(self) -> float:
        if self.kind == "uniform":
            return self.scale**2 / 3.0
        if self.kind == "gaussian":
            return self.scale**2
        return 0.0

    def from_uniform(self, u):
        """Transform uniforms on ``[0, 1)`` into noise draws."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return self.scale * (2.0 * u - 1.0)
        if self.kind == "gaussian":
            return self.scale * ndtri(np.maximum(u, 2.0**-54))
        return np.zeros_like(u)

    def sample(self, rng: np.random.Generator, size=None):
        if not self.active:
            return np.zeros(size) if size is not None else 0.0
        return self.from_uniform(rng.random(size))


@dataclass(frozen=True)
class FeedbackChannel:
    mode: str = "exact-vector"
    quantizer: QuantizationScheme = field(default_factory=QuantizationScheme)
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        if self.mode not in FEEDBACK_MODES:
            raise ValueError(f"unknown feedback mode {self.mode!r}; expected one of {FEEDBACK_MODES}")
        if self.mode == "exact-vector" and (
            self.quantizer.rule != "identity" or self.noise.active
        ):
            raise ValueError("exact-vector feedback takes no quantizer and no noise")

    @property
    def bandit(self) -> bool:
        return self.mode == "bandit-iwe"

    def draws_per_stage(self, g: Game) -> int:
        if self.bandit:
            return g.num_players * (2 if self.noise.active else 1)
        if self.mode == "quantized-vector" and self.noise.active:
            return sum(g.shape)
        return 0


@dataclass(frozen=True)
class LearnerState:
    """Scores, strategies and (bandit mode) sampling strategies at stage ``n``.

    Arrays may carry leading batch axes shared by all players.
    """

    n: int
    y: tuple[np.ndarray, ...]
    x: tuple[np.ndarray, ...]
    x_hat: Optional[tuple[np.ndarray, ...]] = None

    @classmethod
    def from_scores(
        cls,
        y: Sequence[np.ndarray],
        r: Regularizer,
        sch: Optional[Schedule] = None,
        bandit: bool = False,
        n: int = 1,
    ) -> "LearnerState":
        y = tuple(np.array(yi, dtype=float) for yi in y)
        x = tuple(choice_map(r, yi) for yi in y)
        x_hat = None
        if bandit:
            eps = (sch or Schedule()).exploration(n)
            x_hat = tuple(sampling_strategy(xi, eps) for xi in x)
        return cls(n, y, x, x_hat)


@dataclass
class TrajectoryRecord:
    """Strided log of one run.

    ``x[i]`` has shape ``(len(stages), |A_i|)``. ``x_hat``, ``actions`` and
    ``payoffs`` are only logged in bandit mode, ``y`` only on request.
    ``final_x`` is the strategy after the last update (stage ``horizon + 1``).
    """

    seed: int
    stages: np.ndarray
    x: list[np.ndarray]
    final_x: list[np.ndarray]
    horizon: int
    config_hash: str = ""
    y: Optional[list[np.ndarray]] = None
    x_hat: Optional[list[np.ndarray]] = None
    actions: Optional[np.ndarray] = None
    payoffs: Optional[np.ndarray] = None
    verdict: object = None

    def stage_index(self, stage: int) -> int:
        idx = int(np.searchsorted(self.stages, stage))
        if idx >= len(self.stages) or self.stages[idx] != stage:
            raise KeyError(f"stage {stage} was not logged")
        return idx

    def strategy_at(self, stage: int) -> list[np.ndarray]:
        k = self.stage_index(stage)
        return [xi[k] for xi in self.x]

    def to_dict(self) -> dict:
        out = {
            "seed": self.seed,
            "config_hash": self.config_hash,
            "horizon": self.horizon,
            "stages": self.stages.tolist(),
            "x": [xi.tolist() for xi in self.x],
            "final_x": [xi.tolist() for xi in self.final_x],
        }
        for name in ("y", "x_hat"):
            val = getattr(self, name)
            if val is not None:
                out[name] = [v.tolist() for v in val]
        if self.actions is not None:
            out["actions"] = self.actions.tolist()
            out["payoffs"] = self.payoffs.tolist()
        return out


def sampling_strategy(x_i, eps):
    """Mix ``x_i`` with the uniform distribution: ``(1 - eps) x_i + eps / |A_i|``."""
    x_i = np.asarray(x_i, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if np.any(eps < 0) or np.any(eps > 1):
        raise ValueError(f"exploration parameter must lie in [0, 1], got {eps}")
    if eps.ndim:
        eps = eps[..., None]
    return (1.0 - eps) * x_i + eps / x_i.shape[-1]


def sample_actions(x_hat: Sequence[np.ndarray], u) -> np.ndarray:
    """Inverse-CDF draw of one action per player from uniforms ``u[..., i]``."""
    u = np.asarray(u, dtype=float)
    cols = []
    for i, p in enumerate(x_hat):
        cdf = np.cumsum(p, axis=-1)
        a = np.sum(cdf <= u[..., i : i + 1], axis=-1)
        cols.append(np.minimum(a, p.shape[-1] - 1))
    return np.stack(cols, axis=-1)


def realized_payoffs(g: Game, a) -> np.ndarray:
    """``u_i(a)`` for every player; ``a`` has shape ``batch + (N,)``."""
    a = np.asarray(a)
    idx = tuple(a[..., j] for j in range(g.num_players))
    return np.stack([u[idx] for u in g.payoffs], axis=-1)


def realized_feedback(
    g: Game,
    a,
    ch: FeedbackChannel,
    rng: Optional[np.random.Generator] = None,
    noise_u=None,
) -> np.ndarray:
    """Quantized noisy realized payoff ``Q(u_i(a) + xi_i)`` for every player.

    Noise is drawn player by player from ``rng``, or taken from the uniforms
    ``noise_u`` when given.
    """
    base = realized_payoffs(g, a)
    if ch.noise.active:
        if noise_u is None:
            if rng is None:
                raise ValueError("noisy feedback needs a random generator")
            noise_u = rng.random(base.shape)
        base = base + ch.noise.from_uniform(noise_u)
    return quantize_vector(ch.quantizer, base)


def iwe_estimate(i: int, chosen, u_hat, x_hat_i) -> np.ndarray:
    """Importance-weighted payoff vector: ``u_hat / x_hat_i[chosen]`` at the
    chosen action, zero elsewhere. ``i`` only labels errors."""
    x_hat_i = np.asarray(x_hat_i, dtype=float)
    chosen = np.asarray(chosen)
    u_hat = np.asarray(u_hat, dtype=float)
    prob = np.take_along_axis(x_hat_i, chosen[..., None], axis=-1)[..., 0]
    if np.any(prob <= 0):
        raise ValueError(f"player {i} chose an action with zero sampling probability")
    hot = np.arange(x_hat_i.shape[-1]) == chosen[..., None]
    return np.where(hot, (u_hat / prob)[..., None], 0.0)


def vector_feedback(
    g: Game,
    x: Sequence[np.ndarray],
    ch: FeedbackChannel,
    rng: Optional[np.random.Generator] = None,
    noise_u=None,
) -> list[np.ndarray]:
    """Mixed payoff vectors, quantized (with optional per-coordinate noise) in
    ``quantized-vector`` mode."""
    if ch.bandit:
        raise ValueError("vector feedback is not available in bandit mode")
    v = [payoff_vector(g, x, i) for i in range(g.num_players)]
    if ch.mode == "exact-vector":
        return v
    if ch.noise.active:
        if noise_u is None:
            if rng is None:
                raise ValueError("noisy feedback needs a random generator")
            noise_u = rng.random(v[0].shape[:-1] + (sum(g.shape),))
        off = np.cumsum((0,) + g.shape)
        v = [vi + ch.noise.from_uniform(noise_u[..., off[i] : off[i + 1]]) for i, vi in enumerate(v)]
    return [quantize_vector(ch.quantizer, vi) for vi in v]


@dataclass
class StageOutcome:
    actions: Optional[np.ndarray] = None
    payoffs: Optional[np.ndarray] = None


def _stage(
    state: LearnerState,
    g: Game,
    r: Regularizer,
    sch: Schedule,
    ch: FeedbackChannel,
    u,
) -> tuple[LearnerState, StageOutcome]:
    n = state.n
    N = g.num_players
    outcome = StageOutcome()
    if ch.bandit:
        x_hat = state.x_hat
        if x_hat is None:
            x_hat = tuple(sampling_strategy(xi, sch.exploration(n)) for xi in state.x)
        a = sample_actions(x_hat, u[..., :N])
        noise_u = u[..., N : 2 * N] if ch.noise.active else None
        u_hat = realized_feedback(g, a, ch, noise_u=noise_u)
        V = [iwe_estimate(i, a[..., i], u_hat[..., i], x_hat[i]) for i in range(N)]
        outcome = StageOutcome(a, u_hat)
    else:
        V = vector_feedback(g, state.x, ch, noise_u=u if ch.noise.active else None)

    gamma = sch.step(n)
    y = tuple(yi + gamma * (Vi - np.max(Vi, axis=-1, keepdims=True)) for yi, Vi in zip(state.y, V))
    x = tuple(choice_map(r, yi) for yi in y)
    x_hat = None
    if ch.bandit:
        eps = sch.exploration(n + 1)
        x_hat = tuple(sampling_strategy(xi, eps) for xi in x)
    return LearnerState(n + 1, y, x, x_hat), outcome


def ftql_step(
    state: LearnerState,
    g: Game,
    r: Regularizer,
    sch: Schedule,
    ch: FeedbackChannel,
    rng: Optional[np.random.Generator] = None,
) -> LearnerState:
    """Advance every player by one stage."""
    k = ch.draws_per_stage(g)
    batch = state.y[0].shape[:-1]
    if k and rng is None:
        raise ValueError("this feedback channel needs a random generator")
    u = rng.random(batch + (k,)) if k else np.zeros(batch + (0,))
    return _stage(state, g, r, sch, ch, u)[0]


def logged_stages(horizon: int, stride: int) -> np.ndarray:
    """Stage 1, every multiple of ``stride`` and the last stage."""
    if horizon < 1 or stride < 1:
        raise ValueError("horizon and stride must be positive")
    stages = set(range(stride, horizon + 1, stride)) | {1, horizon}
    return np.array(sorted(stages), dtype=np.int64)


def simulate(
    g: Game,
    r: Regularizer,
    sch: Schedule,
    ch: FeedbackChannel,
    y0: Sequence[np.ndarray],
    rngs: Sequence[np.random.Generator],
    horizon: int,
    log_stride: int = 1,
    log_scores: bool = False,
    seeds: Optional[Sequence[int]] = None,
    config_hash: str = "",
) -> list[TrajectoryRecord]:
    """Run ``len(rngs)`` trajectories for ``horizon`` stages in lockstep.

    ``y0[i]`` holds the initial scores of player ``i`` with shape
    ``(B, |A_i|)``; trajectory ``b`` draws its randomness from ``rngs[b]``
    only, so its result does not depend on the rest of the batch.
    """
    B = len(rngs)
    y0 = [np.array(yi, dtype=float).reshape(B, -1) for yi in y0]
    N = g.num_players
    k = ch.draws_per_stage(g)
    stages = logged_stages(horizon, log_stride)
    L = len(stages)
    log_x = [np.empty((L, B, g.num_actions(i))) for i in range(N)]
    log_y = [np.empty((L, B, g.num_actions(i))) for i in range(N)] if log_scores else None
    log_xh = [np.empty((L, B, g.num_actions(i))) for i in range(N)] if ch.bandit else None
    log_a = np.empty((L, B, N), dtype=np.int64) if ch.bandit else None
    log_u = np.empty((L, B, N)) if ch.bandit else None

    state = LearnerState.from_scores(y0, r, sch, bandit=ch.bandit)
    row = 0
    block = np.zeros((B, 0, k))
    for n in range(1, horizon + 1):
        j = (n - 1) % _DRAW_BLOCK
        if k and j == 0:
            m = min(_DRAW_BLOCK, horizon - n + 1)
            block = np.stack([rng.random((m, k)) for rng in rngs])
        u = block[:, j, :] if k else np.zeros((B, 0))
        logging = row < L and stages[row] == n
        if logging:
            for i in range(N):
                log_x[i][row] = state.x[i]
                if log_scores:
                    log_y[i][row] = state.y[i]
                if ch.bandit:
                    log_xh[i][row] = state.x_hat[i]
        state, outcome = _stage(state, g, r, sch, ch, u)
        if logging:
            if ch.bandit:
                log_a[row] = outcome.actions
                log_u[row] = outcome.payoffs
            row += 1

    if seeds is None:
        seeds = [-1] * B
    records = []
    for b in range(B):
        records.append(
            TrajectoryRecord(
                seed=int(seeds[b]),
                stages=stages.copy(),
                x=[lx[:, b, :].copy() for lx in log_x],
                final_x=[xi[b].copy() for xi in state.x],
                horizon=horizon,
                config_hash=config_hash,
                y=[ly[:, b, :].copy() for ly in log_y] if log_scores else None,
                x_hat=[lx[:, b, :].copy() for lx in log_xh] if ch.bandit else None,
                actions=log_a[:, b, :].copy() if ch.bandit else None,
                payoffs=log_u[:, b, :].copy() if ch.bandit else None,
            )
        )
    return records


def with_quantizer(ch: FeedbackChannel, q: QuantizationScheme) -> FeedbackChannel:
    return replace(ch, quantizer=q)
