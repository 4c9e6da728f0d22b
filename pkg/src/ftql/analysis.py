"""Convergence diagnostics for recorded trajectories.

Convergence to a strict equilibrium ``a*`` is detected on a finite horizon as
"enter the neighborhood ``U_eps = {x : x_{i,a*_i} > 1 - eps for all i}`` and
stay there for the final ``dwell`` stages". The geometric checks describe the
normal cone of the strategy polytope at a vertex, which is what decides
whether quantized payoff vectors keep pushing towards the vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dynamics import (
    FeedbackChannel,
    Schedule,
    TrajectoryRecord,
    iwe_estimate,
    realized_feedback,
    sample_actions,
    sampling_strategy,
)
from .game import (
    Game,
    _check_pure,
    enumerate_strict_nash,
    is_strict_nash,
    min_payoff_gap,
    payoff_vector,
    point_mass,
)
from .regularizer import Regularizer

DEFAULT_EPS = 0.01
RATE_FLOOR = 10 * np.finfo(float).eps
MIN_FIT_POINTS = 10

# Absolute slack (relative to the payoff scale) in the ball-in-cone test.
CONE_TOL = 1e-12


@dataclass(frozen=True)
class ConvergenceVerdict:
    target: Optional[tuple[int, ...]]
    entered_at: Optional[int]
    final_distance: float
    neighborhood_eps: float
    nearest_profile: tuple[int, ...] = ()

    def __post_init__(self):
        if (self.target is None) != (self.entered_at is None):
            raise ValueError("entered_at is set exactly when a target is set")


@dataclass(frozen=True)
class RateFit:
    p: float
    slope: float
    intercept: float
    r2: float
    n_points: int

    @property
    def conforming(self) -> bool:
        """Distances decay: a clearly negative slope."""
        return self.slope < -1e-9


def in_neighborhood(x: Sequence[np.ndarray], eq: Sequence[int], eps: float) -> bool:
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return all(float(np.asarray(xi)[a]) > 1 - eps for xi, a in zip(x, eq))


def _stage_mask(x: Sequence[np.ndarray], eq: Sequence[int], eps: float) -> np.ndarray:
    """Per logged stage: is the strategy inside ``U_eps(eq)``?"""
    mask = np.ones(x[0].shape[0], dtype=bool)
    for xi, a in zip(x, eq):
        mask &= xi[:, a] > 1 - eps
    return mask


def l1_distance(x: Sequence[np.ndarray], eq: Sequence[int]) -> np.ndarray:
    """``sum_i ||x_i - e_{a*_i}||_1``, computed as twice the off-target mass
    to avoid cancellation in ``1 - x_{i,a*_i}``. Works row-wise on logs."""
    total = 0.0
    for xi, a in zip(x, eq):
        xi = np.asarray(xi, dtype=float)
        off = np.sum(np.delete(xi, a, axis=-1), axis=-1)
        total = total + 2.0 * off
    return total


def nearest_pure_profile(x: Sequence[np.ndarray]) -> tuple[int, ...]:
    """Closest vertex in l1 distance: the per-player argmax."""
    return tuple(int(np.argmax(xi)) for xi in x)


def normal_cone_contains(g: Game, eq: Sequence[int], w: Sequence[np.ndarray]) -> bool:
    """Is ``w`` in the normal cone at the vertex ``eq``, i.e.
    ``w_{i,a} <= w_{i,a*_i}`` for all players and actions?"""
    eq = _check_pure(g, eq)
    if len(w) != g.num_players:
        raise ValueError("w needs one vector per player")
    for i, (wi, a) in enumerate(zip(w, eq)):
        wi = np.asarray(wi, dtype=float)
        if wi.shape != (g.num_actions(i),):
            raise ValueError(f"w[{i}] has shape {wi.shape}, expected ({g.num_actions(i)},)")
        if np.any(wi - wi[a] > 0):
            return False
    return True


def cone_margins(g: Game, eq: Sequence[int]) -> list[np.ndarray]:
    """``v_{i,a}(x*) - v_{i,a*_i}(x*)`` for every off-equilibrium action."""
    x_star = point_mass(g, eq)
    out = []
    for i, a in enumerate(eq):
        v = payoff_vector(g, x_star, i)
        out.append(np.delete(v - v[a], a))
    return out


def _sup_ball_points(center, radius, samples, rng):
    """Random points of the sup-norm ball, one array of shape
    ``(samples, |A_i|)`` per player; even rows are box corners."""
    pts = []
    corner = (np.arange(samples) % 2 == 0)[:, None]
    for c in center:
        signs = rng.choice([-1.0, 1.0], size=(samples, c.shape[-1]))
        inner = rng.uniform(-1.0, 1.0, size=(samples, c.shape[-1]))
        pts.append(c + radius * np.where(corner, signs, inner))
    return pts


def _cone_contains_tol(w, eq, tol, shift=0.0):
    """Row-wise ``w_{i,a} - w_{i,a*_i} + shift <= tol`` over off-equilibrium
    actions of every player."""
    ok = np.ones(w[0].shape[0], dtype=bool)
    for wi, a in zip(w, eq):
        diff = np.delete(wi - wi[:, a : a + 1], a, axis=1)
        ok &= np.all(diff + shift <= tol, axis=1)
    return ok


def ball_in_cone_check(
    g: Game,
    eq: Sequence[int],
    radius: float,
    samples: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> bool:
    """Does the sup-norm ball of ``radius`` around ``v(x*)`` lie in the
    normal cone at ``x*``?

    The worst point of the ball raises ``w_{i,a}`` and lowers ``w_{i,a*}`` by
    ``radius`` each, so containment holds iff every margin plus ``2 radius`` is
    non-positive. With ``samples > 0`` random ball points are also checked;
    finding one outside the cone while the exact test says "contained" raises.
    """
    eq = _check_pure(g, eq)
    if not is_strict_nash(g, eq):
        raise ValueError(f"{g.profile_label(eq)} is not a strict equilibrium")
    if radius < 0:
        raise ValueError("radius must be >= 0")
    tol = CONE_TOL * _payoff_scale(g)
    inside = all(np.all(m + 2 * radius <= tol) for m in cone_margins(g, eq))
    if samples and inside:
        rng = rng or np.random.default_rng(0)
        center = [payoff_vector(g, point_mass(g, eq), i) for i in range(g.num_players)]
        if not np.all(_cone_contains_tol(_sup_ball_points(center, radius, samples, rng), eq, tol)):
            raise RuntimeError("sampled ball point outside the cone despite exact containment")
    return inside


def _payoff_scale(g: Game) -> float:
    return max(1.0, max(float(np.max(np.abs(u))) for u in g.payoffs))


def margin_check(
    g: Game,
    eq: Sequence[int],
    ell: float,
    m: int,
    samples: int,
    rng: np.random.Generator,
) -> bool:
    """Sampled check that, for ``ell <= Delta / m`` and ``d = Delta - m ell``,
    every ``w`` within sup-distance ``d / 2`` of ``v(x*)`` keeps a margin of
    ``m ell``: ``w_{i,a} - w_{i,a*} + m ell <= 0``."""
    delta = min_payoff_gap(g, eq)
    if ell > delta / m:
        raise ValueError(f"ell={ell} exceeds Delta/m={delta / m}")
    d = delta - m * ell
    center = [payoff_vector(g, point_mass(g, eq), i) for i in range(g.num_players)]
    pts = _sup_ball_points(center, d / 2, samples, rng)
    return bool(np.all(_cone_contains_tol(pts, eq, CONE_TOL * _payoff_scale(g), shift=m * ell)))


def classify_trajectory(
    rec: TrajectoryRecord,
    g: Game,
    eps: float = DEFAULT_EPS,
    dwell: Optional[int] = None,
) -> ConvergenceVerdict:
    """Which strict equilibrium, if any, the trajectory settles at.

    A target ``a*`` is reported when every logged stage in the final ``dwell``
    stages (default: last 10% of the horizon) lies in ``U_eps(a*)``;
    ``entered_at`` is the first logged stage of the final unbroken run inside
    ``U_eps(a*)``.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if len(rec.stages) == 0:
        raise ValueError("empty trajectory record")
    last = int(rec.stages[-1])
    if dwell is None:
        dwell = max(1, rec.horizon // 10)
    if dwell < 1:
        raise ValueError("dwell must be at least one stage")

    x_last = [xi[-1] for xi in rec.x]
    nearest = nearest_pure_profile(x_last)
    window = rec.stages > last - dwell
    for eq in enumerate_strict_nash(g):
        mask = _stage_mask(rec.x, eq, eps)
        if not np.all(mask[window]):
            continue
        outside = np.flatnonzero(~mask)
        first = 0 if outside.size == 0 else outside[-1] + 1
        return ConvergenceVerdict(
            target=tuple(eq),
            entered_at=int(rec.stages[first]),
            final_distance=float(l1_distance(x_last, eq)),
            neighborhood_eps=eps,
            nearest_profile=nearest,
        )
    return ConvergenceVerdict(
        target=None,
        entered_at=None,
        final_distance=float(l1_distance(x_last, nearest)),
        neighborhood_eps=eps,
        nearest_profile=nearest,
    )


def _entry_index(rec: TrajectoryRecord, eq, eps: float) -> int:
    mask = _stage_mask(rec.x, eq, eps)
    if not mask[-1]:
        raise ValueError("trajectory does not end near the equilibrium")
    outside = np.flatnonzero(~mask)
    return 0 if outside.size == 0 else int(outside[-1] + 1)


def linear_fit(t, z) -> tuple[float, float, float]:
    """Ordinary least squares ``z ~ slope * t + intercept``; returns
    ``(slope, intercept, r2)`` with ``r2 = 0`` for constant data."""
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    tc = t - t.mean()
    zc = z - z.mean()
    stt = float(tc @ tc)
    if stt == 0:
        raise ValueError("regressor is constant")
    slope = float(tc @ zc) / stt
    intercept = float(z.mean() - slope * t.mean())
    szz = float(zc @ zc)
    if szz == 0:
        return slope, intercept, 0.0
    resid = zc - slope * tc
    return slope, intercept, 1.0 - float(resid @ resid) / szz


def rate_regressor(stages, p: float) -> np.ndarray:
    """``n**(1 - p)``, or ``log n`` at ``p = 1`` where the step sums grow
    logarithmically."""
    n = np.asarray(stages, dtype=float)
    if p >= 1:
        return np.log(n)
    return n ** (1.0 - p)


def fit_rate(
    rec: TrajectoryRecord,
    eq: Sequence[int],
    r: Regularizer,
    sch: Schedule,
    eps: float = DEFAULT_EPS,
) -> RateFit:
    """Fit ``log ||x_n - x*||_1`` against ``n**(1-p)`` after entry into
    ``U_eps(eq)``; exponential decay shows up as a negative slope with a high
    ``R^2``. Stages with distance below ``10 * machine eps`` are dropped."""
    if r.kind != "entropic":
        raise ValueError("rate fits apply to the entropic kernel; use finite_time_check otherwise")
    start = _entry_index(rec, eq, eps)
    stages = rec.stages[start:]
    dist = l1_distance([xi[start:] for xi in rec.x], eq)
    keep = dist > RATE_FLOOR
    if np.count_nonzero(keep) < MIN_FIT_POINTS:
        raise ValueError(
            f"only {np.count_nonzero(keep)} usable stages, need {MIN_FIT_POINTS}"
        )
    t = rate_regressor(stages[keep], sch.p)
    slope, intercept, r2 = linear_fit(t, np.log(dist[keep]))
    return RateFit(sch.p, slope, intercept, r2, int(np.count_nonzero(keep)))


def finite_time_check(rec: TrajectoryRecord, eq: Sequence[int]) -> Optional[int]:
    """First logged stage from which the strategy is exactly the vertex ``eq``."""
    hit = np.ones(len(rec.stages), dtype=bool)
    for xi, a in zip(rec.x, eq):
        target = np.zeros(xi.shape[1])
        target[a] = 1.0
        hit &= np.all(xi == target, axis=1)
    if not hit[-1]:
        return None
    misses = np.flatnonzero(~hit)
    first = 0 if misses.size == 0 else misses[-1] + 1
    return int(rec.stages[first])


def sampling_rate_check(rec: TrajectoryRecord, eq: Sequence[int], sch: Schedule) -> float:
    """``max ||x_hat_n - x*||_1 * n**q`` over the last half of the logged
    stages; bounded away from 0 and infinity when sampling converges at the
    exploration rate."""
    if rec.x_hat is None:
        raise ValueError("sampling strategies were not logged (bandit mode only)")
    if not in_neighborhood([xi[-1] for xi in rec.x], eq, 0.5):
        raise ValueError("trajectory does not converge to the equilibrium")
    half = len(rec.stages) // 2
    dist = l1_distance([xh[half:] for xh in rec.x_hat], eq)
    return float(np.max(dist * rec.stages[half:].astype(float) ** sch.q))


def convergence_fraction(
    records: Sequence[TrajectoryRecord], g: Game, stage: int, eps: float
) -> float:
    """Share of trajectories inside ``U_eps`` of some strict equilibrium at
    ``stage``."""
    eqs = enumerate_strict_nash(g)
    hits = 0
    for rec in records:
        x = rec.strategy_at(stage)
        hits += any(in_neighborhood(x, eq, eps) for eq in eqs)
    return hits / len(records)


def heatmap(records: Sequence[TrajectoryRecord], stage: int, bins: int = 20) -> np.ndarray:
    """Histogram of ``(x_{1,a_1}, x_{2,b_1})`` at ``stage`` over ``[0, 1]^2``.

    ``counts[i, j]`` counts the first coordinate in bin ``i`` and the second in
    bin ``j``; the right edge belongs to the last bin.
    """
    if bins < 1:
        raise ValueError("bins must be positive")
    pts = []
    for rec in records:
        if len(rec.x) != 2 or rec.x[0].shape[1] != 2 or rec.x[1].shape[1] != 2:
            raise ValueError("heat maps are defined for 2x2 games")
        x1, x2 = rec.strategy_at(stage)
        pts.append((x1[0], x2[0]))
    pts = np.array(pts, dtype=float).reshape(-1, 2)
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=bins, range=[[0, 1], [0, 1]])
    return counts.astype(np.int64)


def merge_heatmaps(grids: Sequence[np.ndarray]) -> np.ndarray:
    """Sum partial heat maps (associative, so reduction order is irrelevant)."""
    return np.sum(np.stack(grids), axis=0)


# -- estimator checks ------------------------------------------------------


def iwe_monte_carlo(
    g: Game,
    x_hat: Sequence[np.ndarray],
    ch: FeedbackChannel,
    reps: int,
    rng: np.random.Generator,
) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Draw ``reps`` independent (sample, feedback, estimate) rounds at the
    frozen sampling strategy ``x_hat``.

    Returns per-player ``(mean V_i, standard error of the mean, E ||V_i||_inf^2)``.
    """
    if not ch.bandit:
        raise ValueError("the estimator check needs bandit feedback")
    N = g.num_players
    x_hat = [np.asarray(xh, dtype=float) for xh in x_hat]
    batch = [np.broadcast_to(xh, (reps, xh.shape[-1])) for xh in x_hat]
    a = sample_actions(batch, rng.random((reps, N)))
    noise_u = rng.random((reps, N)) if ch.noise.active else None
    u_hat = realized_feedback(g, a, ch, noise_u=noise_u)
    means, ses, sq = [], [], []
    for i in range(N):
        V = iwe_estimate(i, a[:, i], u_hat[:, i], batch[i])
        means.append(V.mean(axis=0))
        ses.append(V.std(axis=0, ddof=1) / math.sqrt(reps))
        sq.append(np.mean(np.max(np.abs(V), axis=1) ** 2))
    return means, ses, sq


def iwe_bias_check(
    g: Game,
    x_hat: Sequence[np.ndarray],
    ch: FeedbackChannel,
    reps: int,
    rng: np.random.Generator,
    z: float = 3.0,
) -> tuple[bool, list[float]]:
    """Is every coordinate of the estimator's sample mean within
    ``ell / 2 + z * SE`` of the payoff vector at ``x_hat``? Returns the verdict
    and the per-player sup-norm errors."""
    means, ses, _ = iwe_monte_carlo(g, x_hat, ch, reps, rng)
    ok = True
    errs = []
    for i in range(g.num_players):
        v = payoff_vector(g, x_hat, i)
        err = np.abs(means[i] - v)
        errs.append(float(np.max(err)))
        ok &= bool(np.all(err <= ch.quantizer.error / 2 + z * ses[i]))
    return ok, errs


def second_moment_slope(
    g: Game,
    x: Sequence[np.ndarray],
    ch: FeedbackChannel,
    eps_values: Sequence[float],
    reps: int,
    rng: np.random.Generator,
) -> float:
    """Log-log slope of ``E ||V||_inf^2`` (max over players) against
    ``1 / eps`` when exploring at level ``eps`` around ``x``."""
    moments = []
    for eps in eps_values:
        x_hat = [sampling_strategy(xi, eps) for xi in x]
        _, _, sq = iwe_monte_carlo(g, x_hat, ch, reps, rng)
        moments.append(max(sq))
    slope, _, _ = linear_fit(np.log(1.0 / np.asarray(eps_values)), np.log(moments))
    return slope
