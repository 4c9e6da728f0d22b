"""Finite games in normal form.

A :class:`Game` stores one dense payoff tensor per player, indexed by pure
action profiles in row-major order. Mixed profiles are plain sequences of
per-player probability vectors.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MAX_PROFILES = 10**7

_SIMPLEX_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Game:
    """A finite normal-form game.

    Parameters
    ----------
    actions : sequence of sequences of str
        Action labels, one list per player.
    payoffs : sequence of array_like
        ``payoffs[i]`` is player ``i``'s payoff tensor with shape
        ``(len(actions[0]), ..., len(actions[N-1]))``.
    """

    actions: tuple[tuple[str, ...], ...]
    payoffs: tuple[np.ndarray, ...]

    def __init__(self, actions, payoffs):
        actions = tuple(tuple(str(a) for a in acts) for acts in actions)
        if not actions:
            raise ValueError("a game needs at least one player")
        if any(len(acts) < 1 for acts in actions):
            raise ValueError("every player needs at least one action")
        shape = tuple(len(acts) for acts in actions)
        if len(payoffs) != len(actions):
            raise ValueError(
                f"expected {len(actions)} payoff tensors, got {len(payoffs)}"
            )
        tensors = []
        for i, u in enumerate(payoffs):
            u = np.array(u, dtype=float)
            if u.shape != shape:
                raise ValueError(
                    f"payoff tensor of player {i} has shape {u.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(u)):
                raise ValueError(f"payoff tensor of player {i} has non-finite entries")
            u.flags.writeable = False
            tensors.append(u)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "payoffs", tuple(tensors))

    @property
    def num_players(self) -> int:
        return len(self.actions)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.payoffs[0].shape

    def num_actions(self, i: int) -> int:
        return self.shape[i]

    def __eq__(self, other):
        if not isinstance(other, Game):
            return NotImplemented
        return self.actions == other.actions and all(
            np.array_equal(u, w) for u, w in zip(self.payoffs, other.payoffs)
        )

    def __repr__(self):
        return f"Game(shape={self.shape})"

    def profile_label(self, profile: Sequence[int]) -> str:
        return "(" + ",".join(self.actions[i][a] for i, a in enumerate(profile)) + ")"

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "actions": [list(a) for a in self.actions],
            "payoffs": [u.tolist() for u in self.payoffs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Game":
        unknown = set(data) - {"actions", "payoffs"}
        if unknown:
            raise ValueError(f"unknown game keys: {sorted(unknown)}")
        return cls(data["actions"], data["payoffs"])

    @classmethod
    def load(cls, path) -> "Game":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def bimatrix(row_actions, col_actions, u_row, u_col=None) -> Game:
    """Two-player game from payoff matrices; ``u_col`` defaults to ``u_row``
    (common interest)."""
    u_row = np.asarray(u_row, dtype=float)
    u_col = u_row if u_col is None else np.asarray(u_col, dtype=float)
    return Game([row_actions, col_actions], [u_row, u_col])


def _check_profile(g: Game, x) -> list[np.ndarray]:
    if len(x) != g.num_players:
        raise ValueError(f"profile has {len(x)} players, game has {g.num_players}")
    out = []
    for i, xi in enumerate(x):
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1:] != (g.num_actions(i),):
            raise ValueError(
                f"strategy of player {i} has length {xi.shape[-1:]}, "
                f"expected {g.num_actions(i)}"
            )
        out.append(xi)
    return out


def _check_pure(g: Game, a) -> tuple[int, ...]:
    a = tuple(int(ai) for ai in a)
    if len(a) != g.num_players:
        raise ValueError(f"profile has {len(a)} entries, game has {g.num_players} players")
    for i, ai in enumerate(a):
        if not 0 <= ai < g.num_actions(i):
            raise ValueError(f"action {ai} out of range for player {i}")
    return a


def is_mixed_profile(g: Game, x, tol: float = _SIMPLEX_TOL) -> bool:
    try:
        xs = _check_profile(g, x)
    except ValueError:
        return False
    return all(np.all(xi >= 0) and abs(xi.sum() - 1.0) <= tol for xi in xs)


def point_mass(g: Game, a: Sequence[int]) -> list[np.ndarray]:
    """Mixed profile putting all weight on the pure profile ``a``."""
    a = _check_pure(g, a)
    out = []
    for i, ai in enumerate(a):
        e = np.zeros(g.num_actions(i))
        e[ai] = 1.0
        out.append(e)
    return out


def mixed_payoff(g: Game, x, i: int) -> float:
    """Expected payoff of player ``i``, summed over every pure profile."""
    xs = _check_profile(g, x)
    weight = xs[0]
    for xj in xs[1:]:
        weight = np.multiply.outer(weight, xj)
    return float(np.sum(g.payoffs[i] * weight))


def payoff_vector(g: Game, x, i: int) -> np.ndarray:
    """Payoff of each pure action of player ``i`` against ``x_{-i}``.

    Strategies may carry leading batch axes (all players must share them);
    the result then has shape ``batch + (|A_i|,)``.
    """
    xs = _check_profile(g, x)
    batch = xs[0].shape[:-1]
    n = g.num_players
    # leading batch axes go in front of the tensor axes
    t = np.broadcast_to(g.payoffs[i], batch + g.shape)
    nb = len(batch)
    for j in range(n - 1, -1, -1):
        if j == i:
            continue
        shape = batch + (1,) * j + (g.num_actions(j),) + (1,) * (t.ndim - nb - j - 1)
        t = (t * xs[j].reshape(shape)).sum(axis=nb + j)
    return t


def payoff_vectors(g: Game, x) -> list[np.ndarray]:
    return [payoff_vector(g, x, i) for i in range(g.num_players)]


def deviation_payoffs(g: Game, a: Sequence[int], i: int) -> np.ndarray:
    """``u_i(alpha; a_{-i})`` for every action ``alpha`` of player ``i``."""
    a = list(_check_pure(g, a))
    a[i] = slice(None)
    return g.payoffs[i][tuple(a)]


def is_strict_nash(g: Game, a: Sequence[int]) -> bool:
    a = _check_pure(g, a)
    for i in range(g.num_players):
        dev = deviation_payoffs(g, a, i)
        here = dev[a[i]]
        others = np.delete(dev, a[i])
        if np.any(others >= here):
            return False
    return True


def enumerate_strict_nash(g: Game) -> list[tuple[int, ...]]:
    """All strict pure equilibria, in lexicographic profile order."""
    total = int(np.prod(g.shape, dtype=np.int64))
    if total > MAX_PROFILES:
        raise ValueError(f"{total} pure profiles exceeds the enumeration limit {MAX_PROFILES}")
    return [a for a in itertools.product(*map(range, g.shape)) if is_strict_nash(g, a)]


def min_payoff_gap(g: Game, eq: Sequence[int]) -> float:
    """Smallest payoff loss from a unilateral deviation away from ``eq``."""
    eq = _check_pure(g, eq)
    gaps = []
    for i in range(g.num_players):
        dev = deviation_payoffs(g, eq, i)
        loss = dev[eq[i]] - np.delete(dev, eq[i])
        if loss.size and np.min(loss) <= 0:
            raise ValueError(
                f"{g.profile_label(eq)} is not a strict equilibrium: "
                f"player {i} has a deviation that does not lose payoff"
            )
        gaps.extend(loss.tolist())
    if not gaps:
        raise ValueError("no deviations exist (every player has a single action)")
    return float(min(gaps))


def quantize_game(g: Game, q) -> Game:
    """Game whose payoffs are the entrywise quantized payoffs of ``g``."""
    return Game(g.actions, [q(u) for u in g.payoffs])


# Games used throughout the examples and tests.

def coordination_game(high: float = 5.1, low: float = 2.4) -> Game:
    """Symmetric 2x2 coordination game with two strict equilibria on the diagonal."""
    return bimatrix(["a1", "a2"], ["b1", "b2"], [[high, low], [low, high]])


def anti_coordination_game(low: float, high: float) -> Game:
    """Common-interest 2x2 game paying ``high`` off the diagonal."""
    return bimatrix(["a1", "a2"], ["b1", "b2"], [[low, high], [high, low]])


def matching_pennies() -> Game:
    u = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return bimatrix(["H", "T"], ["H", "T"], u, -u)
