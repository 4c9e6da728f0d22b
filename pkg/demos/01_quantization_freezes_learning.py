"""
When rounding hides the payoff differences
==========================================

Two players share the payoffs below. Off the diagonal both get 100.9, on the
diagonal 99.1, so (a1, b2) and (a2, b1) are strict equilibria with gap 1.8.
"""

import numpy as np

from ftql.dynamics import FeedbackChannel, Schedule, simulate
from ftql.game import anti_coordination_game, enumerate_strict_nash, min_payoff_gap, quantize_game
from ftql.quantize import even_away, half_away
from ftql.regularizer import ENTROPIC, initial_scores_for

g = anti_coordination_game(99.1, 100.9)
print("strict equilibria:", [g.profile_label(a) for a in enumerate_strict_nash(g)])
print("payoff gap:", min_payoff_gap(g, (0, 1)))


def run(game, channel, x1, horizon):
    y0 = [initial_scores_for(ENTROPIC, xi)[None] for xi in x1]
    return simulate(game, ENTROPIC, Schedule(), channel, y0, [None], horizon)[0]


# %%
# Rounding to the closest even integer sends every mixed payoff in
# (99.1, 100.9) to 100. Both actions look equally good, the scores move by the
# same amount and the strategies never change.

x1 = [[0.3, 0.7], [0.65, 0.35]]
rec = run(g, FeedbackChannel("quantized-vector", even_away(1.0)), x1, 1000)
print("\neven rounding, x at stage 1000:", [xi[-1] for xi in rec.x])
print("identical to x_1 at every stage:", all(np.all(xi == xi[0]) for xi in rec.x))

# %%
# Rounding half away from zero onto the integers is finer. Near the corner
# (a1, b2) the rounded vector is (101, 99), the score gap grows by 2 per stage
# and play locks onto the equilibrium.

x1 = [[0.8, 0.2], [0.2, 0.8]]
rec = run(g, FeedbackChannel("quantized-vector", half_away(1.0)), x1, 50)
for n in (1, 2, 5, 10, 50):
    x = rec.strategy_at(n)
    print(f"stage {n:3d}: x1 = {x[0].round(6)}, x2 = {x[1].round(6)}")

# %%
# The same freeze, seen from the game side: payoffs 0.04 / 0.8 round to 0 / 1.
# Learning inside the rounded game with exact feedback converges, while the
# rounded feedback of the original game at x_1 = ((0.6, 0.4), (0.4, 0.6)) is
# flat and play does not move.

g2 = anti_coordination_game(0.04, 0.8)
q = half_away(1.0)
x1 = [[0.6, 0.4], [0.4, 0.6]]
frozen = run(g2, FeedbackChannel("quantized-vector", q), x1, 500)
moving = run(quantize_game(g2, q), FeedbackChannel(), x1, 200)
print("\nquantized feedback in G, final x:", [xi.round(6) for xi in frozen.final_x])
print("exact feedback in Q(G), final x: ", [xi.round(6) for xi in moving.final_x])
