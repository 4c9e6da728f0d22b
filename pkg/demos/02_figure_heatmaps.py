"""
Three quantization regimes in a coordination game
=================================================

500 learners play the coordination game with payoffs 5.1 / 2.4 under bandit
feedback: each only sees its own realized payoff, perturbed by uniform noise
on [-0.1, 0.1] and rounded half away from zero onto a grid of length l.
Strategies are summarized as the probability of the first action of each
player, binned on a 20 x 20 grid.

Pass a scale in (0, 1] as the first argument to run a smaller batch.
"""

import sys

import numpy as np

from ftql.analysis import convergence_fraction
from ftql.cli import figure_config
from ftql.experiment import heatmap_document, run_batch

scale = float(sys.argv[1]) if len(sys.argv) > 1 else 0.2


def corner_mass(counts):
    c = np.asarray(counts)
    return {"(a2,b2)": int(c[0, 0]), "(a2,b1)": int(c[0, -1]), "(a1,b2)": int(c[-1, 0]), "(a1,b1)": int(c[-1, -1])}


def show(counts, width=20):
    # coarse text rendering, first player's probability running upwards
    shades = " .:-=+*#%@"
    c = np.asarray(counts)
    c = c.reshape(width // 4, 4, width // 4, 4).sum(axis=(1, 3))
    top = c.max() or 1
    for row in c[::-1]:
        print("   |" + "".join(shades[int(9 * v / top)] * 2 for v in row) + "|")


for ell in (0.0, 1.5, 4.0):
    cfg = figure_config(ell, scale)
    records = run_batch(cfg)
    g = cfg.build_game()
    stages = cfg.output.heatmap_stages
    print(f"\nl = {ell:g}: {cfg.trajectories} trajectories, horizon {cfg.horizon}")
    print("   near an equilibrium at stage 50:", convergence_fraction(records, g, 50, 0.05))
    doc = heatmap_document(records, stages[-1], 20, ell, cfg.config_hash)
    print(f"   corner counts at stage {stages[-1]}:", corner_mass(doc["counts"]))
    show(doc["counts"])

# %%
# Without quantization the population splits between the two equilibria. At
# l = 1.5 it still does, only more slowly. At l = 4 both payoffs round to 4,
# the feedback no longer tells the actions apart, and the noisy importance
# weighted scores drift until every corner, equilibrium or not, holds a share
# of the population.
