"""
How fast play reaches a strict equilibrium
==========================================

With exact payoff vectors and step sizes n**-p, the exponential weights
learner approaches a strict equilibrium like exp(-c n**(1-p)); the projection
learner lands exactly on the vertex after finitely many stages.
"""

import numpy as np

from ftql import analysis
from ftql.experiment import bundled_config, load_config, run_batch

cfg = load_config(bundled_config("rate-entropic"))
g, r, sch, _ = cfg.build()
records = run_batch(cfg.with_overrides({"trajectories": 5}))

print("log-distance against n**(1-p), p =", sch.p)
for rec in records:
    eq = rec.verdict.target
    fit = analysis.fit_rate(rec, eq, r, sch, cfg.analysis.eps)
    print(f"  seed {rec.seed}: target {g.profile_label(eq)}, slope {fit.slope:8.3f}, R2 {fit.r2:.6f}")

# %%
# The fitted slope sits near -Delta * g0 / (1 - p) = -2.7 / 0.2 = -13.5, the
# payoff gap pushing the score difference at rate gamma_n.

print("\npredicted slope:", -analysis.min_payoff_gap(g, (0, 0)) * sch.g0 / (1 - sch.p))

# %%
# The Euclidean regularizer projects scores onto the simplex and can hit the
# boundary, so distance to the vertex becomes exactly zero.

cfg = load_config(bundled_config("euclid-finite"))
for reg in ("euclidean", "entropic"):
    recs = run_batch(cfg.with_overrides({"regularizer": reg, "trajectories": 5}))
    hits = [analysis.finite_time_check(rec, rec.verdict.target) for rec in recs]
    dists = [float(rec.verdict.final_distance) for rec in recs]
    print(f"{reg:9s}: first exact hit {hits}, final distance {np.max(dists):.2e}")
