"""Three independent ways to draw the hitting time, and how well they agree."""

import numpy as np
from scipy import stats

from besselhit import hitting as H
from besselhit.hitting import BesselHitParams
from besselhit.mc import McConfig, ball, empirical_tail, sample_bm_exit, sample_kent, sample_sde

p = BesselHitParams.from_delta(3.0)  # three-dimensional Bessel process: |BM| in R^3
cfg = McConfig(n_paths=20_000, seed=1)

kent = sample_kent(p, cfg)  # convolution of exponential mixtures
sde = sample_sde(p, cfg)  # squared Bessel SDE, exact step near 0 plus bridge test
bm = sample_bm_exit(3, np.zeros(3), ball(1.0), cfg)  # the Brownian motion itself

m = H.mean_hitting_time(p)
for name, b in (("kent", kent), ("sde", sde), ("bm", bm)):
    print(f"{name:5s} mean {b.mean():.5f} +- {b.stderr():.5f}   (exact {m:.5f})")

print("KS kent/sde", stats.ks_2samp(kent.draws, sde.draws).statistic)
print("KS sde/bm  ", stats.ks_2samp(sde.draws, bm.draws).statistic)

# empirical tails with exact binomial intervals against the series
for k in (0.5, 1.0, 2.0):
    t = k * m
    est, lo, hi = empirical_tail(kent, t)
    print(f"t = {k} E tau: series {H.exact_tail(p, t).value:.4f}  kent {est:.4f} [{lo:.4f}, {hi:.4f}]")

# the same seed reproduces the draws exactly, with any number of workers
again = sample_kent(p, McConfig(n_paths=20_000, seed=1, workers=4))
print("reproducible:", np.array_equal(kent.draws, again.draws))
