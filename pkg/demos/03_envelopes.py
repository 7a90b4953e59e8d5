"""Two-sided envelopes: moment bands across the three alpha regimes and fitted tail scales."""

from besselhit import hitting as H
from besselhit import verify as V
from besselhit.hitting import BesselHitParams

# exact p-th moments against the envelope, one row per regime
for alpha in (0.0, 0.7, 0.95):
    p = BesselHitParams.from_alpha(1.0, alpha)
    row = [f"regime {H.moment_regime(p)} alpha={alpha:4.2f}:"]
    for q in (2, 4, 8):
        env = H.moment_envelope(p, q)
        row.append(f"p={q} ratio {H.exact_moment(p, q) / env.value:.3f}")
    print("  ".join(row))

# the envelope constants are fitted on a grid; the quick preset keeps this fast
rep = V.fit_envelope_constants("thm_moments_central", "quick")
fc = rep.fitted_constants
print("central band", fc["thm_moments_central_band_lo"], fc["thm_moments_central_band_hi"])
for regime in (1, 2, 3):
    print(f"  regime {regime}:", fc.get(f"thm_moments_central_regime{regime}_band"))

rep = V.fit_envelope_constants("thm_tails", "quick")
fc = rep.fitted_constants
print("tail scales gamma1 =", fc["thm_tails_gamma1"], " gamma2 =", fc["thm_tails_gamma2"])
print("refinement drift", fc["thm_tails_drift_gamma1"], fc["thm_tails_drift_gamma2"])
