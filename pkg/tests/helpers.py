"""Shared oracles for the test modules."""

import math

from scipy import integrate

from besselhit import hitting as H


def _onset(p, fn, iters=50):
    m = H.mean_hitting_time(p)
    lo, hi = 1e-8 * m, m
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        try:
            fn(p, mid)
            hi = mid
        except H.UnconvergedError:
            lo = mid
    return hi


def certified_onset(p):
    """Smallest t (to bisection accuracy) where the tail series certifies at default terms."""
    return _onset(p, lambda q, t: H.exact_tail(q, t, fallback=False))


def density_onset(p):
    return _onset(p, H.density)


def tail_integral(p, upper_mult=60.0, weight_power=0):
    """int_0^T p t^{k-1} P(tau > t) dt with the uncertified head replaced by 1.

    Returns (value, head_error) where head_error bounds the effect of that
    replacement through the martingale left-tail bound at the onset.
    """
    m = H.mean_hitting_time(p)
    t0 = certified_onset(p)
    k = weight_power or 1
    head = t0**k
    head_err = head * H.left_tail_upper(p, 1.0 - t0 / m)
    f = lambda t: k * t ** (k - 1) * H.exact_tail(p, t, fallback=False).value
    body, _ = integrate.quad(f, t0, upper_mult * m, limit=400, points=[max(t0, 0.05 * m), m])
    return head + body, head_err


def series_tail(p, t):
    """Certified series value, with more terms where the default count falls short."""
    for n in (H.SERIES_TERMS, 1000, 4000):
        try:
            return H.exact_tail(p, t, n_terms=n, fallback=False)
        except H.UnconvergedError:
            continue
    raise H.UnconvergedError(f"no certified series value at t={t}")
