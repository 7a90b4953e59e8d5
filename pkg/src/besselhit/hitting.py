"""Hitting time of level c by a Bessel process of index nu started at x0 < c.

Everything depends on the problem only through (nu, alpha = x0^2/c^2) and
the time scale c^2, so the series below are computed for c = 1 in the
scaled time s = t / c^2.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from . import expmix
from .expmix import ExpMixModel, MomentEstimate
from .specfun import bessel_j, zeros

__all__ = [
    "BesselHitParams",
    "TailValue",
    "UnconvergedError",
    "mean_hitting_time",
    "sum_inv_j2",
    "sum_inv_j4",
    "inv_j_power_sum",
    "variance",
    "to_expmix",
    "exact_tail",
    "log_tail",
    "density",
    "laplace_transform",
    "laplace_lower_bound",
    "exact_moment",
    "exact_central_moment",
    "central_moment_envelope",
    "moment_envelope",
    "moment_regime",
    "right_tail_upper",
    "right_tail_lower",
    "right_tail_lower_highdim",
    "right_tail_lower_refined",
    "tail_envelope",
    "f_envelope",
    "n1_index",
    "n2_index",
    "left_tail_upper",
    "left_tail_upper_kent",
    "left_tail_lower",
    "left_tail_lower_alldelta",
]

SERIES_TERMS = 200
CERTIFY_TOL = 1e-6
_EPS = np.finfo(float).eps
_ZERO_ACC = 1e-10


class UnconvergedError(ArithmeticError):
    """A series could not be certified at the requested point."""


@dataclass(frozen=True)
class BesselHitParams:
    nu: float
    c: float = 1.0
    x0: float = 0.0

    def __post_init__(self):
        for name in ("nu", "c", "x0"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not math.isfinite(self.nu) or self.nu <= -1.0:
            raise ValueError(f"nu must be > -1, got {self.nu}")
        if not (math.isfinite(self.c) and self.c > 0.0):
            raise ValueError(f"c must be positive, got {self.c}")
        if not (0.0 <= self.x0 < self.c):
            raise ValueError(f"x0 must lie in [0, c), got x0={self.x0}, c={self.c}")

    @classmethod
    def from_alpha(cls, nu: float, alpha: float, c: float = 1.0) -> "BesselHitParams":
        return cls(nu, c, c * math.sqrt(alpha))

    @classmethod
    def from_delta(cls, delta: float, c: float = 1.0, x0: float = 0.0) -> "BesselHitParams":
        return cls(delta / 2.0 - 1.0, c, x0)

    @property
    def delta(self) -> float:
        return 2.0 * (self.nu + 1.0)

    @property
    def z0(self) -> float:
        return self.x0 * self.x0

    @property
    def alpha(self) -> float:
        return (self.x0 / self.c) ** 2

    def scaled(self) -> "BesselHitParams":
        return BesselHitParams(self.nu, 1.0, self.x0 / self.c)


@dataclass(frozen=True)
class TailValue:
    value: float
    trunc_error: float
    terms_used: int
    method: str  # "ct_series" | "kent_series" | "monte_carlo_fallback"

    def __float__(self) -> float:
        return self.value


# ---------------------------------------------------------------------------
# closed forms


def mean_hitting_time(params: BesselHitParams) -> float:
    return (params.c**2 - params.z0) / params.delta


def sum_inv_j2(nu: float) -> float:
    return 1.0 / (4.0 * (nu + 1.0))


def sum_inv_j4(nu: float) -> float:
    return 1.0 / (16.0 * (nu + 1.0) ** 2 * (nu + 2.0))


def inv_j_power_sum(nu: float, m: int, n_terms: int = SERIES_TERMS) -> float:
    """sum_n j_{nu,n}^{-2m}; closed forms for m = 1, 2, zeros plus Hurwitz tail otherwise."""
    if m == 1:
        return sum_inv_j2(nu)
    if m == 2:
        return sum_inv_j4(nu)
    j = zeros(nu, n_terms)
    q = n_terms + 1 + 0.5 * nu - 0.25
    tail = float(_sp.zeta(2.0 * m, q)) / math.pi ** (2 * m)
    return math.fsum(j ** (-2.0 * m)) + tail


def variance(params: BesselHitParams) -> float:
    al = params.alpha
    return params.c**4 * (1.0 - al) * (1.0 + al) * 4.0 * sum_inv_j4(params.nu)


def to_expmix(params: BesselHitParams, N: int = SERIES_TERMS) -> ExpMixModel:
    """Kent weights a_n = 2c^2 / j_{nu,n}^2 with mixing probability alpha."""
    if N < 1:
        raise ValueError("N must be >= 1")
    j = zeros(params.nu, N)
    c2 = params.c**2
    a = 2.0 * c2 / j**2
    tail = max(0.0, 2.0 * c2 * (sum_inv_j2(params.nu) - math.fsum(1.0 / j**2)))
    tail_sq = max(0.0, 4.0 * c2 * c2 * (sum_inv_j4(params.nu) - math.fsum(1.0 / j**4)))
    tail_sq = min(tail_sq, a[-1] * tail)
    return ExpMixModel(params.alpha, tuple(a), tail, tail_sq)


# ---------------------------------------------------------------------------
# eigenfunction series


def _scaled_j(nu: float, j: float, r: float) -> float:
    """r^{-nu} J_nu(j r), without overflow of r^{-nu} for tiny r."""
    y = j * r
    if y > 1.0:
        return r ** (-nu) * bessel_j(nu, y)
    # Maclaurin series with the (y/2)^nu factor cancelled against r^{-nu}
    q = -0.25 * y * y
    term = 1.0 / math.gamma(nu + 1.0)
    acc = term
    for k in range(1, 40):
        term *= q / (k * (nu + k))
        acc += term
        if abs(term) < 1e-17 * abs(acc):
            break
    return (0.5 * j) ** nu * acc


@functools.lru_cache(maxsize=256)
def _tail_coefficients(nu: float, r: float, n_terms: int) -> tuple[np.ndarray, np.ndarray]:
    """Zeros and coefficients of P(tau > s) = sum_n coef_n exp(-j_n^2 s / 2) for c = 1."""
    j = np.array(zeros(nu, n_terms))
    jp1 = np.array([bessel_j(nu + 1.0, x) for x in j])
    if r == 0.0:
        mag = np.exp((nu - 1.0) * np.log(j / 2.0) - math.lgamma(nu + 1.0))
        coef = mag / jp1
    else:
        coef = 2.0 * np.array([_scaled_j(nu, x, r) for x in j]) / (j * jp1)
    j.setflags(write=False)
    coef.setflags(write=False)
    return j, coef


def _log_upper_gamma(a: float, z: float) -> float:
    """log of the upper incomplete gamma function, bounded above once it underflows."""
    g = float(_sp.gammaincc(a, z) * _sp.gamma(a))
    if g > 1e-280:
        return math.log(g)
    # Gamma(a, z) <= z^(a-1) e^-z max(1, z / (z - a + 1)) for z > a - 1
    return (a - 1.0) * math.log(z) - z + max(0.0, math.log(z / (z - a + 1.0)))


def _series_sum(params: BesselHitParams, s: float, deriv: int, n_terms: int, shift: bool = False):
    """sum_n coef_n lam_n^deriv exp(-lam_n s) with a certified error bound.

    With ``shift`` everything is multiplied by exp(lam_1 s), which keeps the
    relative accuracy of far tails that would otherwise underflow.
    """
    r = params.x0 / params.c
    j, coef = _tail_coefficients(params.nu, r, n_terms)
    lam = 0.5 * j * j
    lam0 = float(lam[0]) if shift else 0.0
    terms = coef * lam**deriv * np.exp(-(lam - lam0) * s)
    value = math.fsum(terms)
    absum = float(np.sum(np.abs(terms)))

    # |coef_n| grows at most like j_n^(nu - 1/2) for x0 = 0; for x0 > 0 it decays
    # like j_n^(-1/2) once j_n r is past the turning point of J_nu(j_n r)
    if r > 0.0 and float(j[-1]) * r >= 2.0 * abs(params.nu) + 10.0:
        q = 0.5 + 2.0 * deriv
    else:
        q = max(params.nu + 0.5, 0.5) + 2.0 * deriv
    scale = float(np.max(np.abs(coef * lam**deriv) / j**q))
    jk = float(j[-1])
    gaps = np.diff(j)
    gap = 0.9 * float(np.min(gaps[len(gaps) // 2:])) if gaps.size else 2.5
    if s <= 0.0 or jk * jk * s < q:
        remainder = math.inf
    else:
        # sum_{n>K} C j_n^q e^{-j_n^2 s/2} <= (1/gap) int_{j_K}^inf C x^q e^{-s x^2/2} dx
        a = 0.5 * (q + 1.0)
        z = 0.5 * s * jk * jk
        log_int = math.log(0.5) + a * math.log(2.0 / s) + _log_upper_gamma(a, z)
        log_rem = math.log(scale) + log_int - math.log(gap) + lam0 * s
        remainder = math.exp(min(log_rem, 700.0))
    # zero inaccuracy moves each exponent by at most lam' * acc = j * acc * s
    zero_err = _ZERO_ACC * float(np.sum(np.abs(terms) * (j * s + (q + 2.0) / j)))
    roundoff = 16.0 * _EPS * absum
    used = int(np.count_nonzero(np.abs(terms) > 1e-300))
    return float(value), float(remainder + zero_err + roundoff), used


def log_tail(params: BesselHitParams, t: float, n_terms: int = SERIES_TERMS) -> tuple[float, float]:
    """log P(tau > t) and a bound on its absolute error, accurate far into the tail."""
    t = float(t)
    if t <= 0.0:
        return 0.0, 0.0
    s = t / params.c**2
    value, err, _ = _series_sum(params, s, 0, n_terms, shift=True)
    if not err < 0.5 * value:
        raise UnconvergedError(f"log tail not certified at t={t}")
    lam0 = 0.5 * float(_tail_coefficients(params.nu, params.x0 / params.c, n_terms)[0][0]) ** 2
    return min(0.0, math.log(value) - lam0 * s), -math.log1p(-err / value)


def _clip_unit(value: float, err: float) -> tuple[float, float]:
    lo = max(0.0, value - err)
    hi = min(1.0, value + err)
    if lo > hi:
        lo = hi = min(1.0, max(0.0, value))
    return 0.5 * (lo + hi), 0.5 * (hi - lo)


def exact_tail(params: BesselHitParams, t: float, n_terms: int = SERIES_TERMS,
               fallback: bool = True, fallback_paths: int = 100_000, seed: int = 0) -> TailValue:
    """P(tau > t).

    Eigenfunction series (Ciesielski-Taylor form for x0 = 0, Kent's density
    integrated term-wise otherwise) with a runtime-certified error bound.
    When the bound exceeds 1e-6 (small t) the value comes from the Kent
    sampler with a 99% Clopper-Pearson half-width as error, or
    UnconvergedError is raised when ``fallback`` is False.
    """
    t = float(t)
    if t < 0.0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return TailValue(1.0, 0.0, 0, "ct_series" if params.x0 == 0.0 else "kent_series")
    s = t / params.c**2
    value, err, used = _series_sum(params, s, 0, n_terms)
    if err <= CERTIFY_TOL:
        v, e = _clip_unit(value, err)
        return TailValue(v, e, used, "ct_series" if params.x0 == 0.0 else "kent_series")
    if not fallback:
        raise UnconvergedError(f"series not certified at t={t} (bound {err:.3g})")
    from .mc import McConfig, empirical_tail, sample_kent

    batch = sample_kent(params, McConfig(n_paths=fallback_paths, seed=seed))
    est, lo, hi = empirical_tail(batch, t)
    return TailValue(est, max(est - lo, hi - est), batch.meta.kent_trunc, "monte_carlo_fallback")


def density(params: BesselHitParams, t: float, n_terms: int = SERIES_TERMS) -> float:
    """Density of tau at t > 0; raises UnconvergedError where not certified."""
    t = float(t)
    if t <= 0.0:
        raise ValueError("t must be > 0")
    s = t / params.c**2
    value, err, _ = _series_sum(params, s, 1, n_terms)
    if err > CERTIFY_TOL * max(1.0, abs(value)):
        raise UnconvergedError(f"density series not certified at t={t} (bound {err:.3g})")
    return value / params.c**2


def density_error(params: BesselHitParams, t: float, n_terms: int = SERIES_TERMS) -> tuple[float, float]:
    s = float(t) / params.c**2
    value, err, _ = _series_sum(params, s, 1, n_terms)
    return value / params.c**2, err / params.c**2


def laplace_transform(params: BesselHitParams, u: float, n_terms: int = SERIES_TERMS,
                      with_error: bool = False):
    """E exp(-u tau) as prod_n (alpha + (1-alpha) lam_n / (lam_n + u)).

    The factors beyond ``n_terms`` are replaced by the midpoint of a
    two-sided bound on their log-product built from the closed-form sums of
    1/lam_n and 1/lam_n^2.
    """
    u = float(u)
    if u < 0.0:
        raise ValueError("u must be >= 0")
    if u == 0.0:
        return (1.0, 0.0) if with_error else 1.0
    al = params.alpha
    c2 = params.c**2
    j = zeros(params.nu, n_terms)
    lam = j * j / (2.0 * c2)
    x = (1.0 - al) * u / (lam + u)
    log_head = float(np.sum(np.log1p(-x)))
    s1 = 2.0 * c2 * max(0.0, sum_inv_j2(params.nu) - math.fsum(1.0 / j**2))
    s2 = 4.0 * c2 * c2 * max(0.0, sum_inv_j4(params.nu) - math.fsum(1.0 / j**4))
    x_next = (1.0 - al) * u / (float(lam[-1]) + u)
    lo = (1.0 - al) * u * s1 - (1.0 - al) * u * u * s2
    hi = (1.0 - al) * u * s1 / (1.0 - x_next)
    lo = max(lo, 0.0)
    mid = 0.5 * (lo + hi)
    value = math.exp(log_head - mid)
    err = value * math.expm1(0.5 * (hi - lo)) + 8 * _EPS * value * n_terms
    return (value, err) if with_error else value


def laplace_lower_bound(params: BesselHitParams, u: float) -> float:
    """exp(-(sqrt(((delta-1)/2c)^2 + 2u) - (delta-1)/2c)(c - x0)), valid for delta > 1."""
    if params.delta <= 1.0:
        raise ValueError("the Laplace-transform lower bound needs delta > 1")
    b = (params.delta - 1.0) / (2.0 * params.c)
    return math.exp(-(math.sqrt(b * b + 2.0 * u) - b) * (params.c - params.x0))


# ---------------------------------------------------------------------------
# moments


def _power_sums(params: BesselHitParams, m_max: int) -> dict[int, float]:
    c2 = params.c**2
    return {m: (2.0 * c2) ** m * inv_j_power_sum(params.nu, m) for m in range(1, m_max + 1)}


def exact_moment(params: BesselHitParams, p: int) -> float:
    """||tau||_p for integer p >= 1 from the cumulants of Kent's representation."""
    model = to_expmix(params)
    return expmix.exact_moment(model, int(p), _power_sums(params, int(p)))


def exact_central_moment(params: BesselHitParams, p: int) -> float:
    """||tau - E tau||_p for even integer p."""
    model = to_expmix(params)
    return expmix.exact_central_moment(model, int(p), _power_sums(params, int(p)))


def moment_regime(params: BesselHitParams) -> int:
    al = params.alpha
    if al ** (params.nu + 2.0) >= 0.5:
        return 1
    if al > 0.5:
        return 2
    return 3


def _j1(nu: float) -> float:
    return float(zeros(nu, 1)[0])


def _moment_head(params: BesselHitParams, p: float) -> float:
    nu, al = params.nu, params.alpha
    inv_j1 = 1.0 / _j1(nu) ** 2
    regime = moment_regime(params)
    if regime == 1:
        inner = inv_j1 + 1.0 / (nu + 2.0) ** (2.0 - 1.0 / p)
    elif regime == 2:
        # (nu + 2)^2 in both envelopes; see the notes in README
        inner = inv_j1 + 1.0 / ((nu + 2.0) ** 2 * math.log2(1.0 / al) ** (1.0 / p))
    else:
        inner = inv_j1
    return p * (1.0 - al) ** (1.0 / p) * inner


def central_moment_envelope(params: BesselHitParams, p: float) -> MomentEstimate:
    """Envelope comparable to ||tau - E tau||_p (three alpha regimes), in time units."""
    p = float(p)
    if not p >= 2.0:
        raise ValueError("p must be >= 2")
    nu, al = params.nu, params.alpha
    val = _moment_head(params, p) + math.sqrt(p) * math.sqrt(1.0 - al) / ((nu + 1.0) * math.sqrt(nu + 2.0))
    return MomentEstimate(p, params.c**2 * val, f"central_case{moment_regime(params)}")


def moment_envelope(params: BesselHitParams, p: float) -> MomentEstimate:
    """Envelope comparable to ||tau||_p (three alpha regimes), in time units."""
    p = float(p)
    if not p >= 2.0:
        raise ValueError("p must be >= 2")
    nu, al = params.nu, params.alpha
    val = _moment_head(params, p) + (1.0 - al) / (nu + 1.0)
    return MomentEstimate(p, params.c**2 * val, f"ordinary_case{moment_regime(params)}")


# ---------------------------------------------------------------------------
# right tails


def right_tail_upper(params: BesselHitParams, eta: float) -> float:
    """Upper bound on P(tau >= (1 + eta) E tau)."""
    if not eta > 0.0:
        raise ValueError("eta must be > 0")
    return math.exp(-params.delta * (1.0 - params.alpha) * eta * eta / (8.0 * (1.0 + eta)))


def right_tail_lower(params: BesselHitParams, eta: float) -> float:
    """(1 - alpha) exp(-(j1^2 / 2 delta)(1 - alpha)(1 + eta)); eta = 0 allowed."""
    if not eta >= 0.0:
        raise ValueError("eta must be >= 0")
    al = params.alpha
    j1 = _j1(params.nu)
    return (1.0 - al) * math.exp(-(j1 * j1 / (2.0 * params.delta)) * (1.0 - al) * (1.0 + eta))


def right_tail_lower_highdim(params: BesselHitParams, eta: float) -> float:
    """The delta >= 12.4 lower bound with j1 replaced by its Breen upper bracket."""
    d = params.delta
    if d < 12.4:
        raise ValueError("the high-dimensional lower bound needs delta >= 12.4")
    if not eta >= 0.0:
        raise ValueError("eta must be >= 0")
    al = params.alpha
    rate = (d - 4.0 + 4.0 / d) / (8.0 * (1.0 - 3.0 * 2.0 ** (2.0 / 3.0) / (d - 2.0) ** (2.0 / 3.0)) ** 2)
    return (1.0 - al) * math.exp(-rate * (1.0 - al) * (1.0 + eta))


def right_tail_lower_refined(params: BesselHitParams, eta: float) -> float:
    """exp(-sum_n alpha^(n-1) (j_n^2 / 2 delta) (1 - alpha)^2 (1 + eta))."""
    if not eta >= 0.0:
        raise ValueError("eta must be >= 0")
    al = params.alpha
    if al == 0.0:
        s = _j1(params.nu) ** 2
    else:
        n = 64
        while True:
            j = zeros(params.nu, n)
            g = al ** np.arange(n)
            terms = g * j * j
            # zeros grow by at most max(pi, largest gap) per index
            gmax = max(math.pi, float(np.max(np.diff(j)))) if n > 1 else math.pi
            m = np.arange(1, 4 * n + 1)
            rest = float(np.sum(al ** (n - 1 + m) * (j[-1] + m * gmax) ** 2))
            s = math.fsum(terms)
            if rest < 1e-15 * s:
                break
            n *= 2
    return math.exp(-s / (2.0 * params.delta) * (1.0 - al) ** 2 * (1.0 + eta))


def tail_envelope(params: BesselHitParams, t: float) -> float:
    """(1-a){exp(-j1^2 t/2c^2) + sum_{n>=2} a^(n-1) exp(-(nu+n)^2 t/2c^2)}."""
    t = float(t)
    if not t > 0.0:
        raise ValueError("t must be > 0")
    nu, al = params.nu, params.alpha
    s = t / params.c**2
    head = math.exp(-_j1(nu) ** 2 * s / 2.0)
    acc = 0.0
    if al > 0.0:
        n = 2
        g = al
        while True:
            term = g * math.exp(-((nu + n) ** 2) * s / 2.0)
            acc += term
            # both factors decrease in n, so the rest is below term * g'/(1-g')
            if term <= 1e-13 * (head + acc) * (1.0 - al) or g < 1e-300:
                break
            g *= al
            n += 1
    return (1.0 - al) * (head + acc)


def n1_index(params: BesselHitParams, t: float) -> int:
    s = float(t) / params.c**2
    n = 2
    while (params.nu + n) ** 2 * s / 2.0 < 1.0:
        n += 1
    return n


def n2_index(params: BesselHitParams, t: float) -> int:
    s = float(t) / params.c**2
    n1 = n1_index(params, t)
    base = (params.nu + n1) ** 2
    n = 2
    while ((params.nu + n) ** 2 - base) * s / 2.0 < 1.0:
        n += 1
    return n


def f_envelope(params: BesselHitParams, t: float) -> tuple[float, int, int]:
    """F(t) together with n1(t) and n2(t)."""
    t = float(t)
    if not t > 0.0:
        raise ValueError("t must be > 0")
    nu, al = params.nu, params.alpha
    s = t / params.c**2
    n1 = n1_index(params, t)
    n2 = n2_index(params, t)
    val = math.exp(-_j1(nu) ** 2 * s / 2.0)
    if al > 0.0:
        k = math.ceil(1.0 / math.log(1.0 / al))
        val += al * math.exp(-((nu + 2.0) ** 2) * s / 2.0) * min(k, n2)
    return (1.0 - al) * val, n1, n2


# ---------------------------------------------------------------------------
# left tails


def _check_eta_unit(eta: float) -> float:
    eta = float(eta)
    if not (0.0 < eta < 1.0):
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    return eta


def left_tail_upper(params: BesselHitParams, eta: float) -> float:
    """Upper bound on P(tau <= (1 - eta) E tau)."""
    eta = _check_eta_unit(eta)
    return math.exp(-params.delta / 8.0 * (1.0 - params.alpha) * eta * eta / (1.0 - eta))


def left_tail_upper_kent(params: BesselHitParams, eta: float) -> float:
    """The martingale bound combined with the first Kent atom."""
    eta = _check_eta_unit(eta)
    al = params.alpha
    j1 = _j1(params.nu)
    kent = 1.0 - (1.0 - al) * math.exp(-(j1 * j1 / params.delta) * ((1.0 - al) / 2.0) * (1.0 - eta))
    return min(left_tail_upper(params, eta), kent)


def left_tail_lower(params: BesselHitParams, eta: float) -> tuple[float, float]:
    """(t, bound) with P(tau <= t) >= bound, t = 2c(c - x0)(1 - eta)/(delta - 1); delta > 1."""
    eta = _check_eta_unit(eta)
    d = params.delta
    if d <= 1.0:
        raise ValueError("this lower bound needs delta > 1")
    c, x0 = params.c, params.x0
    t = 2.0 * c * (c - x0) * (1.0 - eta) / (d - 1.0)
    bound = math.exp(-2.0 * (d - 1.0) * ((c - x0) / c) / (1.0 - eta)) / 3.0
    return t, bound


def left_tail_lower_alldelta(params: BesselHitParams, eta: float) -> tuple[float, float]:
    """(t, bound) with P(tau <= t) >= bound, t = 5c(c - x0)(1 - eta)/delta; any delta > 0."""
    eta = _check_eta_unit(eta)
    d = params.delta
    c, x0 = params.c, params.x0
    al = params.alpha
    j1 = _j1(params.nu)
    t = 5.0 * c * (c - x0) * (1.0 - eta) / d
    kent = 1.0 - (1.0 - al) * math.exp(-(j1 * j1 / (2.0 * d)) * ((c - x0) / c) * (1.0 - eta))
    bound = math.exp(-2.0 * d * ((c - x0) / c) / (1.0 - eta)) / 3.0 * kent
    return t, bound
