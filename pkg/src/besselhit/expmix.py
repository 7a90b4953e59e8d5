"""Convolutions of elementary exponential mixtures.

The law is S = sum_n a_n kappa_n theta_n with kappa_n ~ Bernoulli(1 - alpha)
(so P(kappa_n = 0) = alpha) and theta_n ~ Exp(1), all independent, and
a_1 >= a_2 >= ... >= 0.  A model keeps N explicit weights plus the first
two power sums of the weights it leaves out.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ExpMixModel",
    "MomentEstimate",
    "mean",
    "central_l2",
    "central_moment_envelope",
    "moment_envelope",
    "sigma_moment_envelope",
    "p_n_of_t",
    "tail_envelope_sum",
    "sample",
    "sample_sigma",
    "brute_force_moment",
    "brute_force_central_moment",
    "exact_moment",
    "exact_central_moment",
    "atom_cumulant_factors",
]

_GEOM_RTOL = 1e-15


@dataclass(frozen=True)
class ExpMixModel:
    alpha: float
    weights: tuple[float, ...]
    tail_sum: float = 0.0
    tail_sum_sq: float = 0.0

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if any(x < 0.0 or not math.isfinite(x) for x in w):
            raise ValueError("weights must be finite and non-negative")
        if any(w[i] < w[i + 1] for i in range(len(w) - 1)):
            raise ValueError("weights must be non-increasing")
        if self.tail_sum < 0.0 or self.tail_sum_sq < 0.0:
            raise ValueError("remainder sums must be non-negative")
        if w and self.tail_sum_sq > w[-1] * self.tail_sum * (1 + 1e-12) + 1e-300:
            raise ValueError("tail_sum_sq cannot exceed a_N * tail_sum")
        if (not w or w[0] == 0.0) and self.tail_sum > 0.0:
            raise ValueError("a zero leading weight forces a zero remainder")

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @property
    def N(self) -> int:
        return len(self.weights)

    def to_json(self) -> str:
        return json.dumps(
            {
                "alpha": self.alpha,
                "weights": list(self.weights),
                "tail_sum": self.tail_sum,
                "tail_sum_sq": self.tail_sum_sq,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ExpMixModel":
        d = json.loads(text)
        return cls(
            alpha=float(d["alpha"]),
            weights=tuple(d["weights"]),
            tail_sum=float(d.get("tail_sum", 0.0)),
            tail_sum_sq=float(d.get("tail_sum_sq", 0.0)),
        )


@dataclass(frozen=True)
class MomentEstimate:
    p: float
    value: float
    form: str
    stderr: float = field(default=0.0, compare=False)

    def __float__(self) -> float:
        return self.value


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 2.0:
        raise ValueError(f"p must be >= 2, got {p}")
    return p


def mean(model: ExpMixModel) -> float:
    return (1.0 - model.alpha) * (math.fsum(model.weights) + model.tail_sum)


def _sum_sq(model: ExpMixModel) -> float:
    return math.fsum(x * x for x in model.weights) + model.tail_sum_sq


def central_l2(model: ExpMixModel) -> float:
    """Exact L2 norm of S - ES."""
    al = model.alpha
    return math.sqrt((1.0 - al) * (1.0 + al) * _sum_sq(model))


def _geometric_power_sum(model: ExpMixModel, p: float, start: int = 0) -> float:
    """sum_{n > start} alpha^(n-1-start) a_n^p over the explicit weights."""
    al = model.alpha
    acc = 0.0
    g = 1.0
    for x in model.weights[start:]:
        term = g * x**p
        acc += term
        g *= al
        if g == 0.0 or (acc > 0.0 and g * model.weights[start] ** p < _GEOM_RTOL * acc):
            break
    return acc


def central_moment_envelope(model: ExpMixModel, p: float) -> MomentEstimate:
    """p (1-a)^{1/p} (sum a^{n-1} a_n^p)^{1/p} + sqrt(p) sqrt((1-a) sum a_n^2)."""
    p = _check_p(p)
    al = model.alpha
    first = p * (1.0 - al) ** (1.0 / p) * _geometric_power_sum(model, p) ** (1.0 / p)
    second = math.sqrt(p) * math.sqrt((1.0 - al) * _sum_sq(model))
    return MomentEstimate(p, first + second, "central_gluskin_kwapien")


def moment_envelope(model: ExpMixModel, p: float) -> MomentEstimate:
    """p (1-a)^{1/p} (sum a^{n-1} a_n^p)^{1/p} + (1-a) sum a_n."""
    p = _check_p(p)
    al = model.alpha
    first = p * (1.0 - al) ** (1.0 / p) * _geometric_power_sum(model, p) ** (1.0 / p)
    return MomentEstimate(p, first + mean(model), "ordinary")


def _sigma_rest(model: ExpMixModel) -> float:
    return (1.0 - model.alpha) * (math.fsum(model.weights[1:]) + model.tail_sum)


def sigma_moment_envelope(model: ExpMixModel, p: float) -> MomentEstimate:
    """p a_1 + (1 - alpha) sum_{n>1} a_n, for sigma = a_1 theta_1 + sum_{n>1} a_n kappa_n theta_n."""
    p = _check_p(p)
    a1 = model.weights[0] if model.weights else 0.0
    return MomentEstimate(p, p * a1 + _sigma_rest(model), "sigma")


def p_n_of_t(model: ExpMixModel, t: float, n: int) -> float:
    """Solve t = p_n a_n + (1 - alpha) sum_{k>n} a_k for p_n (one-based n).

    Returns +inf when a_n = 0 (including n beyond the explicit weights).
    May be negative for small t.
    """
    if n < 1:
        raise ValueError("n is one-based")
    if n > model.N or model.weights[n - 1] == 0.0:
        return math.inf
    rest = (1.0 - model.alpha) * (math.fsum(model.weights[n:]) + model.tail_sum)
    return (t - rest) / model.weights[n - 1]


def tail_envelope_sum(model: ExpMixModel, t: float, beta: float = 1.0) -> float:
    """(1-a) { sum_{p_n<2} a^{n-1} + sum_{p_n>=2} a^{n-1} exp(-beta p_n) }."""
    if beta < 1.0:
        raise ValueError("beta must be >= 1")
    m = mean(model)
    if t < 2.0 * m:
        raise ValueError(f"t={t} below the guard 2*mean={2.0 * m}")
    al = model.alpha
    w = model.a
    # suffix sums sum_{k>n} a_k
    rest = (1.0 - al) * (np.concatenate([np.cumsum(w[::-1])[::-1][1:], [0.0]]) + model.tail_sum)
    acc = 0.0
    g = 1.0
    for n in range(model.N):
        if w[n] == 0.0:
            break
        with np.errstate(over="ignore"):
            pn = (t - rest[n]) / w[n]  # inf for tiny a_n, where the term is 0
        acc += g if pn < 2.0 else g * math.exp(-beta * pn)
        g *= al
        if g == 0.0 or g < _GEOM_RTOL * 1e3 * acc:
            break
    return (1.0 - al) * acc


# ---------------------------------------------------------------------------
# sampling


def sample(model: ExpMixModel, rng: np.random.Generator, size: int | None = None, chunk: int = 2**22):
    """Draws of sum_n a_n kappa_n theta_n plus the remainder mean (1-alpha) tail_sum."""
    n = 1 if size is None else int(size)
    w = model.a
    shift = (1.0 - model.alpha) * model.tail_sum
    out = np.full(n, shift)
    if w.size and w[0] > 0.0:
        rows = max(1, chunk // max(w.size, 1))
        for lo in range(0, n, rows):
            hi = min(n, lo + rows)
            theta = rng.standard_exponential((hi - lo, w.size))
            if model.alpha > 0.0:
                theta *= rng.random((hi - lo, w.size)) >= model.alpha
            out[lo:hi] += theta @ w
    return float(out[0]) if size is None else out


def sample_sigma(model: ExpMixModel, rng: np.random.Generator, size: int | None = None):
    """Draws of a_1 theta_1 + sum_{n>1} a_n kappa_n theta_n."""
    n = 1 if size is None else int(size)
    a1 = model.weights[0] if model.weights else 0.0
    rest = ExpMixModel(model.alpha, model.weights[1:], model.tail_sum if model.N > 1 else 0.0,
                       model.tail_sum_sq if model.N > 1 else 0.0)
    out = a1 * rng.standard_exponential(n) + sample(rest, rng, n)
    return float(out[0]) if size is None else out


def _lp_norm(x: np.ndarray, p: float) -> tuple[float, float]:
    """Monte Carlo ||X||_p with a delta-method standard error."""
    xp = np.abs(x) ** p
    m = float(np.mean(xp))
    se_m = float(np.std(xp, ddof=1) / math.sqrt(x.size))
    val = m ** (1.0 / p)
    return val, val * se_m / (p * m) if m > 0 else 0.0


def brute_force_moment(model: ExpMixModel, p: float, n_samples: int, rng: np.random.Generator) -> MomentEstimate:
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 1e4")
    val, se = _lp_norm(sample(model, rng, n_samples), float(p))
    return MomentEstimate(float(p), val, "monte_carlo", se)


def brute_force_central_moment(model: ExpMixModel, p: float, n_samples: int,
                               rng: np.random.Generator) -> MomentEstimate:
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 1e4")
    x = sample(model, rng, n_samples) - mean(model)
    val, se = _lp_norm(x, float(p))
    return MomentEstimate(float(p), val, "monte_carlo_central", se)


# ---------------------------------------------------------------------------
# exact integer moments through cumulants


def atom_cumulant_factors(alpha: float, m_max: int) -> np.ndarray:
    """g_m with kappa_m(a kappa theta) = g_m a^m, m = 0..m_max (g_0 unused)."""
    raw = np.array([(1.0 - alpha) * math.factorial(m) for m in range(m_max + 1)])
    raw[0] = 1.0
    return _cumulants_from_raw(raw)


def _cumulants_from_raw(raw: np.ndarray) -> np.ndarray:
    m_max = raw.size - 1
    k = np.zeros(m_max + 1)
    for n in range(1, m_max + 1):
        s = raw[n]
        for j in range(1, n):
            s -= math.comb(n - 1, j - 1) * k[j] * raw[n - j]
        k[n] = s
    return k


def _raw_from_cumulants(k: np.ndarray) -> np.ndarray:
    m_max = k.size - 1
    raw = np.zeros(m_max + 1)
    raw[0] = 1.0
    for n in range(1, m_max + 1):
        raw[n] = sum(math.comb(n - 1, j - 1) * k[j] * raw[n - j] for j in range(1, n + 1))
    return raw


def _model_cumulants(model: ExpMixModel, m_max: int, power_sums=None) -> np.ndarray:
    g = atom_cumulant_factors(model.alpha, m_max)
    w = model.a
    out = np.zeros(m_max + 1)
    for m in range(1, m_max + 1):
        if power_sums is not None and m in power_sums:
            s = power_sums[m]
        else:
            s = float(np.sum(w**m))
            if m == 1:
                s += model.tail_sum
            elif m == 2:
                s += model.tail_sum_sq
        out[m] = g[m] * s
    return out


def exact_moment(model: ExpMixModel, p: int, power_sums: dict | None = None) -> float:
    """||S||_p for integer p from cumulants.

    Remainder power sums beyond the second are neglected unless supplied in
    ``power_sums`` (map m -> sum_n a_n^m over all n).
    """
    p = int(p)
    k = _model_cumulants(model, p, power_sums)
    return float(_raw_from_cumulants(k)[p]) ** (1.0 / p)


def exact_central_moment(model: ExpMixModel, p: int, power_sums: dict | None = None) -> float:
    """||S - ES||_p for even integer p from cumulants."""
    p = int(p)
    if p % 2:
        raise ValueError("exact central moments are available for even p only")
    k = _model_cumulants(model, p, power_sums)
    k[1] = 0.0
    return float(_raw_from_cumulants(k)[p]) ** (1.0 / p)
