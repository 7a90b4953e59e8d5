"""Gamma, Bessel J and I of real order, and certified zeros of J.

J_nu(y) is evaluated by one of three routes depending on (nu, y):

* the Maclaurin series, when cancellation between terms is mild;
* the Hankel asymptotic expansion, for large arguments;
* Miller's backward recurrence over the order, normalised with the
  Neumann sum (y/2)^nu = sum_k (nu + 2k) Gamma(nu + k) / k! J_{nu+2k}(y),
  for everything in between.

Zeros are found sequentially with a bracketing search and a safeguarded
Newton iteration, then certified by a sign change of J_nu on
[j - accuracy, j + accuracy].
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special as _sp

__all__ = [
    "DomainError",
    "ZeroTable",
    "gamma_fn",
    "bessel_j",
    "bessel_i",
    "bessel_j_deriv",
    "zero_table",
    "zeros",
    "zero_ratio_check",
    "inv_j2_remainder",
    "inv_j4_remainder",
    "ZeroCache",
]

DEFAULT_ACCURACY = 1e-10
_EPS = np.finfo(float).eps
_SERIES_Y_MAX = 10.0
_HANKEL_Y_MIN = 25.0
_HANKEL_MAX_TERM = 1e3


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


def _check_order(nu: float) -> float:
    nu = float(nu)
    if not math.isfinite(nu) or nu <= -1.0:
        raise DomainError(f"order must be finite and > -1, got {nu!r}")
    return nu


def gamma_fn(x: float) -> float:
    """Gamma function for positive real x."""
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"gamma_fn requires finite x > 0, got {x!r}")
    return math.gamma(x)


# ---------------------------------------------------------------------------
# J_nu


def _j_series(nu: float, y: float) -> float:
    h = 0.5 * y
    lead = nu * math.log(h) - math.lgamma(nu + 1.0)
    q = -h * h
    term = 1.0
    total = 1.0
    m = 0
    while True:
        m += 1
        term *= q / (m * (nu + m))
        total += term
        if abs(term) <= 1e-17 * abs(total) and m > 2:
            break
        if m > 500:
            break
    return math.exp(lead) * total


def _hankel_terms(nu: float, y: float):
    """P, Q and the largest term magnitude of the Hankel expansion, or None."""
    mu = 4.0 * nu * nu
    p = 1.0
    q = 0.0
    term = 1.0
    biggest = 1.0
    prev = math.inf
    k = 0
    while True:
        k += 1
        term *= (mu - (2 * k - 1) ** 2) / (k * 8.0 * y)
        a = abs(term)
        if a == 0.0:
            return p, q, biggest
        if a > prev and a > 1e-17 and k > 2 and (2 * k - 1) ** 2 > mu:
            # asymptotic divergence before reaching tolerance
            return None
        if k % 2 == 1:
            q += term if (k // 2) % 2 == 0 else -term
        else:
            p += term if (k // 2) % 2 == 0 else -term
        biggest = max(biggest, a)
        if a < 1e-17:
            return p, q, biggest
        prev = a
        if k > 200:
            return None


def _j_hankel(nu: float, y: float):
    res = _hankel_terms(nu, y)
    if res is None:
        return None
    p, q, biggest = res
    if biggest > _HANKEL_MAX_TERM:
        return None
    w = y - (0.5 * nu + 0.25) * math.pi
    return math.sqrt(2.0 / (math.pi * y)) * (p * math.cos(w) - q * math.sin(w))


def _j_miller(nu: float, y: float) -> float:
    top = int(max(y, nu) + 40 + 4 * math.sqrt(max(y, 1.0)))
    if top % 2:
        top += 1
    lg1 = math.lgamma(nu + 1.0)
    f_next = 0.0
    f = 1e-300
    norm = 0.0
    for k in range(top, 0, -1):
        if k % 2 == 0:
            i = k // 2
            w = (nu + 2 * i) * math.exp(math.lgamma(nu + i) - math.lgamma(i + 1.0) - lg1)
            norm += w * f
        f_prev = 2.0 * (nu + k) / y * f - f_next
        f_next, f = f, f_prev
        if abs(f) > 1e250:
            f *= 1e-250
            f_next *= 1e-250
            norm *= 1e-250
    norm += f  # i = 0 weight is Gamma(nu + 1) / Gamma(nu + 1)
    return f * math.exp(nu * math.log(0.5 * y) - lg1) / norm


def bessel_j(nu: float, y: float) -> float:
    """Bessel function of the first kind J_nu(y), nu > -1, y >= 0."""
    nu = _check_order(nu)
    y = float(y)
    if not (y >= 0.0) or math.isinf(y):
        raise DomainError(f"bessel_j requires finite y >= 0, got {y!r}")
    if y == 0.0:
        if nu == 0.0:
            return 1.0
        return 0.0 if nu > 0.0 else math.inf
    if y <= _SERIES_Y_MAX or y * y <= 8.0 * (nu + 1.0):
        return _j_series(nu, y)
    if y >= _HANKEL_Y_MIN:
        val = _j_hankel(nu, y)
        if val is not None:
            return val
    return _j_miller(nu, y)


def bessel_j_deriv(nu: float, y: float) -> float:
    """dJ_nu/dy via (nu / y) J_nu - J_{nu+1}."""
    return nu / y * bessel_j(nu, y) - bessel_j(nu + 1.0, y)


def bessel_i(nu: float, y: float) -> float:
    """Modified Bessel function I_nu(y) from its (all-positive) series."""
    nu = _check_order(nu)
    y = float(y)
    if not (y >= 0.0) or math.isinf(y):
        raise DomainError(f"bessel_i requires finite y >= 0, got {y!r}")
    if y == 0.0:
        if nu == 0.0:
            return 1.0
        return 0.0 if nu > 0.0 else math.inf
    h = 0.5 * y
    q = h * h
    # sum in log-space friendly form: scale by the leading factor at the end
    term = 1.0
    total = 1.0
    m = 0
    while True:
        m += 1
        term *= q / (m * (nu + m))
        total += term
        if term <= 1e-17 * total and m > q:
            break
    return math.exp(nu * math.log(h) - math.lgamma(nu + 1.0) + math.log(total))


# ---------------------------------------------------------------------------
# zeros


@dataclass(frozen=True)
class ZeroTable:
    """First ``len(zeros)`` positive zeros of J_nu."""

    nu: float
    zeros: np.ndarray
    accuracy: float = DEFAULT_ACCURACY

    def __post_init__(self):
        z = np.asarray(self.zeros, dtype=float)
        z.setflags(write=False)
        object.__setattr__(self, "zeros", z)

    @property
    def N(self) -> int:
        return int(self.zeros.size)

    def __len__(self) -> int:
        return self.N

    def __getitem__(self, n: int) -> float:
        """One-based access: ``table[1]`` is the first zero."""
        if n < 1 or n > self.N:
            raise IndexError(n)
        return float(self.zeros[n - 1])

    def head(self, n: int) -> "ZeroTable":
        return ZeroTable(self.nu, self.zeros[:n], self.accuracy)


class ZeroSearchError(RuntimeError):
    pass


def _refine(nu: float, a: float, b: float, fa: float, fb: float) -> float:
    """Safeguarded Newton on a sign-change bracket [a, b]."""
    x = 0.5 * (a + b)
    for _ in range(100):
        fx = bessel_j(nu, x)
        if fx == 0.0:
            return x
        if (fx > 0) == (fa > 0):
            a, fa = x, fx
        else:
            b, fb = x, fx
        d = nu / x * fx - bessel_j(nu + 1.0, x)
        step = fx / d if d != 0.0 else math.inf
        xn = x - step
        if not (a < xn < b) or abs(step) > 0.5 * (b - a):
            xn = 0.5 * (a + b)
        if abs(xn - x) <= 4 * _EPS * max(1.0, x) or (b - a) <= 4 * _EPS * max(1.0, x):
            return xn
        x = xn
    return x


def _certify(nu: float, x: float, acc: float) -> bool:
    lo = bessel_j(nu, x - acc)
    hi = bessel_j(nu, x + acc)
    return (lo > 0) != (hi > 0) and lo != 0.0 and hi != 0.0


def _first_zero_lower_bound(nu: float) -> float:
    # from sum 1/j^4 = 1/(16 (nu+1)^2 (nu+2)) every zero exceeds its -1/4 power
    return (16.0 * (nu + 1.0) ** 2 * (nu + 2.0)) ** 0.25


def _compute_zeros(nu: float, n_zeros: int, start: list[float], acc: float) -> list[float]:
    zs = list(start)
    step = 0.5
    while len(zs) < n_zeros:
        k = len(zs)  # zeros found so far; next zero has index k+1
        sign_before = 1.0 if k % 2 == 0 else -1.0  # sign of J on (j_k, j_{k+1})
        bracket = None
        if k >= 2:
            g = 2.0 * zs[-1] - zs[-2]
            a, b = g - step, g + step
            fa, fb = bessel_j(nu, a), bessel_j(nu, b)
            if (fa > 0) == (sign_before > 0) and (fb > 0) != (sign_before > 0) and a > zs[-1] + 1.0:
                bracket = (a, b, fa, fb)
        if bracket is None:
            if k == 0:
                a = _first_zero_lower_bound(nu) * (1.0 - 1e-9)
                fa = bessel_j(nu, a)
                while fa <= 0.0:
                    a *= 0.5
                    fa = bessel_j(nu, a)
            else:
                a = zs[-1] + step
                fa = bessel_j(nu, a)
            while True:
                b = a + step
                fb = bessel_j(nu, b)
                if (fb > 0) != (fa > 0):
                    break
                a, fa = b, fb
                if b > 1e7:
                    raise ZeroSearchError(f"no sign change found for nu={nu}")
            bracket = (a, b, fa, fb)
        a, b, fa, fb = bracket
        z = _refine(nu, a, b, fa, fb)
        if not _certify(nu, z, acc):
            raise ZeroSearchError(f"zero {k + 1} of J_{nu} near {z} failed certification")
        if zs and z - zs[-1] < 1.0:
            raise ZeroSearchError(f"zeros {k} and {k + 1} of J_{nu} too close: {zs[-1]}, {z}")
        zs.append(z)
    return zs


_ZEROS_MEMO: dict[float, tuple[float, ...]] = {}
_MEMO_LOCK = threading.Lock()


def zeros(nu: float, n_zeros: int) -> np.ndarray:
    """First ``n_zeros`` positive zeros of J_nu as a read-only array.

    Tables are memoised per order and extended in place when a longer one
    is requested.
    """
    nu = _check_order(nu)
    n_zeros = int(n_zeros)
    if n_zeros < 1:
        raise ValueError("n_zeros must be >= 1")
    with _MEMO_LOCK:
        have = _ZEROS_MEMO.get(nu, ())
        if len(have) < n_zeros:
            have = tuple(_compute_zeros(nu, n_zeros, list(have), DEFAULT_ACCURACY))
            _ZEROS_MEMO[nu] = have
    arr = np.array(have[:n_zeros])
    arr.setflags(write=False)
    return arr


def zero_table(nu: float, N: int, cache: "ZeroCache | None" = None) -> ZeroTable:
    """Certified table of the first N zeros of J_nu.

    With ``cache`` given, zeros are read from (and appended to) the
    on-disk cache file.
    """
    nu = _check_order(nu)
    N = int(N)
    if N < 1:
        raise ValueError("N must be >= 1")
    if cache is not None:
        got = cache.load(nu, N)
        if got is not None:
            with _MEMO_LOCK:
                if len(_ZEROS_MEMO.get(nu, ())) < N:
                    _ZEROS_MEMO[nu] = tuple(got)
            return ZeroTable(nu, np.asarray(got), DEFAULT_ACCURACY)
    table = ZeroTable(nu, zeros(nu, N), DEFAULT_ACCURACY)
    if cache is not None:
        cache.store(table)
    return table


def zero_ratio_check(nu: float, table: ZeroTable) -> np.ndarray:
    """j_{nu,n} / (nu + n) for n = 2..N."""
    if table.nu != nu:
        raise ValueError("table order does not match nu")
    n = np.arange(2, table.N + 1, dtype=float)
    return table.zeros[1:] / (nu + n)


def _asymptotic_q(nu: float, N: int) -> float:
    return N + 1 + 0.5 * nu - 0.25


def inv_j2_remainder(nu: float, N: int) -> float:
    """Asymptotic value of sum_{n > N} 1 / j_{nu,n}^2.

    Uses the McMahon form j ~ b - (mu - 1) / (8 b), b = (n + nu/2 - 1/4) pi,
    so 1/j^2 ~ 1/b^2 + (mu - 1) / (4 b^4), summed with Hurwitz zeta values.
    Requires N well beyond nu for the expansion to be accurate.
    """
    nu = _check_order(nu)
    q = _asymptotic_q(nu, N)
    mu = 4.0 * nu * nu
    s2 = float(_sp.zeta(2.0, q)) / math.pi**2
    s4 = float(_sp.zeta(4.0, q)) / math.pi**4
    return s2 + 0.25 * (mu - 1.0) * s4


def inv_j4_remainder(nu: float, N: int) -> float:
    """Asymptotic value of sum_{n > N} 1 / j_{nu,n}^4 (leading McMahon order)."""
    nu = _check_order(nu)
    q = _asymptotic_q(nu, N)
    mu = 4.0 * nu * nu
    s4 = float(_sp.zeta(4.0, q)) / math.pi**4
    s6 = float(_sp.zeta(6.0, q)) / math.pi**6
    return s4 + 0.5 * (mu - 1.0) * s6


# ---------------------------------------------------------------------------
# on-disk cache


CACHE_FILENAME = "zerocache_v1.csv"
CACHE_HEADER = ("nu", "n", "zero", "accuracy")


def default_cache_dir() -> Path:
    env = os.environ.get("BESSELHIT_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "besselhit"


def _nu_key(nu: float) -> float:
    return round(float(nu), 12)


class ZeroCache:
    """CSV cache of zeros keyed by (nu rounded to 1e-12, n).

    Rows are re-validated on load: a cached zero is accepted only when J_nu
    still changes sign across it at the recorded accuracy.  Writes go to a
    temporary file that is renamed into place.
    """

    def __init__(self, directory: str | os.PathLike | None = None):
        self.directory = Path(directory) if directory is not None else default_cache_dir()
        self.path = self.directory / CACHE_FILENAME

    def _read_all(self) -> dict[tuple[float, int], tuple[float, float]]:
        rows: dict[tuple[float, int], tuple[float, float]] = {}
        if not self.path.exists():
            return rows
        with open(self.path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != CACHE_HEADER:
                return rows
            for rec in reader:
                try:
                    nu, n, z, acc = float(rec[0]), int(rec[1]), float(rec[2]), float(rec[3])
                except (ValueError, IndexError):
                    continue
                rows[(_nu_key(nu), n)] = (z, acc)
        return rows

    def load(self, nu: float, N: int) -> list[float] | None:
        rows = self._read_all()
        key = _nu_key(nu)
        out = []
        for n in range(1, N + 1):
            hit = rows.get((key, n))
            if hit is None:
                return None
            z, acc = hit
            if acc > DEFAULT_ACCURACY or not _certify(nu, z, acc):
                return None
            if out and z <= out[-1]:
                return None
            out.append(z)
        return out

    def store(self, table: ZeroTable) -> None:
        rows = self._read_all()
        key = _nu_key(table.nu)
        for n, z in enumerate(table.zeros, start=1):
            rows[(key, n)] = (float(z), table.accuracy)
        self.directory.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".zerocache", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CACHE_HEADER)
                for (nu, n), (z, acc) in sorted(rows.items()):
                    w.writerow([f"{nu:.17g}", n, f"{z:.17g}", f"{acc:.17g}"])
            os.replace(tmp, self.path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
