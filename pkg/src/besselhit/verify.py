"""Checks of the tail and moment inequalities against series and Monte Carlo truth.

Every decision carries an error budget: the certified truncation error of
the series, or an exact binomial interval for sampled quantities.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, optimize, special, stats

from . import hitting as H
from .hitting import BesselHitParams
from .mc import McConfig, ball, clopper_pearson, sample_bm_exit, sample_kent, sample_sde
from .specfun import zeros

__all__ = [
    "VerificationReport",
    "NU_GRID",
    "ALPHA_GRID",
    "ETA_RIGHT",
    "ETA_LEFT",
    "P_GRID",
    "LEFT_DELTAS",
    "GRID_PRESETS",
    "param_grid",
    "right_tail_grid",
    "left_tail_grid",
    "check_right_tail_bounds",
    "check_left_tail_bounds",
    "check_bm_exit_bounds",
    "fit_envelope_constants",
    "sampler_agreement",
    "central_moment_truth",
    "moment_truth",
    "RELATIONS",
]

NU_GRID = (-0.9, -0.5, 0.0, 0.5, 1.0, 3.0, 10.0, 20.0)
ALPHA_GRID = (0.0, 0.3, 0.51, 0.7, 0.95)
ETA_RIGHT = (0.1, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 2.0, 5.0, 10.0)
ETA_LEFT = (0.1, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
P_GRID = (2, 3, 4, 6, 8, 12)
LEFT_DELTAS = (0.5, 1.5, 3.0)

GRID_PRESETS = {
    "default": {"nu": NU_GRID, "alpha": ALPHA_GRID, "eta_right": ETA_RIGHT, "eta_left": ETA_LEFT,
                "p": P_GRID, "deltas": LEFT_DELTAS, "n_t": 40},
    "quick": {"nu": (-0.5, 0.0, 3.0, 20.0), "alpha": (0.0, 0.51, 0.95), "eta_right": (0.25, 1.0, 5.0),
              "eta_left": (0.25, 0.5, 0.9), "p": (2, 3, 4), "deltas": LEFT_DELTAS, "n_t": 20},
}

SLACK_ABS = 1e-12
BAND_DRIFT = 0.10


@dataclass
class VerificationReport:
    relation_id: str
    grid: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    fitted_constants: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def add_row(self, relation: str, params: BesselHitParams | dict, inputs: dict, truth: float,
                bound: float, status: str, ratio: float | None = None) -> None:
        pd = _pdict(params)
        if ratio is None and truth > 0.0 and bound > 0.0:
            ratio = bound / truth
        self.rows.append({"relation_id": relation, "params": pd, "input": dict(inputs),
                          "truth": float(truth), "bound": float(bound),
                          "ratio": None if ratio is None else float(ratio), "status": status})
        self.grid.append({"params": pd, **inputs})
        if ratio is not None and math.isfinite(ratio) and ratio > 0.0:
            self.ratios.append(float(ratio))

    def to_dict(self) -> dict:
        return {"relation_id": self.relation_id, "passed": self.passed,
                "fitted_constants": self.fitted_constants,
                "violations": [{"point": p, "margin": m} for p, m in self.violations],
                "warnings": list(self.warnings), "n_points": len(self.rows),
                "ratios": self.ratios, "rows": self.rows}

    def to_json(self, path=None) -> str:
        text = json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"
        if path is not None:
            with open(path, "w", encoding="ascii") as fh:
                fh.write(text)
        return text

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["relation_id", "nu", "c", "x0", "input", "truth", "bound", "ratio", "status"])
        for r in self.rows:
            p = r["params"]
            inp = ";".join(f"{k}={_fmt(v)}" for k, v in sorted(r["input"].items()))
            w.writerow([r["relation_id"], _fmt(p.get("nu")), _fmt(p.get("c")), _fmt(p.get("x0")), inp,
                        _fmt(r["truth"]), _fmt(r["bound"]), _fmt(r["ratio"]), r["status"]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="ascii", newline="") as fh:
                fh.write(text)
        return text


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _pdict(params) -> dict:
    if isinstance(params, BesselHitParams):
        return {"nu": params.nu, "c": params.c, "x0": params.x0, "alpha": params.alpha}
    return dict(params)


def _pmap(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# grids


def param_grid(nus: Iterable[float] = NU_GRID, alphas: Iterable[float] = ALPHA_GRID) -> list[BesselHitParams]:
    return [BesselHitParams.from_alpha(nu, a) for nu in nus for a in alphas]


def right_tail_grid(preset: str = "default") -> list[tuple[BesselHitParams, float]]:
    g = GRID_PRESETS[preset]
    return [(p, eta) for p in param_grid(g["nu"], g["alpha"]) for eta in g["eta_right"]]


def left_tail_grid(preset: str = "default") -> list[tuple[BesselHitParams, float]]:
    g = GRID_PRESETS[preset]
    ps = [BesselHitParams.from_alpha(d / 2.0 - 1.0, a) for d in g["deltas"] for a in g["alpha"]]
    return [(p, eta) for p in ps for eta in g["eta_left"]]


# ---------------------------------------------------------------------------
# explicit bounds


def _check(rep: VerificationReport, relation: str, params, inputs: dict, truth: float, bound: float,
           slack: float, kind: str) -> None:
    """kind 'upper': truth <= bound; 'lower': bound <= truth."""
    margin = (truth - bound) if kind == "upper" else (bound - truth)
    if margin > slack:
        status = "fail"
        rep.violations.append(({"relation": relation, "params": _pdict(params), **inputs}, float(margin)))
    elif margin > 0.0:
        status = "pass_within_slack"
    else:
        status = "pass"
    rep.add_row(relation, params, inputs, truth, bound, status)


def _tail(params: BesselHitParams, t: float) -> H.TailValue:
    return H.exact_tail(params, t)


def check_right_tail_bounds(grid: Sequence[tuple[BesselHitParams, float]], workers: int = 1) -> VerificationReport:
    """lower <= P(tau >= (1 + eta) E tau) <= upper, plus the high-dimensional and refined lower bounds."""
    rep = VerificationReport("prop21")

    def point(item):
        params, eta = item
        t = (1.0 + eta) * H.mean_hitting_time(params)
        tv = _tail(params, t)
        out = [("prop21_upper", H.right_tail_upper(params, eta), "upper"),
               ("prop21_lower", H.right_tail_lower(params, eta), "lower"),
               ("remark_refined_lower", H.right_tail_lower_refined(params, eta), "lower")]
        if params.delta >= 12.4:
            out.append(("prop21_highdim_lower", H.right_tail_lower_highdim(params, eta), "lower"))
        return params, eta, t, tv, out

    for params, eta, t, tv, out in _pmap(point, list(grid), workers):
        slack = tv.trunc_error + SLACK_ABS
        for rel, b, kind in out:
            _check(rep, rel, params, {"eta": eta, "t": t, "method": tv.method}, tv.value, b, slack, kind)
    _summarise_bounds(rep)
    return rep


def check_left_tail_bounds(grid: Sequence[tuple[BesselHitParams, float]], workers: int = 1) -> VerificationReport:
    """Upper bounds on P(tau <= (1 - eta) E tau) and lower bounds at their own times."""
    rep = VerificationReport("prop31")

    def point(item):
        params, eta = item
        t = (1.0 - eta) * H.mean_hitting_time(params)
        res = [("prop31_upper", t, H.left_tail_upper(params, eta), "upper"),
               ("prop32_upper_kent", t, H.left_tail_upper_kent(params, eta), "upper")]
        if params.delta > 1.0:
            tl, bl = H.left_tail_lower(params, eta)
            res.append(("prop31_lower", tl, bl, "lower"))
        ta, ba = H.left_tail_lower_alldelta(params, eta)
        res.append(("prop32_lower_alldelta", ta, ba, "lower"))
        return params, eta, [(rel, tt, b, kind, _tail(params, tt)) for rel, tt, b, kind in res]

    for params, eta, res in _pmap(point, list(grid), workers):
        for rel, tt, b, kind, tv in res:
            cdf = 1.0 - tv.value
            _check(rep, rel, params, {"eta": eta, "t": tt, "method": tv.method}, cdf, b,
                   tv.trunc_error + SLACK_ABS, kind)
    _summarise_bounds(rep)
    return rep


def _summarise_bounds(rep: VerificationReport) -> None:
    by_rel: dict[str, list[float]] = {}
    for r in rep.rows:
        if r["ratio"] is not None:
            by_rel.setdefault(r["relation_id"], []).append(r["ratio"])
    for rel, rs in sorted(by_rel.items()):
        rep.fitted_constants[f"{rel}_min_bound_over_truth"] = float(min(rs))
        rep.fitted_constants[f"{rel}_max_bound_over_truth"] = float(max(rs))
    rep.fitted_constants["n_points"] = len(rep.rows)


def check_bm_exit_bounds(d: int = 2, radius: float = 1.0, etas: Sequence[float] = ETA_LEFT,
                         cfg: McConfig | None = None, level: float = 0.99) -> VerificationReport:
    """Exit of d-dimensional BM from a ball centred at the start: both tail bounds."""
    cfg = cfg or McConfig(n_paths=100_000, seed=7)
    rep = VerificationReport("cor_bm_exit")
    batch = sample_bm_exit(d, np.zeros(d), ball(radius), cfg)
    m = radius**2 / d
    rep.fitted_constants["mean_exit"] = batch.mean()
    rep.fitted_constants["mean_exit_stderr"] = batch.stderr()
    rep.fitted_constants["n_censored"] = batch.meta.n_censored
    n = batch.n
    adj = 1.0 - (1.0 - level) / (2 * len(etas))  # Bonferroni over both sides and all eta
    for eta in etas:
        t = m * (1.0 - eta)
        k = int(np.count_nonzero(batch.draws <= t))
        lo, hi = clopper_pearson(k, n, adj)
        b = math.exp(-d * eta * eta / (8.0 * (1.0 - eta)))
        _mc_check(rep, "cor_bm_left", {"d": d, "r": radius}, {"eta": eta, "t": t}, k / n, lo, b, "upper")
        t = m * (1.0 + eta)
        k = int(np.count_nonzero(batch.draws >= t))
        lo, hi = clopper_pearson(k, n, adj)
        b = math.exp(-d * eta * eta / (8.0 * (1.0 + eta)))
        _mc_check(rep, "cor_bm_right", {"d": d, "r": radius}, {"eta": eta, "t": t}, k / n, lo, b, "upper")
    return rep


def _mc_check(rep, relation, params, inputs, est, ci_edge, bound, kind) -> None:
    """Point estimate outside the bound is a warning; the CI edge outside is a failure."""
    if kind == "upper":
        bad_point, bad_ci = est > bound, ci_edge > bound
    else:
        bad_point, bad_ci = est < bound, ci_edge < bound
    if bad_ci:
        rep.violations.append(({"relation": relation, "params": params, **inputs}, abs(ci_edge - bound)))
        status = "fail"
    elif bad_point:
        rep.warnings.append(f"{relation} {inputs}: estimate outside bound within CI")
        status = "pass_within_ci"
    else:
        status = "pass"
    rep.add_row(relation, params, inputs, est, bound, status)


# ---------------------------------------------------------------------------
# envelopes


def _log_env_sum(head_rate: float, rates_from2: np.ndarray, alpha: float, s: float) -> float:
    """log(e^{-head s} + sum_{n>=2} alpha^(n-1) e^{-rate_n s})."""
    if alpha == 0.0:
        return -head_rate * s
    n = np.arange(2, rates_from2.size + 2)
    logs = np.concatenate(([-head_rate * s], (n - 1) * math.log(alpha) - rates_from2 * s))
    return float(special.logsumexp(logs))


def _env_rates(nu: float, alpha: float, s_min: float) -> np.ndarray:
    # enough terms that alpha^(n-1) e^{-(nu+n)^2 s/2} is negligible for s >= s_min
    if alpha == 0.0:
        return np.zeros(0)
    n_geo = int(40.0 / -math.log(alpha)) + 2
    n_gauss = int(math.sqrt(2.0 * 40.0 / s_min) + abs(nu)) + 2
    n = np.arange(2, min(n_geo, n_gauss) + 2)
    return (nu + n) ** 2 / 2.0


def log_tail_envelope(params: BesselHitParams, t: float) -> float:
    s = t / params.c**2
    j1 = float(zeros(params.nu, 1)[0])
    rates = _env_rates(params.nu, params.alpha, s)
    return math.log1p(-params.alpha) + _log_env_sum(j1 * j1 / 2.0, rates, params.alpha, s)


def log_f_envelope(params: BesselHitParams, t: float) -> float:
    s = t / params.c**2
    al = params.alpha
    j1 = float(zeros(params.nu, 1)[0])
    logs = [-j1 * j1 * s / 2.0]
    if al > 0.0:
        k = math.ceil(1.0 / math.log(1.0 / al))
        m = min(k, H.n2_index(params, t))
        logs.append(math.log(al) - (params.nu + 2.0) ** 2 * s / 2.0 + math.log(m))
    return math.log1p(-al) + float(special.logsumexp(logs))


def _t_grid(params: BesselHitParams, n_t: int, lo: float = 2.0, hi: float = 50.0) -> np.ndarray:
    m = H.mean_hitting_time(params)
    return m * np.geomspace(lo, hi, n_t)


def _tail_log_ratios(params_list, n_t: int, log_env: Callable, lo: float = 2.0):
    """Per-params arrays of t, log P(tau >= gamma t) as a function of gamma, and log envelope."""
    out = []
    for p in params_list:
        ts = _t_grid(p, n_t, lo=lo)
        le = np.array([log_env(p, t) for t in ts])
        out.append((p, ts, le))
    return out


def _safe_log_tail(p: BesselHitParams, t: float) -> float:
    # small scaled times need more series terms than the default
    for n_terms in (H.SERIES_TERMS, 1000, 4000):
        try:
            return H.log_tail(p, t, n_terms=n_terms)[0]
        except H.UnconvergedError:
            pass
    # far below the mean the martingale bound pins P(tau <= t) near 0
    m = H.mean_hitting_time(p)
    if t < m:
        b = H.left_tail_upper(p, 1.0 - t / m)
        if b < 1e-9:
            return 0.5 * math.log1p(-b)
    raise H.UnconvergedError(f"log tail not certified at t={t} with 4000 terms")


def _log_ratios_at(data, gamma: float) -> list[np.ndarray]:
    res = []
    for p, ts, le in data:
        lt = np.array([_safe_log_tail(p, gamma * t) for t in ts])
        res.append(lt - le)
    return res


def _extreme(data, gamma: float, side: str) -> float:
    r = np.concatenate(_log_ratios_at(data, gamma))
    return float(r.max() if side == "upper" else r.min())


def _fit_scale(data, side: str, log_c: float, lo: float = 0.05, hi: float = 20.0, iters: int = 30) -> float:
    """Time scale for one side of the sandwich.

    upper: smallest gamma with P(tau >= gamma t) <= C * envelope(t) on the grid;
    lower: largest gamma with P(tau >= gamma t) >= envelope(t) / C.
    Both extremes decrease in gamma, so bisection in log gamma applies.
    """
    a, b = math.log(lo), math.log(hi)

    def ok(lg):
        e = _extreme(data, math.exp(lg), side)
        return e <= log_c if side == "upper" else e >= -log_c

    if side == "upper":
        if not ok(b):
            return math.inf
        if ok(a):
            return lo
    else:
        if not ok(a):
            return 0.0
        if ok(b):
            return hi
    for _ in range(iters):
        m = 0.5 * (a + b)
        if ok(m) == (side == "upper"):
            b = m
        else:
            a = m
    return math.exp(b if side == "upper" else a)


def _drift(a: float, b: float) -> float:
    return abs(b / a - 1.0) if a > 0.0 else math.inf


def _fit_tail_relation(rep: VerificationReport, relation: str, params_list, n_t: int, log_env: Callable,
                       label: str, band_c: float = 2.0) -> None:
    """Fit gamma_1 (upper side) and gamma_2 (lower side) at band constant C on [2 E tau, 50 E tau]."""
    log_c = math.log(band_c)
    data = _tail_log_ratios(params_list, n_t, log_env)
    fine = _tail_log_ratios(params_list, 2 * n_t, log_env)
    g1 = _fit_scale(data, "upper", log_c)
    g2 = _fit_scale(data, "lower", log_c)
    g1_f = _fit_scale(fine, "upper", log_c)
    g2_f = _fit_scale(fine, "lower", log_c)
    finite = all(math.isfinite(g) and g > 0.0 for g in (g1, g2, g1_f, g2_f))
    if not finite:
        rep.violations.append(({"relation": label, "gamma1": g1, "gamma2": g2}, math.inf))
        rep.fitted_constants.update({f"{label}_gamma1": g1, f"{label}_gamma2": g2})
        return
    up = _log_ratios_at(data, g1)
    dn = _log_ratios_at(data, g2)
    for (p, ts, _), ru, rd in zip(data, up, dn):
        em = H.mean_hitting_time(p)
        for t, lu, ld in zip(ts, ru, rd):
            rep.add_row(f"{relation}_upper", p, {"t": float(t), "t_over_mean": float(t / em), "gamma": g1},
                        float(math.exp(lu)), band_c, "band", ratio=float(math.exp(lu)))
            rep.add_row(f"{relation}_lower", p, {"t": float(t), "t_over_mean": float(t / em), "gamma": g2},
                        float(math.exp(ld)), 1.0 / band_c, "band", ratio=float(math.exp(ld)))
    # the coarse-grid scales applied on the refined grid
    sup_f = math.exp(_extreme(fine, g1, "upper"))
    inf_f = math.exp(_extreme(fine, g2, "lower"))
    starts = {}
    for side, g in (("upper", g1), ("lower", g2)):
        starts[side] = 2.0
        for start in (0.25, 0.5, 1.0, 1.5):
            d = _tail_log_ratios(params_list, n_t, log_env, lo=start)
            try:
                e = _extreme(d, g, side)
            except H.UnconvergedError:
                continue
            if (e <= log_c + 1e-9) if side == "upper" else (e >= -log_c - 1e-9):
                starts[side] = start
                break
    rep.fitted_constants.update({
        f"{label}_band_constant": band_c,
        f"{label}_gamma1": g1, f"{label}_gamma2": g2,
        f"{label}_gamma1_refined": g1_f, f"{label}_gamma2_refined": g2_f,
        f"{label}_drift_gamma1": _drift(g1, g1_f), f"{label}_drift_gamma2": _drift(g2, g2_f),
        f"{label}_band_lo": 1.0 / band_c, f"{label}_band_hi": band_c,
        f"{label}_band_lo_refined": inf_f, f"{label}_band_hi_refined": sup_f,
        f"{label}_upper_ratio_inf": float(np.exp(np.concatenate(up).min())),
        f"{label}_lower_ratio_sup": float(np.exp(np.concatenate(dn).max())),
        f"{label}_gamma3_empirical": starts["upper"], f"{label}_gamma4_empirical": starts["lower"],
    })
    _band_verdict(rep, label, 1.0 / band_c, band_c, inf_f, sup_f)
    for name, d in ((f"{label}_gamma1", _drift(g1, g1_f)), (f"{label}_gamma2", _drift(g2, g2_f))):
        if d > BAND_DRIFT:
            rep.violations.append(({"relation": name, "drift": d}, d - BAND_DRIFT))


def _band_verdict(rep, label, lo, hi, lo_f, hi_f) -> None:
    ok = all(math.isfinite(x) and x > 0.0 for x in (lo, hi, lo_f, hi_f))
    if not ok:
        rep.violations.append(({"relation": label}, math.inf))
        return
    d = max(_drift(lo, lo_f), _drift(hi, hi_f))
    if d > BAND_DRIFT:
        rep.violations.append(({"relation": label, "band": [lo, hi], "refined": [lo_f, hi_f]}, d))


def moment_truth(params: BesselHitParams, p: int) -> float:
    return H.exact_moment(params, int(p))


def central_moment_truth(params: BesselHitParams, p: int) -> float:
    """||tau - E tau||_p: cumulants for even p, tail quadrature otherwise."""
    p = int(p)
    if p % 2 == 0:
        return H.exact_central_moment(params, p)
    mu = H.mean_hitting_time(params)

    def tail(t):
        return H.exact_tail(params, t, fallback=False).value

    # P(tau <= t) is negligible and uncertified close to 0; bound that piece by monotonicity
    t_c = mu
    while t_c > 1e-6 * mu:
        try:
            tail(0.5 * t_c)
        except H.UnconvergedError:
            break
        t_c *= 0.5
    f_c = 1.0 - tail(t_c)
    below, _ = integrate.quad(lambda t: p * (mu - t) ** (p - 1) * (1.0 - tail(t)), t_c, mu,
                              epsabs=0.0, epsrel=1e-10, limit=200)
    low_piece = 0.5 * f_c * (mu**p - (mu - t_c) ** p)
    above, _ = integrate.quad(lambda y: p * y ** (p - 1) * tail(mu + y), 0.0, np.inf,
                              epsabs=0.0, epsrel=1e-10, limit=200)
    return float(below + low_piece + above) ** (1.0 / p)


def _moment_rows(params_list, ps, central: bool, workers: int):
    env = H.central_moment_envelope if central else H.moment_envelope
    truth = central_moment_truth if central else moment_truth
    items = [(pr, p) for pr in params_list for p in ps]

    def point(item):
        pr, p = item
        tv = truth(pr, p)
        ev = env(pr, p)
        return pr, p, tv, ev

    return _pmap(point, items, workers)


def _refine(vals: Sequence[float]) -> list[float]:
    v = sorted(vals)
    out = list(v)
    out += [0.5 * (a + b) for a, b in zip(v[:-1], v[1:])]
    return sorted(set(out))


def _regime_jumps(ps, central: bool, nus) -> float:
    """Largest |log ratio| jump across the alpha regime boundaries."""
    env = H.central_moment_envelope if central else H.moment_envelope
    truth = central_moment_truth if central else moment_truth
    worst = 0.0
    for nu in nus:
        for a_star in (2.0 ** (-1.0 / (nu + 2.0)), 0.5):
            for p in ps:
                r = []
                for a in (a_star * (1 - 1e-9), a_star * (1 + 1e-9)):
                    pr = BesselHitParams.from_alpha(nu, min(a, 0.999))
                    r.append(math.log(truth(pr, p) / env(pr, p).value))
                worst = max(worst, abs(r[1] - r[0]))
    return worst


def _fit_moment_relation(rep: VerificationReport, central: bool, nus, alphas, ps, workers: int) -> None:
    label = rep.relation_id
    base = _moment_rows(param_grid(nus, alphas), ps, central, workers)
    fine = _moment_rows(param_grid(_refine(nus), _refine(alphas)), ps, central, workers)
    ratios: dict[int, list[float]] = {}
    for pr, p, tv, ev in base:
        r = tv / ev.value
        ratios.setdefault(p, []).append(r)
        rep.add_row(label, pr, {"p": p, "form": ev.form}, tv, ev.value, "band", ratio=r)
    fr = np.array([tv / ev.value for _, _, tv, ev in fine])
    br = np.array(rep.ratios)
    lo, hi = float(br.min()), float(br.max())
    lo_f, hi_f = float(fr.min()), float(fr.max())
    pv = np.array(sorted(ratios))
    slope_hi = float(np.polyfit(pv, np.log([max(ratios[p]) for p in pv]), 1)[0]) if pv.size > 1 else 0.0
    slope_lo = float(np.polyfit(pv, np.log([min(ratios[p]) for p in pv]), 1)[0]) if pv.size > 1 else 0.0
    jump = _regime_jumps(ps, central, nus)
    rep.fitted_constants.update({
        f"{label}_band_lo": lo, f"{label}_band_hi": hi,
        f"{label}_band_lo_refined": lo_f, f"{label}_band_hi_refined": hi_f,
        f"{label}_drift_lo": _drift(lo, lo_f), f"{label}_drift_hi": _drift(hi, hi_f),
        f"{label}_log_band_slope_hi": slope_hi, f"{label}_log_band_slope_lo": slope_lo,
        f"{label}_max_regime_jump": jump,
    })
    for p in pv:
        rep.fitted_constants[f"{label}_p{int(p)}_band"] = [float(min(ratios[p])), float(max(ratios[p]))]
    for regime in (1, 2, 3):
        rs = [tv / ev.value for pr, p, tv, ev in base if H.moment_regime(pr) == regime]
        if rs:
            rep.fitted_constants[f"{label}_regime{regime}_band"] = [float(min(rs)), float(max(rs))]
    _band_verdict(rep, label, lo, hi, lo_f, hi_f)
    if jump > math.log(hi / lo):
        rep.violations.append(({"relation": label, "regime_jump": jump}, jump - math.log(hi / lo)))


def _fit_f_remark(rep: VerificationReport, params_list, n_t: int) -> None:
    """F values on the set where n1 >= 3 and ceil(1/ln(1/alpha)) < n2."""
    def collect(n):
        vals = []
        for p in params_list:
            if p.alpha == 0.0:
                continue
            k = math.ceil(1.0 / math.log(1.0 / p.alpha))
            for t in _t_grid(p, n, lo=0.05, hi=50.0):
                f, n1, n2 = H.f_envelope(p, t)
                if n1 >= 3 and k < n2:
                    vals.append((p, t, f))
        return vals

    base, fine = collect(n_t), collect(2 * n_t)
    if not base:
        rep.warnings.append("no grid point in the F ~ 1 regime")
        return
    for p, t, f in base:
        rep.add_row("remark_f_sim1", p, {"t": float(t)}, f, 1.0, "band", ratio=f)
    fv = np.array([f for *_, f in base])
    ff = np.array([f for *_, f in fine])
    c = float(max(fv.max(), 1.0 / fv.min()))
    c_f = float(max(ff.max(), 1.0 / ff.min()))
    rep.fitted_constants.update({"remark_f_C": c, "remark_f_C_refined": c_f,
                                 "remark_f_drift": _drift(c, c_f), "remark_f_points": len(base)})
    _band_verdict(rep, "remark_f_sim1", 1.0 / c, c, 1.0 / c_f, c_f)


RELATIONS = ("thm_tails", "cor_f", "remark_f", "thm_moments", "thm_moments_central")


def fit_envelope_constants(relation_id: str, grid: str | Sequence[BesselHitParams] = "default",
                           workers: int = 1) -> VerificationReport:
    """Fit the scale and report the band of truth / envelope for one relation.

    ``grid`` is a preset name or an explicit list of parameters; the moment
    relations refine the (nu, alpha) grid by midpoints, the tail relations
    double the number of t points on [2 E tau, 50 E tau].
    """
    if relation_id not in RELATIONS:
        raise ValueError(f"unknown relation {relation_id!r}; expected one of {RELATIONS}")
    if isinstance(grid, str):
        g = GRID_PRESETS[grid]
        nus, alphas, ps, n_t = g["nu"], g["alpha"], g["p"], g["n_t"]
        params_list = param_grid(nus, alphas)
    else:
        params_list = list(grid)
        nus = sorted({p.nu for p in params_list})
        alphas = sorted({p.alpha for p in params_list})
        ps, n_t = P_GRID, 40
    rep = VerificationReport(relation_id)
    if relation_id == "thm_tails":
        _fit_tail_relation(rep, "thm_tails", params_list, n_t, log_tail_envelope, "thm_tails")
    elif relation_id == "cor_f":
        _fit_tail_relation(rep, "cor_f", params_list, n_t, log_f_envelope, "cor_f")
    elif relation_id == "remark_f":
        _fit_f_remark(rep, params_list, n_t)
    elif relation_id == "thm_moments":
        _fit_moment_relation(rep, False, nus, alphas, ps, workers)
    else:
        _fit_moment_relation(rep, True, nus, alphas, ps, workers)
    return rep


# ---------------------------------------------------------------------------
# sampler cross-validation


def _ks_critical(n: int, m: int, level: float = 0.01) -> float:
    c = math.sqrt(-0.5 * math.log(level / 2.0))
    return c * math.sqrt((n + m) / (n * m))


def sampler_agreement(params: BesselHitParams, cfg: McConfig | None = None,
                      t_multiples: Sequence[float] = (0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0),
                      with_sde: bool = True, with_bm: bool | None = None,
                      dt_halving: bool = False) -> VerificationReport:
    """Series vs Kent sampler tails, Kent vs SDE in law, and SDE vs BM exit when delta = 3.

    Tail points use 99% Clopper-Pearson intervals with a Bonferroni split
    over the t grid.
    """
    cfg = cfg or McConfig(n_paths=100_000, seed=11)
    rep = VerificationReport("sampler_agreement")
    m = H.mean_hitting_time(params)
    kent = sample_kent(params, cfg)
    n = kent.n
    level = 1.0 - 0.01 / len(t_multiples)
    for k_mult in t_multiples:
        t = k_mult * m
        tv = H.exact_tail(params, t)
        k = int(np.count_nonzero(kent.draws > t))
        lo, hi = clopper_pearson(k, n, level)
        lo -= tv.trunc_error
        hi += tv.trunc_error
        est = k / n
        status = "pass" if lo <= tv.value <= hi else "fail"
        if status == "fail":
            rep.violations.append(({"relation": "series_vs_kent", "t": t}, min(abs(tv.value - lo), abs(tv.value - hi))))
        rep.add_row("series_vs_kent", params, {"t": t, "ci_lo": lo, "ci_hi": hi}, tv.value, est, status)
    rep.fitted_constants["kent_mean"] = kent.mean()
    rep.fitted_constants["kent_mean_z"] = (kent.mean() - m) / kent.stderr()
    rep.fitted_constants["kent_bias_bound"] = kent.meta.bias_bound
    if with_sde:
        sde = sample_sde(params, _with_seed(cfg, cfg.seed + 1))
        ks = stats.ks_2samp(kent.draws, sde.draws).statistic
        crit = _ks_critical(kent.n, sde.n)
        rep.fitted_constants.update({"ks_kent_sde": float(ks), "ks_critical_1pct": crit,
                                     "sde_mean": sde.mean(), "sde_dt": sde.meta.dt,
                                     "sde_censored": sde.meta.n_censored})
        status = "pass" if ks < crit else "fail"
        if status == "fail":
            rep.violations.append(({"relation": "kent_vs_sde_ks"}, float(ks - crit)))
        rep.add_row("kent_vs_sde_ks", params, {"dt": sde.meta.dt}, float(ks), crit, status)
        if dt_halving:
            gaps = []
            for f in (4.0, 1.0):
                dt = m / (2000.0 / f)
                s = sample_sde(params, _with_dt(cfg, dt))
                gaps.append(abs(s.mean() - m))
            rep.fitted_constants["sde_mean_gap_coarse"] = gaps[0]
            rep.fitted_constants["sde_mean_gap_fine"] = gaps[1]
            if gaps[1] > gaps[0] + 4.0 * sde.stderr():
                rep.violations.append(({"relation": "dt_refinement"}, gaps[1] - gaps[0]))
    if with_bm is None:
        with_bm = abs(params.delta - 3.0) < 1e-12 and params.x0 == 0.0
    if with_bm and with_sde:
        bm = sample_bm_exit(3, np.zeros(3), ball(params.c), _with_seed(cfg, cfg.seed + 2))
        ks = stats.ks_2samp(sde.draws, bm.draws).statistic
        crit = _ks_critical(sde.n, bm.n)
        rep.fitted_constants.update({"ks_sde_bm": float(ks), "bm_mean": bm.mean()})
        status = "pass" if ks < crit else "fail"
        if status == "fail":
            rep.violations.append(({"relation": "sde_vs_bm_exit_ks"}, float(ks - crit)))
        rep.add_row("sde_vs_bm_exit_ks", params, {"d": 3}, float(ks), crit, status)
    return rep


def _with_seed(cfg: McConfig, seed: int) -> McConfig:
    d = asdict(cfg)
    d["seed"] = int(seed) % 2**64
    return McConfig(**d)


def _with_dt(cfg: McConfig, dt: float) -> McConfig:
    d = asdict(cfg)
    d["dt"] = float(dt)
    return McConfig(**d)
