"""besselhit command line: series values, bounds, samplers and the verification harness.

Exit codes: 0 success, 1 verification found violations, 2 usage or parameter error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict
from typing import Sequence

import numpy as np

from . import hitting as H
from . import verify as V
from .mc import McConfig, ball, sample_bm_exit, sample_kent, sample_sde
from .specfun import ZeroCache, default_cache_dir, zero_table

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2
CACHE_TERMS = 200


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_grid(text: str) -> list[float]:
    """'0.1,0.5,2', 'a:b:n' or 'lin:a:b:n' (linear), 'log:a:b:n' (geometric)."""
    text = text.strip()
    if text.startswith("lin:"):
        text = text[4:]
    try:
        if text.startswith("log:"):
            a, b, n = text[4:].split(":")
            return [float(x) for x in np.geomspace(float(a), float(b), int(n))]
        if ":" in text:
            a, b, n = text.split(":")
            return [float(x) for x in np.linspace(float(a), float(b), int(n))]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}: {exc}") from None


def _g(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _num(v):
    if v is None:
        return None
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def record(params: H.BesselHitParams, op: str, inputs: dict, value, trunc_error=None,
           terms_used=None, method: str = "closed_form") -> dict:
    return {"params": {"nu": params.nu, "c": params.c, "x0": params.x0}, "op": op,
            "inputs": {k: _num(v) if not isinstance(v, str) else v for k, v in inputs.items()},
            "value": _num(value), "trunc_error": _num(trunc_error),
            "terms_used": None if terms_used is None else int(terms_used), "method": method}


def render_records(records: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(records, indent=2, sort_keys=True, allow_nan=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["op", "nu", "c", "x0", "inputs", "value", "trunc_error", "terms_used", "method"])
    for r in records:
        p = r["params"]
        inp = ";".join(f"{k}={_g(v)}" for k, v in sorted(r["inputs"].items()))
        w.writerow([r["op"], _g(p["nu"]), _g(p["c"]), _g(p["x0"]), inp, _g(r["value"]),
                    _g(r["trunc_error"]), _g(r["terms_used"]), r["method"]])
    return buf.getvalue()


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w", encoding="ascii", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def _params(a) -> H.BesselHitParams:
    return H.BesselHitParams(a.nu, a.c, a.x0)


def cmd_tail(a) -> int:
    p = _params(a)
    recs = []
    for t in parse_grid(a.t_grid):
        tv = H.exact_tail(p, t, fallback_paths=a.fallback_paths, seed=a.seed)
        recs.append(record(p, "tail", {"t": t}, tv.value, tv.trunc_error, tv.terms_used, tv.method))
    _emit(render_records(recs, a.format), a.output)
    return EXIT_OK


def cmd_density(a) -> int:
    p = _params(a)
    recs = []
    for t in parse_grid(a.t_grid):
        val, err = H.density_error(p, t)
        if err > H.CERTIFY_TOL * max(1.0, abs(val)):
            recs.append(record(p, "density", {"t": t}, None, None, None, "unconverged"))
        else:
            recs.append(record(p, "density", {"t": t}, val, err, H.SERIES_TERMS,
                               "ct_series" if p.x0 == 0.0 else "kent_series"))
    _emit(render_records(recs, a.format), a.output)
    return EXIT_OK


def cmd_moments(a) -> int:
    p = _params(a)
    var = H.variance(p)
    recs = [record(p, "mean", {}, H.mean_hitting_time(p)),
            record(p, "variance", {}, var),
            record(p, "central_l2", {}, math.sqrt(var))]
    for q in parse_grid(a.p_grid):
        if q < 2.0:
            raise UsageError("p must be >= 2")
        if float(q).is_integer():
            recs.append(record(p, "moment", {"p": q}, H.exact_moment(p, int(q)), method="cumulants"))
            cm = V.central_moment_truth(p, int(q))
            recs.append(record(p, "central_moment", {"p": q}, cm,
                               method="cumulants" if int(q) % 2 == 0 else "tail_quadrature"))
        me = H.moment_envelope(p, q)
        ce = H.central_moment_envelope(p, q)
        recs.append(record(p, "moment_envelope", {"p": q, "form": me.form}, me.value, method="envelope"))
        recs.append(record(p, "central_moment_envelope", {"p": q, "form": ce.form}, ce.value,
                           method="envelope"))
    _emit(render_records(recs, a.format), a.output)
    return EXIT_OK


def cmd_bounds(a) -> int:
    p = _params(a)
    m = H.mean_hitting_time(p)
    recs = []
    for eta in parse_grid(a.eta_grid):
        if a.side == "right":
            t = (1.0 + eta) * m
            tv = H.exact_tail(p, t)
            recs.append(record(p, "exact_tail", {"eta": eta, "t": t}, tv.value, tv.trunc_error,
                               tv.terms_used, tv.method))
            recs.append(record(p, "right_tail_upper", {"eta": eta, "t": t}, H.right_tail_upper(p, eta)))
            recs.append(record(p, "right_tail_lower", {"eta": eta, "t": t}, H.right_tail_lower(p, eta)))
            recs.append(record(p, "right_tail_lower_refined", {"eta": eta, "t": t},
                               H.right_tail_lower_refined(p, eta)))
            if p.delta >= 12.4:
                recs.append(record(p, "right_tail_lower_highdim", {"eta": eta, "t": t},
                                   H.right_tail_lower_highdim(p, eta)))
            recs.append(record(p, "tail_envelope", {"t": t}, H.tail_envelope(p, t), method="envelope"))
            f, n1, n2 = H.f_envelope(p, t)
            recs.append(record(p, "f_envelope", {"t": t, "n1": n1, "n2": n2}, f, method="envelope"))
        else:
            t = (1.0 - eta) * m
            tv = H.exact_tail(p, t)
            recs.append(record(p, "exact_cdf", {"eta": eta, "t": t}, 1.0 - tv.value, tv.trunc_error,
                               tv.terms_used, tv.method))
            recs.append(record(p, "left_tail_upper", {"eta": eta, "t": t}, H.left_tail_upper(p, eta)))
            recs.append(record(p, "left_tail_upper_kent", {"eta": eta, "t": t},
                               H.left_tail_upper_kent(p, eta)))
            if p.delta > 1.0:
                tl, bl = H.left_tail_lower(p, eta)
                recs.append(record(p, "left_tail_lower", {"eta": eta, "t": tl}, bl))
            ta, ba = H.left_tail_lower_alldelta(p, eta)
            recs.append(record(p, "left_tail_lower_alldelta", {"eta": eta, "t": ta}, ba))
    _emit(render_records(recs, a.format), a.output)
    return EXIT_OK


def cmd_laplace(a) -> int:
    p = _params(a)
    recs = []
    for u in parse_grid(a.u_grid):
        val, err = H.laplace_transform(p, u, with_error=True)
        recs.append(record(p, "laplace", {"u": u}, val, err, H.SERIES_TERMS, "kent_product"))
        if p.delta > 1.0:
            recs.append(record(p, "laplace_lower_bound", {"u": u}, H.laplace_lower_bound(p, u)))
    _emit(render_records(recs, a.format), a.output)
    return EXIT_OK


def cmd_sample(a) -> int:
    cfg = McConfig(n_paths=a.n, seed=a.seed, dt=a.dt, kent_trunc=a.kent_trunc, workers=a.threads)
    if a.method == "kent":
        batch = sample_kent(_params(a), cfg)
    elif a.method == "sde":
        batch = sample_sde(_params(a), cfg)
    else:
        b0 = np.zeros(a.d)
        b0[0] = a.x0
        batch = sample_bm_exit(a.d, b0, ball(a.c), cfg)
    if a.format == "csv":
        if a.output:
            batch.to_csv(a.output)
        else:
            buf = ["path_index,value"] + [f"{i},{float(v):.17g}" for i, v in enumerate(batch.draws)]
            sys.stdout.write("\n".join(buf) + "\n")
    else:
        doc = {"meta": V._jsonable(batch.meta.to_dict()), "draws": [float(v) for v in batch.draws]}
        _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", a.output)
    return EXIT_OK


VERIFY_RELATIONS = ("prop21", "prop31", "thm_tails", "cor_f", "remark_f", "thm_moments",
                    "thm_moments_central", "bm_exit", "samplers")


def cmd_verify(a) -> int:
    rel = a.relation
    if rel == "prop21":
        rep = V.check_right_tail_bounds(V.right_tail_grid(a.grid_preset), workers=a.threads)
    elif rel == "prop31":
        rep = V.check_left_tail_bounds(V.left_tail_grid(a.grid_preset), workers=a.threads)
    elif rel == "bm_exit":
        n = 100_000 if a.grid_preset == "default" else 20_000
        rep = V.check_bm_exit_bounds(cfg=McConfig(n_paths=n, seed=a.seed, workers=a.threads))
    elif rel == "samplers":
        n = 100_000 if a.grid_preset == "default" else 20_000
        rep = V.sampler_agreement(_params(a), McConfig(n_paths=n, seed=a.seed, workers=a.threads))
    else:
        rep = V.fit_envelope_constants(rel, a.grid_preset, workers=a.threads)
    text = rep.to_json() if a.format == "json" else rep.to_csv()
    _emit(text, a.output)
    status = "PASS" if rep.passed else f"FAIL ({len(rep.violations)} violations)"
    print(f"{rep.relation_id}: {status}", file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_VIOLATION


def cmd_zeros(a) -> int:
    if a.n < 1:
        raise UsageError("--n must be >= 1")
    table = zero_table(a.nu, a.n, cache=_cache(a))
    p = H.BesselHitParams(a.nu)
    recs = [record(p, "zero", {"n": i + 1}, z, table.accuracy, None, "certified_bracket")
            for i, z in enumerate(table.zeros)]
    _emit(render_records(recs, a.format), a.output)
    return EXIT_OK


def _cache(a) -> ZeroCache:
    return ZeroCache(a.cache_dir or os.environ.get("BESSELHIT_CACHE_DIR") or default_cache_dir())


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--output", "-o", default=None, help="write to this file instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    common.add_argument("--cache-dir", default=None, help="zero-table cache directory")
    common.add_argument("--seed", type=int, default=0)

    prm = _Parser(add_help=False)
    prm.add_argument("--nu", type=float, required=True)
    prm.add_argument("--c", type=float, default=1.0)
    prm.add_argument("--x0", type=float, default=0.0)

    ap = _Parser(prog="besselhit", description="Hitting times of Bessel processes.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("tail", parents=[common, prm], help="P(tau > t) on a t grid")
    s.add_argument("--t-grid", required=True)
    s.add_argument("--fallback-paths", type=int, default=100_000)
    s.set_defaults(func=cmd_tail)

    s = sub.add_parser("density", parents=[common, prm], help="density of tau on a t grid")
    s.add_argument("--t-grid", required=True)
    s.set_defaults(func=cmd_density)

    s = sub.add_parser("moments", parents=[common, prm], help="mean, variance, moments and envelopes")
    s.add_argument("--p-grid", default="2")
    s.set_defaults(func=cmd_moments)

    s = sub.add_parser("bounds", parents=[common, prm], help="explicit tail bounds on an eta grid")
    s.add_argument("--side", choices=("left", "right"), required=True)
    s.add_argument("--eta-grid", required=True)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("laplace", parents=[common, prm], help="Laplace transform on a u grid")
    s.add_argument("--u-grid", required=True)
    s.set_defaults(func=cmd_laplace)

    s = sub.add_parser("sample", parents=[common, prm], help="Monte Carlo draws")
    s.add_argument("--method", choices=("kent", "sde", "bm-exit"), required=True)
    s.add_argument("--n", type=int, default=10_000)
    s.add_argument("--dt", type=float, default=None)
    s.add_argument("--kent-trunc", type=int, default=None)
    s.add_argument("--d", type=int, default=3, help="dimension for bm-exit (ball of radius c)")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("verify", parents=[common], help="run a verification relation")
    s.add_argument("--relation", choices=VERIFY_RELATIONS, required=True)
    s.add_argument("--grid-preset", choices=tuple(V.GRID_PRESETS), default="default")
    s.add_argument("--nu", type=float, default=0.5, help="parameters for --relation samplers")
    s.add_argument("--c", type=float, default=1.0)
    s.add_argument("--x0", type=float, default=0.0)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("zeros", parents=[common], help="positive zeros of J_nu")
    s.add_argument("--nu", type=float, required=True)
    s.add_argument("--n", type=int, required=True)
    s.set_defaults(func=cmd_zeros)
    return ap


def run(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(list(sys.argv[1:] if argv is None else argv))
    except UsageError as exc:
        print(f"besselhit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        if a.threads < 1:
            raise UsageError("--threads must be >= 1")
        if hasattr(a, "nu") and a.command not in ("zeros",):
            p = H.BesselHitParams(a.nu, a.c, a.x0)
            zero_table(p.nu, CACHE_TERMS, cache=_cache(a))
        return a.func(a)
    except (UsageError, ValueError) as exc:
        print(f"besselhit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())
