import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import integrate

from besselhit import expmix as E
from besselhit import hitting as H
from besselhit.hitting import BesselHitParams as P
from besselhit.mc import McConfig, sample_kent
from besselhit.specfun import zeros

from helpers import density_onset, series_tail, tail_integral

nu_st = st.floats(min_value=-0.9, max_value=20.0)
alpha_st = st.floats(min_value=0.0, max_value=0.9)


def test_params_validation():
    for bad in [(-1.0, 1.0, 0.0), (0.0, 0.0, 0.0), (0.0, 1.0, 1.0), (0.0, 1.0, -0.1), (math.nan, 1.0, 0.0)]:
        with pytest.raises(ValueError):
            P(*bad)
    p = P.from_alpha(0.5, 0.36, c=2.0)
    assert p.x0 == pytest.approx(1.2) and p.alpha == pytest.approx(0.36) and p.delta == 3.0
    assert P.from_delta(3.0).nu == 0.5


def test_mean_examples():
    assert H.mean_hitting_time(P(0.0)) == 0.5
    assert H.mean_hitting_time(P(0.5)) == pytest.approx(1 / 3)
    assert H.mean_hitting_time(P(0.0, 1.0, 1 - 1e-12)) == pytest.approx(0.0, abs=1e-11)


def test_closed_sums():
    assert H.sum_inv_j2(0.0) == 0.25
    assert H.sum_inv_j2(-0.5) == 0.5
    n = np.arange(1, 200_001)
    assert math.fsum(1 / ((n - 0.5) ** 2 * math.pi**2)) == pytest.approx(0.5, abs=1e-6)
    assert H.sum_inv_j4(0.0) == 0.03125


def test_variance_examples():
    assert H.variance(P(0.0)) == pytest.approx(1 / 8)
    assert H.variance(P(0.0, 2.0)) == pytest.approx(2.0)
    assert H.variance(P(0.0, 1.0, 1 - 1e-9)) == pytest.approx(0.0, abs=1e-8)
    b = sample_kent(P(0.0, 2.0), McConfig(n_paths=100_000, seed=3))
    assert abs(b.var() - 2.0) < 4 * b.var_stderr()


def test_to_expmix():
    m = H.to_expmix(P(-0.5), 2)
    np.testing.assert_allclose(m.weights, [8 / math.pi**2, 8 / (9 * math.pi**2)], rtol=1e-12)
    for p in (P(0.0), P.from_alpha(1.0, 0.4, 1.5), P(20.0)):
        m = H.to_expmix(p, 50)
        assert E.mean(m) == pytest.approx(H.mean_hitting_time(p), rel=1e-12)
        assert E.central_l2(m) == pytest.approx(math.sqrt(H.variance(p)), rel=1e-6)


def test_exact_tail_examples():
    assert H.exact_tail(P(0.3), 0.0).value == 1.0
    # two-sided exit of BM from (-1, 1): sum over odd modes
    t = 1.0
    n = np.arange(1, 60)
    lam = ((n - 0.5) * math.pi) ** 2 / 2
    bm = np.sum(4 * (-1) ** (n + 1) / ((2 * n - 1) * math.pi) * np.exp(-lam * t))
    tv = H.exact_tail(P(-0.5), t)
    assert tv.method == "ct_series"
    assert tv.value == pytest.approx(bm, abs=1e-12)
    assert tv.trunc_error < 1e-6


@pytest.mark.parametrize("params", [P(0.0), P(-0.5), P.from_alpha(0.5, 0.3), P.from_alpha(3.0, 0.7), P(10.0)])
def test_tail_integrates_to_mean(params):
    m = H.mean_hitting_time(params)
    val, head_err = tail_integral(params)
    assert head_err < 1e-6
    assert val == pytest.approx(m, abs=1e-4)


def test_small_t_fallback():
    p = P(0.0)
    with pytest.raises(H.UnconvergedError):
        H.exact_tail(p, 1e-6, fallback=False)
    tv = H.exact_tail(p, 1e-6, fallback_paths=20_000)
    assert tv.method == "monte_carlo_fallback"
    assert tv.value == 1.0 and tv.value - tv.trunc_error < 1.0


@given(nu_st, alpha_st, st.floats(min_value=0.05, max_value=5.0))
def test_tail_value_contract(nu, alpha, tt):
    p = P.from_alpha(nu, alpha)
    t = tt * H.mean_hitting_time(p)
    try:
        tv = series_tail(p, t)
    except H.UnconvergedError:
        # large nu at small t: cancellation in double precision, covered by the fallback path
        assume(False)
    assert tv.value - tv.trunc_error >= -1e-12
    assert tv.value + tv.trunc_error <= 1 + 1e-12
    t2 = series_tail(p, 1.3 * t)
    assert t2.value <= tv.value + tv.trunc_error + t2.trunc_error


@given(nu_st, alpha_st, st.floats(min_value=0.3, max_value=4.0), st.floats(min_value=0.5, max_value=3.0))
def test_scaling_law(nu, alpha, tt, c):
    p1 = P.from_alpha(nu, alpha)
    pc = P.from_alpha(nu, alpha, c=c)
    t = tt * H.mean_hitting_time(p1)
    a = series_tail(pc, t * c * c).value
    b = series_tail(p1, t).value
    assert a == pytest.approx(b, abs=1e-10)


@pytest.mark.parametrize("params", [P(0.0), P.from_alpha(0.5, 0.5), P.from_alpha(2.0, 0.2)])
def test_density(params):
    m = H.mean_hitting_time(params)
    ts = np.linspace(0.15 * m, 8 * m, 60)
    d = np.array([H.density(params, t) for t in ts])
    h = 1e-5 * m
    fd = np.array([(H.exact_tail(params, t - h).value - H.exact_tail(params, t + h).value) / (2 * h) for t in ts])
    np.testing.assert_allclose(fd, d, rtol=1e-3, atol=1e-9)
    # unique maximum: differences change sign once
    sgn = np.sign(np.diff(d))
    assert np.count_nonzero(sgn[1:] != sgn[:-1]) <= 1
    t0 = density_onset(params)
    mass, _ = integrate.quad(lambda t: H.density(params, t), t0, 80 * m, limit=400, points=[m])
    # mass below t0 is at most the martingale left-tail bound there
    head = H.left_tail_upper(params, 1 - t0 / m)
    assert head < 1e-6
    assert mass == pytest.approx(1.0, abs=1e-4 + head)


def test_density_unconverged():
    with pytest.raises(H.UnconvergedError):
        H.density(P(0.0), 1e-4)
    with pytest.raises(ValueError):
        H.density(P(0.0), 0.0)


def test_laplace():
    p = P(0.5)
    assert H.laplace_transform(p, 0.0) == 1.0
    v = H.laplace_transform(p, 1.0)
    assert v >= H.laplace_lower_bound(p, 1.0)
    assert H.laplace_lower_bound(p, 1.0) == pytest.approx(math.exp(-(math.sqrt(3) - 1)))
    with pytest.raises(ValueError):
        H.laplace_lower_bound(P(-0.5), 1.0)
    # Monte Carlo oracle
    for params in (P(0.0), P.from_alpha(1.0, 0.5)):
        b = sample_kent(params, McConfig(n_paths=100_000, seed=8))
        for u in (0.5, 2.0, 8.0):
            x = np.exp(-u * b.draws)
            val, err = H.laplace_transform(params, u, with_error=True)
            assert err < 1e-6
            assert abs(x.mean() - val) < 4 * x.std() / math.sqrt(x.size) + b.meta.bias_bound * u


@given(nu_st, alpha_st, st.floats(min_value=0.01, max_value=50.0))
def test_laplace_lower_bound_property(nu, alpha, u):
    p = P.from_alpha(nu, alpha)
    if p.delta > 1.0:
        assert H.laplace_transform(p, u) >= H.laplace_lower_bound(p, u) * (1 - 1e-9)


def test_moment_examples():
    e = H.central_moment_envelope(P(-0.5), 2)
    assert e.value == pytest.approx(8 / math.pi**2 + math.sqrt(2) / (0.5 * math.sqrt(1.5)), rel=1e-12)
    assert e.value == pytest.approx(3.1200, abs=1e-4)
    m = H.moment_envelope(P(0.0), 2)
    assert m.value == pytest.approx(2 / zeros(0.0, 1)[0] ** 2 + 1.0)
    assert H.exact_moment(P(0.0), 2) == pytest.approx(math.sqrt(3 / 8))
    assert H.exact_moment(P(0.0), 2) / m.value == pytest.approx(0.455, abs=1e-3)
    with pytest.raises(ValueError):
        H.moment_envelope(P(0.0), 1.9)


def test_moment_envelope_alpha_to_one():
    vals = [H.moment_envelope(P.from_alpha(0.0, 1 - eps), 4).value for eps in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2] > 0
    assert vals[2] < 0.1


def test_moment_regimes():
    assert H.moment_regime(P.from_alpha(0.0, 0.8)) == 1
    assert H.moment_regime(P.from_alpha(3.0, 0.8)) == 2
    assert H.moment_regime(P.from_alpha(0.0, 0.49)) == 3


@pytest.mark.parametrize("params", [P(0.0), P.from_alpha(0.5, 0.3), P.from_alpha(3.0, 0.7)])
def test_exact_moments_vs_quadrature(params):
    for p in (2, 3, 4):
        raw, _ = tail_integral(params, upper_mult=80.0, weight_power=p)
        assert H.exact_moment(params, p) == pytest.approx(raw ** (1 / p), rel=1e-5)


def test_right_tail_examples():
    assert H.right_tail_upper(P(0.0), 1.0) == pytest.approx(math.exp(-1 / 8))
    assert H.right_tail_upper(P(0.0), 1e-12) == pytest.approx(1.0)
    hd = P.from_delta(12.4)
    assert H.right_tail_upper(hd, 2.0) == pytest.approx(math.exp(-12.4 * 4 / 24))
    assert H.right_tail_lower(P(-0.5), 0.0) == pytest.approx(math.exp(-math.pi**2 / 8))
    for nu in (0.0, 3.0):
        p = P(nu)
        assert H.right_tail_lower_refined(p, 0.5) == pytest.approx(H.right_tail_lower(p, 0.5))
    d = 12.4
    expo = (d - 4 + 4 / d) / (8 * (1 - 3 * 2 ** (2 / 3) / (d - 2) ** (2 / 3)) ** 2)
    assert H.right_tail_lower_highdim(hd, 0.0) == pytest.approx(math.exp(-expo))
    with pytest.raises(ValueError):
        H.right_tail_lower_highdim(P.from_delta(12.0), 0.5)


def test_tail_envelope_examples():
    j = zeros(0.0, 1)[0]
    assert H.tail_envelope(P(0.0), 1.0) == pytest.approx(math.exp(-j * j / 2))
    p = P.from_alpha(0.0, 0.5)
    assert H.tail_envelope(p, 1.0) == pytest.approx(0.0630, abs=5e-4)
    for nu in (-0.9, -0.5, 0.0, 3.0, 20.0):
        p = P.from_alpha(nu, 0.5)
        j2 = zeros(nu, 1)[0] ** 2
        t = 600.0 / min(j2, (nu + 2) ** 2)
        env = H.tail_envelope(p, t)
        if j2 < (nu + 2) ** 2:
            assert env / math.exp(-j2 * t / 2) == pytest.approx(0.5, rel=1e-6)
        else:
            # first zero beyond nu + 2: the n = 2 term dominates
            assert env / (0.25 * math.exp(-((nu + 2) ** 2) * t / 2)) == pytest.approx(1.0, rel=1e-6)


def test_f_envelope():
    for nu in (0.0, 3.0):
        p = P.from_alpha(nu, 0.4)
        t = 2.0 / (nu + 2) ** 2
        assert H.n1_index(p, t) == 2
        p0 = P(nu)
        f, _, _ = H.f_envelope(p0, 1.0)
        assert f == pytest.approx(math.exp(-zeros(nu, 1)[0] ** 2 / 2))


def test_left_tail_examples():
    assert H.left_tail_upper(P(0.0), 0.5) == pytest.approx(math.exp(-1 / 8))
    assert H.left_tail_upper(P(0.0), 1 - 1e-9) < 1e-100
    with pytest.raises(ValueError):
        H.left_tail_upper(P(0.0), 1.0)
    t, b = H.left_tail_lower(P(0.0), 0.5)
    assert t == pytest.approx(1.0) and b == pytest.approx(math.exp(-4) / 3)
    with pytest.raises(ValueError):
        H.left_tail_lower(P.from_delta(1.0), 0.5)
    t, b = H.left_tail_lower_alldelta(P.from_delta(0.5), 0.5)
    j = zeros(-0.75, 1)[0]
    assert t == pytest.approx(5.0)
    assert b == pytest.approx(math.exp(-2) / 3 * (1 - math.exp(-j * j * 0.5)))
    assert H.left_tail_lower_alldelta(P(0.0), 1 - 1e-9)[1] < 1e-100


def test_kent_member_beats_martingale_near_minus_one():
    p = P(-0.999)
    for eta in (0.1, 0.5, 0.9):
        assert H.left_tail_upper_kent(p, eta) < H.left_tail_upper(p, eta)
