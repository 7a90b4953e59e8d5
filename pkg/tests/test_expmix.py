import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from besselhit import expmix as E
from besselhit.expmix import ExpMixModel
from besselhit.mc import clopper_pearson


def rng(seed=0):
    return np.random.default_rng(seed)


weights_st = st.lists(st.floats(min_value=0.0, max_value=5.0), min_size=1, max_size=8).map(
    lambda w: tuple(sorted(w, reverse=True)))
alpha_st = st.floats(min_value=0.0, max_value=0.95)


def profiles(k=30):
    n = np.arange(1, k + 1, dtype=float)
    return {"geometric": tuple(0.5 ** (n - 1)), "inv_sq": tuple(1 / n**2), "flat": (1.0,) * 5}


def test_model_validation():
    with pytest.raises(ValueError):
        ExpMixModel(1.0, (1.0,))
    with pytest.raises(ValueError):
        ExpMixModel(0.0, (1.0, 2.0))
    with pytest.raises(ValueError):
        ExpMixModel(0.0, (1.0,), tail_sum=1.0, tail_sum_sq=2.0)
    with pytest.raises(ValueError):
        ExpMixModel(0.0, (0.0,), tail_sum=1.0)
    m = ExpMixModel(0.3, (2.0, 1.0), 0.5, 0.1)
    assert ExpMixModel.from_json(m.to_json()) == m


@pytest.mark.parametrize("alpha, a, expected", [
    (0.0, (1, 0.5, 0.25), 1.75),
    (0.5, (1, 1), 1.0),
    (0.0, (), 0.0),
])
def test_mean_examples(alpha, a, expected):
    assert E.mean(ExpMixModel(alpha, a)) == pytest.approx(expected)


@pytest.mark.parametrize("alpha, a, expected", [
    (0.0, (4, 3), 5.0),
    (0.5, (2,), math.sqrt(3)),
    (0.9, (1, 1, 1), math.sqrt(0.19 * 3)),
])
def test_central_l2_examples(alpha, a, expected):
    assert E.central_l2(ExpMixModel(alpha, a)) == pytest.approx(expected)


def test_central_envelope_examples():
    assert E.central_moment_envelope(ExpMixModel(0.0, (1.0,)), 2).value == pytest.approx(2 + math.sqrt(2))
    with pytest.raises(ValueError):
        E.central_moment_envelope(ExpMixModel(0.0, (1.0,)), 1.5)


def test_moment_envelope_examples():
    assert E.moment_envelope(ExpMixModel(0.0, (1.0,)), 3).value == pytest.approx(4.0)
    assert E.exact_moment(ExpMixModel(0.0, (1.0,)), 3) == pytest.approx(6 ** (1 / 3))
    for k in (1, 4, 16, 64):
        m = ExpMixModel(0.0, (1.0,) * k)
        env = E.moment_envelope(m, 2).value
        # alpha = 0 keeps only the first geometric term
        assert env == pytest.approx(2 + k)
        assert E.exact_moment(m, 2) == pytest.approx(math.sqrt(k * k + k))
        assert env / E.exact_moment(m, 2) < 1 + 3 / k
    assert E.moment_envelope(ExpMixModel(0.4, (0.0, 0.0)), 3).value == 0.0
    with pytest.raises(ValueError):
        E.moment_envelope(ExpMixModel(0.0, (1.0,)), 1.0)


def test_sigma_envelope_examples():
    assert E.sigma_moment_envelope(ExpMixModel(0.3, (1.0,)), 5).value == pytest.approx(5.0)
    assert E.sigma_moment_envelope(ExpMixModel(0.5, (2, 1, 1)), 2).value == pytest.approx(5.0)
    m = ExpMixModel(0.0, (1, 1))
    assert E.sigma_moment_envelope(m, 2).value == pytest.approx(3.0)
    assert E.exact_moment(m, 2) == pytest.approx(math.sqrt(6))


def test_p_n_examples():
    assert E.p_n_of_t(ExpMixModel(0.0, (1, 1)), 3.0, 1) == pytest.approx(2.0)
    assert E.p_n_of_t(ExpMixModel(0.5, (2, 1)), 4.0, 1) == pytest.approx(1.75)
    assert E.p_n_of_t(ExpMixModel(0.5, (2, 0)), 4.0, 2) == math.inf
    assert E.p_n_of_t(ExpMixModel(0.5, (2, 1)), 4.0, 3) == math.inf


def test_tail_envelope_sum_examples():
    m = ExpMixModel(0.5, (1, 1))
    assert E.tail_envelope_sum(m, 4.0) == pytest.approx(0.5 * (math.exp(-3.5) + 0.5 * math.exp(-4)))
    assert E.tail_envelope_sum(m, 4.0, beta=1e6) == 0.0
    with pytest.raises(ValueError):
        E.tail_envelope_sum(m, 1.0)


def test_sample_examples():
    assert np.all(E.sample(ExpMixModel(0.2, (0.0, 0.0)), rng(), 100) == 0.0)
    x = E.sample(ExpMixModel(0.0, (1.0,)), rng(1), 1_000_000)
    assert abs(x.mean() - 1.0) < 0.004
    m = ExpMixModel(0.5, (1.0, 0.5))
    y = E.sample(m, rng(2), 200_000)
    assert abs(y.mean() - 0.75) < 3 * y.std() / math.sqrt(y.size)
    a = E.sample(m, rng(5), 1000)
    b = E.sample(m, rng(5), 1000)
    np.testing.assert_array_equal(a, b)


def test_sample_remainder_shift():
    m = ExpMixModel(0.25, (1.0,), tail_sum=0.4, tail_sum_sq=0.1)
    y = E.sample(m, rng(3), 400_000)
    assert abs(y.mean() - E.mean(m)) < 4 * y.std() / math.sqrt(y.size)
    assert y.min() >= 0.75 * 0.4 - 1e-15


def test_brute_force_examples():
    one = ExpMixModel(0.0, (1.0,))
    b2 = E.brute_force_moment(one, 2, 400_000, rng(4))
    assert abs(b2.value - math.sqrt(2)) < 4 * b2.stderr
    b4 = E.brute_force_moment(one, 4, 400_000, rng(5))
    assert abs(b4.value - 24 ** 0.25) < 4 * b4.stderr
    m = ExpMixModel(0.9, (1, 1, 1))
    l2 = math.sqrt(E.central_l2(m) ** 2 + E.mean(m) ** 2)
    b = E.brute_force_moment(m, 2, 400_000, rng(6))
    assert abs(b.value - l2) < 4 * b.stderr
    with pytest.raises(ValueError):
        E.brute_force_moment(one, 2, 100, rng())


def test_central_brute_vs_exact():
    m = ExpMixModel(0.5, (1.0, 0.5, 0.25))
    b = E.brute_force_central_moment(m, 4, 1_000_000, rng(7))
    ex = E.exact_central_moment(m, 4)
    assert abs(b.value - ex) < 5 * b.stderr
    ratio = E.central_moment_envelope(m, 4).value / ex
    assert 1.0 < ratio < 10.0


@given(alpha_st, weights_st)
def test_mean_and_l2_against_cumulants(alpha, w):
    m = ExpMixModel(alpha, w)
    assert E.exact_moment(m, 1) == pytest.approx(E.mean(m), rel=1e-12, abs=1e-300)
    assert E.exact_moment(m, 2) ** 2 == pytest.approx(E.central_l2(m) ** 2 + E.mean(m) ** 2, rel=1e-10, abs=1e-300)
    assert E.exact_central_moment(m, 2) == pytest.approx(E.central_l2(m), rel=1e-10, abs=1e-300)


@given(alpha_st, weights_st)
def test_envelopes_monotone_in_p(alpha, w):
    m = ExpMixModel(alpha, w)
    ps = [2, 2.5, 3, 4, 6, 8, 12]
    for fn in (E.moment_envelope, E.central_moment_envelope, E.sigma_moment_envelope):
        v = [fn(m, p).value for p in ps]
        assert all(b >= a * (1 - 1e-12) for a, b in zip(v, v[1:]))
    exact = [E.exact_moment(m, p) for p in (2, 3, 4, 6)]
    assert all(b >= a * (1 - 1e-9) for a, b in zip(exact, exact[1:]))


@given(alpha_st, weights_st, st.floats(min_value=2.0, max_value=20.0))
def test_tail_envelope_sum_bounded(alpha, w, mult):
    m = ExpMixModel(alpha, w)
    if E.mean(m) == 0.0:
        return
    v = E.tail_envelope_sum(m, mult * E.mean(m))
    assert 0.0 <= v <= 1.0 + 1e-15
    assert E.tail_envelope_sum(m, 2 * mult * E.mean(m)) <= v + 1e-15


def test_envelope_tightness_band():
    # exact oracle in place of sampling; the band must be global and the central
    # one may widen like C^p
    ratios, central = [], {}
    for alpha in (0.0, 0.3, 0.7, 0.95):
        for w in profiles().values():
            m = ExpMixModel(alpha, w)
            for p in (2, 3, 4, 6, 8):
                ratios.append(E.moment_envelope(m, p).value / E.exact_moment(m, p))
                if p % 2 == 0:
                    r = E.central_moment_envelope(m, p).value / E.exact_central_moment(m, p)
                    central.setdefault(p, []).append(r)
    c_star = max(max(ratios), 1 / min(ratios))
    assert 1.0 <= min(ratios) and c_star < 8.0
    widths = [max(v) / min(v) for v in central.values()]
    assert all(w < 8.0 ** p for w, p in zip(widths, central))
    assert all(min(v) >= 1.0 for v in central.values())


def test_sigma_tail_markov():
    # P(sigma >= gamma (p a1 + rest)) <= e^{-p} with gamma = e * max ||sigma||_p / envelope
    n = 200_000
    for alpha in (0.0, 0.5, 0.9):
        m = ExpMixModel(alpha, profiles()["geometric"])
        x = E.sample_sigma(m, rng(11), n)
        fit = []
        for p in (2, 4, 6):
            val, _ = E._lp_norm(x, p)
            fit.append(val / E.sigma_moment_envelope(m, p).value)
        gamma = math.e * max(fit)
        for p in (2, 4, 6):
            k = int(np.count_nonzero(x >= gamma * E.sigma_moment_envelope(m, p).value))
            lo, _ = clopper_pearson(k, n, 0.99)
            assert lo <= math.exp(-p)


def test_p_n_sandwich_with_sampler():
    # fitted scale factors: P(S >= g t) against the envelope sum on [2 mean, 30 mean]
    m = ExpMixModel(0.3, profiles()["inv_sq"])
    x = E.sample(m, rng(12), 400_000)
    mu = E.mean(m)
    ts = np.linspace(2 * mu, 6 * mu, 9)
    env = np.array([E.tail_envelope_sum(m, t) for t in ts])
    emp_hi = np.array([np.mean(x >= 0.5 * t) for t in ts])
    emp_lo = np.array([np.mean(x >= 2.0 * t) for t in ts])
    assert np.all(emp_hi >= env / 20)
    assert np.all(emp_lo <= 20 * env)
