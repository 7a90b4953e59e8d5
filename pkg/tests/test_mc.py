import json
import math

import numpy as np
import pytest

from besselhit import hitting as H
from besselhit.hitting import BesselHitParams as P
from besselhit.mc import (
    McConfig,
    SampleBatch,
    BatchMeta,
    ball,
    clopper_pearson,
    cube,
    default_kent_trunc,
    ellipsoid,
    empirical_cdf,
    empirical_tail,
    sample_bm_exit,
    sample_kent,
    sample_sde,
)


def test_config_validation():
    for bad in ({"n_paths": 0}, {"dt": 0.0}, {"dt": -1.0}, {"kent_trunc": 0}, {"workers": 0},
                {"scheme": "milstein"}, {"seed": -1}):
        with pytest.raises(ValueError):
            McConfig(**bad)


def test_kent_mean_and_variance():
    p = P(0.0)
    b = sample_kent(p, McConfig(n_paths=100_000, seed=1))
    assert abs(b.mean() - 0.5) < 4 * b.stderr()
    assert abs(b.var() - 0.125) < 4 * b.var_stderr()
    assert b.meta.bias_bound < 1e-3 * 0.5
    assert np.all(b.draws >= 0)


def test_kent_atom_mass():
    # with x0 near c every factor is zero with probability alpha
    p = P.from_alpha(0.0, 0.9)
    N = 5
    b = sample_kent(p, McConfig(n_paths=200_000, seed=2, kent_trunc=N))
    shift = float(b.draws.min())
    k = int(np.count_nonzero(b.draws <= shift + 1e-15))
    lo, hi = clopper_pearson(k, b.n, 0.999)
    assert lo <= 0.9**N <= hi


def test_default_kent_trunc():
    for p in (P(0.0), P.from_alpha(3.0, 0.7)):
        N = default_kent_trunc(p)
        model = H.to_expmix(p, N)
        assert (1 - p.alpha) * model.tail_sum < 1e-3 * H.mean_hitting_time(p)


@pytest.mark.parametrize("workers", [1, 3])
def test_determinism(workers):
    p = P.from_alpha(0.5, 0.3)
    cfg = McConfig(n_paths=20_000, seed=5, workers=workers)
    a = sample_kent(p, cfg).draws
    b = sample_kent(p, McConfig(n_paths=20_000, seed=5, workers=1)).draws
    np.testing.assert_array_equal(a, b)
    s1 = sample_sde(p, McConfig(n_paths=3000, seed=6, workers=workers)).draws
    s2 = sample_sde(p, McConfig(n_paths=3000, seed=6)).draws
    np.testing.assert_array_equal(s1, s2)


def test_sde_mean_and_guard():
    p = P.from_delta(0.5)
    b = sample_sde(p, McConfig(n_paths=20_000, seed=3))
    assert np.all(np.isfinite(b.draws))
    assert b.meta.n_censored == 0
    m = H.mean_hitting_time(p)
    assert abs(b.mean() - m) < 4 * b.stderr() + 3 * math.sqrt(b.meta.dt)
    # the plain Euler variant with the |Z| guard also stays finite
    e = sample_sde(p, McConfig(n_paths=2000, seed=3, scheme="euler"))
    assert np.all(np.isfinite(e.draws))


def test_sde_warning_and_censoring():
    p = P(0.0)
    with pytest.warns(RuntimeWarning, match="discretisation bias"):
        sample_sde(p, McConfig(n_paths=200, seed=1, dt=0.05))
    b = sample_sde(p, McConfig(n_paths=500, seed=1, max_steps_factor=0.2))
    assert b.meta.n_censored > 0
    assert b.n == 500


def test_bm_exit_mean():
    b = sample_bm_exit(2, np.zeros(2), ball(1.0), McConfig(n_paths=20_000, seed=4))
    assert abs(b.mean() - 0.5) < 4 * b.stderr()
    with pytest.raises(ValueError):
        sample_bm_exit(2, np.array([1.0, 0.0]), ball(1.0), McConfig(n_paths=10))


def test_bm_exit_sandwich_region():
    # r = 1 <= ellipse <= R = 2: tails between the two ball laws
    cfg = McConfig(n_paths=20_000, seed=9)
    b = sample_bm_exit(2, np.zeros(2), ellipsoid([1.0, 2.0]), cfg)
    inner, outer = P(0.0, 1.0), P(0.0, 2.0)
    level = 1 - 0.01 / 6
    for t in (0.2, 0.5, 1.0, 1.5, 2.5, 4.0):
        _, lo, hi = empirical_tail(b, t, level)
        assert hi >= H.exact_tail(inner, t).value
        assert lo <= H.exact_tail(outer, t).value


def test_cube_region():
    r = cube(1.0, 3)
    assert r.R == pytest.approx(math.sqrt(3))
    b = sample_bm_exit(3, np.zeros(3), r, McConfig(n_paths=4000, seed=2))
    assert 1 / 3 - 0.05 < b.mean() < 1.0


def test_empirical_tail_examples():
    meta = BatchMeta(McConfig(), "synthetic")
    b = SampleBatch(np.full(100, 2.0), meta)
    est, lo, hi = empirical_tail(b, 1.0)
    assert est == 1.0 and lo < 1.0 and hi == 1.0
    assert empirical_tail(b, 0.0)[0] == 1.0
    x = np.random.default_rng(0).standard_exponential(100_000)
    est, lo, hi = empirical_tail(SampleBatch(x, meta), 1.0)
    assert lo <= math.exp(-1) <= hi
    c, clo, chi = empirical_cdf(SampleBatch(x, meta), 1.0)
    assert c == pytest.approx(1 - est) and clo <= 1 - math.exp(-1) <= chi
    ts = np.linspace(0, 5, 30)
    tails = [empirical_tail(SampleBatch(x, meta), t)[0] for t in ts]
    assert all(b <= a for a, b in zip(tails, tails[1:]))


def test_clopper_pearson_edges():
    lo, hi = clopper_pearson(0, 50)
    assert lo == 0.0 and 0 < hi < 0.2
    lo, hi = clopper_pearson(50, 50)
    assert hi == 1.0 and lo > 0.8


def test_batch_export(tmp_path):
    b = sample_kent(P(0.0), McConfig(n_paths=5, seed=1))
    path = tmp_path / "draws.csv"
    b.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "path_index,value"
    assert [float(ln.split(",")[1]) for ln in lines[1:]] == list(b.draws)
    meta = json.loads((tmp_path / "draws.csv.meta.json").read_text())
    assert meta["config"]["seed"] == 1 and meta["method"] == "kent"
    with pytest.raises(ValueError):
        SampleBatch(np.array([-1.0]), b.meta)
    with pytest.raises(ValueError):
        b.draws[0] = 1.0
