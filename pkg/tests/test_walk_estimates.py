import math

import numpy as np
import pytest

from brwrange import gw_sampler as gw
from brwrange import walk_estimates as we


def rng(s=0):
    return np.random.default_rng(s)


def test_green_exact_values():
    assert we.green_exact(2, 0) == 4.0
    assert we.green_exact(3, 1) == pytest.approx(1.0)
    vals = [we.green_exact(2, p) for p in range(10)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_ruin_and_no_return_values():
    assert we.ruin_exact(2, 0) == 1.0
    assert we.ruin_exact(2, 1) == 0.5
    assert we.no_return_exact(2) == 0.25


def test_birth_death_rows():
    for b in (2, 3, 5):
        t = we.birth_death_table(b)
        for row in t.values():
            assert sum(row.values()) == pytest.approx(1.0)
    t = we.birth_death_table(2)
    assert (t[1][2], t[1][0], t[1][1]) == (0.5, 0.25, 0.25)


def test_laplace_closed_form():
    # direct summation of the first-passage law P(H = 2j+1) = C_j / 2^(2j+1)
    s = 0.5
    j = np.arange(0, 400)
    logc = np.array([math.lgamma(2 * k + 1) - math.lgamma(k + 1) - math.lgamma(k + 2) for k in j])
    p = np.exp(logc - (2 * j + 1) * math.log(2))
    direct = float(np.sum(p * np.exp(-s * (2 * j + 2))))
    assert we.hitting_laplace(s) == pytest.approx(direct, rel=1e-10)
    assert we.hitting_laplace(1e-12) == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(ValueError):
        we.hitting_laplace(0.0)


def test_g_sqrt_scan():
    s = np.linspace(1e-6, 1, 20001)
    r = we.hitting_g(s) / np.sqrt(s)
    assert np.all(np.isfinite(r)) and r.max() < 3.0
    # increasing, so the best constant on (0, 1] is g(1)
    assert np.all(np.diff(r) > 0)
    assert r[0] == pytest.approx(math.sqrt(2), rel=1e-2)


def test_biased_bound_arithmetic():
    assert we.biased_tail_bound(2, 10, 0, 100) == pytest.approx(100 / 1023)
    assert we.biased_tail_bound(2, 1, 0, 5) >= 1
    assert we.biased_tail_bound(2, 60, 0, 100) < 1e-15
    with pytest.raises(ValueError):
        we.biased_tail_bound(1.0, 3, 0, 10)


@pytest.mark.parametrize("b,p", [(2, 0), (2, 2), (3, 1)])
def test_green_mc(b, p):
    m, se = we.green_mc(b, p, 20000, rng(b * 10 + p))
    assert abs(m - we.green_exact(b, p)) < 4 * se


def test_green_reverse_is_constant():
    for p in (1, 3):
        m, se = we.green_mc(2, p, 20000, rng(p), reverse=True)
        assert abs(m - 4.0) < 4 * se


def test_ruin_escape_mc():
    out = we.ruin_and_escape(3, 20000, rng(5))
    for est, se, exact in out.values():
        assert abs(est - exact) < 4 * se + 1e-12


def test_birth_death_mc():
    exact, freq, se = we.birth_death_transitions(2, 4000, rng(6))
    mask = exact > 0
    assert np.all(np.abs(freq - exact)[mask] < 4 * se[mask])
    assert np.all(freq[~mask] == 0)


def test_ray_chain_transient():
    k = we.ray_chain_endpoints(2, 500, 400, rng(7))
    # drift -1/4 per ray visit for b = 2
    assert k.mean() < -80 and np.all(k < 0)


def test_laplace_mc():
    m, se = we.laplace_mc(0.5, 50000, rng(8))
    assert abs(m - float(we.hitting_laplace(0.5))) < 4 * se


def test_gw_revisit_below_green():
    mu = gw.geometric()
    for p in (1, 3):
        m, se = we.gw_revisit_probability(mu, 2, p, 4000, rng(p))
        assert m <= we.green_exact(2, p) + 3 * se


def test_biased_tail_small():
    p, se, bound = we.biased_tail_check(2, 2.0, 6, 200, 300, 5000, rng(9), depth=50)
    assert p <= bound


def test_ipgw_levels_monotone():
    mu = gw.geometric()
    e = we.estimate_c_ipgw(mu, 2, 8, 3000, 11)
    prof = np.array(e.extra["c_by_level"])
    assert np.all(np.diff(prof) <= 0)
    assert 0 < e.c <= 1 and e.extra["drift"] >= 0


def test_ipgw_reproducible_and_split():
    mu = gw.geometric()
    a, _ = we.ipgw_first_hits(mu, 2, 10, 200, 3)
    b1, _ = we.ipgw_first_hits(mu, 2, 10, 120, 3)
    b2, _ = we.ipgw_first_hits(mu, 2, 10, 80, 3, start=120)
    assert np.array_equal(a, np.concatenate([b1, b2]))


def test_ipgw_level0_probability():
    # the subtree of the point is a GW tree with every child one step from o,
    # so P(no hit at level 0) >= P(point is a leaf) = 1/2 for Geometric(1/2)
    mu = gw.geometric()
    lev, _ = we.ipgw_first_hits(mu, 2, 0, 20000, 4)
    ok = (lev != 0).mean()
    assert ok > 0.5


def test_lln_small():
    mu = gw.geometric()
    e = we.estimate_c_lln(mu, 2, 500, 20, 1)
    assert 0 < e.c <= 1
    assert e.extra["median_uniform_deviation"] >= 0
