import math

import numpy as np
import pytest

from brwrange import brw, metrics as M, snakes as S
from brwrange import gw_sampler as gw
from brwrange._stats import ks_2samp
from brwrange.tree_core import OrderedTree, single_node


def rng(s=0):
    return np.random.default_rng(s)


def random_tree(n, seed):
    return gw.sample_gw_conditioned(gw.geometric(), n, rng(seed))


def test_spatial_contour_example():
    t = OrderedTree([1, 0])
    sn = S.spatial_contour(t, labels=np.array([0, 1]))
    # contour times 0..2n, parked at the root after the last return
    assert list(sn.lifetime) == [0, 1, 0, 0, 0]
    assert list(sn.endpoint) == [0, 1, 0, 0, 0]
    assert list(sn.path(1)) == [0, 1]
    assert sn.endpoint_at(0.5) == 0.5 and sn.zeta == 4


@pytest.mark.parametrize("seed", range(6))
def test_contour_identity_free_and_contracted(seed):
    t = random_tree(40 + 10 * seed, seed)
    r = rng(100 + seed)
    hb = brw.sample_heights(t, False, r)
    free = brw.free_range(hb, r)
    ci = S.contour_identity_check(hb, free)
    assert ci.max_defect == 0
    assert S.vertex_identity_check(hb, free) == 0
    for b in (2, 3):
        cc = S.contour_identity_check(hb, brw.contract_to_b(free, b))
        assert cc.violations == 0 and cc.odd_gaps == 0


def test_d_cont_integer_times_match_trie():
    t = random_tree(30, 1)
    r = rng(2)
    hb = brw.sample_heights(t, False, r)
    trie = brw.b_range(hb, 2, r)
    pos = S.contour_positions(t, trie)
    for k, l in ((0, 5), (3, 17), (10, 10), (0, 60)):
        assert S.d_cont(t, trie, k, l) == brw._node_distance(trie.node_parent, trie.node_depth, pos[k], pos[l])
    for s, u in ((0.3, 7.6), (12.25, 40.5)):
        assert S.d_cont(t, trie, s, u) == pytest.approx(S.d_cont(t, trie, u, s))
        assert S.d_cont(t, trie, s, s) == 0
    # modulus grows with the window and hits the diameter at the full contour
    q = [S.contour_modulus(t, trie, e) for e in (0.5, 2, 8, 60)]
    assert all(a <= b for a, b in zip(q, q[1:]))


def test_single_node_reports():
    t = single_node()
    hb = brw.sample_heights(t, False, rng(0))
    trie = brw.free_range(hb, rng(0))
    rep = S.measure_comparisons(t, trie)
    assert rep.ok() and rep.hausdorff == 0
    for c in (0.25, 0.5, 1.0):
        lo = S.loibach_check(t, trie, c=c)
        assert lo.alpha == pytest.approx(abs(1 - 2 * c))
        assert lo.ok()
    with pytest.raises(ValueError):
        S.loibach_check(t, trie, c=0)


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_small_measure_bounds_exact(n):
    for seed in range(4):
        t = random_tree(n, seed)
        r = rng(seed)
        hb = brw.sample_heights(t, False, r)
        for trie in (brw.free_range(hb, r), brw.b_range(hb, 2, r)):
            rep = S.measure_comparisons(t, trie)
            assert rep.exact and rep.ok()
            lo = S.loibach_check(t, trie)
            assert lo.ok()


def test_large_tree_coupling_bounds():
    t = random_tree(1000, 5)
    r = rng(5)
    hb = brw.sample_heights(t, False, r)
    trie = brw.b_range(hb, 2, r)
    rep = S.measure_comparisons(t, trie)
    assert not rep.exact and rep.ok()
    assert S.loibach_check(t, trie).ok()


# continuum --------------------------------------------------------------------

def test_excursion_shape():
    e = S.brownian_excursion(500, rng(1))
    assert e[0] == 0 and e[-1] == 0 and np.all(e[1:-1] > 0)
    with pytest.raises(ValueError):
        S.brownian_excursion(1, rng(1))


def test_excursion_reversal_and_mean():
    r = rng(2)
    m = 1000
    E = np.array([S.brownian_excursion(m, r) for _ in range(1500)])
    assert ks_2samp(E[:, m // 4], E[:, 3 * m // 4])[1] > 1e-3
    # e(1/2) is chi-3 with scale 1/2, mean sqrt(2/pi); the grid minimum
    # biases the discrete excursion down by about 0.58/sqrt(m)
    mu, se = E[:, m // 2].mean(), E[:, m // 2].std() / math.sqrt(len(E))
    assert abs(mu - math.sqrt(2 / math.pi)) < 4 * se + 0.6 / math.sqrt(m)


def test_snake_covariance_given_h():
    r = rng(3)
    h = math.sqrt(2) * S.brownian_excursion(40, r)
    dr = 1e-3
    sn0 = S.brownian_snake_given_h(h, r, dr=dr)
    hq = sn0.h_index * dr
    pairs = [(5, 30), (10, 12), (0, 20)]
    sq = {p: [] for p in pairs}
    for _ in range(3000):
        sn = S.brownian_snake_given_h(h, r, dr=dr, store_paths=False)
        for i, j in pairs:
            sq[(i, j)].append((sn.endpoint[i] - sn.endpoint[j]) ** 2)
    for (i, j), v in sq.items():
        target = hq[i] + hq[j] - 2 * hq[min(i, j):max(i, j) + 1].min()
        v = np.array(v)
        assert abs(v.mean() - target) < 4 * v.std() / math.sqrt(v.size) + 1e-12
    assert sn0.endpoint[0] == 0


def test_snake_paths_property_and_metric():
    r = rng(4)
    sn = S.brownian_snake_given_h(math.sqrt(2) * S.brownian_excursion(80, r), r)
    assert M.snake_property_ok(sn.paths, sn.h_index)
    d = M.snake_metric_grid(sn)
    assert d.validate(triangle=True)
    assert M.four_point_check(d).ok


def test_reflected_cactus():
    r = rng(5)
    sn = S.brownian_snake_given_h(math.sqrt(2) * S.brownian_excursion(100, r), r, dr=1e-3, reflected=True)
    d = S.cactus_metric(sn)
    assert np.all(sn.endpoint >= 0)
    assert np.allclose(d.d[0], sn.endpoint)
    assert M.four_point_check(d).ok


def test_rescale_identity():
    r = rng(6)
    sn = S.brownian_snake_given_h(math.sqrt(2) * S.brownian_excursion(50, r), r, dr=1e-3)
    d = M.snake_metric_grid(sn).d
    for alpha, a in ((2.0, 3.0), (0.5, 0.1)):
        assert np.allclose(M.snake_metric_grid(S.rescale_snake(sn, alpha, a)).d, a * d)


def test_path_modulus_bounded_by_endpoint_modulus():
    # discrete snake: paths extended by their endpoint beyond the lifetime
    for seed in range(4):
        t = random_tree(60, seed)
        r = rng(seed)
        hb = brw.sample_heights(t, False, r)
        sn = S.spatial_contour(t, hb)
        K = sn.vertices.size
        J = int(sn.lifetime.max())
        W = np.zeros((K, J + 1))
        for k in range(K):
            p = sn.path(k)
            W[k, :p.size] = p
            W[k, p.size:] = p[-1]
        for lag in (1, 3, 10):
            ww = np.abs(W[lag:] - W[:-lag]).max()
            wh = max(np.abs(sn.endpoint[l:] - sn.endpoint[:-l]).max() for l in range(1, lag + 1))
            assert ww <= 2 * wh


def test_grid_path_modulus_helper():
    r = rng(7)
    sn = S.brownian_snake_given_h(math.sqrt(2) * S.brownian_excursion(60, r), r, dr=1 / 60)
    ww, we = S.path_modulus(sn, 0.1)
    assert ww >= 0 and we >= 0 and ww >= we - 1e-12


def test_lipschitz_lifetime_path_increments():
    # tent lifetime: E sup_r |W_s - W_s'|^2 scales like |s - s'|
    m = 200
    s = np.linspace(0, 1, m + 1)
    h = np.minimum(s, 1 - s)
    r = rng(8)
    lags = (2, 8, 32)
    acc = {l: [] for l in lags}
    for _ in range(300):
        sn = S.brownian_snake_given_h(h, r, dr=1 / (2 * m))
        for l in lags:
            acc[l].append((np.abs(sn.paths[l:] - sn.paths[:-l]).max(axis=1) ** 2).mean())
    ratio = [np.mean(acc[l]) / (l / m) for l in lags]
    assert max(ratio) / min(ratio) < 4


def test_grid_snake_csv():
    sn = S.brownian_snake_given_h(np.array([0, 0.5, 0]), rng(0), dr=0.25)
    lines = sn.to_csv().strip().splitlines()
    assert lines[0] == "s,h,w_hat" and len(lines) == 4
