import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from brwrange import cli, experiments as ex, snakes as S
from brwrange._rng import stream
from brwrange._stats import ks_2samp
from brwrange.tree_core import OrderedTree, contour_process, height_process
from oracles import contour_from_heights, nested_to_offspring

nested = st.recursive(st.just([]), lambda c: st.lists(c, max_size=4), max_leaves=40)


def cfg(name, d=None, seed=0):
    return ex.ExperimentConfig.from_dict(name, d, seed=seed)


@given(nested)
def test_coding_helpers_match_oracles(nest):
    t = OrderedTree(nested_to_offspring(nest))
    H = height_process(t)
    assert ex._offspring_from_heights(H[:-1]).tolist() == t.offspring.tolist()
    assert ex._contour_from_heights(H).tolist() == contour_from_heights(H.tolist())
    assert np.array_equal(ex._contour_from_heights(H), contour_process(t))
    assert ex._coding_defects(t) == 0


def test_config_defaults_and_errors():
    c = cfg("lln")
    assert c.sizes == (5000, 20000, 80000) and c.replicates == 300 and c.b == 2
    assert cfg("lln", {"params": {"ipgw_N": 5}}).params["ipgw_P"] == 30
    assert cfg("lln").digest() == cfg("lln").digest() != cfg("lln", seed=1).digest()
    assert cfg("lln", {"out": "x.csv"}).digest() == cfg("lln").digest()
    assert cfg("convergence", {"mu": {"kind": "stable", "gamma": 1.5}}).gamma == 1.5
    for bad in ({"sizes": [0]}, {"replicates": 0}, {"b": 1}, {"nope": 1}, {"mu": {"kind": "zeta"}},
                {"seed": -1}, {"experiment": "snake-demo"}, {"params": 3}):
        with pytest.raises(ex.ConfigError):
            ex.ExperimentConfig.from_dict("lln", bad)
    with pytest.raises(ex.ConfigError):
        cfg("exact-checks", {"params": {"checks": ["nothing"]}})
    with pytest.raises(ex.ConfigError):
        ex.ExperimentConfig.from_dict("fly", {})


def test_map_replicates_order_and_workers():
    f = lambda i: int(stream(7, i).integers(0, 1000))
    a = ex.map_replicates(f, 37, 1, chunk=5)
    assert a == [f(i) for i in range(37)]
    assert ex.map_replicates(f, 37, 1, chunk=100) == a


def test_section_seeds_distinct():
    s = {ex.section_seed(0, t) for t in ("a", "b", "lln.5000", "lln.20000")}
    assert len(s) == 4 and ex.section_seed(3, "a") == ex.section_seed(3, "a")


def test_report_formats():
    rep = ex.Report("demo", {"version": "0", "seed": 1})
    rep.add("x", 1.5, 0.1, 2.0, "value <= bound", True)
    rep.add("y, quoted", 3, rule="count")
    txt = rep.to_csv()
    lines = txt.splitlines()
    assert lines[0] == "# version: 0" and lines[2] == "experiment,statistic,value,stderr,bound,rule,pass"
    assert lines[3] == "demo,x,1.5,0.1,2.0,value <= bound,true"
    assert lines[4] == 'demo,"y, quoted",3,,,count,'
    nd = [json.loads(x) for x in rep.to_ndjson().splitlines()]
    assert nd[0]["meta"]["seed"] == 1 and nd[1]["pass"] is True and nd[2]["pass"] is None
    assert rep.ok
    rep.add("z", 0.0, passed=False)
    assert not rep.ok and len(rep.asserted()) == 2


def test_empty_exact_checks():
    rep = ex.run(cfg("exact-checks", {"params": {"checks": []}}))
    assert rep.rows == [] and rep.ok


def test_lln_single_vertex():
    rep = ex.run(cfg("lln", {"sizes": [1], "replicates": 3, "params": {"ipgw_P": 0}}))
    assert rep.get("c_hat.n1").value == 1.0


def test_scc_q0_degenerate():
    rep = ex.run(cfg("scc-invariance", {"replicates": 200, "params": {"q": 0, "spine": 5}}))
    assert rep.get("categories").value == 1 and rep.get("window_chi2_p").value == 1.0
    with pytest.raises(ex.ConfigError):
        ex.run(cfg("scc-invariance", {"replicates": 10, "params": {"q": 2, "spine": 6}}))


def test_marginal_s0_degenerate():
    rep = ex.run(cfg("marginal-ks", {"sizes": [200], "replicates": 30,
                                     "params": {"times": [0.0], "covariance": None}}))
    assert [r.passed for r in rep.rows] == [True, True, True]


def test_extrapolate_and_lattice():
    # c + A/sqrt(P): two levels recover c exactly
    c, A = 0.04, 0.3
    assert ex.extrapolate(c + A / math.sqrt(30), c + A / math.sqrt(60), math.sqrt(2)) == pytest.approx(c)
    r = np.random.default_rng(0)
    v = ex.smooth_lattice(np.zeros(1000), 2, r, nonneg=True)
    assert v.min() >= 0 and v.max() <= 1
    w = ex.smooth_lattice(np.full(1000, 4.0), 2, r)
    assert np.all(np.abs(w - 4) <= 1)


def test_limit_marginals_moments():
    H, W = ex.limit_marginals([0.5], 40000, np.random.default_rng(1))
    # sqrt(2) e_(1/2) has mean sqrt(2) sqrt(2/pi) and second moment 3/2
    assert H.mean() == pytest.approx(2 / math.sqrt(math.pi), rel=0.01)
    assert (H ** 2).mean() == pytest.approx(1.5, rel=0.02)
    assert (W ** 2).mean() == pytest.approx(H.mean(), rel=0.03)


def test_tripod_matches_grid_snake():
    r = np.random.default_rng(2)
    m = 20
    h = S.stable_height_excursion_h2(m, r)
    i, j = 6, 14
    exact = ex.tripod_distance(h, i, j, r, size=1500)
    grid = np.empty(1500)
    for k in range(1500):
        sn = S.brownian_snake_given_h(h, r, dr=2.5e-4)
        W, hi = sn.paths, sn.h_index
        mm = hi[i:j + 1].min()
        grid[k] = W[i, hi[i]] + W[j, hi[j]] - 2 * min(W[i, mm:hi[i] + 1].min(), W[j, mm:hi[j] + 1].min())
    assert ks_2samp(exact, grid)[1] > 0.01
    assert np.all(exact >= 0)


def test_snake_demo_rows():
    rep = ex.run(cfg("snake-demo", {"grid": 10}))
    assert rep.get("h.s0").value == 0 and rep.get("w_hat.s0").value == 0
    assert rep.get("four_point_violations").passed


def _write(tmp_path, d):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(d))
    return str(p)


def test_cli_exit_codes(tmp_path, capsys):
    ok = _write(tmp_path, {"params": {"checks": ["prokhorov"]}})
    out = tmp_path / "o.csv"
    assert cli.main(["exact-checks", "--config", ok, "--seed", "5", "--out", str(out)]) == 0
    text = out.read_text()
    assert "# seed: 5" in text and "# config_sha256:" in text and "prokhorov.closed_form.two_diracs" in text
    # an unattainable tolerance makes an asserted row fail
    fail = _write(tmp_path, {"sizes": [50, 100], "replicates": 5, "params": {"ipgw_P": 0, "rel_tol": 0.0}})
    assert cli.main(["lln", "--config", fail, "--format", "ndjson"]) == 1
    line = json.loads(capsys.readouterr().out.splitlines()[0])
    assert line["meta"]["experiment"] == "lln"
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert cli.main(["lln", "--config", str(bad)]) == 2
    assert cli.main(["lln", "--config", _write(tmp_path, {"sizes": [-3]})]) == 2
    assert cli.main(["lln", "--config", ok, "--workers", "0"]) == 2
