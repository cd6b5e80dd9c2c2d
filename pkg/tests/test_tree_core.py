import numpy as np
import pytest
from hypothesis import given, strategies as st

from brwrange.tree_core import (
    CEMETERY, InvalidPath, OrderedTree, PointedTree, contour_process, cycle_rotation,
    height_process, rotate_to_tree, scc_plus, tree_from_lukasiewicz, truncate_pointed,
)
import oracles

nested = st.recursive(st.just([]), lambda kids: st.lists(kids, max_size=4), max_leaves=40)


def tree_of(t):
    return OrderedTree(oracles.nested_to_offspring(t))


CHERRY = OrderedTree([2, 0, 0])


def test_height_examples():
    assert height_process(OrderedTree([0])).tolist() == [0, 0]
    assert height_process(CHERRY).tolist() == [0, 1, 1, 0]
    assert height_process(OrderedTree([1, 2, 0, 0])).tolist() == [0, 1, 2, 2, 0]


def test_contour_examples():
    assert contour_process(OrderedTree([0])).tolist() == [0, 0, 0]
    assert contour_process(CHERRY).tolist() == [0, 1, 0, 1, 0, 0, 0]
    assert contour_process(OrderedTree([1, 1, 0])).tolist() == [0, 1, 2, 1, 0, 0, 0]


def test_lukasiewicz_examples():
    assert tree_from_lukasiewicz([-1]) == OrderedTree([0])
    assert tree_from_lukasiewicz([1, -1, -1]) == CHERRY
    with pytest.raises(InvalidPath):
        tree_from_lukasiewicz([1, 1])
    with pytest.raises(InvalidPath):
        tree_from_lukasiewicz([-1, 1, -1])
    with pytest.raises(InvalidPath):
        OrderedTree([0, 1, 0])


@pytest.mark.parametrize("n", range(1, 7))
def test_exhaustive_small_trees(n):
    trees = oracles.all_trees(n)
    assert len(trees) == oracles.catalan(n - 1)
    for off in trees:
        t = OrderedTree(off)
        assert tree_from_lukasiewicz(t.lukasiewicz()) == t
        nest = oracles.offspring_to_nested(off)
        assert height_process(t)[:-1].tolist() == oracles.dfs_depths(nest)
        C = contour_process(t).tolist()
        assert C == oracles.contour_from_heights(height_process(t).tolist())
        assert C[:2 * n - 1] == oracles.contour_walk(nest)


@given(nested)
def test_codings_match_oracles(nest):
    t = tree_of(nest)
    H = height_process(t)
    C = contour_process(t)
    assert H[:-1].tolist() == oracles.dfs_depths(nest)
    assert C.tolist() == oracles.contour_from_heights(H.tolist())
    assert tree_from_lukasiewicz(t.lukasiewicz()) == t
    n = t.n
    # C at time b_j is H_j, and the basic invariants of both sequences
    b = 2 * np.arange(n) - H[:-1]
    assert np.array_equal(C[b], H[:-1])
    assert H[0] == 0 and np.all(np.diff(H[:-1]) <= 1)
    assert np.all(np.abs(np.diff(C)) <= 1)
    assert C[0] == C[2 * n - 1] == C[2 * n] == 0
    assert np.all(t.parent[1:] < np.arange(1, n))


@given(nested)
def test_contour_visits(nest):
    t = tree_of(nest)
    v = t.contour_vertices[:2 * t.n - 1]
    # entry times: first visit of each vertex, in DFS order
    first = {}
    for s, x in enumerate(v.tolist()):
        first.setdefault(x, s)
    assert sorted(first) == list(range(t.n))
    assert [first[k] for k in range(t.n)] == sorted(first.values())
    # each edge crossed exactly twice
    steps = list(zip(v[:-1].tolist(), v[1:].tolist()))
    edges = [tuple(sorted(e)) for e in steps]
    for k in range(1, t.n):
        assert edges.count((int(t.parent[k]), k)) == 2
    assert len(edges) == 2 * (t.n - 1)


def test_round_trip_large():
    rng = np.random.default_rng(5)
    for n in (10, 100, 1000):
        for _ in range(20):
            x = rng.geometric(0.5, size=n) - 1
            x = x.astype(np.int64)
            # force sum n - 1 by resampling until it holds
            while x.sum() != n - 1:
                x = (rng.geometric(0.5, size=n) - 1).astype(np.int64)
            t = rotate_to_tree(x)
            assert t.n == n
            assert tree_from_lukasiewicz(t.lukasiewicz()) == t


def test_cycle_rotation_first_minimum():
    # partial sums of x - 1 for [0, 2, 0] are -1, 0, -1: first minimum at index 0
    assert cycle_rotation([0, 2, 0]) == 1
    assert rotate_to_tree([0, 2, 0]) == CHERRY
    assert rotate_to_tree([2, 0, 0]) == CHERRY


@pytest.mark.parametrize("n", range(1, 7))
def test_cycle_lemma_bijection(n):
    # every sequence with sum n-1 has exactly one rotation that codes a tree,
    # and exactly n sequences map to each tree when all rotations are distinct
    import itertools
    counts = {}
    for seq in itertools.product(range(n), repeat=n):
        if sum(seq) != n - 1:
            continue
        valid = []
        for r in range(n):
            rs = seq[r:] + seq[:r]
            s = np.cumsum(np.array(rs) - 1)
            if s[-1] == -1 and (n == 1 or s[:-1].min() >= 0):
                valid.append(r)
        assert valid == [cycle_rotation(seq)]
        t = rotate_to_tree(seq)
        counts[t] = counts.get(t, 0) + 1
    assert len(counts) == oracles.catalan(n - 1)
    assert all(c == n for c in counts.values())


# pointed trees

def test_truncate_examples():
    pt = PointedTree(CHERRY, 1)          # root at height 0, point at height 1
    assert pt.point_height == 1
    assert truncate_pointed(pt, 0, np.inf) == pt
    assert truncate_pointed(pt, -5, 10) == pt
    assert truncate_pointed(pt, 1, 4) is CEMETERY
    assert truncate_pointed(pt, -3, 0) is CEMETERY
    # the window (0, 1] cut at 0 keeps only the root, which becomes the point
    low = truncate_pointed(PointedTree(CHERRY, 1, point_height=1), -1, 0)
    assert low is CEMETERY
    # with no recorded lineage below the point every window misses it
    assert truncate_pointed(PointedTree(CHERRY, 0), -1, 3) is CEMETERY
    centred = PointedTree(CHERRY, 1, point_height=0)
    assert truncate_pointed(centred, 0, np.inf) is CEMETERY
    assert truncate_pointed(centred, -1, 0) == centred


def test_truncate_cuts():
    # path 0-1-2 with 1 also having a second child 3; point 2 at depth 2
    t = OrderedTree([1, 2, 0, 0])
    pt = PointedTree(t, 2, point_height=0)
    w = truncate_pointed(pt, -1, 0)
    assert w.tree == OrderedTree([2, 0, 0]) and w.point == 1
    # cutting below the point moves it to its ancestor at height q
    w = truncate_pointed(pt, -2, -1)
    assert w.tree == OrderedTree([1, 0]) and w.point == 1 and w.point_height == -1
    assert w.spine_depth == 1


def test_scc_examples():
    s = scc_plus(PointedTree(CHERRY, 1))
    assert s.tree == OrderedTree([1, 0]) and s.point == 1 and not s.no_successor
    last = scc_plus(PointedTree(CHERRY, 2))
    assert last.no_successor and last.tree == CHERRY and last.point == 2
    single = scc_plus(PointedTree(OrderedTree([0]), 0))
    assert single.no_successor and single.point == 0


def _nested_pointed():
    return nested.flatmap(lambda t: st.tuples(st.just(t), st.integers(0, len(oracles.nested_to_offspring(t)) - 1)))


def _oracle_window(tree, point, p, q):
    """Window by explicit vertex sets on the parent array."""
    depth = tree.depth
    P = depth[point]
    if not max(p, -P) < min(q, 0):
        return None
    anc = set(tree.ancestors(point).tolist())
    if p <= -P:
        root = 0
    else:
        root = [a for a in anc if depth[a] == P + p][0]
    keep = []
    for v in range(tree.n):
        a = v
        while a >= 0 and a != root:
            a = tree.parent[a]
        if a == root and depth[v] - P <= q:
            keep.append(v)
    ks = set(keep)
    off = [sum(1 for c in tree.children_of(v) if int(c) in ks) for v in keep]
    ph = 0
    if q < 0:
        point = [a for a in anc if depth[a] == P + q][0]
        ph = q
    return tuple(off), keep.index(point), ph


@given(_nested_pointed(), st.integers(-8, 2), st.integers(-6, 8))
def test_truncate_matches_oracle(tp, p, dq):
    nest, point = tp
    t = tree_of(nest)
    q = p + 1 + abs(dq)
    pt = PointedTree(t, point, point_height=0)
    got = truncate_pointed(pt, p, q)
    want = _oracle_window(t, point, p, q)
    if want is None:
        assert got is CEMETERY
    else:
        assert got.key() == want


@given(_nested_pointed(), st.integers(-8, 0), st.integers(1, 5), st.integers(0, 3), st.integers(0, 3))
def test_truncate_nested_windows(tp, p, span, dp, dq):
    nest, point = tp
    pt = PointedTree(tree_of(nest), point, point_height=0)
    q = p + span
    first = truncate_pointed(pt, p, q)
    if first is CEMETERY:
        return
    assert truncate_pointed(first, p - dp, q + dq) == first
    assert truncate_pointed(first, p, q) == first


@given(_nested_pointed())
def test_scc_right_part(tp):
    nest, point = tp
    t = tree_of(nest)
    s = scc_plus(PointedTree(t, point))
    if point == t.n - 1:
        assert s.no_successor
        return
    u = point + 1
    keep = sorted(set(range(u, t.n)) | set(t.ancestors(u).tolist()))
    ks = set(keep)
    off = tuple(sum(1 for c in t.children_of(v) if int(c) in ks) for v in keep)
    assert s.key() == (off, keep.index(u), 0)
    assert s.spine_depth == t.depth[u]
    # right part: everything kept is an ancestor of the point or after it
    anc = set(s.spine().tolist())
    assert all(v in anc or v >= s.point for v in range(s.tree.n))


def test_serialization():
    t = OrderedTree([3, 0, 1, 0, 0])
    assert OrderedTree.from_line(t.to_line()) == t
