"""Tree-indexed branching random walks and their ranges.

Heights first: a Z-valued walk along the edges of the genealogical tree.  Then
positions: every up-step creates a new node in the free tree labelled with a
fresh uniform 64-bit label, every down-step moves to the parent node.  The
b-contraction reads the letter ceil(b U) off each label and merges siblings
with equal letters.

For unreflected heights the positions live in a tree with an infinite ray of
ancestors below the root; ray nodes are created lazily when a lineage first
reaches a new depth below 0.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

from .tree_core import OrderedTree


@dataclass(frozen=True)
class HeightBRW:
    tree: OrderedTree
    h: np.ndarray
    reflected: bool


@dataclass(frozen=True)
class RangeTrie:
    """Visited part of the free tree (b is None) or of the b-ary tree.

    node_parent[x] is -1 for the lowest node; node_depth can be negative for
    ray nodes of an unreflected walk.  node_of maps genealogical vertices to
    nodes.  Node ids follow first visit in DFS order.
    """
    node_parent: np.ndarray
    node_depth: np.ndarray
    node_of: np.ndarray
    b: int = None
    node_label: np.ndarray = None
    node_letter: np.ndarray = None
    ray_child: np.ndarray = None

    @property
    def size(self):
        return int(self.node_parent.shape[0])

    @property
    def root(self):
        return int(self.node_of[0])


# heights -----------------------------------------------------------------

@njit(cache=True)
def _heights(parent, eps, reflected):
    n = parent.shape[0]
    h = np.zeros(n, np.int64)
    for v in range(1, n):
        hp = h[parent[v]]
        if reflected and hp == 0:
            h[v] = 1
        else:
            h[v] = hp + eps[v]
    return h


def sample_heights(tree, reflected, rng):
    eps = 2 * rng.integers(0, 2, size=tree.n, dtype=np.int64) - 1
    return HeightBRW(tree, _heights(tree.parent, eps, bool(reflected)), bool(reflected))


def heights_from_increments(tree, eps, reflected):
    return HeightBRW(tree, _heights(tree.parent, np.asarray(eps, np.int64), bool(reflected)), bool(reflected))


def check_heights(hb):
    t, h = hb.tree, hb.h
    if h[0] != 0:
        raise ValueError("root height must be 0")
    dh = h[1:] - h[t.parent[1:]]
    if hb.reflected:
        if h.min() < 0:
            raise ValueError("reflected heights must be >= 0")
        from_zero = h[t.parent[1:]] == 0
        if np.any(dh[from_zero] != 1) or np.any(np.abs(dh[~from_zero]) != 1):
            raise ValueError("invalid reflected increments")
    elif np.any(np.abs(dh) != 1):
        raise ValueError("increments must be +-1")


# free trie ---------------------------------------------------------------

@njit(cache=True)
def _free_trie(parent, h, labels, ray_labels):
    n = parent.shape[0]
    cap = n + ray_labels.shape[0] + 1
    npar = np.full(cap, -1, np.int64)
    ndep = np.zeros(cap, np.int64)
    nlab = np.zeros(cap, np.uint64)
    rchild = np.full(cap, -1, np.int64)
    node_of = np.empty(n, np.int64)
    node_of[0] = 0
    nlab[0] = ray_labels[0]
    m = 1
    nray = 1
    for v in range(1, n):
        x = node_of[parent[v]]
        if h[v] > h[parent[v]]:
            npar[m] = x
            ndep[m] = ndep[x] + 1
            nlab[m] = labels[v]
            node_of[v] = m
            m += 1
        else:
            if npar[x] == -1:
                # step below the lowest ray node so far: create its ray parent
                npar[x] = m
                ndep[m] = ndep[x] - 1
                nlab[m] = ray_labels[nray]
                rchild[m] = x
                nray += 1
                m += 1
            node_of[v] = npar[x]
    return npar[:m].copy(), ndep[:m].copy(), nlab[:m].copy(), rchild[:m].copy(), node_of


def free_range(hb, rng=None, labels=None, ray_labels=None):
    """Positions in the free tree for a height BRW.

    labels[v] is the label of the node created when v steps up; ray_labels[d]
    labels the ray node at depth -d (index 0 is the starting node).
    """
    n = hb.tree.n
    if labels is None:
        labels = rng.integers(0, 2**64, size=n, dtype=np.uint64)
    if ray_labels is None:
        nr = 1 if hb.reflected else n + 1
        ray_labels = rng.integers(0, 2**64, size=nr, dtype=np.uint64)
    labels = np.asarray(labels, np.uint64)
    ray_labels = np.asarray(ray_labels, np.uint64)
    if not hb.reflected and ray_labels.size < -int(hb.h.min()) + 1:
        raise ValueError("not enough ray labels")
    npar, ndep, nlab, rch, node_of = _free_trie(hb.tree.parent, hb.h, labels, ray_labels)
    return RangeTrie(npar, ndep, node_of, None, nlab, None, rch)


# b-contraction -----------------------------------------------------------

@njit(cache=True)
def label_letter(L, b):
    """floor(L b / 2^64) + 1 computed exactly in 64-bit arithmetic."""
    mask = np.uint64(0xFFFFFFFF)
    s32 = np.uint64(32)
    bb = np.uint64(b)
    hi = L >> s32
    lo = L & mask
    return np.int64((hi * bb + ((lo * bb) >> s32)) >> s32) + 1


@njit(cache=True)
def _letters(labels, b):
    out = np.empty(labels.shape[0], np.int64)
    for i in range(labels.shape[0]):
        out[i] = label_letter(labels[i], b)
    return out


@njit(cache=True)
def _contract(npar, ndep, letters, rchild, b):
    m = npar.shape[0]
    bnode = np.empty(m, np.int64)
    bpar = np.full(m, -1, np.int64)
    bdep = np.zeros(m, np.int64)
    blet = np.zeros(m, np.int64)
    child = np.full((m, b), -1, np.int64)
    k = 0
    for x in range(m):
        if x == 0:
            bnode[0] = 0
            bdep[0] = ndep[0]
            blet[0] = letters[0]
            k = 1
        elif rchild[x] >= 0:
            c = rchild[x]
            B = k
            k += 1
            bdep[B] = ndep[x]
            blet[B] = letters[x]
            bc = bnode[c]
            bpar[bc] = B
            child[B, letters[c] - 1] = bc
            bnode[x] = B
        else:
            P = bnode[npar[x]]
            l = letters[x] - 1
            if child[P, l] == -1:
                B = k
                k += 1
                child[P, l] = B
                bpar[B] = P
                bdep[B] = ndep[x]
                blet[B] = l + 1
            bnode[x] = child[P, l]
    return bnode, bpar[:k].copy(), bdep[:k].copy(), blet[:k].copy(), child[:k].copy()


def contract_to_b(free, b):
    """b-contraction of a free trie.  Letters are read off the node labels."""
    b = int(b)
    if b < 2:
        raise ValueError("b must be >= 2")
    letters = _letters(free.node_label, b)
    bnode, bpar, bdep, blet, _ = _contract(free.node_parent, free.node_depth, letters, free.ray_child, b)
    return RangeTrie(bpar, bdep, bnode[free.node_of], b, None, blet, None)


@njit(cache=True)
def _direct_b(parent, up, letters, b):
    n = parent.shape[0]
    npar = np.full(n, -1, np.int64)
    ndep = np.zeros(n, np.int64)
    nlet = np.zeros(n, np.int64)
    child = np.full((n, b), -1, np.int64)
    node_of = np.empty(n, np.int64)
    node_of[0] = 0
    m = 1
    for v in range(1, n):
        x = node_of[parent[v]]
        if ndep[x] > 0 and not up[v]:
            node_of[v] = npar[x]
            continue
        l = letters[v] - 1
        if child[x, l] == -1:
            child[x, l] = m
            npar[m] = x
            ndep[m] = ndep[x] + 1
            nlet[m] = l + 1
            m += 1
        node_of[v] = child[x, l]
    return npar[:m].copy(), ndep[:m].copy(), nlet[:m].copy(), node_of


def sample_b_brw(tree, b, rng):
    """Reflected BRW on the b-ary tree sampled directly from its kernel:
    from the root go to a uniform child, otherwise parent or uniform child with
    probability 1/2 each.
    """
    n = tree.n
    up = rng.random(n) < 0.5
    letters = rng.integers(1, b + 1, size=n, dtype=np.int64)
    npar, ndep, nlet, node_of = _direct_b(tree.parent, up, letters, int(b))
    return RangeTrie(npar, ndep, node_of, int(b), None, nlet, None)


def b_range(hb, b, rng):
    """Convenience: free range of a height BRW followed by the b-contraction."""
    return contract_to_b(free_range(hb, rng), b)


# profiles, measures, distances --------------------------------------------

def range_profile(trie, order=None):
    """R_k = number of distinct positions among the first k vertices, k = 1..n.

    Node ids are assigned at first visit in DFS order, so R is a running max.
    """
    ids = trie.node_of if order is None else trie.node_of[order]
    return np.maximum.accumulate(ids) + 1


def measures(trie):
    """(occupation, counting) weights per trie node."""
    occ = np.bincount(trie.node_of, minlength=trie.size)
    return occ, np.ones(trie.size, np.int64)


@njit(cache=True)
def _node_distance(npar, ndep, x, y):
    dx, dy = ndep[x], ndep[y]
    d = 0
    while dx > dy:
        x = npar[x]
        dx -= 1
        d += 1
    while dy > dx:
        y = npar[y]
        dy -= 1
        d += 1
    while x != y:
        x = npar[x]
        y = npar[y]
        d += 2
    return d


@njit(cache=True)
def _path_min_distance(parent, depth, h, v, w):
    m = min(h[v], h[w])
    hv, hw = h[v], h[w]
    while depth[v] > depth[w]:
        v = parent[v]
        m = min(m, h[v])
    while depth[w] > depth[v]:
        w = parent[w]
        m = min(m, h[w])
    while v != w:
        v = parent[v]
        w = parent[w]
        m = min(m, h[v], h[w])
    return hv + hw - 2 * m


def trie_distance(trie, v, w):
    """Graph distance between the positions of vertices v and w."""
    return int(_node_distance(trie.node_parent, trie.node_depth, trie.node_of[v], trie.node_of[w]))


def path_min_distance(hb, v, w):
    """h_v + h_w - 2 min of h on the genealogical path between v and w."""
    t = hb.tree
    return int(_path_min_distance(t.parent, t.depth, hb.h, int(v), int(w)))


@njit(cache=True)
def _all_pairs(parent, depth, h, npar, ndep, node_of, idx):
    m = idx.shape[0]
    A = np.zeros((m, m), np.int64)
    B = np.zeros((m, m), np.int64)
    for i in range(m):
        for j in range(i + 1, m):
            a = _node_distance(npar, ndep, node_of[idx[i]], node_of[idx[j]])
            c = _path_min_distance(parent, depth, h, idx[i], idx[j])
            A[i, j] = A[j, i] = a
            B[i, j] = B[j, i] = c
    return A, B


def pairwise_distances(hb, trie, vertices=None):
    """Distance matrices over the given vertices computed both ways:
    (trie LCA distance, path-minimum formula).
    """
    t = hb.tree
    idx = np.arange(t.n) if vertices is None else np.asarray(vertices, np.int64)
    return _all_pairs(t.parent, t.depth, hb.h, trie.node_parent, trie.node_depth, trie.node_of, idx)
