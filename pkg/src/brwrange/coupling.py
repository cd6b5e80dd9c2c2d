"""Coupling of unreflected and reflected branching random walks.

The reflection map h+ = h + K(-I), I the running (ancestral) minimum, turns a
simple symmetric walk into one reflected at 0.  On trees the same map applied
vertexwise couples the two BRWs; positions of the reflected one reuse the
labels of the unreflected one except on the record sets at odd depth, where
fresh labels are substituted.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import brw


def K(m):
    """K(0) = 0 and K(2p+1) = K(2p+2) = 2p+2."""
    m = np.asarray(m)
    if np.any(m < 0):
        raise ValueError("K is defined on nonnegative integers")
    out = 2 * ((m + 1) // 2)
    return int(out) if out.ndim == 0 else out


def reflect_path(h):
    h = np.asarray(h, dtype=np.int64)
    if h.size == 0 or h[0] != 0 or np.any(np.abs(np.diff(h)) != 1):
        raise ValueError("path must start at 0 with +-1 increments")
    I = np.minimum.accumulate(h)
    return h + K(-I)


@njit(cache=True)
def _ancestral_min(parent, h):
    n = parent.shape[0]
    I = np.empty(n, np.int64)
    I[0] = h[0]
    for v in range(1, n):
        I[v] = min(I[parent[v]], h[v])
    return I


def ancestral_min(hb):
    return _ancestral_min(hb.tree.parent, hb.h)


def reflect_brw(hb):
    if hb.reflected:
        raise ValueError("expects unreflected heights")
    I = ancestral_min(hb)
    return brw.HeightBRW(hb.tree, hb.h + K(-I), True)


def record_sets(hb, I=None):
    """p for vertices u in S_p (I_u = -p < I of the parent), -1 elsewhere.

    The root starts the excursion at level 0 and is put in S_0.
    """
    t = hb.tree
    if I is None:
        I = ancestral_min(hb)
    S = np.full(t.n, -1, np.int64)
    S[0] = 0
    new = I[1:] < I[t.parent[1:]]
    S[1:][new] = -I[1:][new]
    return S


@dataclass(frozen=True)
class CoupledPair:
    tree: object
    h: np.ndarray
    h_plus: np.ndarray
    I: np.ndarray
    S: np.ndarray
    trie: brw.RangeTrie
    trie_plus: brw.RangeTrie
    profile: np.ndarray
    profile_plus: np.ndarray
    discrepancy: np.ndarray
    comparison_count: int
    cutoff: int

    @property
    def max_discrepancy(self):
        return int(self.discrepancy.max())

    @property
    def violated(self):
        return self.max_discrepancy > self.comparison_count

    def bound(self, b):
        """2 b^-c (#t)^3, the bound on the violation probability."""
        return 2.0 * float(b) ** (-self.cutoff) * float(self.tree.n) ** 3


def coupled_ranges(tree, b, rng, c):
    """Build the b-ary ranges of the coupled unreflected/reflected BRWs."""
    n = tree.n
    hb = brw.sample_heights(tree, False, rng)
    U = rng.integers(0, 2**64, size=n, dtype=np.uint64)
    Uprime = rng.integers(0, 2**64, size=n, dtype=np.uint64)
    ray = rng.integers(0, 2**64, size=n + 1, dtype=np.uint64)
    return couple(hb, b, U, Uprime, ray, c)


def couple(hb, b, U, Uprime, ray, c):
    """Coupling for given unreflected heights and labels.

    U labels the unreflected walk, ray the lazily created ancestors below the
    start, Uprime replaces U on the record sets S_p with p odd.
    """
    tree = hb.tree
    I = ancestral_min(hb)
    S = record_sets(hb, I)
    h_plus = hb.h + K(-I)
    U_plus = np.where((S >= 0) & (S % 2 == 1), Uprime, U)
    theta = brw.contract_to_b(brw.free_range(hb, labels=U, ray_labels=ray), b)
    hp = brw.HeightBRW(tree, h_plus, True)
    theta_plus = brw.contract_to_b(brw.free_range(hp, labels=U_plus, ray_labels=ray[:1]), b)
    R = brw.range_profile(theta)
    Rp = brw.range_profile(theta_plus)
    count = int(np.sum(h_plus <= c + 1))
    return CoupledPair(tree, hb.h, h_plus, I, S, theta, theta_plus, R, Rp, np.abs(R - Rp), count, int(c))
