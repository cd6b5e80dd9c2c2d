"""Single walks on the b-ary tree with an infinite line of ancestors, and the
two estimators of the range constant c.

A position is tracked relative to the reference ray (the ancestors of the
origin o): k <= 0 is the depth where the position leaves the ray and L >= 0
the number of letters above it.  o itself is (0, 0).  One step of the kernel
(parent with probability 1/2, each of the b children with 1/(2b)) acts as

    L > 0          : L - 1 or L + 1 with probability 1/2 each
    L = 0, k < 0   : k - 1 (1/2), k + 1 along the ray (1/(2b)), off the ray (b-1)/(2b)
    L = 0, k = 0   : k - 1 (1/2), off the ray (1/2)

Off-ray excursions return to the same ray node with probability 1; they are
simulated step by step up to EXCURSION_CAP steps and then closed (the return
is certain, only its duration is lost, and no statistic below uses it).
"""
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import brw, gw_sampler as gw
from ._rng import kernel_seed, stream

EXCURSION_CAP = 1000
ESCAPE_MARGIN = 40


@dataclass(frozen=True)
class CEstimate:
    c: float
    stderr: float
    method: str
    replicates: int
    spine_depth: int = None
    n: int = None
    extra: dict = None


# exact formulas -------------------------------------------------------------

def green_exact(b, p):
    """Expected visits to o, counting time 0 if it starts there, by the walk
    started on the ray at depth -p: (2b/(b-1)) b^-p.
    """
    return 2.0 * b / (b - 1.0) * float(b) ** (-p)


def ruin_exact(b, l):
    """P(walk started on the ray at depth -l ever hits o) = b^-l."""
    return float(b) ** (-l)


def no_return_exact(b):
    return (b - 1.0) / (2.0 * b)


def birth_death_table(b):
    """Transition probabilities of the ray-visit chain on p = -k.

    Returns {p: {p': prob}} for p = 0, 1 (rows p >= 1 are all alike).
    """
    return {
        0: {0: 0.5, 1: 0.5},
        1: {2: 0.5, 0: 1.0 / (2 * b), 1: (b - 1.0) / (2 * b)},
    }


def hitting_g(s):
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("s must be > 0")
    return -np.log1p(-np.sqrt(-np.expm1(-2.0 * s)))


def hitting_laplace(s):
    """E exp(-s(1 + H)), H the first passage time of a simple walk to -1."""
    return np.exp(-hitting_g(s))


def biased_tail_bound(lam, l, n1, n2):
    if lam <= 1:
        raise ValueError("lambda must be > 1")
    return (n2 - n1) * (lam - 1.0) / (lam ** l - 1.0)


# compiled walk --------------------------------------------------------------

@njit(cache=True)
def _step(k, L, inv2b):
    u = np.random.random()
    if L > 0:
        if u < 0.5:
            return k, L - 1
        return k, L + 1
    if u < 0.5:
        return k - 1, 0
    if k < 0 and u < 0.5 + inv2b:
        return k + 1, 0
    return k, 1


@njit(cache=True)
def _excursion():
    # off-ray excursion from L = 1 back to L = 0; returns its length (capped)
    L = 1
    t = 1
    while L > 0 and t < EXCURSION_CAP:
        if np.random.random() < 0.5:
            L -= 1
        else:
            L += 1
        t += 1
    return t


@njit(cache=True)
def _ray_walk(seed, b, N, k0, target, escape, record):
    """Runs N walks from the ray node at depth k0 until they fall below escape.

    Returns per-run visit counts to the ray node at depth `target` (time 0
    included), and, if record > 0, transition counts of the ray-visit chain for
    p = 0..record-1 as a (record, 3) array of (down, stay, up) in p.
    """
    np.random.seed(seed)
    inv2b = 1.0 / (2.0 * b)
    visits = np.zeros(N, np.int64)
    trans = np.zeros((max(record, 1), 3), np.int64)
    for i in range(N):
        k = k0
        c = 1 if k == target else 0
        while k >= escape:
            u = np.random.random()
            p = -k
            if u < 0.5:
                nk = k - 1
                col = 2
            elif k < 0 and u < 0.5 + inv2b:
                nk = k + 1
                col = 0
            else:
                _excursion()
                nk = k
                col = 1
            if p < record:
                trans[p, col] += 1
            k = nk
            if k == target:
                c += 1
        visits[i] = c
    return visits, trans


@njit(cache=True)
def _first_passage(seed, N, tmax):
    np.random.seed(seed)
    out = np.empty(N, np.int64)
    for i in range(N):
        x = 0
        t = 0
        while x > -1 and t < tmax:
            x += 1 if np.random.random() < 0.5 else -1
            t += 1
        out[i] = t if x == -1 else -1
    return out


def green_mc(b, p, N, rng, reverse=False, margin=ESCAPE_MARGIN):
    """Mean visits to o from the ray node at depth -p (reverse: visits to the
    ray node at depth -p from o, whose mean is 2b/(b-1) for every p).  Runs
    stop once the walk is `margin` levels below both points, after which a
    revisit has probability below b^-margin.
    """
    k0, target = (0, -p) if reverse else (-p, 0)
    v, _ = _ray_walk(kernel_seed(rng), b, int(N), k0, target, -(p + margin), 0)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(N))


def ruin_mc(b, l, N, rng):
    """P(hit o from the ray node at depth -l), estimated."""
    v, _ = _ray_walk(kernel_seed(rng), b, int(N), -l, 0, -(l + ESCAPE_MARGIN), 0)
    hit = (v > 0).astype(float)
    return float(hit.mean()), float(hit.std(ddof=1) / math.sqrt(N))


def no_return_mc(b, N, rng):
    v, _ = _ray_walk(kernel_seed(rng), b, int(N), 0, 0, -ESCAPE_MARGIN, 0)
    x = (v == 1).astype(float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(N))


def ray_chain_counts(b, N, rng, depth=3, escape=60):
    """Transition counts (down, stay, up in p = -k) of the ray-visit chain,
    from N walks started at o.
    """
    _, tr = _ray_walk(kernel_seed(rng), b, int(N), 0, 1, -escape, depth)
    return tr


@njit(cache=True)
def _ray_chain_min(seed, b, N, steps):
    np.random.seed(seed)
    inv2b = 1.0 / (2.0 * b)
    out = np.empty(N, np.int64)
    for i in range(N):
        k = 0
        for _ in range(steps):
            u = np.random.random()
            if u < 0.5:
                k -= 1
            elif k < 0 and u < 0.5 + inv2b:
                k += 1
        out[i] = k
    return out


def ray_chain_endpoints(b, N, steps, rng):
    """Divergence depth after `steps` ray visits, N independent chains."""
    return _ray_chain_min(kernel_seed(rng), b, int(N), int(steps))


def ruin_and_escape(b, N, rng, ls=(1, 2, 3)):
    """MC checks of the ruin and no-return probabilities.

    Returns {name: (estimate, stderr, exact)}.
    """
    out = {}
    for l in ls:
        out[f"ruin_{l}"] = ruin_mc(b, l, N, rng) + (ruin_exact(b, l),)
    out["no_return"] = no_return_mc(b, N, rng) + (no_return_exact(b),)
    return out


def birth_death_transitions(b, N, rng, depth=3):
    """Exact table and empirical frequencies of the ray-visit chain.

    Returns (table, freq, se), freq[p] = (down, stay, up) in p = -k, and the
    exact rows in the same layout.
    """
    tr = ray_chain_counts(b, N, rng, depth)
    tot = tr.sum(axis=1, keepdims=True)
    freq = tr / tot
    se = np.sqrt(freq * (1 - freq) / tot)
    t = birth_death_table(b)
    exact = np.array([[t[min(p, 1)].get(min(p, 1) - 1, 0.0), t[min(p, 1)][min(p, 1)], t[min(p, 1)][min(p, 1) + 1]]
                      for p in range(depth)])
    return exact, freq, se


def laplace_mc(s, N, rng):
    """MC estimate of E exp(-s(1 + H)); passage times beyond 60/s are dropped
    (their contribution is below e^-60).
    """
    tmax = int(math.ceil(60.0 / s))
    H = _first_passage(kernel_seed(rng), int(N), tmax)
    x = np.where(H >= 0, np.exp(-s * (1.0 + H)), 0.0)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(N))


# biased walk on a finite b-ary tree -----------------------------------------

@njit(cache=True)
def _biased(seed, b, D, lam, l, n1, n2, N):
    np.random.seed(seed)
    hits = 0
    for i in range(N):
        h = 0
        for _ in range(n1):
            if h == 0:
                h = 1
            elif h == D:
                h -= 1
            elif np.random.random() < lam / (lam + b):
                h -= 1
            else:
                h += 1
        # track a = |Y_n1 ^ Y_n| and the running minimum of the height
        H0 = h
        a = h
        m = h
        for _ in range(n2 - n1):
            on_line = h == a
            if h == 0:
                # from the root go to a uniform child
                if on_line and H0 > 0 and np.random.random() < 1.0 / b:
                    a = 1
                h = 1
            elif h == D:
                h -= 1
            else:
                u = np.random.random()
                if u < lam / (lam + b):
                    h -= 1
                else:
                    if on_line and h < H0 and u < (lam + 1.0) / (lam + b):
                        a = h + 1
                    h += 1
            if h < a:
                a = h
            if h < m:
                m = h
        if a - m >= l:
            hits += 1
    return hits


def biased_tail_check(b, lam, l, n1, n2, N, rng, depth=200):
    """Empirical P(|Y_n1| + |Y_n2| - 2 min >= 2l + d(Y_n1, Y_n2)) for the
    lambda-biased walk from the root of the complete b-ary tree of the given
    depth, and the bound (n2 - n1)(lam - 1)/(lam^l - 1).
    """
    if lam <= 1:
        raise ValueError("lambda must be > 1")
    hits = _biased(kernel_seed(rng), int(b), int(depth), float(lam), int(l), int(n1), int(n2), int(N))
    p = hits / N
    return p, math.sqrt(max(p * (1 - p), 1.0 / N) / N), biased_tail_bound(lam, l, n1, n2)


# GW-indexed walks and the pointed-tree estimator -----------------------------

@njit(cache=True)
def _gw_hits_o(surv, code, g, b, k, L, cap, kcut):
    """DFS over a GW tree whose root sits at (k, L); True as soon as a vertex
    is at o.  Lineages that leave the ray below -kcut are dropped (their
    expected number of visits to o is below (2b/(b-1)) b^-kcut).  Also returns
    the number of vertices explored and whether the size cap stopped the search.
    """
    inv2b = 1.0 / (2.0 * b)
    sk = np.empty(64, np.int64)
    sL = np.empty(64, np.int64)
    srem = np.empty(64, np.int64)
    top = -1
    n = 0
    while True:
        if k == 0 and L == 0:
            return True, n, False
        n += 1
        if n > cap:
            return False, n, True
        kids = 0 if k < -kcut else gw._draw(surv, code, g)
        if kids > 0:
            top += 1
            if top >= sk.shape[0]:
                sk = gw._grow(sk, top + 1)
                sL = gw._grow(sL, top + 1)
                srem = gw._grow(srem, top + 1)
            sk[top] = k
            sL[top] = L
            srem[top] = kids
        while top >= 0 and srem[top] == 0:
            top -= 1
        if top < 0:
            return False, n, False
        srem[top] -= 1
        k, L = _step(sk[top], sL[top], inv2b)


@njit(cache=True)
def _gw_hit_kernel(seed, surv, code, g, b, k0, N, cap, kcut):
    np.random.seed(seed)
    hits = np.zeros(N, np.bool_)
    for i in range(N):
        hits[i] = _gw_hits_o(surv, code, g, b, k0, 0, cap, kcut)[0]
    return hits


def gw_revisit_probability(mu, b, p, N, rng, cap=10**6, kcut=60):
    """P(some vertex of a GW tree whose BRW starts at the ray node at depth
    -p visits o), estimated."""
    h = _gw_hit_kernel(kernel_seed(rng), mu.surv, mu.code, mu.gamma, int(b), -int(p), int(N), int(cap), int(kcut))
    x = h.astype(float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(N))


@njit(cache=True)
def _ipgw_first_hit(seed, surv, tsurv, code, g, b, Pmax, cap, kcut):
    """First level at which o is hit: level 0 is the subtree of the point,
    level p the side subtrees of its p-th ancestor.  -1 if no hit up to Pmax.
    Also returns the number of subtrees stopped by the size cap.
    """
    np.random.seed(seed)
    inv2b = 1.0 / (2.0 * b)
    capped = 0
    kids = gw._draw(surv, code, g)
    for _ in range(kids):
        k, L = _step(0, 0, inv2b)
        hit, _, c = _gw_hits_o(surv, code, g, b, k, L, cap, kcut)
        capped += c
        if hit:
            return 0, capped
    yk, yL = 0, 0
    for p in range(1, Pmax + 1):
        yk, yL = _step(yk, yL, inv2b)
        m = gw._draw_spine(tsurv, code, g)
        for _ in range(m - 1):
            k, L = _step(yk, yL, inv2b)
            hit, _, c = _gw_hits_o(surv, code, g, b, k, L, cap, kcut)
            capped += c
            if hit:
                return p, capped
    return -1, capped


def ipgw_first_hits(mu, b, Pmax, N, seed, cap=10**5, kcut=None, start=0):
    """First hit levels for replicates start..start+N-1 (one stream each)."""
    if kcut is None:
        kcut = int(math.ceil(12 * math.log(10) / math.log(b)))
    lev = np.empty(N, np.int64)
    capped = np.empty(N, np.int64)
    for i in range(N):
        s = kernel_seed(stream(seed, start + i))
        lev[i], capped[i] = _ipgw_first_hit(s, mu.surv, mu.spine_surv, mu.code, mu.gamma, int(b), int(Pmax),
                                            int(cap), int(kcut))
    return lev, capped


def c_from_levels(lev, P):
    """Fraction of replicates without a hit at levels <= P."""
    ok = (lev < 0) | (lev > P)
    return float(ok.mean()), float(math.sqrt(max(ok.mean() * (1 - ok.mean()), 1e-300) / lev.size))


def estimate_c_ipgw(mu, b, P, N, seed, cap=10**5):
    lev, capped = ipgw_first_hits(mu, b, 2 * P, N, seed, cap)
    c, se = c_from_levels(lev, P)
    c2, _ = c_from_levels(lev, 2 * P)
    profile = [c_from_levels(lev, p)[0] for p in range(0, 2 * P + 1)]
    return CEstimate(c, se, "IPGW", int(N), int(P), None,
                     {"c_2P": c2, "drift": c - c2, "capped_subtrees": int(capped.sum()), "c_by_level": profile})


# law of large numbers --------------------------------------------------------

def lln_replicate(mu, b, n, rng):
    """Range profile of the reflected b-ary BRW on a size-n conditioned tree."""
    t = gw.sample_gw_conditioned(mu, n, rng)
    trie = brw.b_range(brw.sample_heights(t, True, rng), b, rng)
    return brw.range_profile(trie)


def uniform_deviation(R, c):
    n = R.size
    k = np.arange(1, n + 1)
    return float(np.max(np.abs(R - c * k)) / n)


def estimate_c_lln(mu, b, n, N, seed, start=0):
    ratios = np.empty(N)
    profiles = []
    for i in range(N):
        R = lln_replicate(mu, b, n, stream(seed, start + i))
        ratios[i] = R[-1] / n
        profiles.append(R)
    c = float(ratios.mean())
    se = float(ratios.std(ddof=1) / math.sqrt(N)) if N > 1 else float("nan")
    dev = np.array([uniform_deviation(R, c) for R in profiles])
    return CEstimate(c, se, "LLN", int(N), None, int(n), {"median_uniform_deviation": float(np.median(dev))})
