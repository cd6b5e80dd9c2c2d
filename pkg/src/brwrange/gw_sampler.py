"""Critical offspring laws and Galton-Watson tree samplers.

All sampling of offspring counts goes through survival functions
S(k) = P(xi > k): with v uniform on (0, 1], xi = min{k : S(k) < v}.  The
spine law mu_bar(k) = P(xi >= k) uses T(k) = P(K > k) in the same way.
"""
import math

import numpy as np
from numba import njit
from scipy import stats

from .tree_core import OrderedTree, PointedTree, rotate_to_tree
from ._rng import kernel_seed


class RejectionBudgetExceeded(RuntimeError):
    pass


class SizeCapExceeded(RuntimeError):
    pass


GEOMETRIC, POISSON, STABLE, TABLE = 0, 1, 2, 3
_STABLE_CACHE = 1 << 20


class OffspringDistribution:
    """A critical aperiodic offspring law.  Use the module level factories."""

    def __init__(self, kind, code, gamma, surv, spine_surv, pmf_arr=None):
        self.kind = kind
        self.code = code
        self.gamma = float(gamma)
        self.surv = surv              # S(0..K-1)
        self.spine_surv = spine_surv  # T(0..K-1)
        self._pmf = pmf_arr

    def __repr__(self):
        if self.kind == "stable":
            return f"OffspringDistribution(stable, gamma={self.gamma})"
        return f"OffspringDistribution({self.kind})"

    # accessors
    def pmf(self, k):
        k = int(k)
        if k < 0:
            return 0.0
        if self.kind == "stable":
            return stable_pmf(self.gamma, k)
        if self.kind == "geometric":
            return 0.5 ** (k + 1)
        if self.kind == "poisson":
            return float(stats.poisson.pmf(k, 1.0))
        return float(self._pmf[k]) if k < self._pmf.size else 0.0

    def sf(self, k):
        """P(xi > k)."""
        k = int(k)
        if k < 0:
            return 1.0
        if k < self.surv.size:
            return float(self.surv[k])
        if self.kind == "stable":
            return _stable_sf(k, self.gamma)
        return 0.0

    def cdf(self, k):
        return 1.0 - self.sf(k)

    def spine_pmf(self, k):
        """mu_bar(k) = P(xi >= k) for k >= 1."""
        return self.sf(k - 1) if k >= 1 else 0.0

    @property
    def mean(self):
        return 1.0

    @property
    def variance(self):
        if self.kind == "stable":
            return math.inf
        if self.kind == "geometric":
            return 2.0
        if self.kind == "poisson":
            return 1.0
        k = np.arange(self._pmf.size)
        return float(np.sum((k - 1.0) ** 2 * self._pmf))

    def config(self):
        d = {"kind": self.kind}
        if self.kind == "stable":
            d["gamma"] = self.gamma
        if self.kind == "table":
            d["table"] = [float(x) for x in self._pmf]
        return d

    def draw(self, rng, size):
        """i.i.d. offspring counts from a numpy Generator."""
        v = 1.0 - rng.random(size)
        return _inverse_vec(self.surv, v, self.code, self.gamma, False)

    def draw_spine(self, rng, size):
        v = 1.0 - rng.random(size)
        return _inverse_vec(self.spine_surv, v, self.code, self.gamma, True)


def geometric():
    """Geometric(1/2) on {0, 1, ...}: mu(k) = 2^-(k+1)."""
    k = np.arange(1100, dtype=float)
    return OffspringDistribution("geometric", GEOMETRIC, 2.0, 0.5 ** (k + 1), 0.5 ** k)


def poisson():
    k = np.arange(200)
    S = stats.poisson.sf(k, 1.0)
    return OffspringDistribution("poisson", POISSON, 2.0, S, _tail_sums(S))


def _tail_sums(S):
    # T(k) = P(K > k) = sum_{j >= k} S(j) when mu has mean 1
    T = np.cumsum(S[::-1])[::-1].copy()
    T[0] = 1.0
    return T


def table(pmf, strict=True):
    """Finite pmf.  strict=False skips the criticality and aperiodicity checks,
    which only makes sense for degenerate test laws.
    """
    p = np.asarray(pmf, dtype=float)
    if p.ndim != 1 or p.size < 1 or p.min() < 0:
        raise ValueError("table must be a nonnegative pmf")
    if abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("table pmf does not sum to 1")
    if p.size == 1:
        p = np.append(p, 0.0)
    k = np.arange(p.size)
    if strict:
        if abs(np.dot(k, p) - 1.0) > 1e-10:
            raise ValueError("table pmf is not critical")
        support = k[p > 0]
        if np.gcd.reduce(support - support[0]) != 1:
            raise ValueError("table pmf is periodic")
    S = np.clip(1.0 - np.cumsum(p), 0.0, None)
    S[-1] = 0.0
    return OffspringDistribution("table", TABLE, 2.0, np.append(S, 0.0), np.append(_tail_sums(S), 0.0), p)


def stable(gamma):
    """Law with generating function s + (1 - s)^gamma / gamma, 1 < gamma < 2."""
    g = float(gamma)
    if not 1.0 < g < 2.0:
        raise ValueError("stable family needs 1 < gamma < 2 (gamma = 2 is periodic)")
    K = _STABLE_CACHE
    k = np.arange(1, K, dtype=float)
    S = np.empty(K)
    T = np.empty(K)
    S[0] = 1.0 - 1.0 / g
    T[0] = 1.0
    # exact running products from S(1) = (g-1)/g and T(1) = 1/g
    S[1:] = ((g - 1.0) / g) * np.cumprod(np.append(1.0, (k[:-1] + 1.0 - g) / (k[:-1] + 1.0)))
    T[1:] = (1.0 / g) * np.cumprod(np.append(1.0, (k[:-1] + 1.0 - g) / k[:-1]))
    return OffspringDistribution("stable", STABLE, g, S, T)


def stable_pmf(gamma, k):
    """k-th Taylor coefficient of s + (1 - s)^gamma / gamma."""
    g = float(gamma)
    if not 1.0 < g < 2.0:
        raise ValueError("gamma must lie in (1, 2)")
    if k < 0:
        return 0.0
    if k == 0:
        return 1.0 / g
    if k == 1:
        return 0.0
    if k < 4096:
        c = (g - 1.0) / 2.0
        for j in range(2, k):
            c *= (j - g) / (j + 1.0)
        return c
    # Gamma(k - g) / (g |Gamma(-g)| Gamma(k + 1)), Gamma(-g) > 0 for 1 < g < 2
    return math.exp(math.lgamma(k - g) - math.lgamma(k + 1.0)) / (g * math.gamma(-g))


def _stable_sf(k, g):
    return math.exp(math.lgamma(k + 1.0 - g) - math.lgamma(k + 1.0)) / (g * -math.gamma(1.0 - g))


def from_config(cfg):
    if isinstance(cfg, OffspringDistribution):
        return cfg
    kind = cfg.get("kind")
    if kind == "geometric":
        return geometric()
    if kind == "poisson":
        return poisson()
    if kind == "stable":
        return stable(cfg["gamma"])
    if kind == "table":
        return table(cfg["table"])
    raise ValueError(f"unknown offspring kind {kind!r}")


# compiled inverse survival -------------------------------------------------

@njit(cache=True)
def _tail_value(k, code, g, spine):
    # closed form of S or T beyond the cached range (stable family only)
    kf = float(k)
    if spine:
        return math.exp(math.lgamma(kf + 1.0 - g) - math.lgamma(kf)) / (g * math.gamma(2.0 - g))
    return math.exp(math.lgamma(kf + 1.0 - g) - math.lgamma(kf + 1.0)) / (g * -math.gamma(1.0 - g))


@njit(cache=True)
def _inverse(surv, v, code, g, spine):
    K = surv.shape[0]
    if surv[K - 1] >= v:
        if code != STABLE:
            return K
        lo = K - 1
        hi = 2 * K
        while _tail_value(hi, code, g, spine) >= v:
            lo = hi
            hi *= 2
            if hi > (1 << 61):
                return hi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _tail_value(mid, code, g, spine) < v:
                hi = mid
            else:
                lo = mid
        return hi
    lo = -1
    hi = K - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if surv[mid] < v:
            hi = mid
        else:
            lo = mid
    return hi


@njit(cache=True)
def _inverse_vec(surv, v, code, g, spine):
    out = np.empty(v.shape[0], np.int64)
    for i in range(v.shape[0]):
        out[i] = _inverse(surv, v[i], code, g, spine)
    return out


@njit(cache=True)
def _draw(surv, code, g):
    return _inverse(surv, 1.0 - np.random.random(), code, g, False)


@njit(cache=True)
def _draw_spine(tsurv, code, g):
    return _inverse(tsurv, 1.0 - np.random.random(), code, g, True)


@njit(cache=True)
def _grow(a, need):
    if need <= a.shape[0]:
        return a
    b = np.empty(max(need, 2 * a.shape[0]), a.dtype)
    b[:a.shape[0]] = a
    return b


@njit(cache=True)
def _append_gw(out, n, surv, code, g, h0, hmax, cap):
    """Append one GW tree in DFS order.  The root sits at height h0 and vertices
    at height hmax get no recorded children.  Returns (out, n, ok).
    """
    stack_rem = np.empty(64, np.int64)
    stack_h = np.empty(64, np.int64)
    top = -1
    h = h0
    while True:
        if n >= cap:
            return out, n, False
        k = 0 if h >= hmax else _draw(surv, code, g)
        out = _grow(out, n + 1)
        out[n] = k
        n += 1
        if k > 0:
            top += 1
            if top >= stack_rem.shape[0]:
                stack_rem = _grow(stack_rem, top + 1)
                stack_h = _grow(stack_h, top + 1)
            stack_rem[top] = k
            stack_h[top] = h
        # move to the next vertex in DFS order
        while top >= 0 and stack_rem[top] == 0:
            top -= 1
        if top < 0:
            return out, n, True
        stack_rem[top] -= 1
        h = stack_h[top] + 1


@njit(cache=True)
def _gw_kernel(seed, surv, code, g, hmax, cap):
    np.random.seed(seed)
    out = np.empty(16, np.int64)
    return _append_gw(out, 0, surv, code, g, 0, hmax, cap)


@njit(cache=True)
def _ipgw_kernel(seed, surv, tsurv, code, g, P, hmax, cap):
    np.random.seed(seed)
    spine = np.empty(P, np.int64)
    for i in range(P):
        spine[i] = _draw_spine(tsurv, code, g)
    out = np.empty(P + 16, np.int64)
    # spine[p-1] is the offspring count of the ancestor at height -p
    for i in range(P):
        out[i] = spine[P - 1 - i]
    n = P
    out, n, ok = _append_gw(out, n, surv, code, g, 0, hmax, cap)
    if not ok:
        return out, n, False
    for p in range(1, P + 1):
        for _ in range(spine[p - 1] - 1):
            out, n, ok = _append_gw(out, n, surv, code, g, -p + 1, hmax, cap)
            if not ok:
                return out, n, False
    return out, n, True


_NO_CAP = np.iinfo(np.int64).max // 4


def sample_gw(mu, rng, max_height=None, size_cap=10**7):
    """Unconditioned GW(mu) tree.  With max_height the tree is cut at that depth."""
    hmax = _NO_CAP if max_height is None else int(max_height)
    out, n, ok = _gw_kernel(kernel_seed(rng), mu.surv, mu.code, mu.gamma, hmax, int(size_cap))
    if not ok:
        raise SizeCapExceeded(f"GW tree exceeded {size_cap} vertices")
    return OrderedTree(out[:n].copy(), validate=False)


def sample_ipgw_plus(mu, P, rng, max_height=None, size_cap=10**7):
    """Right part of the infinite pointed GW tree, spine recorded to depth P.

    Ancestors of the point have mu_bar offspring and the spine goes through
    their first child.  The point roots a GW(mu) tree and every other child
    roots an independent GW(mu) tree.  max_height cuts all of them at that
    height above the point.
    """
    P = int(P)
    if P < 1:
        raise ValueError("spine depth must be >= 1")
    hmax = _NO_CAP if max_height is None else int(max_height)
    out, n, ok = _ipgw_kernel(kernel_seed(rng), mu.surv, mu.spine_surv, mu.code, mu.gamma, P,
                              hmax, int(size_cap))
    if not ok:
        raise SizeCapExceeded(f"pointed tree exceeded {size_cap} vertices")
    return PointedTree(OrderedTree(out[:n].copy(), validate=False), P, False, 0)


def _conditioned_counts(mu, n, rng, max_tries):
    if mu.kind == "geometric":
        # iid Geometric(1/2) given the sum is a uniform weak composition
        if n == 1:
            return np.zeros(1, np.int64)
        m = 2 * n - 2
        bars = np.sort(rng.choice(m, n - 1, replace=False))
        x = np.diff(np.concatenate(([-1], bars, [m]))) - 1
        return x.astype(np.int64)
    if mu.kind == "poisson":
        # iid Poisson(1) given the sum is multinomial with equal cells
        return np.bincount(rng.integers(0, n, n - 1), minlength=n).astype(np.int64)
    for _ in range(max_tries):
        x = mu.draw(rng, n)
        if x.sum() == n - 1:
            return x
    raise RejectionBudgetExceeded(f"no accepted draw for n={n} after {max_tries} tries")


def sample_gw_conditioned(mu, n, rng, max_tries=None):
    """GW(mu) tree conditioned to have exactly n vertices."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if max_tries is None:
        max_tries = 50 * int(math.ceil(n / scaling_a_n(mu, n))) + 1000
    x = _conditioned_counts(mu, n, rng, max_tries)
    return rotate_to_tree(x)


# scaling sequence ------------------------------------------------------------

def _stable_log_laplace(theta, g):
    # log E exp(-theta (xi - 1)) for the stable family, written to avoid cancellation
    y = -np.expm1(-theta)
    return np.log1p(np.exp(theta) * y**g / g)


def stable_scaling_constant(gamma):
    """C with a_n = C n^((gamma-1)/gamma).

    Matching n * log E exp(-(lam a_n / n)(xi - 1)) -> lam^gamma requires
    C = kappa^(-1/gamma) where kappa = lim psi(theta) / theta^gamma.  kappa is
    read off numerically from a Richardson step on the small-theta ratio.
    """
    g = float(gamma)
    th = np.array([1e-4, 5e-5])
    r = _stable_log_laplace(th, g) / th**g
    # the leading correction is linear in theta
    kappa = 2.0 * r[1] - r[0]
    return float(kappa ** (-1.0 / g))


def scaling_a_n(mu, n):
    if mu.kind == "stable":
        g = mu.gamma
        return stable_scaling_constant(g) * float(n) ** ((g - 1.0) / g)
    var = mu.variance
    if not np.isfinite(var) or var <= 0:
        raise ValueError("unknown scaling for this law")
    return math.sqrt(2.0 * n / var)


def enumerate_trees(n):
    """All ordered trees with n vertices, as offspring tuples (small n only)."""
    out = []

    def rec(prefix, s):
        k = len(prefix)
        if k == n:
            if s == -1:
                out.append(tuple(prefix))
            return
        for x in range(0, n):
            t = s + x - 1
            if t < 0 and k < n - 1:
                continue
            if t < -1:
                continue
            rec(prefix + [x], t)

    rec([], 0)
    return out


def conditioned_law(mu, n):
    """Exact conditional probability of each size-n tree under GW(mu)."""
    trees = enumerate_trees(n)
    w = np.array([np.prod([mu.pmf(k) for k in t]) for t in trees])
    return dict(zip(trees, w / w.sum()))
