"""Pseudo-metrics on a time grid, the four-point test, moduli, GHP bounds and
an exact Prokhorov distance for small finite spaces.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

MAX_PROKHOROV_POINTS = 15


@dataclass(frozen=True)
class GridPseudoMetric:
    """d[i, j] is the distance between grid times i*zeta/m and j*zeta/m."""
    d: np.ndarray
    zeta: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("need a square matrix")
        object.__setattr__(self, "d", d)

    @property
    def m(self):
        return self.d.shape[0] - 1

    @property
    def times(self):
        return np.linspace(0.0, self.zeta, self.m + 1)

    def diameter(self):
        return float(self.d.max())

    def validate(self, tol=1e-9, triangle=False):
        d = self.d
        if np.any(np.abs(d - d.T) > tol) or np.any(np.abs(np.diag(d)) > tol) or d.min() < -tol:
            return False
        if triangle:
            # d[i, k] <= d[i, j] + d[j, k] for all j
            for j in range(d.shape[0]):
                if np.any(d > d[:, j:j + 1] + d[j:j + 1, :] + tol):
                    return False
        return True

    def to_csv(self):
        lines = [f"# grid m={self.m}, zeta={self.zeta!r}"]
        lines += [",".join(repr(float(x)) for x in row) for row in self.d]
        return "\n".join(lines) + "\n"


# tree metrics -----------------------------------------------------------------

@njit(cache=True)
def _tree_metric(h):
    n = h.shape[0]
    d = np.zeros((n, n))
    for i in range(n):
        m = h[i]
        for j in range(i + 1, n):
            if h[j] < m:
                m = h[j]
            d[i, j] = d[j, i] = h[i] + h[j] - 2.0 * m
    return d


def tree_metric(h, zeta=1.0):
    """d_h(s1, s2) = h(s1) + h(s2) - 2 min of h between s1 and s2."""
    h = np.asarray(h, dtype=float)
    return GridPseudoMetric(_tree_metric(h), zeta)


def min_between(h):
    """m_h on the grid: M[i, j] = min of h over [i ^ j, i v j]."""
    h = np.asarray(h, dtype=float)
    return (h[:, None] + h[None, :] - _tree_metric(h)) / 2.0


@njit(cache=True)
def _geodesic_min_metric(parent, depth, w, verts):
    # w_u + w_v - 2 min of w over the tree geodesic between u and v
    k = verts.shape[0]
    d = np.zeros((k, k))
    for a in range(k):
        for c in range(a + 1, k):
            u, v = verts[a], verts[c]
            m = min(w[u], w[v])
            x, y = u, v
            while depth[x] > depth[y]:
                x = parent[x]
                m = min(m, w[x])
            while depth[y] > depth[x]:
                y = parent[y]
                m = min(m, w[y])
            while x != y:
                x = parent[x]
                y = parent[y]
                m = min(m, w[x], w[y])
            d[a, c] = d[c, a] = w[u] + w[v] - 2.0 * m
    return d


def snake_metric_discrete(tree, w, times=None):
    """Snake metric of a tree-indexed labelling w at integer contour times.

    times defaults to all contour times 0..2n; the metric between times k, k'
    only depends on the contour vertices v(k), v(k').
    """
    cv = tree.contour_vertices
    times = np.arange(cv.size) if times is None else np.asarray(times, np.int64)
    w = np.asarray(w, dtype=float)
    d = _geodesic_min_metric(tree.parent, tree.depth, w, cv[times].astype(np.int64))
    return GridPseudoMetric(d, float(2 * tree.n))


@njit(cache=True)
def _snake_metric_paths(W, hi):
    # W[s, r] path values on the r-grid (constant beyond hi[s])
    n = hi.shape[0]
    d = np.zeros((n, n))
    for i in range(n):
        mi = hi[i]
        for j in range(i + 1, n):
            if hi[j] < mi:
                mi = hi[j]
            M = W[i, mi]
            for r in range(mi, hi[i] + 1):
                if W[i, r] < M:
                    M = W[i, r]
            for r in range(mi, hi[j] + 1):
                if W[j, r] < M:
                    M = W[j, r]
            d[i, j] = d[j, i] = W[i, hi[i]] + W[j, hi[j]] - 2.0 * M
    return d


def snake_metric_grid(snake, tol=1e-9):
    """Snake metric of a grid snake with stored paths (see snakes.GridSnake).

    The lifetime is read on the r-grid as hi = round(h / dr); the minimum of
    each path is taken over [m_h, h(s_i)] at that resolution.
    """
    if snake.paths is None:
        raise ValueError("snake has no stored paths")
    W, hi = snake.paths, snake.h_index
    if not snake_property_ok(W, hi, tol):
        raise ValueError("snake property violated")
    return GridPseudoMetric(_snake_metric_paths(W, hi), snake.zeta)


@njit(cache=True)
def _snake_property(W, hi, tol):
    n = hi.shape[0]
    for i in range(n):
        mi = hi[i]
        for j in range(i + 1, n):
            if hi[j] < mi:
                mi = hi[j]
            for r in range(mi + 1):
                if abs(W[i, r] - W[j, r]) > tol:
                    return False
    return True


def snake_property_ok(W, hi, tol=1e-9):
    return bool(_snake_property(W, np.asarray(hi, np.int64), tol))


# four points ------------------------------------------------------------------

@njit(cache=True)
def _four_point(d, idx, tol, maxrec):
    k = idx.shape[0]
    count = 0
    rec = np.zeros((maxrec, 4), np.int64)
    worst = 0.0
    for a in range(k):
        i = idx[a]
        for b in range(a, k):
            j = idx[b]
            for c in range(b, k):
                l = idx[c]
                for e in range(c, k):
                    q = idx[e]
                    s1 = d[i, j] + d[l, q]
                    s2 = d[i, l] + d[j, q]
                    s3 = d[i, q] + d[j, l]
                    # the two largest of the three pairings must agree
                    mx = max(s1, s2, s3)
                    mn = min(s1, s2, s3)
                    mid = s1 + s2 + s3 - mx - mn
                    gap = mx - mid
                    if gap > tol:
                        if count < maxrec:
                            rec[count, 0] = i
                            rec[count, 1] = j
                            rec[count, 2] = l
                            rec[count, 3] = q
                        count += 1
                        if gap > worst:
                            worst = gap
    return count, rec[:min(count, maxrec)], worst


@dataclass(frozen=True)
class FourPointReport:
    violations: int
    examples: np.ndarray
    worst: float
    points_checked: int
    exhaustive: bool

    @property
    def ok(self):
        return self.violations == 0


def four_point_check(d, tol=1e-9, max_exhaustive=101, sample=60, rng=None, maxrec=20):
    """Scan quadruples (with repetitions, so the triangle inequality is
    included) for violations of the four-point inequality.

    Exhaustive when there are at most max_exhaustive points; otherwise all
    quadruples of a random subset of `sample` points.
    """
    D = d.d if isinstance(d, GridPseudoMetric) else np.asarray(d, dtype=float)
    n = D.shape[0]
    if n <= max_exhaustive:
        idx = np.arange(n)
        exhaustive = True
    else:
        rng = np.random.default_rng() if rng is None else rng
        idx = np.sort(rng.choice(n, size=sample, replace=False))
        exhaustive = False
    cnt, rec, worst = _four_point(D, idx.astype(np.int64), float(tol), int(maxrec))
    return FourPointReport(int(cnt), rec, float(worst), int(idx.size), exhaustive)


def unit_square_metric():
    s = np.sqrt(2.0)
    return np.array([[0, 1, s, 1], [1, 0, 1, s], [s, 1, 0, 1], [1, s, 1, 0]], dtype=float)


# moduli and GHP bounds --------------------------------------------------------

def modulus_q(d, eta):
    """max d(s, s') over grid pairs with |s - s'| <= eta."""
    if eta <= 0:
        raise ValueError("eta must be > 0")
    D = d.d
    step = d.zeta / d.m if d.m > 0 else np.inf
    k = min(int(np.floor(eta / step + 1e-9)), d.m)
    out = 0.0
    for lag in range(0, k + 1):
        out = max(out, float(np.diagonal(D, lag).max()))
    return out


def function_modulus(h, zeta, eta):
    h = np.asarray(h, dtype=float)
    m = h.size - 1
    k = min(int(np.floor(eta / (zeta / m) + 1e-9)), m)
    out = 0.0
    for lag in range(1, k + 1):
        out = max(out, float(np.abs(h[lag:] - h[:-lag]).max()))
    return out


def sup_distance(d1, d2):
    if d1.d.shape != d2.d.shape or d1.zeta != d2.zeta:
        raise ValueError("grid mismatch")
    return float(np.abs(d1.d - d2.d).max())


def ghp_upper(d1, d2):
    """Upper bound 3/2 sup|d - d'| on the GHP distance of the coded spaces."""
    return 1.5 * sup_distance(d1, d2)


def scaled_sandwich(delta, a, b):
    """Bounds on the GHP distance after scaling distances by a and masses by b."""
    return min(a, b) * delta, max(a, b) * delta


# Prokhorov -------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteMeasuredSpace:
    dist: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if d.shape != (w.size, w.size) or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("bad measured space")
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "weights", w)


@njit(cache=True)
def _subset_sums(w):
    k = w.shape[0]
    out = np.zeros(1 << k)
    for S in range(1, 1 << k):
        low = S & (-S)
        i = 0
        while (1 << i) != low:
            i += 1
        out[S] = out[S ^ low] + w[i]
    return out


@njit(cache=True)
def _prok_gap(nb, smu, snu):
    # max over nonempty K of max(mu(K) - nu(N(K)), nu(K) - mu(N(K)))
    k = nb.shape[0]
    N = np.zeros(1 << k, np.int64)
    g = 0.0
    for S in range(1, 1 << k):
        low = S & (-S)
        i = 0
        while (1 << i) != low:
            i += 1
        N[S] = N[S ^ low] | nb[i]
        a = smu[S] - snu[N[S]]
        b = snu[S] - smu[N[S]]
        if a > g:
            g = a
        if b > g:
            g = b
    return g


def prokhorov(dist, mu, nu):
    """Exact Prokhorov distance between two measures on a finite metric space.

    With open neighbourhoods K^eps, the condition is constant for eps in
    (r_j, r_{j+1}] (r_j the sorted distinct distances, r_0 = 0), where K^eps
    is the closed r_j-neighbourhood; so the distance is min_j max(r_j, g_j)
    with g_j the largest subset defect at radius r_j.
    """
    dist = np.asarray(dist, dtype=float)
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    k = mu.size
    if k > MAX_PROKHOROV_POINTS:
        raise ValueError(f"at most {MAX_PROKHOROV_POINTS} points")
    if k == 0:
        return 0.0
    smu, snu = _subset_sums(mu), _subset_sums(nu)
    radii = np.unique(np.concatenate([[0.0], dist.ravel()]))
    best = np.inf
    bits = (1 << np.arange(k)).astype(np.int64)
    for r in radii:
        if r >= best:
            break
        nb = ((dist <= r + 1e-12) * bits[None, :]).sum(axis=1).astype(np.int64)
        g = _prok_gap(nb, smu, snu)
        best = min(best, max(r, g))
    return float(best)


def prokhorov_spaces(A, B):
    """Prokhorov distance between the weights of two spaces on the same points."""
    if not np.allclose(A.dist, B.dist):
        raise ValueError("spaces must share the metric")
    return prokhorov(A.dist, A.weights, B.weights)


def coupling_bound(dist, mu, nu, plan, tol=1e-9):
    """Upper bound on the Prokhorov distance from a coupling.

    plan is a list of (i, j, mass) whose marginals must be mu and nu (up to
    tol); returns the largest distance carried by the plan.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    p = np.asarray(plan, dtype=float).reshape(-1, 3)
    i = p[:, 0].astype(np.int64)
    j = p[:, 1].astype(np.int64)
    m1 = np.bincount(i, p[:, 2], minlength=mu.size)
    m2 = np.bincount(j, p[:, 2], minlength=nu.size)
    if np.abs(m1 - mu).max() > tol or np.abs(m2 - nu).max() > tol:
        raise ValueError("plan marginals do not match")
    return float(np.max(np.asarray(dist)[i, j])) if p.shape[0] else 0.0


def hausdorff(dist, A, B):
    """Hausdorff distance between index sets A and B of a finite metric space."""
    D = np.asarray(dist, dtype=float)[np.ix_(A, B)]
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


# quotient graph --------------------------------------------------------------

def quotient_graph(d, tol=1e-9):
    """Classes of grid points at distance <= tol and their grid adjacency.

    Returns (number of classes, {degree: count}, class label per grid point).
    Degrees count distinct neighbouring classes reached by consecutive grid
    points; they are an exploratory statistic.
    """
    D = d.d
    n = D.shape[0]
    parent = np.arange(n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    ii, jj = np.nonzero(np.triu(D <= tol, 1))
    for a, b in zip(ii, jj):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(x) for x in range(n)])
    _, lab = np.unique(roots, return_inverse=True)
    ncls = int(lab.max()) + 1
    nbrs = [set() for _ in range(ncls)]
    for x in range(n - 1):
        a, b = lab[x], lab[x + 1]
        if a != b:
            nbrs[a].add(b)
            nbrs[b].add(a)
    hist = {}
    for s in nbrs:
        hist[len(s)] = hist.get(len(s), 0) + 1
    return ncls, dict(sorted(hist.items())), lab
