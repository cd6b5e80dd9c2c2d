"""Discrete snakes of tree-indexed walks, grid Brownian snakes and cacti, and
the measure comparisons between contour, occupation and counting measures.
"""
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import brw, metrics
from .tree_core import contour_process


# discrete snake --------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteSnake:
    """Contour lifetime C_k and endpoint V_k = label of the contour vertex v(k),
    k = 0..2n.  Paths are rebuilt from ancestors on demand.
    """
    tree: object
    labels: np.ndarray
    vertices: np.ndarray
    lifetime: np.ndarray
    endpoint: np.ndarray

    @property
    def zeta(self):
        return 2 * self.tree.n

    def path(self, k):
        """w_k(r) for r = 0..C_k: labels of the ancestors of v(k), root first."""
        anc = self.tree.ancestors(int(self.vertices[k]))[::-1]
        return self.labels[anc]

    def endpoint_at(self, s):
        return np.interp(s, np.arange(self.endpoint.size), self.endpoint.astype(float))


def spatial_contour(tree, hb=None, labels=None):
    """Discrete snake of a height BRW (or of any per-vertex labels)."""
    if labels is None:
        labels = hb.h
    labels = np.asarray(labels)
    cv = tree.contour_vertices
    return DiscreteSnake(tree, labels, cv, contour_process(tree), labels[cv])


@dataclass(frozen=True)
class ContourIdentity:
    max_defect: int
    violations: int
    odd_gaps: int
    pairs: int


def contour_identity_check(hb, trie):
    """Compare trie distances of the contour endpoints with the snake metric of
    the heights at all integer contour times.

    Free trie: max |d_trie - d_snake| (zero expected).  Contracted trie: counts
    pairs with d_trie > d_snake and with odd difference (zero expected).
    """
    t = hb.tree
    verts = t.contour_vertices[:2 * t.n]
    A, B = brw.pairwise_distances(hb, trie, verts)
    diff = B - A
    return ContourIdentity(int(np.abs(diff).max()), int(np.sum(diff < 0)), int(np.sum(diff % 2 != 0)),
                           int(verts.size * (verts.size - 1) // 2))


def vertex_identity_check(hb, trie):
    A, B = brw.pairwise_distances(hb, trie)
    return int(np.abs(B - A).max())


# real-time contour points ----------------------------------------------------

@njit(cache=True)
def _nd(npar, ndep, x, y):
    return brw._node_distance(npar, ndep, x, y)


@njit(cache=True)
def _point(pos, s):
    # contour position at real time s: (start node, end node, fraction)
    K = pos.shape[0] - 1
    if s >= K:
        return pos[K], pos[K], 0.0
    k = int(math.floor(s))
    f = s - k
    a, b = pos[k], pos[k + 1]
    if a == b or f == 0.0:
        return a, a, 0.0
    return a, b, f


@njit(cache=True)
def _pt_dist(npar, ndep, a, b, f, c, e, g):
    if f == 0.0 and g == 0.0:
        return float(_nd(npar, ndep, a, c))
    if (a == c and b == e):
        return abs(f - g)
    if (a == e and b == c):
        return abs(f - (1.0 - g))
    if f == 0.0:
        return min(g + _nd(npar, ndep, a, c), 1.0 - g + _nd(npar, ndep, a, e))
    if g == 0.0:
        return min(f + _nd(npar, ndep, a, c), 1.0 - f + _nd(npar, ndep, b, c))
    d1 = f + g + _nd(npar, ndep, a, c)
    d2 = f + 1.0 - g + _nd(npar, ndep, a, e)
    d3 = 1.0 - f + g + _nd(npar, ndep, b, c)
    d4 = 2.0 - f - g + _nd(npar, ndep, b, e)
    return min(d1, d2, d3, d4)


@njit(cache=True)
def _dcont(npar, ndep, pos, s, t):
    a, b, f = _point(pos, s)
    c, e, g = _point(pos, t)
    return _pt_dist(npar, ndep, a, b, f, c, e, g)


@njit(cache=True)
def _contour_modulus(npar, ndep, pos, eta):
    # the distance along two edges is affine in each time (or |f - g| on a
    # shared edge), so the max over the band |s - t| <= eta is attained at
    # integer times or at pairs (k, k + eta)
    K = pos.shape[0] - 1
    best = 0.0
    L = int(math.floor(eta + 1e-12))
    for k in range(K + 1):
        for j in range(k, min(K, k + L) + 1):
            d = _dcont(npar, ndep, pos, float(k), float(j))
            if d > best:
                best = d
        if k + eta <= K:
            d = _dcont(npar, ndep, pos, float(k), k + eta)
            if d > best:
                best = d
        if k - eta >= 0:
            d = _dcont(npar, ndep, pos, k - eta, float(k))
            if d > best:
                best = d
    return best


def contour_positions(tree, trie):
    return trie.node_of[tree.contour_vertices].astype(np.int64)


def contour_modulus(tree, trie, eta):
    """q(d_cont, eta) over real times in [0, 2n], exact."""
    pos = contour_positions(tree, trie)
    return float(_contour_modulus(trie.node_parent, trie.node_depth, pos, float(eta)))


def d_cont(tree, trie, s, t):
    pos = contour_positions(tree, trie)
    return float(_dcont(trie.node_parent, trie.node_depth, pos, float(s), float(t)))


# measures on the range ------------------------------------------------------

def _node_matrix(trie, nodes):
    k = len(nodes)
    D = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            D[i, j] = D[j, i] = brw._node_distance(trie.node_parent, trie.node_depth, nodes[i], nodes[j])
    return D


def _rho(tree):
    """rho(k) for k < 2n: the deeper of v(k), v(k+1); the root at the end."""
    cv = tree.contour_vertices
    n2 = 2 * tree.n
    d = tree.depth
    rho = np.zeros(n2, np.int64)
    a, b = cv[:n2 - 2], cv[1:n2 - 1]
    rho[:n2 - 2] = np.where(d[a] > d[b], a, b) if n2 > 2 else rho[:0]
    return rho


def measure_space(tree, trie):
    """Range nodes plus edge midpoints (one per child node used by the
    contour), with the contour, occupation and interpolated contour masses.

    The interpolated contour measure puts the mass of each unit contour step on
    the midpoint of the edge it runs along; it is within 1/2 of the exact
    length measure in the Prokhorov distance.
    """
    n = tree.n
    pos = contour_positions(tree, trie)
    nodes = np.unique(trie.node_of)
    idx = {int(x): i for i, x in enumerate(nodes)}
    steps = [(int(pos[k]), int(pos[k + 1])) for k in range(2 * n)]
    children = sorted({max(a, b, key=lambda x: trie.node_depth[x]) for a, b in steps if a != b})
    mid = {c: len(nodes) + i for i, c in enumerate(children)}
    K = len(nodes) + len(children)
    Dn = _node_matrix(trie, list(nodes) + [int(trie.node_parent[c]) for c in children])
    k0 = len(nodes)
    D = np.zeros((K, K))
    D[:k0, :k0] = Dn[:k0, :k0]
    for i, c in enumerate(children):
        ci, pi = idx[c], k0 + i    # Dn row k0+i is the parent of c
        for x in range(k0):
            D[k0 + i, x] = D[x, k0 + i] = min(Dn[ci, x], Dn[pi, x]) + 0.5
        for j, c2 in enumerate(children[:i]):
            cj, pj = idx[c2], k0 + j
            v = min(Dn[ci, cj], Dn[ci, pj], Dn[pi, cj], Dn[pi, pj]) + 1.0
            D[k0 + i, k0 + j] = D[k0 + j, k0 + i] = v
    cont = np.zeros(K)
    occ2 = np.zeros(K)
    tcont = np.zeros(K)
    for k in range(2 * n):
        cont[idx[int(pos[k])]] += 1
    for v in range(n):
        occ2[idx[int(trie.node_of[v])]] += 2
    for a, b in steps:
        if a == b:
            tcont[idx[a]] += 1
        else:
            tcont[mid[max(a, b, key=lambda x: trie.node_depth[x])]] += 1
    return D, cont, occ2, tcont, k0


@dataclass(frozen=True)
class MeasureReport:
    hausdorff: float
    cont_vs_interp: float
    cont_vs_occ: float
    interp_vs_occ: float
    exact: bool
    rho_marginal_ok: bool

    def ok(self):
        return (self.hausdorff <= 1 and self.cont_vs_interp <= 1 and self.cont_vs_occ <= 1
                and self.interp_vs_occ <= 2 and self.rho_marginal_ok)


def measure_comparisons(tree, trie, exact=None):
    """Distances between the contour measure, its interpolation and twice the
    occupation measure, with the bounds 1, 1, 1, 2.

    exact: brute-force Prokhorov (needs at most 15 support points) or, when
    False, the largest displacement of the couplings k -> (V_k, V_(k+1/2)) and
    k -> (Y_rho(k), V_k), which bound the Prokhorov distances from above.
    """
    n = tree.n
    rho = _rho(tree)
    rho_ok = bool(np.all(np.bincount(rho, minlength=n) == 2))
    pos = contour_positions(tree, trie)
    if exact is None:
        exact = trie.size + trie.size - 1 <= metrics.MAX_PROKHOROV_POINTS
    if exact:
        D, cont, occ2, tcont, k0 = measure_space(tree, trie)
        haus = metrics.hausdorff(D, np.arange(k0), np.arange(D.shape[0]))
        a = metrics.prokhorov(D, cont, tcont)
        b = metrics.prokhorov(D, cont, occ2)
        c = metrics.prokhorov(D, tcont, occ2)
        return MeasureReport(haus, a, b, c, True, rho_ok)
    npar, ndep = trie.node_parent, trie.node_depth
    a = 0.0
    for k in range(2 * n):
        a = max(a, float(_dcont(npar, ndep, pos, float(k), k + 0.5)))
    b = 0.0
    for k in range(2 * n):
        b = max(b, float(brw._node_distance(npar, ndep, trie.node_of[rho[k]], pos[k])))
    return MeasureReport(0.5 if n > 1 else 0.0, a, b, a + b, False, rho_ok)


@dataclass(frozen=True)
class LoibachReport:
    alpha: float
    beta: float
    andrae_rhs: float
    prok: float
    prok_rhs: float
    exact: bool

    def ok(self, tol=1e-9):
        return self.beta <= self.andrae_rhs + tol and self.prok <= self.prok_rhs + tol


def loibach_quantities(tree, trie, c):
    n = tree.n
    R = brw.range_profile(trie)
    i = np.arange(1, n + 1)
    alpha = float(np.max(np.abs(R - 2 * c * i)))
    pos = contour_positions(tree, trie)[:2 * n]
    _, first = np.unique(pos, return_index=True)
    new = np.zeros(2 * n, np.int64)
    new[first] = 1
    J = np.cumsum(new)                   # J(k) for k = 1..2n
    k = np.arange(1, 2 * n + 1)
    beta = float(max(np.max(np.abs(J - c * k)), np.max(np.abs(J - c * (k - 1)))))
    return alpha, beta, first


def loibach_check(tree, trie, c=None, exact=None):
    """Check beta <= alpha + 3c + c max C, and the Prokhorov bound between the
    occupation measure and the rescaled counting measure.
    """
    n = tree.n
    nprime = trie.size if trie.b is None else int(np.unique(trie.node_of).size)
    if c is None:
        c = nprime / (2.0 * n)
    if c <= 0:
        raise ValueError("c must be > 0")
    alpha, beta, first = loibach_quantities(tree, trie, c)
    rhs1 = alpha + 3 * c + c * float(tree.depth.max())
    q = contour_modulus(tree, trie, (4 * beta + 1) / c)
    rhs2 = 1.0 + 2.0 * q
    nodes = np.unique(trie.node_of)
    if exact is None:
        exact = nodes.size <= metrics.MAX_PROKHOROV_POINTS
    if exact:
        D = _node_matrix(trie, list(nodes))
        occ = np.bincount(np.searchsorted(nodes, trie.node_of), minlength=nodes.size).astype(float)
        cnt = np.full(nodes.size, n / nodes.size)
        prok = metrics.prokhorov(D, occ, cnt)
    else:
        prok = _loibach_coupling(tree, trie, first, nprime)
    return LoibachReport(alpha, beta, rhs1, prok, rhs2, bool(exact))


def _loibach_coupling(tree, trie, first, nprime):
    # largest displacement of s -> (V_floor(s), Z_ceil(n' s / 2n)) plus the
    # displacement 1 of the contour/occupation coupling
    n = tree.n
    pos = contour_positions(tree, trie)
    Z = pos[np.sort(first)]             # Z_i = position first seen at the i-th new time
    npar, ndep = trie.node_parent, trie.node_depth
    br = np.unique(np.concatenate([np.arange(0, 2 * n + 1), np.arange(0, nprime + 1) * (2.0 * n / nprime)]))
    worst = 0.0
    for lo, hi in zip(br[:-1], br[1:]):
        s = 0.5 * (lo + hi)
        k = int(math.floor(s))
        i = int(math.ceil(nprime * s / (2.0 * n)))
        worst = max(worst, float(brw._node_distance(npar, ndep, pos[k], Z[i - 1])))
    b = 0.0
    rho = _rho(tree)
    for k in range(2 * n):
        b = max(b, float(brw._node_distance(npar, ndep, trie.node_of[rho[k]], pos[k])))
    return b + worst


# continuum objects on a grid --------------------------------------------------

def brownian_excursion(m, rng):
    """Normalised Brownian excursion on the grid k/m, k = 0..m, by Vervaat's
    transform of a Gaussian bridge (rotation at its minimum).
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    z = rng.standard_normal(m) / math.sqrt(m)
    S = np.concatenate([[0.0], np.cumsum(z)])
    B = S - np.arange(m + 1) / m * S[-1]
    tau = int(np.argmin(B[:-1]))
    e = np.concatenate([B[tau:-1], B[:tau + 1]]) - B[tau]
    e[0] = e[-1] = 0.0
    return e


def stable_height_excursion_h2(m, rng):
    """Limit height excursion for gamma = 2 (Laplace exponent lambda^2):
    sqrt(2) times the normalised Brownian excursion."""
    return math.sqrt(2.0) * brownian_excursion(m, rng)


@dataclass(frozen=True)
class GridSnake:
    zeta: float
    h: np.ndarray
    dr: float
    h_index: np.ndarray
    endpoint: np.ndarray
    paths: np.ndarray = None
    reflected: bool = False

    @property
    def m(self):
        return self.h.size - 1

    def to_csv(self):
        s = np.linspace(0, self.zeta, self.m + 1)
        rows = ["s,h,w_hat"] + [f"{a!r},{b!r},{c!r}" for a, b, c in zip(s, self.h, self.endpoint)]
        return "\n".join(rows) + "\n"


@njit(cache=True)
def _snake_build(hi, z, store, J):
    n = hi.shape[0]
    cur = np.zeros(J + 1)
    out = np.zeros(n)
    paths = np.zeros((n if store else 1, J + 1))
    p = 0
    for k in range(n):
        if k > 0:
            mi = min(hi[k - 1], hi[k])
            for r in range(mi + 1, hi[k] + 1):
                cur[r] = cur[r - 1] + z[p]
                p += 1
        out[k] = cur[hi[k]]
        if store:
            paths[k, :hi[k] + 1] = cur[:hi[k] + 1]
            paths[k, hi[k] + 1:] = cur[hi[k]]
    return out, paths


def brownian_snake_given_h(h, rng, zeta=1.0, dr=None, store_paths=True, reflected=False):
    """Brownian snake with lifetime h on the grid, paths on an r-grid of step dr.

    Consecutive grid times share their paths up to the smaller lifetime; above
    it fresh N(0, dr) increments are appended.  The reflected snake is the
    absolute value of every path.
    """
    h = np.asarray(h, dtype=float)
    m = h.size - 1
    if np.any(h < 0):
        raise ValueError("lifetime must be >= 0")
    if dr is None:
        dr = zeta / m ** 2
    hi = np.rint(h / dr).astype(np.int64)
    hi[0] = 0
    total = int(np.sum(np.maximum(np.diff(hi), 0)))
    z = rng.standard_normal(total) * math.sqrt(dr)
    out, paths = _snake_build(hi, z, bool(store_paths), int(hi.max()))
    if reflected:
        out = np.abs(out)
        paths = np.abs(paths)
    return GridSnake(float(zeta), h, float(dr), hi, out, paths if store_paths else None, bool(reflected))


def cactus_metric(snake):
    """Snake metric of a grid snake; for a reflected snake this is the
    reflected cactus metric."""
    return metrics.snake_metric_grid(snake)


def rescale_snake(snake, alpha, a):
    """(h, w) -> (alpha h, a w): the snake metric is multiplied by a."""
    paths = None if snake.paths is None else a * snake.paths
    return GridSnake(snake.zeta, alpha * snake.h, alpha * snake.dr, snake.h_index, a * snake.endpoint, paths,
                     snake.reflected)


def path_modulus(snake, eta):
    """omega_eta(w) and omega_eta(w_hat) on the grid, paths in sup norm."""
    W, e = snake.paths, snake.endpoint
    m = snake.m
    k = min(int(math.floor(eta / (snake.zeta / m) + 1e-9)), m)
    ww = we = 0.0
    for lag in range(1, k + 1):
        ww = max(ww, float(np.abs(W[lag:] - W[:-lag]).max()))
        we = max(we, float(np.abs(e[lag:] - e[:-lag]).max()))
    return ww, we
