"""Finite rooted ordered trees and their codings.

Vertices are the integers 0..n-1 in depth-first (lexicographic) order, with the
root at 0.  A tree is entirely described by its offspring counts in that order.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit


class InvalidPath(ValueError):
    pass


@njit(cache=True)
def _parent_depth(off):
    # the last vertex still waiting for children sits on top of the stack
    n = off.shape[0]
    parent = np.full(n, -1, np.int64)
    depth = np.zeros(n, np.int64)
    stack = np.empty(n + 1, np.int64)
    rem = np.empty(n + 1, np.int64)
    top = -1
    for k in range(n):
        if k > 0:
            if top < 0:
                return parent, depth, False
            p = stack[top]
            parent[k] = p
            depth[k] = depth[p] + 1
            rem[top] -= 1
            if rem[top] == 0:
                top -= 1
        if off[k] > 0:
            top += 1
            stack[top] = k
            rem[top] = off[k]
    return parent, depth, top == -1


@njit(cache=True)
def _subtree_sizes(parent):
    n = parent.shape[0]
    size = np.ones(n, np.int64)
    for v in range(n - 1, 0, -1):
        size[parent[v]] += size[v]
    return size


@njit(cache=True)
def _contour_vertices(off, child_start, children):
    n = off.shape[0]
    out = np.zeros(2 * n + 1, np.int64)
    nxt = np.zeros(n, np.int64)
    parent = np.full(n, -1, np.int64)
    cur = 0
    for k in range(1, 2 * n - 1):
        if nxt[cur] < off[cur]:
            c = children[child_start[cur] + nxt[cur]]
            nxt[cur] += 1
            parent[c] = cur
            cur = c
        else:
            cur = parent[cur]
        out[k] = cur
    # times 2n-1 and 2n stay at the root
    return out


class OrderedTree:
    """Rooted ordered tree stored as offspring counts in DFS order."""

    def __init__(self, offspring, validate=True):
        off = np.ascontiguousarray(offspring, dtype=np.int64)
        if off.ndim != 1 or off.size == 0:
            raise InvalidPath("offspring must be a nonempty 1d sequence")
        if validate:
            if off.min() < 0:
                raise InvalidPath("negative offspring count")
            if int(off.sum()) != off.size - 1:
                raise InvalidPath("offspring counts must sum to n - 1")
        par, dep, ok = _parent_depth(off)
        if not ok:
            raise InvalidPath("offspring sequence is not a DFS tree")
        par.flags.writeable = False
        dep.flags.writeable = False
        off.flags.writeable = False
        self.offspring = off
        self.parent = par
        self.depth = dep

    @property
    def n(self):
        return self.offspring.shape[0]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        return isinstance(other, OrderedTree) and np.array_equal(self.offspring, other.offspring)

    def __hash__(self):
        return hash(self.offspring.tobytes())

    def __repr__(self):
        if self.n <= 12:
            return f"OrderedTree({self.offspring.tolist()})"
        return f"OrderedTree(n={self.n})"

    @cached_property
    def child_start(self):
        cs = np.zeros(self.n + 1, np.int64)
        np.cumsum(self.offspring, out=cs[1:])
        return cs

    @cached_property
    def children(self):
        # vertices are visited in DFS order, so a stable sort by parent keeps birth order
        order = np.argsort(self.parent[1:], kind="stable") + 1
        return order.astype(np.int64)

    def children_of(self, v):
        return self.children[self.child_start[v]:self.child_start[v + 1]]

    @cached_property
    def first_child(self):
        fc = np.where(self.offspring > 0, np.arange(self.n) + 1, -1)
        return fc.astype(np.int64)

    @cached_property
    def next_sibling(self):
        ns = np.full(self.n, -1, np.int64)
        ch, cs = self.children, self.child_start
        for v in range(self.n):
            kids = ch[cs[v]:cs[v + 1]]
            ns[kids[:-1]] = kids[1:]
        return ns

    @cached_property
    def subtree_size(self):
        return _subtree_sizes(self.parent)

    @cached_property
    def contour_vertices(self):
        """v(0..2n): vertex visited at each integer time of the contour."""
        return _contour_vertices(self.offspring, self.child_start, self.children)

    def lukasiewicz(self):
        return self.offspring - 1

    def ancestors(self, v):
        """Ancestors of v from v itself up to the root."""
        out = []
        while v >= 0:
            out.append(v)
            v = self.parent[v]
        return np.array(out, dtype=np.int64)

    def height(self):
        return int(self.depth.max())

    def to_line(self):
        return " ".join(str(int(k)) for k in self.offspring)

    @classmethod
    def from_line(cls, line):
        return cls([int(x) for x in line.split()])


def single_node():
    return OrderedTree([0])


def height_process(tree):
    """H_0..H_n with H_k the depth of the k-th vertex and H_n = 0."""
    h = np.zeros(tree.n + 1, np.int64)
    h[:-1] = tree.depth
    return h


def contour_process(tree):
    """C_0..C_2n: depth of the vertex visited at each integer contour time."""
    return tree.depth[tree.contour_vertices]


def contour_at(C, s):
    """Linear interpolation of an integer-time contour at real times s."""
    C = np.asarray(C, dtype=float)
    return np.interp(s, np.arange(C.size), C)


def tree_from_lukasiewicz(steps):
    x = np.asarray(steps, dtype=np.int64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidPath("empty path")
    if x.min() < -1:
        raise InvalidPath("steps must be >= -1")
    s = np.cumsum(x)
    if s[-1] != -1 or (s.size > 1 and s[:-1].min() < 0):
        raise InvalidPath("partial sums must stay >= 0 and end at -1")
    return OrderedTree(x + 1, validate=False)


def cycle_rotation(x):
    """Start index of the rotation making a sequence of offspring counts a tree.

    x must sum to len(x) - 1.  The rotation starts right after the first place
    where the partial sums of x_i - 1 attain their minimum.
    """
    s = np.cumsum(np.asarray(x, dtype=np.int64) - 1)
    return (int(np.argmin(s)) + 1) % s.size


def rotate_to_tree(x):
    x = np.asarray(x, dtype=np.int64)
    return OrderedTree(np.roll(x, -cycle_rotation(x)), validate=False)


# Pointed trees ---------------------------------------------------------------

@dataclass(frozen=True)
class PointedTree:
    """Finite window of a tree carrying a distinguished vertex.

    The stored tree is rooted at the deepest recorded ancestor of the point, so
    spine_depth equals the depth of the point in `tree`.  The point sits at
    height point_height and the root at point_height - spine_depth.  By default
    the root is at height 0; centred trees (as produced by scc_plus and the
    pointed GW sampler) have the point at height 0.  `no_successor` is set by
    scc_plus when the point had no successor.
    """
    tree: OrderedTree
    point: int
    no_successor: bool = False
    point_height: int = None

    def __post_init__(self):
        if not 0 <= self.point < self.tree.n:
            raise ValueError("point is not a vertex")
        if self.point_height is None:
            object.__setattr__(self, "point_height", int(self.tree.depth[self.point]))

    @property
    def spine_depth(self):
        return int(self.tree.depth[self.point])

    def heights(self):
        return self.tree.depth - self.spine_depth + self.point_height

    def spine(self):
        """Ancestors of the point, point first."""
        return self.tree.ancestors(self.point)

    def key(self):
        return (tuple(int(k) for k in self.tree.offspring), int(self.point), int(self.point_height))

    def __eq__(self, other):
        return isinstance(other, PointedTree) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


CEMETERY = None    # the value returned when a window misses the point's lineage


def _restrict(tree, keep):
    """Subtree induced by a parent-closed boolean mask, in DFS order."""
    idx = np.flatnonzero(keep)
    kept_children = np.bincount(tree.parent[idx[1:]], minlength=tree.n)
    return OrderedTree(kept_children[idx], validate=False), idx


def truncate_pointed(pt, p, q=np.inf):
    """The window [t]_p^q: descendants of the point's ancestor at height p, cut
    above height q.  A point above q is replaced by its ancestor at height q.
    Returns CEMETERY when (p, q] does not meet the heights
    (h - spine_depth, h] of the recorded lineage, h the point's height.
    """
    if not p < q:
        raise ValueError("need p < q")
    top = pt.point_height
    bottom = top - pt.spine_depth
    if not max(p, bottom) < min(q, top):
        return CEMETERY
    tree = pt.tree
    spine = pt.spine()
    root = 0 if p <= bottom else int(spine[top - p])
    h = pt.heights()
    lo, hi = root, root + int(tree.subtree_size[root])
    keep = np.zeros(tree.n, bool)
    keep[lo:hi] = h[lo:hi] <= q
    new, idx = _restrict(tree, keep)
    point, ph = pt.point, top
    if q < top:
        point, ph = int(spine[top - int(q)]), int(q)
    return PointedTree(new, int(np.searchsorted(idx, point)), pt.no_successor, ph)


def scc_plus(pt):
    """Move the point to its lexicographic successor and keep the right part:
    the new point's ancestors and every vertex after it.
    """
    tree = pt.tree
    u = pt.point + 1
    if u >= tree.n:
        return PointedTree(tree, pt.point, True, pt.point_height)
    keep = np.zeros(tree.n, bool)
    keep[u:] = True
    keep[tree.ancestors(u)] = True
    new, idx = _restrict(tree, keep)
    return PointedTree(new, int(np.searchsorted(idx, u)), False, 0)
