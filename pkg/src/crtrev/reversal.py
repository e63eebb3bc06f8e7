"""Tree and forest reversal, and the ancestor/descendant counts ``M_s^t``.

Reversal re-roots a tree at its top: a graft ``(u, sub)`` on a spine of
height ``h`` is re-attached at ``h - u - H(sub)``, the spine point level
with the graft's old top, and the graft itself is reversed recursively.
Every segment keeps its length and the segment ``[b, T]`` (absolute
heights) becomes ``[H - T, H - b]``.
"""

from __future__ import annotations

import numpy as np

from crtrev.tree_core import ROOT_ONLY, Forest, SpineTree, Tree, segments


def reverse(t: Tree) -> Tree:
    """The reversed tree; an involution on valid trees."""
    if t is ROOT_ONLY or not t.grafts:
        return t
    h = t.height
    return SpineTree(h, tuple((h - u - s.height, reverse(s)) for u, s in t.grafts))


def reverse_n(t: Tree, n: int) -> Tree:
    """Reversal with graft recursion truncated at depth ``n``."""
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n!r}")
    if t is ROOT_ONLY or not t.grafts:
        return t
    h = t.height
    if n == 0:
        return SpineTree(h)
    return SpineTree(h, tuple((h - u - s.height, reverse_n(s, n - 1)) for u, s in t.grafts))


def reverse_broken(t: Tree) -> Tree:
    """Deliberately wrong reversal (attach at ``h - u``) for mutation tests.

    The output generally violates the domination invariant.
    """
    if t is ROOT_ONLY or not t.grafts:
        return t
    h = t.height
    return SpineTree(h, tuple((h - u, reverse_broken(s)) for u, s in t.grafts))


def reversed_roots(roots, heights) -> np.ndarray:
    """Root times of the reversed forest: ``-h_i - H(t_i)``."""
    return -np.asarray(roots, dtype=float) - np.asarray(heights, dtype=float)


def reverse_forest(f: Forest) -> Forest:
    """Reverse every tree and move its root to ``-h_i - H(t_i)``.

    The recorded window is ``[-b, -a]`` widened downwards to cover reversed
    roots below ``-b``; ``core`` is the mirror of the input's core, so trees
    that came from the input's edge stay flagged by ``edge_trees``.
    """
    a, b = f.window
    ca, cb = f.core
    trees = tuple((-h - t.height, reverse(t)) for h, t in f.trees)
    lo = min([-b] + [h for h, _ in trees])
    return Forest((lo, -a), trees, core=(-cb, -ca))


def forest_segments(f: Forest) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Absolute ``(bottoms, tops, is_spine)`` of all tree segments of ``f``."""
    bottoms, tops, spine = [], [], []
    for h, t in f.trees:
        b, tp = segments(t)
        bottoms.append(b + h)
        tops.append(tp + h)
        flag = np.zeros(len(b), dtype=bool)
        flag[0] = True
        spine.append(flag)
    if not bottoms:
        empty = np.zeros(0)
        return empty, empty, np.zeros(0, dtype=bool)
    return np.concatenate(bottoms), np.concatenate(tops), np.concatenate(spine)


def m_counts(f: Forest, s, t) -> np.ndarray:
    """Vectorised ``M_s^t`` over broadcast arrays ``s < t``.

    A point at forest height ``s`` has descendants at ``t`` exactly when the
    top of its segment reaches ``t``, so ``M_s^t`` counts the segments whose
    height range covers ``[s, t]``. Tree spines include their root
    (closed below), grafts do not, as in :func:`crossing_count`.
    """
    s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    if np.any(s >= t):
        raise ValueError("m_count requires s < t")
    bottoms, tops, spine = forest_segments(f)
    sv = s[..., None]
    tv = t[..., None]
    below = np.where(spine, bottoms <= sv, bottoms < sv)
    return np.count_nonzero(below & (tops >= tv), axis=-1)


def m_count(f: Forest, s: float, t: float) -> int:
    """Number of points at height ``s`` with descendants at height ``t``."""
    return int(m_counts(f, s, t))


def tmrca(f: Forest, t: float) -> float | None:
    """Time back to the oldest tree alive at ``t``, or None if none is alive."""
    alive = [h for h, tr in f.trees if h <= t <= h + tr.height]
    if not alive:
        return None
    return t - min(alive)
