"""Finite binary real trees in spine-decomposed form.

A :class:`SpineTree` is the segment ``[root, top]`` of length ``height``
together with subtrees grafted at heights ``0 < attach < height`` along it.
Every grafted subtree ends strictly below the top of the segment carrying it,
so the top of each segment is the unique highest point of the subtree above
any point of that segment.

All operators here are pure functions on immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np


@dataclass(frozen=True, slots=True)
class SpineTree:
    """Spine of length ``height`` with ``grafts = ((attach, subtree), ...)``."""

    height: float
    grafts: tuple = ()

    def __post_init__(self):
        if type(self.height) is not float:
            object.__setattr__(self, "height", float(self.height))
        if type(self.grafts) is not tuple:
            object.__setattr__(
                self, "grafts", tuple((float(u), s) for u, s in self.grafts)
            )

    def __repr__(self):
        return f"SpineTree({self.height!r}, {list(self.grafts)!r})"


class _RootOnly:
    """The tree reduced to its root; what trimming leaves when nothing survives."""

    __slots__ = ()
    _instance = None

    height = 0.0
    grafts = ()

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ROOT_ONLY"

    def __reduce__(self):
        return (_RootOnly, ())


ROOT_ONLY = _RootOnly()

Tree = Union[SpineTree, _RootOnly]


@dataclass(frozen=True, slots=True)
class TreeNodeRef:
    """A point of a tree: graft indices down to a segment, then a height on it."""

    path: tuple = ()
    offset: float = 0.0


@dataclass(frozen=True, slots=True)
class Violation:
    kind: str  # "range", "domination" or "duplicate-height"
    path: tuple
    detail: str


class InvalidTreeError(ValueError):
    def __init__(self, violation: Violation):
        self.violation = violation
        super().__init__(
            f"{violation.kind} violation at path {list(violation.path)}: {violation.detail}"
        )


def _local_violation(t: SpineTree, path: tuple) -> Violation | None:
    h = t.height
    if not (math.isfinite(h) and h > 0.0):
        return Violation("range", path, f"spine height {h!r} is not positive")
    attaches = set()
    tops = set()
    for i, (u, sub) in enumerate(t.grafts):
        if not isinstance(sub, SpineTree):
            return Violation("range", path + (i,), f"graft {i} is not a SpineTree")
        if not (0.0 < u < h):
            return Violation("range", path, f"graft {i} attach {u!r} outside (0, {h!r})")
        top = u + sub.height
        if not top < h:
            return Violation(
                "domination", path, f"graft {i} reaches {top!r}, not below spine top {h!r}"
            )
        if u in attaches:
            return Violation("duplicate-height", path, f"attach height {u!r} repeated")
        if top in tops:
            return Violation("duplicate-height", path, f"graft top {top!r} repeated")
        attaches.add(u)
        tops.add(top)
    return None


def find_violation(t: Tree) -> Violation | None:
    """First invariant violation in pre-order, or None for a valid tree."""
    if t is ROOT_ONLY:
        return None
    if not isinstance(t, SpineTree):
        return Violation("range", (), f"not a tree: {t!r}")
    stack = [(t, ())]
    while stack:
        node, path = stack.pop()
        bad = _local_violation(node, path)
        if bad is not None:
            return bad
        for i in range(len(node.grafts) - 1, -1, -1):
            stack.append((node.grafts[i][1], path + (i,)))
    return None


def is_valid(t: Tree) -> bool:
    return find_violation(t) is None


def validate(t: Tree) -> Tree:
    """Return ``t`` unchanged if it satisfies every invariant, else raise."""
    bad = find_violation(t)
    if bad is not None:
        raise InvalidTreeError(bad)
    return t


def graft(base: SpineTree, at: Sequence[tuple[float, SpineTree]]) -> SpineTree:
    """Graft each ``(u, sub)`` of ``at`` onto the spine of ``base`` at height ``u``."""
    if not at:
        return base
    new = SpineTree(base.height, base.grafts + tuple((float(u), s) for u, s in at))
    return validate(new)


def trim(t: Tree, eps: float) -> Tree:
    """Erase every point whose subtree above is shorter than ``eps``.

    Returns :data:`ROOT_ONLY` when ``eps >= height(t)``.
    """
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    if t is ROOT_ONLY or eps >= t.height:
        return ROOT_ONLY
    return _trim(t, eps)


def _trim(t: SpineTree, eps: float) -> SpineTree:
    return SpineTree(
        t.height - eps,
        tuple((u, _trim(s, eps)) for u, s in t.grafts if s.height > eps),
    )


def backbone(t: Tree, n: int) -> Tree:
    """Keep graft recursion down to depth ``n``; ``backbone(t, 0)`` is the bare spine."""
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n!r}")
    if t is ROOT_ONLY:
        return t
    if n == 0:
        return SpineTree(t.height) if t.grafts else t
    if not t.grafts:
        return t
    return SpineTree(t.height, tuple((u, backbone(s, n - 1)) for u, s in t.grafts))


def height(t: Tree) -> float:
    return t.height


def depth(t: Tree) -> int:
    """Graft nesting depth: 0 for a bare spine."""
    if t is ROOT_ONLY or not t.grafts:
        return 0
    return 1 + max(depth(s) for _, s in t.grafts)


def _walk(t: SpineTree, base: float = 0.0, path: tuple = ()) -> Iterator[tuple]:
    """Yield ``(segment, base height, path)`` for every segment, pre-order."""
    stack = [(t, base, path)]
    while stack:
        node, b, p = stack.pop()
        yield node, b, p
        for i in range(len(node.grafts) - 1, -1, -1):
            u, sub = node.grafts[i]
            stack.append((sub, b + u, p + (i,)))


def graft_count(t: Tree) -> int:
    """Number of grafts at all depths."""
    if t is ROOT_ONLY:
        return 0
    n = 0
    stack = [t]
    while stack:
        node = stack.pop()
        n += len(node.grafts)
        stack.extend(s for _, s in node.grafts)
    return n


def node_count(t: Tree) -> int:
    """Vertices of the graph view: root, branch points and leaves."""
    if t is ROOT_ONLY:
        return 1
    return 2 * graft_count(t) + 2


def total_length(t: Tree) -> float:
    if t is ROOT_ONLY:
        return 0.0
    total = 0.0
    stack = [t]
    while stack:
        node = stack.pop()
        total += node.height
        stack.extend(s for _, s in node.grafts)
    return total


def leaves(t: Tree) -> list[tuple[TreeNodeRef, float]]:
    """Segment tops with their heights; in a finite tree every leaf is one."""
    if t is ROOT_ONLY:
        return [(TreeNodeRef((), 0.0), 0.0)]
    return [(TreeNodeRef(p, s.height), b + s.height) for s, b, p in _walk(t)]


def branch_points(t: Tree) -> list[tuple[TreeNodeRef, float]]:
    if t is ROOT_ONLY:
        return []
    return [
        (TreeNodeRef(p, u), b + u) for s, b, p in _walk(t) for u, _ in s.grafts
    ]


def segments(t: Tree) -> tuple[np.ndarray, np.ndarray]:
    """Absolute ``(bottoms, tops)`` of all segments; the spine comes first."""
    if t is ROOT_ONLY:
        return np.zeros(1), np.zeros(1)
    bottoms = []
    tops = []
    for s, b, _ in _walk(t):
        bottoms.append(b)
        tops.append(b + s.height)
    return np.asarray(bottoms), np.asarray(tops)


def crossing_count(t: Tree, a: float) -> int:
    """Number of points of ``t`` at height ``a``.

    The spine counts on the closed interval ``[0, H]``; a graft segment
    counts on ``(attach, top]``.
    """
    if t is ROOT_ONLY:
        return 1 if a == 0.0 else 0
    if not 0.0 <= a <= t.height:
        return 0
    count = 1
    stack = [(t, 0.0)]
    while stack:
        node, b = stack.pop()
        for u, sub in node.grafts:
            lo = b + u
            if lo < a:
                if a <= lo + sub.height:
                    count += 1
                stack.append((sub, lo))
    return count


def crossing_counts(t: Tree, levels) -> np.ndarray:
    """Vectorised :func:`crossing_count` over an array of levels."""
    levels = np.asarray(levels, dtype=float)
    if t is ROOT_ONLY:
        return (levels == 0.0).astype(np.int64)
    bottoms, tops = segments(t)
    spine = ((levels >= 0.0) & (levels <= t.height)).astype(np.int64)
    gb = np.sort(bottoms[1:])
    gt = np.sort(tops[1:])
    grafted = np.searchsorted(gb, levels, "left") - np.searchsorted(gt, levels, "left")
    return spine + grafted


def _segment_at(t: SpineTree, path: tuple) -> tuple[SpineTree, float]:
    node, base = t, 0.0
    for i in path:
        if not 0 <= i < len(node.grafts):
            raise ValueError(f"invalid graft index {i} in path {list(path)}")
        u, node = node.grafts[i]
        base += u
    return node, base


def check_ref(t: Tree, x: TreeNodeRef) -> tuple[SpineTree, float]:
    """Segment and base height addressed by ``x``; raises ValueError if invalid."""
    if t is ROOT_ONLY:
        if x.path or x.offset != 0.0:
            raise ValueError("the root-only tree has a single point")
        return t, 0.0
    node, base = _segment_at(t, x.path)
    if not 0.0 <= x.offset <= node.height:
        raise ValueError(f"offset {x.offset!r} outside [0, {node.height!r}]")
    return node, base


def point_height(t: Tree, x: TreeNodeRef) -> float:
    _, base = check_ref(t, x)
    return base + x.offset


def h_prime(t: SpineTree, x: TreeNodeRef) -> float:
    """Top height of the subtree hanging off the spine at ``x``'s branch point."""
    check_ref(t, x)
    if not x.path:
        excess = [s.height for u, s in t.grafts if u == x.offset]
        return x.offset + max(excess, default=0.0)
    u, sub = t.grafts[x.path[0]]
    return u + sub.height


def ancestor(t: SpineTree, x: TreeNodeRef, level: float) -> TreeNodeRef:
    """The ancestor of ``x`` at height ``level`` (``0 <= level <= h(x)``)."""
    check_ref(t, x)
    node, base = t, 0.0
    keep = 0
    bases = [0.0]
    for i in x.path:
        u, node = node.grafts[i]
        base += u
        bases.append(base)
    if not 0.0 <= level <= base + x.offset:
        raise ValueError(f"level {level!r} is not below the point")
    # deepest segment whose base lies strictly below level owns the point
    for k in range(len(x.path), 0, -1):
        if bases[k] < level:
            keep = k
            break
    seg, _ = _segment_at(t, x.path[:keep])
    # (base + offset) - base can overshoot the segment by an ulp
    return TreeNodeRef(x.path[:keep], min(level - bases[keep], seg.height))


def mrca_height(t: SpineTree, x: TreeNodeRef, y: TreeNodeRef) -> float:
    check_ref(t, x)
    check_ref(t, y)
    k = 0
    while k < len(x.path) and k < len(y.path) and x.path[k] == y.path[k]:
        k += 1
    node, base = _segment_at(t, x.path[:k])
    ox = node.grafts[x.path[k]][0] if len(x.path) > k else x.offset
    oy = node.grafts[y.path[k]][0] if len(y.path) > k else y.offset
    return base + min(ox, oy)


def tree_distance(t: SpineTree, x: TreeNodeRef, y: TreeNodeRef) -> float:
    return point_height(t, x) + point_height(t, y) - 2.0 * mrca_height(t, x, y)


def canonical_form(t: Tree) -> Tree:
    """Same tree with every graft list sorted by attach height."""
    if t is ROOT_ONLY or not t.grafts:
        return t
    return SpineTree(
        t.height,
        tuple(sorted(((u, canonical_form(s)) for u, s in t.grafts), key=lambda g: g[0])),
    )


def iso_equal(t1: Tree, t2: Tree, tol: float = 0.0) -> bool:
    """Compare canonical forms with absolute tolerance ``tol`` on every real field."""
    if t1 is ROOT_ONLY or t2 is ROOT_ONLY:
        return t1 is t2
    stack = [(canonical_form(t1), canonical_form(t2))]
    while stack:
        a, b = stack.pop()
        if abs(a.height - b.height) > tol or len(a.grafts) != len(b.grafts):
            return False
        for (ua, sa), (ub, sb) in zip(a.grafts, b.grafts):
            if abs(ua - ub) > tol:
                return False
            stack.append((sa, sb))
    return True


@dataclass(frozen=True)
class Forest:
    """Trees rooted at distinct times ``h_i`` of the window ``[a, b]``.

    ``core`` is the sub-window on which the tree set is complete; trees rooted
    outside it are edge trees (see :meth:`edge_trees`). It defaults to
    ``window``.
    """

    window: tuple
    trees: tuple = ()
    core: tuple | None = None

    def __post_init__(self):
        a, b = (float(v) for v in self.window)
        object.__setattr__(self, "window", (a, b))
        if type(self.trees) is not tuple:
            object.__setattr__(
                self, "trees", tuple((float(h), t) for h, t in self.trees)
            )
        if self.core is None:
            object.__setattr__(self, "core", (a, b))

    def __len__(self):
        return len(self.trees)

    def roots(self) -> np.ndarray:
        return np.array([h for h, _ in self.trees], dtype=float)

    def heights(self) -> np.ndarray:
        return np.array([t.height for _, t in self.trees], dtype=float)

    def edge_trees(self) -> list[int]:
        lo, hi = self.core
        return [i for i, (h, _) in enumerate(self.trees) if not lo <= h <= hi]


def find_forest_violation(f: Forest) -> Violation | None:
    a, b = f.window
    if not a <= b:
        return Violation("range", (), f"window [{a}, {b}] is empty")
    roots = set()
    tops = set()
    for i, (h, t) in enumerate(f.trees):
        if not a <= h <= b:
            return Violation("range", (i,), f"root {h!r} outside the window")
        bad = find_violation(t)
        if bad is not None:
            return Violation(bad.kind, (i,) + bad.path, bad.detail)
        if h in roots:
            return Violation("duplicate-height", (i,), f"root {h!r} repeated")
        top = h + t.height
        if top in tops:
            return Violation("duplicate-height", (i,), f"tree top {top!r} repeated")
        roots.add(h)
        tops.add(top)
    return None


def validate_forest(f: Forest) -> Forest:
    bad = find_forest_violation(f)
    if bad is not None:
        raise InvalidTreeError(bad)
    return f
