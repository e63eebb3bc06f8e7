"""Contour functions: coding trees by nonnegative excursion paths and back.

A contour is piecewise linear between breakpoints. The tree it codes has
the local maxima as leaves and the interior local minima as branch points;
two times are identified when ``d_g`` between them vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from crtrev.sampler import Params
from crtrev.tree_core import ROOT_ONLY, SpineTree, Tree, TreeNodeRef, ancestor, point_height


@dataclass(frozen=True)
class Contour:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        g = np.array(self.values, dtype=float)
        t.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", g)
        if t.ndim != 1 or t.shape != g.shape or t.size < 2:
            raise ValueError("a contour needs matching 1-d times and values, at least 2 points")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0.0):
            raise ValueError("contour times must start at 0 and increase strictly")
        if g[0] != 0.0 or g[-1] != 0.0 or np.any(g < 0.0):
            raise ValueError("contour values must be nonnegative and vanish at both ends")

    @property
    def sigma(self) -> float:
        return float(self.times[-1])

    def __call__(self, s):
        return np.interp(s, self.times, self.values)

    def __eq__(self, other):
        if not isinstance(other, Contour):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.values, other.values)

    __hash__ = None

    def normalized(self) -> "Contour":
        """Keep only the turning points, nudging tied extrema apart.

        Runs of monotone or flat steps collapse to their endpoints. Maxima
        sharing a value are pushed up, minima pushed down, by single ulps
        until all are distinct.
        """
        g = self.values
        d = np.diff(g)
        nz = np.flatnonzero(d != 0.0)
        if nz.size == 0:
            return Contour(self.times[[0, -1]], g[[0, -1]])
        sgn = np.sign(d[nz])
        turn = nz[np.flatnonzero(sgn[1:] != sgn[:-1])] + 1
        idx = np.concatenate(([0], turn, [g.size - 1]))
        t = self.times[idx]
        v = g[idx].copy()
        _separate(v, slice(1, -1, 2), np.inf)
        _separate(v, slice(2, -1, 2), -np.inf)
        return Contour(t, v)


def _separate(v: np.ndarray, sl: slice, toward: float):
    sub = v[sl]
    seen = set()
    for i in range(sub.size):
        x = sub[i]
        while x in seen:
            x = np.nextafter(x, toward)
        seen.add(x)
        sub[i] = x
    v[sl] = sub


def d_g(c: Contour, s: float, t: float) -> float:
    """``g(s) + g(t) - 2 min_{[s, t]} g``."""
    sigma = c.sigma
    if not (0.0 <= s <= sigma and 0.0 <= t <= sigma):
        raise ValueError(f"times must lie in [0, {sigma}]")
    lo, hi = min(s, t), max(s, t)
    gs, gt = float(c(s)), float(c(t))
    i = np.searchsorted(c.times, lo, "right")
    j = np.searchsorted(c.times, hi, "left")
    m = min(gs, gt)
    if j > i:
        m = min(m, float(c.values[i:j].min()))
    return gs + gt - 2.0 * m


def tree_to_contour_with_leaves(t: Tree) -> tuple[Contour, list[TreeNodeRef]]:
    """Contour of ``t`` and the leaf reached at each local maximum, in order.

    The traversal climbs the spine first, then visits grafts on the way
    down in decreasing attach height; each grafted subtree is coded the same
    way from its attach point.
    """
    if t is ROOT_ONLY:
        raise ValueError("the root-only tree has no contour")
    vals = [0.0]
    tops = []
    stack = [(t, 0.0, ())]
    while stack:
        item = stack.pop()
        if type(item) is float:
            vals.append(item)
            continue
        node, base, path = item
        vals.append(base + node.height)
        tops.append(TreeNodeRef(path, node.height))
        order = sorted(range(len(node.grafts)), key=lambda i: node.grafts[i][0])
        for i in order:
            u, sub = node.grafts[i]
            stack.append((sub, base + u, path + (i,)))
            stack.append(base + u)
    vals.append(0.0)
    v = np.asarray(vals)
    times = np.concatenate(([0.0], np.cumsum(np.abs(np.diff(v)))))
    return Contour(times, v), tops


def tree_to_contour(t: Tree) -> Contour:
    return tree_to_contour_with_leaves(t)[0]


def project(t: SpineTree, c: Contour, tops: list[TreeNodeRef], s: float) -> TreeNodeRef:
    """The point of ``t`` coded by time ``s`` of its contour ``c``.

    ``tops`` is the leaf list from :func:`tree_to_contour_with_leaves`; the
    point is the ancestor, at height ``g(s)``, of the maximum adjacent to the
    linear piece containing ``s``.
    """
    k = int(np.searchsorted(c.times, s, "right")) - 1
    k = min(max(k, 0), c.times.size - 2)
    peak = k + 1 if k % 2 == 0 else k
    leaf = tops[(peak - 1) // 2]
    # the contour value and the leaf height may differ in the last ulp
    return ancestor(t, leaf, min(float(c(s)), point_height(t, leaf)))


def tree_from_contour(c: Contour) -> SpineTree:
    """Spine decomposition of the tree coded by ``c``, rooted at time 0."""
    v = c.normalized().values
    maxima = v[1:-1:2]
    minima = v[2:-1:2]
    k = maxima.size
    if k == 0 or not np.all(maxima > 0.0):
        raise ValueError("degenerate contour: identically zero")
    if np.any(minima <= 0.0):
        raise ValueError("contour returns to zero in the interior; the root would branch")
    mx = maxima.tolist()
    mn = minima.tolist()
    if k == 1:
        return SpineTree(mx[0])
    # min-Cartesian tree over the branch levels; ids >= k - 1 are leaves
    nint = k - 1
    left = [-1] * nint
    right = [-1] * nint
    stack: list[int] = []
    for p in range(nint):
        last = -1
        while stack and mn[stack[-1]] > mn[p]:
            last = stack.pop()
        left[p] = last
        if stack:
            right[stack[-1]] = p
        stack.append(p)
    root = stack[0]
    for p in range(nint):
        if left[p] < 0:
            left[p] = nint + p
        if right[p] < 0:
            right[p] = nint + p + 1

    top = [0.0] * nint + mx
    order = []
    todo = [root]
    while todo:
        x = todo.pop()
        order.append(x)
        if x < nint:
            todo.append(left[x])
            todo.append(right[x])
    for x in reversed(order):
        if x < nint:
            top[x] = max(top[left[x]], top[right[x]])

    # heavy path: follow the child with the higher top
    heads = [(root, 0.0)]
    built = {}
    i = 0
    chains = []
    while i < len(heads):
        x, base = heads[i]
        i += 1
        chain = []
        while x < nint:
            a, b = left[x], right[x]
            heavy, light = (a, b) if top[a] > top[b] else (b, a)
            chain.append((mn[x], light))
            heads.append((light, mn[x]))
            x = heavy
        chains.append((heads[i - 1], top[x], chain))
    for (head, base), peak, chain in reversed(chains):
        grafts = tuple((lvl - base, built.pop(light)) for lvl, light in chain)
        built[head] = SpineTree(peak - base, grafts)
    return built[root]


def _vervaat_excursion(n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """Cyclic shift at the minimum of a Gaussian bridge; unit duration and scale."""
    steps = rng.standard_normal(n_steps) / math.sqrt(n_steps)
    walk = np.concatenate(([0.0], np.cumsum(steps)))
    bridge = walk - np.linspace(0.0, 1.0, n_steps + 1) * walk[-1]
    m = int(np.argmin(bridge[:-1]))
    shifted = np.concatenate((bridge[m:-1], bridge[:m + 1])) - bridge[m]
    shifted[0] = shifted[-1] = 0.0
    return shifted


def sample_walk_excursion(params: Params, n_steps: int, rng: np.random.Generator, *,
                          min_height: float | None = None, m_cap: float = 4.0,
                          max_tries: int = 1_000_000) -> Contour:
    """Random-walk excursion approximately distributed as ``n[. | max >= min_height]``.

    The duration is drawn from the excursion-measure law ``~ s^(-3/2) ds``
    above ``s_min = beta min_height^2 / (2 m_cap^2)`` (excursions shorter
    than that reach ``min_height`` only if their normalised maximum exceeds
    ``m_cap``, which has probability below 1e-11 for the default). The shape
    is a Vervaat-transformed Gaussian bridge with ``n_steps`` steps of
    variance ``2 dt / beta``. For ``theta > 0`` the driftless excursion is
    accepted with probability ``exp(-beta theta^2 duration)``, the Girsanov
    weight of drift ``-2 theta``. Candidates whose maximum falls below
    ``min_height`` are rejected.
    """
    if n_steps < 2:
        raise ValueError(f"n_steps must be at least 2, got {n_steps}")
    h0 = params.delta if min_height is None else float(min_height)
    s_min = params.beta * h0 * h0 / (2.0 * m_cap * m_cap)
    tilt = params.beta * params.theta ** 2
    for _ in range(max_tries):
        duration = s_min / (1.0 - rng.random()) ** 2
        if tilt and rng.random() >= math.exp(-tilt * duration):
            continue
        shape = _vervaat_excursion(n_steps, rng)
        values = shape * math.sqrt(2.0 * duration / params.beta)
        if values.max() >= h0:
            times = duration * np.arange(n_steps + 1) / n_steps
            return Contour(times, values).normalized()
    raise RuntimeError("walk excursion rejection did not terminate")
