"""Samplers for Brownian CRTs and forests at structural resolution ``delta``.

A tree conditioned on its height ``h`` is a spine of length ``h`` carrying a
Poisson process of grafts: at height ``u`` a subtree of height in ``[v, h-u)``
is attached with intensity ``2 beta (c(v) - c(h-u)) du``, where
``c(v) = N[H >= v]`` is the tail of the height under the excursion measure.
Grafts are realised by thinning a homogeneous proposal process of rate
``2 beta c(delta)``; each accepted graft's height is drawn by inversion and
its own grafts are sampled the same way. The result is the tree spanned by
the spine and all hierarchically grafted subtrees of height ``>= delta``.

Sampling is vectorised one graft generation at a time, so several trees
sharing a generator (e.g. the trees of one forest) grow together.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from crtrev.rng import stream
from crtrev.tree_core import Forest, SpineTree

# c_theta values below this are returned as exactly 0
C_FLOOR = 1e-300


@dataclass(frozen=True)
class Params:
    """Branching parameters ``(theta, beta)`` and resolutions ``(delta, epsilon)``.

    ``epsilon`` is the trimming scale used by estimators and defaults to
    ``2 * delta``.
    """

    theta: float = 0.0
    beta: float = 1.0
    delta: float = 0.05
    epsilon: float | None = None

    def __post_init__(self):
        for name in ("theta", "beta", "delta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 2.0 * self.delta)
        else:
            object.__setattr__(self, "epsilon", float(self.epsilon))
        if not self.beta > 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.theta >= 0.0:
            raise ValueError(f"theta must be nonnegative, got {self.theta}")
        if not self.delta > 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def with_(self, **changes) -> "Params":
        return replace(self, **changes)

    def require_estimator_resolution(self):
        if self.epsilon < self.delta:
            raise ValueError(
                f"estimators need epsilon >= delta (epsilon={self.epsilon}, delta={self.delta})"
            )

    def require_stationary(self):
        if self.theta <= 0.0:
            raise ValueError(
                "stationary statistics need theta > 0: the population size is infinite at theta = 0"
            )


def _ratio(x, fn):
    # x / fn(x) with the removable singularity at 0 filled in
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        r = x / fn(x)
    return np.where(x == 0.0, 1.0, r)


def _c(theta: float, beta: float, h):
    # 2 theta / expm1(2 beta theta h) written as (1 / beta h) * x / expm1(x),
    # which stays accurate as theta -> 0
    with np.errstate(divide="ignore"):
        c = _ratio(2.0 * beta * theta * np.asarray(h, dtype=float), np.expm1) / (beta * np.asarray(h))
    if theta > 0.0:
        c = np.where(c < C_FLOOR, 0.0, c)
    return c if np.ndim(c) else float(c)


def _c_inv(theta: float, beta: float, c):
    # log1p(2 theta / c) / (2 beta theta) written as (1 / beta c) * log1p(y) / y
    c = np.asarray(c, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = 2.0 * theta / c
        h = np.where(c > 0.0, 1.0 / (beta * c) / _ratio(y, np.log1p), np.inf)
    return h if np.ndim(h) else float(h)


def c_theta(params: Params, h):
    """Excursion-measure tail of the tree height, ``N[H >= h]``.

    ``1/(beta h)`` at ``theta = 0`` and ``2 theta / (exp(2 beta theta h) - 1)``
    otherwise. For ``theta > 0`` values below ``C_FLOOR`` are clamped to 0;
    see :func:`c_theta_cutoff`.
    """
    if np.any(np.asarray(h) <= 0.0):
        raise ValueError("c_theta needs h > 0")
    return _c(params.theta, params.beta, h)


def c_theta_inv(params: Params, c):
    """The height ``h`` with ``c_theta(params, h) == c``."""
    if np.any(np.asarray(c) <= 0.0):
        raise ValueError("c_theta_inv needs c > 0")
    return _c_inv(params.theta, params.beta, c)


def c_theta_cutoff(params: Params) -> float:
    """Height beyond which ``c_theta`` is clamped to 0 (infinite at theta = 0)."""
    if params.theta == 0.0:
        return math.inf
    k = 2.0 * params.beta * params.theta
    return (math.log(2.0 * params.theta) - math.log(C_FLOOR)) / k


def expected_spine_grafts(params: Params, h: float) -> float:
    """Mean number of grafts on the spine of a tree conditioned on height ``h``.

    Closed form of ``int_0^{h-delta} 2 beta (c(delta) - c(h-u)) du``.
    """
    d, b, th = params.delta, params.beta, params.theta
    if h <= d:
        return 0.0
    if th == 0.0:
        integral = math.log(h / d) / b
    else:
        k = 2.0 * b * th
        integral = math.log(-math.expm1(-k * h) / -math.expm1(-k * d)) / b
    return 2.0 * b * ((h - d) * _c(th, b, d) - integral)


def sample_heights(params: Params, rng: np.random.Generator, size: int,
                   h_max: float | None = None) -> np.ndarray:
    """Heights with tail ``P(H >= v) = c(v)/c(delta)`` (optionally capped at ``h_max``)."""
    cd = _c(params.theta, params.beta, params.delta)
    c_lo = 0.0 if h_max is None else _c(params.theta, params.beta, h_max)
    u = 1.0 - rng.random(size)
    return np.asarray(_c_inv(params.theta, params.beta, c_lo + u * (cd - c_lo)), dtype=float)


def sample_height(params: Params, rng: np.random.Generator, h_max: float | None = None) -> float:
    """One height from ``N[H in . | H >= delta]``, by inversion of the tail."""
    return float(sample_heights(params, rng, 1, h_max)[0])


def grow(params: Params, heights, rng: np.random.Generator, band=None) -> list[SpineTree]:
    """Sample one tree for each spine height in ``heights``.

    ``band``, if given, is a pair of arrays ``(s, t)`` (one entry per tree):
    only grafted segments spanning the height interval ``[s, t]`` are kept,
    together with their ancestors, which span it too. Since dropping Poisson
    points independently of the rest is a restriction of the process, the
    kept part has exactly the law it has inside the full tree; crossing
    counts of the trimmed tree at level ``s`` with ``t - s`` the trimming
    scale are unchanged by the filter.
    """
    th, b, d = params.theta, params.beta, params.delta
    cd = _c(th, b, d)
    rate = 2.0 * b * cd
    gen_h = np.asarray(heights, dtype=float).reshape(-1)
    if band is not None:
        gen_s = np.broadcast_to(np.asarray(band[0], dtype=float), gen_h.shape).copy()
        gen_t = np.broadcast_to(np.asarray(band[1], dtype=float), gen_h.shape).copy()
    gens = [gen_h]
    links = []
    while gen_h.size:
        span = gen_h if band is None else np.clip(np.minimum(gen_h, gen_s), 0.0, None)
        counts = rng.poisson(rate * span)
        n = int(counts.sum())
        if n == 0:
            break
        parent = np.repeat(np.arange(gen_h.size), counts)
        u = rng.random(n) * span[parent]
        resid = gen_h[parent] - u
        c_res = np.full(n, np.inf)
        pos = resid > 0.0
        c_res[pos] = _c(th, b, resid[pos])
        keep = rng.random(n) < 1.0 - c_res / cd
        parent, u, resid, c_res = parent[keep], u[keep], resid[keep], c_res[keep]
        v = 1.0 - rng.random(parent.size)
        sub = np.asarray(_c_inv(th, b, c_res + v * (cd - c_res)), dtype=float).reshape(-1)
        # the graft must end strictly below the spine top
        sub = np.minimum(sub, np.nextafter(resid, 0.0))
        bad = u + sub >= gen_h[parent]
        if bad.any():
            sub[bad] = np.nextafter(gen_h[parent][bad] - u[bad], 0.0)
        if band is not None:
            keep = u + sub >= gen_t[parent]
            parent, u, sub = parent[keep], u[keep], sub[keep]
            gen_s = gen_s[parent] - u
            gen_t = gen_t[parent] - u
        links.append((parent, u))
        gen_h = sub
        gens.append(gen_h)
    return _assemble(gens, links)


def _assemble(gens, links) -> list[SpineTree]:
    objs = [SpineTree(h) for h in gens[len(links)].tolist()]
    for k in range(len(links) - 1, -1, -1):
        parent, u = links[k]
        order = np.lexsort((u, parent)).tolist()
        pl = parent.tolist()
        ul = u.tolist()
        groups = [[] for _ in range(len(gens[k]))]
        for i in order:
            groups[pl[i]].append((ul[i], objs[i]))
        objs = [SpineTree(h, tuple(g)) for h, g in zip(gens[k].tolist(), groups)]
    return objs


def sample_tree_given_height(params: Params, h: float, rng: np.random.Generator,
                             band=None) -> SpineTree:
    """Structure tree of a CRT conditioned on ``H = h`` (requires ``h > delta``)."""
    if not h > params.delta:
        raise ValueError(f"height {h} must exceed delta = {params.delta}")
    if band is not None:
        band = ([band[0]], [band[1]])
    return grow(params, [h], rng, band)[0]


def sample_tree(params: Params, rng: np.random.Generator, h_max: float | None = None) -> SpineTree:
    """Structure tree of a CRT under ``N[. | H >= delta]`` (optionally ``H <= h_max``)."""
    return grow(params, [sample_height(params, rng, h_max)], rng)[0]


def sample_forest_skeleton(params: Params, window, rng: np.random.Generator,
                           h_max: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sorted roots and heights of the forest's trees, without their structure."""
    a, b = (float(x) for x in window)
    if not a < b:
        raise ValueError(f"empty window [{a}, {b}]")
    mean = 2.0 * params.beta * (b - a) * _c(params.theta, params.beta, params.delta)
    n = int(rng.poisson(mean))
    roots = np.sort(a + (b - a) * rng.random(n))
    return roots, sample_heights(params, rng, n, h_max)


def sample_forest(params: Params, window, rng: np.random.Generator,
                  h_max: float | None = None) -> Forest:
    """Brownian forest on ``window``: Poisson roots at rate ``2 beta c(delta)``."""
    roots, heights = sample_forest_skeleton(params, window, rng, h_max)
    trees = grow(params, heights, rng)
    return Forest(tuple(float(x) for x in window), tuple(zip(roots.tolist(), trees)))


@dataclass
class SampleBatch:
    """Replicates drawn from per-replicate streams of ``seed``, in index order."""

    params: Params
    seed: int
    replicates: int
    items: list = field(default_factory=list)
    functionals: dict = field(default_factory=dict)


def _draw_one(job):
    kind, params, seed, index, lane, opts = job
    rng = stream(seed, index, lane)
    if kind == "tree":
        h = opts.get("height")
        if h is None:
            return sample_tree(params, rng, h_max=opts.get("h_max"))
        return sample_tree_given_height(params, h, rng)
    if kind == "forest":
        return sample_forest(params, opts["window"], rng, h_max=opts.get("h_max"))
    raise ValueError(f"unknown item kind {kind!r}")


def sample_batch(params: Params, seed: int, replicates: int, kind: str = "tree", *,
                 lane: int = 0, jobs: int = 1,
                 functionals: dict[str, Callable] | None = None, **opts) -> SampleBatch:
    """Draw ``replicates`` trees or forests; identical for any ``jobs``.

    ``opts`` are ``height`` / ``h_max`` for trees and ``window`` / ``h_max``
    for forests.
    """
    work = [(kind, params, seed, i, lane, opts) for i in range(replicates)]
    if jobs > 1 and replicates > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            items = list(pool.map(_draw_one, work, chunksize=max(1, replicates // (4 * jobs))))
    else:
        items = [_draw_one(w) for w in work]
    batch = SampleBatch(params, seed, replicates, items)
    for name, fn in (functionals or {}).items():
        batch.functionals[name] = np.array([fn(x) for x in items], dtype=float)
    return batch
