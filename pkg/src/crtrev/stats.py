"""Estimators and the statistical tests behind the reversal-invariance checks.

Local time at level ``a`` is estimated from the number of points at that
level whose subtree reaches ``eps`` higher, i.e. the crossing count of the
``eps``-trimmed tree. That count grows like ``1/(beta eps)`` per unit of
local time; the stationary estimators divide it by ``c_theta(eps)``, its
exact expectation per unit local time, which makes ``z_estimate`` unbiased
for the population size.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import special
from scipy import stats as sps

from crtrev.reversal import (
    reverse,
    reverse_broken,
    reverse_forest,
    reversed_roots,
    tmrca,
)
from crtrev.rng import LANE_A, LANE_B, stream
from crtrev.sampler import (
    Params,
    c_theta,
    grow,
    sample_forest_skeleton,
    sample_tree,
    sample_tree_given_height,
)
from crtrev.tree_core import (
    ROOT_ONLY,
    Forest,
    Tree,
    crossing_count,
    graft_count,
    total_length,
    trim,
)


def local_time_estimate(t: Tree, a: float, eps: float, params: Params | None = None) -> float:
    """Crossing count of ``trim(t, eps)`` at level ``a``, scaled to a local time.

    Without ``params`` the count is divided by ``eps``. With ``params`` it is
    divided by ``c_theta(eps)``, the normalisation under which the forest
    local times sum to the stationary population size.
    """
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    count = crossing_count(trim(t, eps), a)
    if params is None:
        return count / eps
    return count / float(c_theta(params, eps))


def z_estimate(f: Forest, t: float, eps: float, params: Params | None = None) -> float:
    """Population size at time ``t``: the sum of the trees' local times at ``t``.

    ``params`` selects the ``c_theta(eps)`` normalisation of
    :func:`local_time_estimate` and must have ``theta > 0``.
    """
    if params is not None:
        params.require_stationary()
        if eps < params.delta:
            raise ValueError(f"eps={eps} is below the structural resolution delta={params.delta}")
    return math.fsum(local_time_estimate(tree, t - h, eps, params) for h, tree in f.trees)


class KSResult(NamedTuple):
    statistic: float
    pvalue: float


def ks_two_sample(x, y) -> KSResult:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov p-value."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    n, m = x.size, y.size
    if n == 0 or m == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([x, y])
    fx = np.searchsorted(x, pooled, side="right") / n
    fy = np.searchsorted(y, pooled, side="right") / m
    d = float(np.max(np.abs(fx - fy)))
    en = math.sqrt(n * m / (n + m))
    return KSResult(d, float(special.kolmogorov(en * d)))


def chi2_two_sample(x, y, min_expected: float = 5.0) -> KSResult:
    """Chi-square homogeneity test for two samples of discrete values.

    Adjacent values are merged into bins until every expected cell count
    reaches ``min_expected``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise ValueError("both samples must be nonempty")
    values = np.unique(np.concatenate([x, y]))
    cx = np.searchsorted(values, x)
    cy = np.searchsorted(values, y)
    ox = np.bincount(cx, minlength=values.size).astype(float)
    oy = np.bincount(cy, minlength=values.size).astype(float)
    fx = x.size / (x.size + y.size)
    bins = []
    acc = np.zeros(2)
    for a, b in zip(ox, oy):
        acc += (a, b)
        col = acc.sum()
        if min(fx * col, (1 - fx) * col) >= min_expected:
            bins.append(acc)
            acc = np.zeros(2)
    if acc.sum() > 0:
        if bins:
            bins[-1] = bins[-1] + acc
        else:
            bins.append(acc)
    if len(bins) < 2:
        return KSResult(0.0, 1.0)
    table = np.array(bins).T
    stat, p, _, _ = sps.chi2_contingency(table, correction=False)
    return KSResult(float(stat), float(p))


@dataclass
class MeanCheck:
    mean: float
    target: float
    std_error: float
    se_mult: float
    bias_bound: float
    n: int

    @property
    def half_width(self) -> float:
        return self.se_mult * self.std_error + self.bias_bound

    @property
    def passed(self) -> bool:
        return abs(self.mean - self.target) <= self.half_width

    @property
    def interval(self) -> tuple[float, float]:
        return self.mean - self.half_width, self.mean + self.half_width


def mean_check(values, target: float, se_mult: float = 3.0, bias_bound: float = 0.0) -> MeanCheck:
    """Pass iff ``|mean - target| <= se_mult * SE + bias_bound``."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values")
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return MeanCheck(float(v.mean()), float(target), se, se_mult, bias_bound, v.size)


# ---------------------------------------------------------------- functionals

def first_branch_height(t: Tree, params: Params) -> float:
    if t is ROOT_ONLY:
        return 0.0
    return min((u for u, _ in t.grafts), default=t.height)


def graft_position_sum(t: Tree, params: Params) -> float:
    return math.fsum(u for u, _ in t.grafts)


def crossing_count_at_half_height(t: Tree, params: Params) -> float:
    return float(crossing_count(t, t.height / 2.0))


def leaf_count_trimmed(t: Tree, params: Params) -> float:
    r = trim(t, params.epsilon)
    return 0.0 if r is ROOT_ONLY else 1.0 + graft_count(r)


TREE_FUNCTIONALS: dict[str, Callable] = {
    "total_length": lambda t, p: total_length(t),
    "first_branch_height": first_branch_height,
    "graft_position_sum": graft_position_sum,
    "crossing_count_at_half_height": crossing_count_at_half_height,
    "leaf_count_trimmed": leaf_count_trimmed,
}

FOREST_FUNCTIONALS = ("tree_count_rate", "tmrca", "z_estimate")

DISCRETE = {"crossing_count_at_half_height", "leaf_count_trimmed", "tree_count_rate", "z_estimate"}

# forest geometry: probe time 0 in the middle of a window long enough that a
# tree rooted before its start is alive at the probe with negligible chance
FOREST_WINDOW = (-10.0, 10.0)
FOREST_PROBE = 0.0
FOREST_INTERIOR = (-5.0, 5.0)


def forest_functionals(params: Params, rng: np.random.Generator, *, reversed_: bool = False,
                       window=FOREST_WINDOW, t: float = FOREST_PROBE,
                       interior=FOREST_INTERIOR, reverser=reverse_forest) -> dict[str, float]:
    """Tree count rate on ``interior``, ``tmrca`` and ``z_estimate`` at ``t``.

    Only trees alive at the probe time get a structure, and only their
    segments that can cross the probe level with ``epsilon`` to spare (see
    :func:`crtrev.sampler.grow`); every other tree affects these functionals
    through its root and height alone. With ``reversed_`` the functionals are
    evaluated on the reversed forest: the trees are the originals alive at
    ``-t``, reversed by ``reverser``.
    """
    eps = params.epsilon
    roots, heights = sample_forest_skeleton(params, window, rng)
    probe = -t if reversed_ else t
    alive = (roots <= probe) & (probe <= roots + heights)
    levels = probe - roots[alive]
    band = (levels - eps, levels) if reversed_ else (levels, levels + eps)
    trees = grow(params, heights[alive], rng, band=band)
    f = Forest(window, tuple(zip(roots[alive].tolist(), trees)))
    shown_roots = roots
    if reversed_:
        f = reverser(f)
        shown_roots = reversed_roots(roots, heights)
    lo, hi = interior
    count = np.count_nonzero((shown_roots >= lo) & (shown_roots <= hi))
    age = tmrca(f, t)
    return {
        "tree_count_rate": count / (hi - lo),
        "tmrca": 0.0 if age is None else age,
        "z_estimate": z_estimate(f, t, eps, params),
    }


@dataclass
class InvarianceReport:
    functional: str
    n: int
    test: str
    statistic: float
    pvalue: float
    corrected_pvalue: float = float("nan")
    alpha: float = 0.01
    summary_raw: dict = field(default_factory=dict)
    summary_reversed: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        p = self.pvalue if math.isnan(self.corrected_pvalue) else self.corrected_pvalue
        return p > self.alpha


def _summary(v: np.ndarray) -> dict:
    return {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
            "min": float(v.min()), "max": float(v.max())}


def compare(name: str, raw, rev) -> InvarianceReport:
    raw = np.asarray(raw, dtype=float)
    rev = np.asarray(rev, dtype=float)
    if name in DISCRETE:
        res, test = chi2_two_sample(raw, rev), "chi2"
    else:
        res, test = ks_two_sample(raw, rev), "ks"
    return InvarianceReport(name, int(raw.size), test, res.statistic, res.pvalue,
                            summary_raw=_summary(raw), summary_reversed=_summary(rev))


def tree_batches(params: Params, functionals, n: int, seed: int, *, height: float | None = 1.0,
                 h_max: float | None = None, mutate: bool = False) -> tuple[dict, dict]:
    """Functional values on raw trees of batch A and reversed trees of batch B."""
    rev = reverse_broken if mutate else reverse
    fns = [TREE_FUNCTIONALS[name] for name in functionals]
    raw = {name: np.empty(n) for name in functionals}
    out = {name: np.empty(n) for name in functionals}
    for i in range(n):
        for lane, store, flip in ((LANE_A, raw, False), (LANE_B, out, True)):
            rng = stream(seed, i, lane)
            if height is None:
                t = sample_tree(params, rng, h_max=h_max)
            else:
                t = sample_tree_given_height(params, height, rng)
            if flip:
                t = rev(t)
            for name, fn in zip(functionals, fns):
                store[name][i] = fn(t, params)
    return raw, out


def forest_batches(params: Params, functionals, n: int, seed: int, **kw) -> tuple[dict, dict]:
    raw = {name: np.empty(n) for name in functionals}
    out = {name: np.empty(n) for name in functionals}
    for i in range(n):
        a = forest_functionals(params, stream(seed, i, LANE_A), **kw)
        b = forest_functionals(params, stream(seed, i, LANE_B), reversed_=True, **kw)
        for name in functionals:
            raw[name][i] = a[name]
            out[name][i] = b[name]
    return raw, out


def invariance_suite(params: Params, functionals, n: int, seed: int, *, alpha: float = 0.01,
                     height: float | None = 1.0, h_max: float | None = None,
                     mutate: bool = False) -> list[InvarianceReport]:
    """Compare each functional on raw batch A against reversed batch B.

    Tree functionals and forest functionals may not be mixed. p-values are
    Bonferroni-corrected over the functionals in the suite.
    """
    functionals = list(functionals)
    unknown = [f for f in functionals if f not in TREE_FUNCTIONALS and f not in FOREST_FUNCTIONALS]
    if unknown:
        raise ValueError(f"unknown functional(s): {', '.join(unknown)}")
    forest = [f in FOREST_FUNCTIONALS for f in functionals]
    if any(forest) and not all(forest):
        raise ValueError("tree and forest functionals need separate suites")
    if all(forest):
        if mutate:
            raise ValueError("mutation testing applies to tree functionals")
        raw, rev = forest_batches(params, functionals, n, seed)
    else:
        raw, rev = tree_batches(params, functionals, n, seed, height=height, h_max=h_max,
                                mutate=mutate)
    k = len(functionals)
    reports = []
    for name in functionals:
        rep = compare(name, raw[name], rev[name])
        rep.corrected_pvalue = min(1.0, k * rep.pvalue)
        rep.alpha = alpha
        reports.append(rep)
    return reports


def invariance_test(params: Params, functional: str, n: int, seed: int, **kw) -> InvarianceReport:
    return invariance_suite(params, [functional], n, seed, **kw)[0]


def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["functional", "n", "D", "p", "pass"])
    for r in reports:
        p = r.pvalue if math.isnan(r.corrected_pvalue) else r.corrected_pvalue
        w.writerow([r.functional, r.n, f"{r.statistic:.6g}", f"{p:.6g}", int(r.passed)])
    return buf.getvalue()


def reports_table(reports) -> str:
    lines = [f"{'functional':32s} {'test':5s} {'n':>7s} {'stat':>10s} {'p(corr)':>10s}  result"]
    for r in reports:
        lines.append(
            f"{r.functional:32s} {r.test:5s} {r.n:7d} {r.statistic:10.4g} "
            f"{r.corrected_pvalue:10.4g}  {'PASS' if r.passed else 'FAIL'}"
        )
    return "\n".join(lines)


def ecdf_svg(raw, rev, path, title: str = ""):
    """Write the two empirical CDFs to ``path`` as a static SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for v, label in ((raw, "raw"), (rev, "reversed")):
        v = np.sort(np.asarray(v, dtype=float))
        ax.step(v, np.arange(1, v.size + 1) / v.size, where="post", label=label)
    ax.set_title(title)
    ax.set_ylabel("ECDF")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def stationary_means(params: Params, n: int, seed: int, **kw) -> tuple[np.ndarray, np.ndarray]:
    """``z_estimate`` and ``tmrca`` at the probe time over ``n`` forests."""
    params.require_stationary()
    params.require_estimator_resolution()
    z = np.empty(n)
    a = np.empty(n)
    for i in range(n):
        out = forest_functionals(params, stream(seed, i), **kw)
        z[i] = out["z_estimate"]
        a[i] = out["tmrca"]
    return z, a


def stationary_bias_bounds(params: Params, window=FOREST_WINDOW, t: float = FOREST_PROBE) -> dict:
    """Bounds on the bias of the two stationary means for the given geometry.

    Both estimators miss only trees rooted before the window start; the
    z estimator is otherwise unbiased. ``tmrca`` additionally ignores trees
    shorter than ``delta``, which can only shorten it and only below
    ``delta``.
    """
    params.require_stationary()
    k = 2.0 * params.beta * params.theta
    age = t - window[0]
    z_tail = math.exp(-k * age) / params.theta
    # P(A > x) = 1 - (1 - e^{-kx})^2; a truncated tmrca errs by at most A itself
    e = math.exp(-k * age)
    p_old = 1.0 - (1.0 - e) ** 2
    excess = 2.0 * e / k - e * e / (2.0 * k)
    return {"z": z_tail, "tmrca": params.delta + age * p_old + excess}
