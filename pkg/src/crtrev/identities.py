"""Deterministic identities that every sampled tree or forest must satisfy.

Each check takes one sampled object and returns True or False; the suite
runner tallies them over fresh samples. None of these is statistical: a
single failure is a bug.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from crtrev.contour import tree_from_contour, tree_to_contour
from crtrev.reversal import m_counts, reverse, reverse_forest, reverse_n
from crtrev.rng import LANE_MAIN, stream
from crtrev.sampler import Params, sample_forest, sample_tree
from crtrev.tree_core import (
    ROOT_ONLY,
    backbone,
    crossing_counts,
    depth,
    is_valid,
    iso_equal,
    trim,
)
from crtrev.treeio import format_forest, format_tree, parse_forest, parse_tree

TOL = 1e-12


def involution(t, params, rng) -> bool:
    return iso_equal(reverse(reverse(t)), t, TOL)


def reversal_valid(t, params, rng) -> bool:
    return is_valid(reverse(t))


def trim_commutes(t, params, rng) -> bool:
    eps = params.epsilon
    return iso_equal(reverse(trim(t, eps)), trim(reverse(t), eps), TOL)


def backbone_identities(t, params, rng) -> bool:
    for n in sorted({0, 1, 2, depth(t)}):
        rn = reverse_n(t, n)
        if not iso_equal(reverse_n(backbone(t, n), n), rn, TOL):
            return False
        if not iso_equal(reverse_n(rn, n), backbone(t, n), TOL):
            return False
    return True


def crossing_reversal(t, params, rng, levels: int = 20) -> bool:
    """Trimmed crossing counts at ``a`` and at the mirrored level of the reversed tree."""
    eps = params.epsilon
    h = t.height
    a = rng.uniform(-0.05 * h, 1.05 * h, levels)
    lhs = crossing_counts(trim(t, eps), a)
    rhs = crossing_counts(trim(reverse(t), eps), h - eps - a)
    return bool(np.array_equal(lhs, rhs))


def text_round_trip(t, params, rng) -> bool:
    return parse_tree(format_tree(t)) == t


def contour_round_trip(t, params, rng) -> bool:
    if t is ROOT_ONLY:
        return True
    return iso_equal(tree_from_contour(tree_to_contour(t)), t, TOL)


TREE_CHECKS = {
    "involution": involution,
    "reversal_valid": reversal_valid,
    "trim_commutes": trim_commutes,
    "backbone_identities": backbone_identities,
    "crossing_reversal": crossing_reversal,
    "text_round_trip": text_round_trip,
    "contour_round_trip": contour_round_trip,
}


def m_identity(f, params, rng, grid: int = 10) -> bool:
    """``M_s^{s+r}`` of the forest equals ``M_{-s-r}^{-s}`` of its reversal on a grid."""
    a, b = f.window
    span = b - a
    s = rng.uniform(a + 0.25 * span, b - 0.25 * span, grid)
    r = rng.uniform(0.0, 0.25 * span, grid)
    r = np.where(r > 0.0, r, 0.25 * span)
    s, r = np.meshgrid(s, r, indexing="ij")
    lhs = m_counts(f, s, s + r)
    rhs = m_counts(reverse_forest(f), -s - r, -s)
    return bool(np.array_equal(lhs, rhs))


def forest_involution(f, params, rng) -> bool:
    g = reverse_forest(reverse_forest(f))
    if len(g) != len(f):
        return False
    return all(
        abs(h1 - h2) <= TOL and iso_equal(t1, t2, TOL)
        for (h1, t1), (h2, t2) in zip(f.trees, g.trees)
    )


def forest_round_trip(f, params, rng) -> bool:
    return parse_forest(format_forest(f)) == f


FOREST_CHECKS = {
    "m_identity": m_identity,
    "forest_involution": forest_involution,
    "forest_round_trip": forest_round_trip,
}


@dataclass
class CheckResult:
    name: str
    passed: int
    total: int
    first_failure: int | None = None

    @property
    def ok(self) -> bool:
        return self.passed == self.total


def run_suite(params: Params, seed: int, replicates: int, *, forests: int | None = None,
              window=(-2.0, 2.0), h_max: float | None = None) -> list[CheckResult]:
    """Run every check on ``replicates`` fresh trees and ``forests`` fresh forests.

    At ``theta = 0`` tree heights are capped at ``h_max`` (default 1) since the
    unconditioned size is heavy tailed.
    """
    if h_max is None and params.theta == 0.0:
        h_max = 1.0
    forests = max(1, replicates // 50) if forests is None else forests
    results = {name: CheckResult(name, 0, 0) for name in (*TREE_CHECKS, *FOREST_CHECKS)}
    for i in range(replicates):
        rng = stream(seed, i, LANE_MAIN)
        t = sample_tree(params, rng, h_max=h_max)
        for name, check in TREE_CHECKS.items():
            _tally(results[name], check(t, params, rng), i)
    for i in range(forests):
        rng = stream(seed, i, LANE_MAIN + 1)
        f = sample_forest(params, window, rng, h_max=h_max)
        for name, check in FOREST_CHECKS.items():
            _tally(results[name], check(f, params, rng), i)
    return list(results.values())


def _tally(res: CheckResult, ok: bool, index: int):
    res.total += 1
    if ok:
        res.passed += 1
    elif res.first_failure is None:
        res.first_failure = index
