import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import spine_trees
from crtrev.contour import (
    Contour,
    d_g,
    project,
    sample_walk_excursion,
    tree_from_contour,
    tree_to_contour,
    tree_to_contour_with_leaves,
)
from crtrev.rng import LANE_WALK, stream
from crtrev.sampler import Params
from crtrev.tree_core import ROOT_ONLY, SpineTree, is_valid, iso_equal, total_length, tree_distance

S = SpineTree
TENT = Contour([0, 1, 2], [0, 1, 0])
TWO_TENTS = Contour([0, 1, 2, 3, 4], [0, 1, 0.2, 0.8, 0])


def dg_oracle(c, s, t):
    # dense evaluation on the breakpoints plus both ends
    lo, hi = sorted((s, t))
    inside = [v for x, v in zip(c.times, c.values) if lo <= x <= hi]
    m = min(inside + [float(c(s)), float(c(t))])
    return float(c(s)) + float(c(t)) - 2 * m


@st.composite
def contours(draw, max_peaks=6):
    k = draw(st.integers(1, max_peaks))
    peaks = draw(st.lists(st.floats(0.5, 5.0), min_size=k, max_size=k, unique=True))
    vals = [0.0]
    for i, p in enumerate(peaks):
        vals.append(p)
        if i < k - 1:
            lo = min(p, peaks[i + 1])
            vals.append(lo * draw(st.floats(0.05, 0.95)))
    vals.append(0.0)
    times = np.concatenate(([0.0], np.cumsum(np.abs(np.diff(vals)))))
    return Contour(times, vals)


class TestContour:
    def test_requires_excursion(self):
        with pytest.raises(ValueError):
            Contour([0, 1], [0, 1])
        with pytest.raises(ValueError):
            Contour([0, 1, 1], [0, 1, 0])
        with pytest.raises(ValueError):
            Contour([0, 1, 2], [0, -1, 0])

    def test_read_only(self):
        with pytest.raises(ValueError):
            TENT.values[1] = 3.0

    def test_normalize_merges_monotone_runs(self):
        c = Contour([0, 1, 2, 3, 4], [0, 0.5, 1, 0.5, 0]).normalized()
        assert c.values.tolist() == [0, 1, 0]
        assert c.times.tolist() == [0, 2, 4]

    def test_normalize_separates_ties(self):
        c = Contour([0, 1, 2, 3, 4], [0, 1, 0.5, 1, 0]).normalized()
        assert c.values[1] != c.values[3]


class TestDg:
    def test_reflexive(self):
        assert d_g(TWO_TENTS, 1.3, 1.3) == 0.0

    def test_tent_identifies_mirror_points(self):
        assert d_g(TENT, 0.5, 1.5) == 0.0

    def test_two_tents(self):
        assert d_g(TWO_TENTS, 1, 3) == pytest.approx(1.4)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            d_g(TENT, -0.1, 1.0)

    @given(contours(), st.floats(0, 1), st.floats(0, 1))
    def test_matches_oracle(self, c, x, y):
        s, t = x * c.sigma, y * c.sigma
        assert d_g(c, s, t) == pytest.approx(dg_oracle(c, s, t), abs=1e-12)

    @given(contours(max_peaks=4))
    def test_pseudo_metric_on_breakpoints(self, c):
        ts = c.times.tolist()
        for a, b in itertools.product(ts, ts):
            assert d_g(c, a, b) == pytest.approx(d_g(c, b, a), abs=1e-12)
        for a, b, e in itertools.product(ts, ts, ts):
            assert d_g(c, a, e) <= d_g(c, a, b) + d_g(c, b, e) + 1e-12


class TestCoding:
    def test_tent_to_tree(self):
        assert tree_from_contour(TENT) == S(1)

    def test_two_tents_to_tree(self):
        assert iso_equal(tree_from_contour(TWO_TENTS), S(1, ((0.2, S(0.6)),)), 1e-12)

    def test_tree_to_tent(self):
        c = tree_to_contour(S(1))
        assert c.values.tolist() == [0, 1, 0]

    def test_tree_to_two_tents(self):
        c = tree_to_contour(S(1, ((0.2, S(0.6)),)))
        assert c.values.tolist() == pytest.approx([0, 1, 0.2, 0.8, 0])

    def test_degenerate(self):
        with pytest.raises(ValueError):
            tree_from_contour(Contour([0, 1, 2], [0, 0, 0]))

    def test_interior_zero(self):
        with pytest.raises(ValueError):
            tree_from_contour(Contour([0, 1, 2, 3, 4], [0, 1, 0, 1.5, 0]))

    def test_root_only_has_no_contour(self):
        with pytest.raises(ValueError):
            tree_to_contour(ROOT_ONLY)

    @given(spine_trees())
    def test_round_trip(self, t):
        assert iso_equal(tree_from_contour(tree_to_contour(t)), t, 1e-12)

    @given(spine_trees())
    def test_duration_is_twice_length(self, t):
        assert tree_to_contour(t).sigma == pytest.approx(2 * total_length(t), rel=1e-12)

    @given(contours())
    def test_height_is_max(self, c):
        t = tree_from_contour(c)
        assert is_valid(t)
        assert t.height == c.values.max()

    @given(spine_trees(), st.data())
    def test_dg_is_tree_distance(self, t, data):
        c, tops = tree_to_contour_with_leaves(t)
        n = c.times.size
        i = data.draw(st.integers(0, n - 1))
        j = data.draw(st.integers(0, n - 1))
        s, u = c.times[i], c.times[j]
        x, y = project(t, c, tops, s), project(t, c, tops, u)
        assert d_g(c, s, u) == pytest.approx(tree_distance(t, x, y), abs=1e-9)


class TestWalk:
    def test_valid_contour_and_tree(self):
        p = Params(0, 1, 0.2)
        for i in range(20):
            c = sample_walk_excursion(p, 1000, stream(1, i, LANE_WALK))
            assert c.values.min() >= 0.0 and c.values[0] == c.values[-1] == 0.0
            assert c.values.max() >= 0.2
            assert is_valid(tree_from_contour(c))

    def test_tilted(self):
        c = sample_walk_excursion(Params(1, 1, 0.1), 500, stream(2, 0, LANE_WALK))
        assert c.values.max() >= 0.1

    def test_step_count(self):
        with pytest.raises(ValueError):
            sample_walk_excursion(Params(), 1, stream(1))

    def test_height_tail_theta_zero(self):
        # P(max >= 2 delta | max >= delta) = c_0(2 delta) / c_0(delta) = 1/2
        p = Params(0, 1, 0.2)
        n = 1500
        hits = sum(
            sample_walk_excursion(p, 2000, stream(3, i, LANE_WALK)).values.max() >= 0.4
            for i in range(n)
        )
        assert abs(hits / n - 0.5) < 4 * np.sqrt(0.25 / n)
