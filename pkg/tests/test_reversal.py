import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import spine_trees
from crtrev.reversal import (
    m_count,
    m_counts,
    reverse,
    reverse_broken,
    reverse_forest,
    reverse_n,
    reversed_roots,
    tmrca,
)
from crtrev.tree_core import (
    Forest,
    SpineTree,
    backbone,
    branch_points,
    crossing_count,
    depth,
    is_valid,
    iso_equal,
    leaves,
    node_count,
    total_length,
    trim,
)

S = SpineTree
TOL = 1e-12


def reverse_oracle(t):
    # the graft's old top y' becomes its new attach point
    out = []
    for u, sub in t.grafts:
        old_top = u + sub.height
        out.append((t.height - old_top, reverse_oracle(sub)))
    return S(t.height, tuple(out))


def m_oracle(f, s, t):
    """Points at forest height s whose subtree reaches height t, by explicit search."""

    def above(node, base, level):
        # subtree height above the point at `level` on this segment
        tops = [base + node.height] + [
            base + u + sub_top(g) for u, g in node.grafts if base + u > level
        ]
        return max(tops) - level

    def sub_top(node):
        return max([node.height] + [u + sub_top(g) for u, g in node.grafts])

    def points(node, base, spine):
        lo_ok = base <= s if spine else base < s
        n = 1 if lo_ok and s <= base + node.height and above(node, base, s) >= t - s else 0
        for u, g in node.grafts:
            n += points(g, base + u, False)
        return n

    return sum(points(tree, h, True) for h, tree in f.trees)


class TestReverse:
    def test_bare_spine(self):
        assert reverse(S(1.7)) == S(1.7)

    def test_single_graft(self):
        assert reverse(S(3, ((2, S(0.5)),))) == S(3, ((0.5, S(0.5)),))

    def test_two_levels(self):
        t = S(2, ((0.5, S(1, ((0.2, S(0.1)),))),))
        expected = S(2, ((0.5, S(1, ((0.7, S(0.1)),))),))
        assert iso_equal(reverse(t), expected, TOL)

    @given(spine_trees())
    def test_matches_oracle(self, t):
        assert iso_equal(reverse(t), reverse_oracle(t), TOL)

    @given(spine_trees())
    def test_involution(self, t):
        assert iso_equal(reverse(reverse(t)), t, TOL)

    @given(spine_trees())
    def test_output_valid(self, t):
        assert is_valid(reverse(t))

    @given(spine_trees())
    def test_preserved_measures(self, t):
        r = reverse(t)
        assert r.height == t.height
        assert node_count(r) == node_count(t)
        assert depth(r) == depth(t)
        assert total_length(r) == pytest.approx(total_length(t), rel=1e-12)
        assert len(leaves(r)) == len(branch_points(t)) + 1

    @given(spine_trees(), st.floats(0.01, 1.0))
    def test_commutes_with_trim(self, t, eps):
        assume(eps < t.height)
        assert iso_equal(reverse(trim(t, eps)), trim(reverse(t), eps), TOL)

    @given(spine_trees(), st.floats(0.0, 1.0))
    def test_crossing_count_mirrors(self, t, x):
        a = x * t.height
        ends = [h for _, h in leaves(t)] + [h for _, h in branch_points(t)] + [0.0]
        assume(min(abs(a - e) for e in ends) > 1e-9)
        assert crossing_count(t, a) == crossing_count(reverse(t), t.height - a)

    @given(spine_trees(), st.floats(0.01, 1.0), st.floats(-0.1, 1.1))
    def test_trimmed_crossing_count_mirrors(self, t, eps, x):
        assume(eps < t.height)
        a = x * t.height
        r = trim(t, eps)
        ends = [h for _, h in leaves(r)] + [h for _, h in branch_points(r)] + [0.0]
        assume(min(abs(a - e) for e in ends) > 1e-9)
        lhs = crossing_count(r, a)
        assert lhs == crossing_count(trim(reverse(t), eps), t.height - eps - a)

    def test_broken_reversal_differs(self):
        t = S(3, ((2, S(0.5)),))
        assert reverse_broken(t) == S(3, ((1.0, S(0.5)),))
        assert not iso_equal(reverse_broken(t), reverse(t), TOL)


class TestReverseN:
    def test_depth_zero(self):
        t = S(2, ((0.5, S(1)),))
        assert reverse_n(t, 0) == S(2)

    @given(spine_trees())
    def test_stabilises(self, t):
        assert reverse_n(t, depth(t)) == reverse(t)

    @given(spine_trees(), st.integers(0, 4))
    def test_backbone_identities(self, t, n):
        assert iso_equal(reverse_n(backbone(t, n), n), reverse_n(t, n), TOL)
        assert iso_equal(reverse_n(reverse_n(t, n), n), backbone(t, n), TOL)

    def test_negative(self):
        with pytest.raises(ValueError):
            reverse_n(S(1), -1)


def two_tree_forest():
    return Forest((0, 1), ((0.0, S(2)), (1.0, S(0.5))))


class TestReverseForest:
    def test_single_tree(self):
        rf = reverse_forest(Forest((0, 1), ((0.0, S(2)),)))
        assert rf.trees == ((-2.0, S(2)),)

    def test_empty(self):
        rf = reverse_forest(Forest((0, 1)))
        assert rf.trees == ()
        assert rf.window == (-1.0, 0.0)

    def test_roots(self):
        rf = reverse_forest(two_tree_forest())
        assert sorted(rf.roots().tolist()) == [-2.0, -1.5]
        assert np.array_equal(reversed_roots([0.0, 1.0], [2.0, 0.5]), [-2.0, -1.5])

    def test_window_widens_to_cover_old_trees(self):
        rf = reverse_forest(two_tree_forest())
        assert rf.window == (-2.0, 0.0)
        assert rf.core == (-1.0, 0.0)
        assert rf.edge_trees() == [0, 1]

    def test_involution(self):
        f = Forest((0, 2), ((0.25, S(2, ((0.5, S(1)),))), (1.0, S(0.5))))
        g = reverse_forest(reverse_forest(f))
        for (h1, t1), (h2, t2) in zip(f.trees, g.trees):
            assert h1 == pytest.approx(h2, abs=TOL)
            assert iso_equal(t1, t2, TOL)


class TestMCount:
    f = Forest((0, 1), ((0.0, S(2, ((0.5, S(1)),))),))

    def test_spine_and_graft(self):
        assert m_count(self.f, 0.7, 1.2) == 2

    def test_graft_too_short(self):
        assert m_count(self.f, 0.7, 1.8) == 1

    def test_above_everything(self):
        assert m_count(self.f, 0.7, 5.0) == 0

    def test_requires_s_below_t(self):
        with pytest.raises(ValueError):
            m_count(self.f, 1.0, 1.0)

    @given(
        st.lists(st.tuples(st.floats(-3, 3), spine_trees(max_depth=2)), max_size=4),
        st.floats(-3, 8),
        st.floats(0.01, 5),
    )
    def test_matches_oracle_and_reversal(self, trees, s, r):
        roots = [h for h, _ in trees]
        tops = [h + t.height for h, t in trees]
        assume(len(set(roots)) == len(roots) and len(set(tops)) == len(tops))
        f = Forest((-3, 3), tuple(trees))
        assert m_count(f, s, s + r) == m_oracle(f, s, r + s)
        ends = []
        for h, t in trees:
            ends += [h, h + t.height]
            ends += [h + x for _, x in leaves(t)] + [h + x for _, x in branch_points(t)]
        assume(all(abs(s - e) > 1e-9 and abs(s + r - e) > 1e-9 for e in ends))
        assert m_count(f, s, s + r) == m_count(reverse_forest(f), -s - r, -s)

    def test_vectorised(self):
        s = np.array([0.1, 0.7, 0.7])
        t = np.array([0.2, 1.2, 1.8])
        assert m_counts(self.f, s, t).tolist() == [1, 2, 1]


class TestTmrca:
    f = Forest((0, 2), ((0.0, S(2)), (1.5, S(1))))

    def test_both_alive(self):
        assert tmrca(self.f, 1.8) == 1.8

    def test_first_dead(self):
        assert tmrca(self.f, 2.3) == pytest.approx(0.8)

    def test_none_alive(self):
        assert tmrca(self.f, 3.0) is None
