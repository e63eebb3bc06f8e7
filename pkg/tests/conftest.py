import sys

import hypothesis.strategies as st
import pytest
from hypothesis import HealthCheck, settings

from crtrev.tree_core import SpineTree

settings.register_profile(
    "default", max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

GAP = 1e-9
_frac = st.floats(min_value=0.01, max_value=0.99, allow_nan=False)


@st.composite
def spine_trees(draw, max_depth=3, max_grafts=4, height=None):
    """Valid trees built top-down from fractions of the available room.

    Grafts whose attach point or top lies within ``GAP`` of a sibling's are
    dropped, so height-regularity survives the rounding in ``h - u - H``.
    """
    h = draw(st.floats(0.1, 10.0)) if height is None else height
    grafts = []
    if max_depth > 0:
        for _ in range(draw(st.integers(0, max_grafts))):
            u = h * draw(_frac)
            sub_h = (h - u) * draw(_frac)
            if not 0.0 < u < h or not 0.0 < sub_h or not u + sub_h < h:
                continue
            if any(abs(u - a) <= GAP or abs(u + sub_h - a - s.height) <= GAP for a, s in grafts):
                continue
            sub = draw(spine_trees(max_depth - 1, max_grafts, height=sub_h))
            grafts.append((u, sub))
    return SpineTree(h, tuple(grafts))


@pytest.fixture
def example_tree():
    # spine 2 with one graft of height 1 at 0.5
    return SpineTree(2.0, ((0.5, SpineTree(1.0)),))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
