"""Brownian continuum random trees, their reversal, and Monte-Carlo checks."""

from crtrev.tree_core import (
    ROOT_ONLY,
    Forest,
    InvalidTreeError,
    SpineTree,
    TreeNodeRef,
    backbone,
    canonical_form,
    crossing_count,
    graft,
    iso_equal,
    trim,
    validate,
)
from crtrev.reversal import m_count, reverse, reverse_forest, reverse_n, tmrca
from crtrev.sampler import Params, c_theta, c_theta_inv, sample_forest, sample_tree

__all__ = [
    "ROOT_ONLY",
    "Forest",
    "InvalidTreeError",
    "Params",
    "SpineTree",
    "TreeNodeRef",
    "backbone",
    "c_theta",
    "c_theta_inv",
    "canonical_form",
    "crossing_count",
    "graft",
    "iso_equal",
    "m_count",
    "reverse",
    "reverse_forest",
    "reverse_n",
    "sample_forest",
    "sample_tree",
    "tmrca",
    "trim",
    "validate",
]

__version__ = "0.1.0"
