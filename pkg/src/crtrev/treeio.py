"""Text formats for trees, forests, contours and run configuration.

Tree grammar (whitespace exactly as shown)::

    tree := "(" HEIGHT { " (" ATTACH " " tree ")" } ")"

with reals printed to 17 significant digits so every double round-trips.
The root-only tree is ``(*)``. A forest file is a ``window A B`` header
followed by one ``ROOT<TAB>tree`` line per tree.
"""

from __future__ import annotations

import io
import re
from pathlib import Path

import numpy as np

from crtrev.contour import Contour
from crtrev.tree_core import ROOT_ONLY, Forest, SpineTree, Tree, validate, validate_forest


class FormatError(ValueError):
    pass


def fmt_real(x: float) -> str:
    return format(float(x), ".17g")


def format_tree(t: Tree) -> str:
    if t is ROOT_ONLY:
        return "(*)"
    out = []
    stack = [t]
    while stack:
        item = stack.pop()
        if type(item) is str:
            out.append(item)
            continue
        out.append("(" + fmt_real(item.height))
        stack.append(")")
        for u, sub in reversed(item.grafts):
            stack.append(")")
            stack.append(sub)
            stack.append(" (" + fmt_real(u) + " ")
    return "".join(out)


_TOKEN = re.compile(r"\s*(\(|\)|\*|[^\s()]+)")


def _tokens(text: str) -> list[str]:
    pos = 0
    toks = []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise FormatError(f"unexpected character at offset {pos}")
        toks.append(m.group(1))
        pos = m.end()
    return toks


def _real(tok: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise FormatError(f"expected a real number, got {tok!r}") from None


def parse_tree(text: str, check: bool = True) -> Tree:
    """Inverse of :func:`format_tree`; validates the result unless ``check`` is False."""
    toks = _tokens(text)
    if toks == ["(", "*", ")"]:
        return ROOT_ONLY
    pos = 0

    def take(expected=None):
        nonlocal pos
        if pos >= len(toks):
            raise FormatError("unexpected end of tree text")
        tok = toks[pos]
        if expected is not None and tok != expected:
            raise FormatError(f"expected {expected!r}, got {tok!r} at token {pos}")
        pos += 1
        return tok

    # frames: [height, grafts, attach of this tree in its parent]
    take("(")
    stack = [[_real(take()), [], None]]
    result = None
    while stack:
        tok = take()
        if tok == ")":
            h, grafts, attach = stack.pop()
            tree = SpineTree(h, tuple(grafts))
            if not stack:
                result = tree
                break
            stack[-1][1].append((attach, tree))
            take(")")
        elif tok == "(":
            attach = _real(take())
            take("(")
            stack.append([_real(take()), [], attach])
        else:
            raise FormatError(f"unexpected token {tok!r}")
    if pos != len(toks):
        raise FormatError("trailing text after tree")
    return validate(result) if check else result


def format_forest(f: Forest) -> str:
    lines = [f"window {fmt_real(f.window[0])} {fmt_real(f.window[1])}"]
    lines += [f"{fmt_real(h)}\t{format_tree(t)}" for h, t in f.trees]
    return "\n".join(lines) + "\n"


def parse_forest(text: str, check: bool = True) -> Forest:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty forest file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "window":
        raise FormatError(f"bad forest header {lines[0]!r}")
    window = (_real(head[1]), _real(head[2]))
    trees = []
    for ln in lines[1:]:
        root, sep, body = ln.partition("\t")
        if not sep:
            raise FormatError(f"forest line lacks a tab: {ln!r}")
        trees.append((_real(root), parse_tree(body, check=False)))
    f = Forest(window, tuple(trees))
    return validate_forest(f) if check else f


def format_contour(c: Contour) -> str:
    buf = io.StringIO()
    buf.write("time,value\n")
    for t, v in zip(c.times.tolist(), c.values.tolist()):
        buf.write(f"{fmt_real(t)},{fmt_real(v)}\n")
    return buf.getvalue()


def parse_contour(text: str) -> Contour:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "time,value":
        raise FormatError("contour file must start with the header 'time,value'")
    rows = [ln.split(",") for ln in lines[1:]]
    if any(len(r) != 2 for r in rows):
        raise FormatError("contour rows need exactly two fields")
    arr = np.array([[_real(a), _real(b)] for a, b in rows], dtype=float).reshape(-1, 2)
    return Contour(arr[:, 0], arr[:, 1])


CONFIG_KEYS = {
    "theta": float,
    "beta": float,
    "delta": float,
    "epsilon": float,
    "seed": int,
    "replicates": int,
    "window_a": float,
    "window_b": float,
}


def parse_config(text: str) -> dict:
    """``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in CONFIG_KEYS:
            raise FormatError(f"config line {n}: unknown or malformed entry {raw!r}")
        try:
            out[key] = CONFIG_KEYS[key](value.strip())
        except ValueError:
            raise FormatError(f"config line {n}: bad value for {key}") from None
    return out


def read_text(path: str | Path) -> str:
    return Path(path).read_text()
