"""Command-line entry point: ``crtrev <command> ...``.

Data goes to stdout (or ``--out``), diagnostics to stderr. Exit status is 0
when everything passed, 1 when a statistical or identity check failed and 2
on usage or input errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from crtrev import identities
from crtrev import stats as st
from crtrev.contour import tree_from_contour, tree_to_contour
from crtrev.reversal import reverse, reverse_forest
from crtrev.sampler import Params, sample_batch
from crtrev.tree_core import InvalidTreeError, backbone, trim
from crtrev.treeio import (
    FormatError,
    format_contour,
    format_forest,
    format_tree,
    parse_config,
    parse_contour,
    parse_forest,
    parse_tree,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DEFAULTS = {
    "theta": 0.0,
    "beta": 1.0,
    "delta": 0.05,
    "epsilon": None,
    "replicates": 1,
    "window_a": -5.0,
    "window_b": 5.0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _model_flags(p, forest=False, replicates=True):
    p.add_argument("--config", type=Path, help="key=value file; flags override it")
    p.add_argument("--theta", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int)
    if replicates:
        p.add_argument("--replicates", type=int)
    p.add_argument("--jobs", type=int, default=1)
    if forest:
        p.add_argument("--window-a", dest="window_a", type=float)
        p.add_argument("--window-b", dest="window_b", type=float)


def _io_flags(p):
    p.add_argument("input", nargs="?", default="-", help="input file (default stdin)")
    p.add_argument("--out", default="-", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crtrev", description="Brownian CRT and forest reversal toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample-tree", help="sample trees, one per line")
    _model_flags(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--height", type=float, help="condition on this height")
    g.add_argument("--unconditioned", action="store_true",
                   help="draw from the excursion measure given H >= delta (default)")
    p.add_argument("--h-max", dest="h_max", type=float, help="cap on unconditioned heights")
    p.add_argument("--out", default="-")

    p = sub.add_parser("sample-forest", help="sample forests on a window")
    _model_flags(p, forest=True)
    p.add_argument("--h-max", dest="h_max", type=float)
    p.add_argument("--out", default="-")

    p = sub.add_parser("reverse", help="reverse each tree line")
    _io_flags(p)
    p = sub.add_parser("reverse-forest", help="reverse each forest")
    _io_flags(p)
    p = sub.add_parser("trim", help="erase points whose subtree is shorter than epsilon")
    _io_flags(p)
    p.add_argument("--epsilon", type=float, required=True)
    p = sub.add_parser("backbone", help="truncate graft recursion at depth n")
    _io_flags(p)
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("contour", help="convert between trees and contour CSV")
    csub = p.add_subparsers(dest="direction", required=True, parser_class=_Parser)
    _io_flags(csub.add_parser("encode", help="tree -> contour CSV"))
    _io_flags(csub.add_parser("decode", help="contour CSV -> tree"))

    p = sub.add_parser("stats", help="statistical checks")
    ssub = p.add_subparsers(dest="stat", required=True, parser_class=_Parser)
    q = ssub.add_parser("invariance", help="raw vs reversed batches, per functional")
    _model_flags(q, replicates=False)
    q.add_argument("--functional", action="append",
                   choices=[*st.TREE_FUNCTIONALS, *st.FOREST_FUNCTIONALS],
                   help="repeatable; default: every tree functional")
    q.add_argument("--n", type=int, default=1000, help="replicates per batch")
    q.add_argument("--height", type=float, default=1.0)
    q.add_argument("--unconditioned", action="store_true")
    q.add_argument("--h-max", dest="h_max", type=float)
    q.add_argument("--alpha", type=float, default=0.01)
    q.add_argument("--mutate", action="store_true", help="use a deliberately broken reversal")
    q.add_argument("--csv", type=Path, help="write the CSV report here")
    q.add_argument("--svg", type=Path, help="write ECDF plots here (one file per functional)")
    q = ssub.add_parser("means", help="stationary mean of z_estimate or tmrca")
    _model_flags(q, replicates=False)
    q.add_argument("--target", choices=["z", "a"], required=True)
    q.add_argument("--n", type=int, default=1000)
    q.add_argument("--se-mult", dest="se_mult", type=float, default=3.0)

    p = sub.add_parser("verify", help="run the deterministic identity suite")
    _model_flags(p)
    p.add_argument("--forests", type=int)
    return parser


def _settings(args) -> dict:
    conf = parse_config(args.config.read_text()) if getattr(args, "config", None) else {}
    out = {}
    for key, default in {**DEFAULTS, "seed": None}.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else conf.get(key, default)
    if out["seed"] is None:
        raise UsageError("a --seed (or seed= in --config) is required")
    return out


def _params(cfg) -> Params:
    try:
        return Params(cfg["theta"], cfg["beta"], cfg["delta"], cfg["epsilon"])
    except ValueError as e:
        raise UsageError(str(e)) from None


def _read(name: str) -> str:
    return sys.stdin.read() if name == "-" else Path(name).read_text()


def _write(name: str, text: str):
    if name == "-":
        sys.stdout.write(text)
    else:
        Path(name).write_text(text)


def _tree_lines(text: str):
    return [parse_tree(ln) for ln in text.splitlines() if ln.strip()]


def _forest_blocks(text: str):
    blocks, cur = [], []
    for ln in text.splitlines():
        if ln.startswith("window") and cur:
            blocks.append("\n".join(cur))
            cur = []
        if ln.strip():
            cur.append(ln)
    if cur:
        blocks.append("\n".join(cur))
    return [parse_forest(b) for b in blocks]


def _map_trees(args, fn) -> int:
    trees = _tree_lines(_read(args.input))
    _write(args.out, "".join(format_tree(fn(t)) + "\n" for t in trees))
    return EXIT_OK


def cmd_sample_tree(args) -> int:
    cfg = _settings(args)
    params = _params(cfg)
    h_max = args.h_max
    if args.height is None and h_max is None and params.theta == 0.0:
        print("note: unconditioned theta=0 trees have unbounded expected size; "
              "consider --h-max", file=sys.stderr)
    if args.height is not None and not args.height > params.delta:
        raise UsageError(f"--height must exceed delta={params.delta}")
    batch = sample_batch(params, cfg["seed"], cfg["replicates"], "tree", jobs=args.jobs,
                         height=args.height, h_max=h_max)
    _write(args.out, "".join(format_tree(t) + "\n" for t in batch.items))
    return EXIT_OK


def cmd_sample_forest(args) -> int:
    cfg = _settings(args)
    params = _params(cfg)
    window = (cfg["window_a"], cfg["window_b"])
    if not window[0] < window[1]:
        raise UsageError(f"empty window {window}")
    batch = sample_batch(params, cfg["seed"], cfg["replicates"], "forest", jobs=args.jobs,
                         window=window, h_max=args.h_max)
    _write(args.out, "".join(format_forest(f) for f in batch.items))
    return EXIT_OK


def cmd_reverse_forest(args) -> int:
    forests = _forest_blocks(_read(args.input))
    _write(args.out, "".join(format_forest(reverse_forest(f)) for f in forests))
    return EXIT_OK


def cmd_contour(args) -> int:
    text = _read(args.input)
    if args.direction == "encode":
        trees = _tree_lines(text)
        if len(trees) != 1:
            raise UsageError("contour encode takes exactly one tree")
        _write(args.out, format_contour(tree_to_contour(trees[0])))
    else:
        _write(args.out, format_tree(tree_from_contour(parse_contour(text))) + "\n")
    return EXIT_OK


def cmd_invariance(args) -> int:
    cfg = _settings(args)
    params = _params(cfg)
    names = args.functional or list(st.TREE_FUNCTIONALS)
    height = None if args.unconditioned else args.height
    h_max = args.h_max
    if height is None and h_max is None and params.theta == 0.0:
        h_max = 1.0
    try:
        reports = st.invariance_suite(params, names, args.n, cfg["seed"], alpha=args.alpha,
                                      height=height, h_max=h_max, mutate=args.mutate)
    except ValueError as e:
        raise UsageError(str(e)) from None
    print(st.reports_csv(reports), end="")
    print(st.reports_table(reports), file=sys.stderr)
    if args.csv:
        args.csv.write_text(st.reports_csv(reports))
    if args.svg:
        _invariance_svgs(args, params, names, cfg["seed"], height, h_max)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def _invariance_svgs(args, params, names, seed, height, h_max):
    if all(n in st.FOREST_FUNCTIONALS for n in names):
        raw, rev = st.forest_batches(params, names, args.n, seed)
    else:
        raw, rev = st.tree_batches(params, names, args.n, seed, height=height, h_max=h_max,
                                   mutate=args.mutate)
    for name in names:
        path = args.svg.with_name(f"{args.svg.stem}_{name}{args.svg.suffix or '.svg'}")
        st.ecdf_svg(raw[name], rev[name], path, title=name)


def cmd_means(args) -> int:
    cfg = _settings(args)
    params = _params(cfg)
    try:
        z, a = st.stationary_means(params, args.n, cfg["seed"])
    except ValueError as e:
        raise UsageError(str(e)) from None
    bias = st.stationary_bias_bounds(params)
    if args.target == "z":
        res = st.mean_check(z, 1.0 / params.theta, args.se_mult, bias["z"])
    else:
        target = 3.0 / (4.0 * params.beta * params.theta)
        res = st.mean_check(a, target, args.se_mult, bias["tmrca"])
    lo, hi = res.interval
    print("target,n,mean,se,bias_bound,ci_low,ci_high,pass")
    print(f"{res.target:.6g},{res.n},{res.mean:.6g},{res.std_error:.6g},"
          f"{res.bias_bound:.6g},{lo:.6g},{hi:.6g},{int(res.passed)}")
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    cfg = _settings(args)
    params = _params(cfg)
    results = identities.run_suite(params, cfg["seed"], cfg["replicates"], forests=args.forests)
    print(f"{'identity':22s} {'passed':>8s} {'total':>8s}  result")
    for r in results:
        print(f"{r.name:22s} {r.passed:8d} {r.total:8d}  {'PASS' if r.ok else 'FAIL'}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_FAIL


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cmd = args.command
        if cmd == "sample-tree":
            return cmd_sample_tree(args)
        if cmd == "sample-forest":
            return cmd_sample_forest(args)
        if cmd == "reverse":
            return _map_trees(args, reverse)
        if cmd == "reverse-forest":
            return cmd_reverse_forest(args)
        if cmd == "trim":
            if not args.epsilon > 0.0:
                raise UsageError("--epsilon must be positive")
            return _map_trees(args, lambda t: trim(t, args.epsilon))
        if cmd == "backbone":
            if args.n < 0:
                raise UsageError("--n must be nonnegative")
            return _map_trees(args, lambda t: backbone(t, args.n))
        if cmd == "contour":
            return cmd_contour(args)
        if cmd == "stats":
            return cmd_invariance(args) if args.stat == "invariance" else cmd_means(args)
        return cmd_verify(args)
    except UsageError as e:
        print(str(e).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head)
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except (FormatError, InvalidTreeError, OSError, ValueError) as e:
        print(f"crtrev: {e}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
