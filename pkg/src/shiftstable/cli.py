"""Command-line front end.

Subcommands: ``stability``, ``hierarchy``, ``sweep``, ``tradeoff``,
``simulate``.  Every stochastic command requires an explicit ``--seed`` and
records it in the output metadata; CSV outputs are written atomically and can
be re-read by :mod:`shiftstable.io`.

Exit codes: 0 ok, 1 usage, 2 parse error, 3 invalid spec/query,
4 internal stability-oracle disagreement.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io as sio
from .errors import (
    CapacityError,
    FitError,
    GraphError,
    ModelError,
    NoStableSolutionError,
    ParseError,
    QueryError,
    SpecError,
    UnsupportedError,
)
from .graphs import Edge, is_stable_conditional, selection_stable, to_selection_diagram
from .hierarchy import hierarchy_report
from .presets import triangle_scm
from .robustness import coefficient_sweep, tradeoff_sweep
from .scm import fit_scm_from_data, sample

CAVEAT = ("note: distributions above level 1 may not be estimable from "
          "observational data alone; results assume the stated model.")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_grid(text: str) -> list[float]:
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise UsageError(f"grid must look like lo:hi:steps, got {text!r}") from None
    if steps < 1:
        raise UsageError("grid needs at least one step")
    return [float(v) for v in np.linspace(lo, hi, steps)]


def _parse_nodes(text: str) -> list[str]:
    return [part for part in (p.strip() for p in text.split(",")) if part]


def _parse_edge(text: str) -> Edge:
    parts = text.split(":")
    if len(parts) != 2 or not all(parts):
        raise UsageError(f"edge must look like TAIL:HEAD, got {text!r}")
    return Edge(parts[0], parts[1])


def _source_model(args):
    if getattr(args, "scm", None):
        return sio.load_scm(args.scm), {"scm": str(args.scm)}
    preset = getattr(args, "preset", None)
    if preset == "triangle":
        return triangle_scm(), {"preset": "triangle"}
    if preset == "random-triangle":
        from .presets import random_triangle_scm

        child = np.random.SeedSequence(args.seed).spawn(1)[0]
        m = random_triangle_scm(child)
        return m, {"preset": "random-triangle",
                   "coefficients": {str(e): v for e, v in sorted(m.coeffs.items())}}
    raise UsageError("need --scm PATH or --preset")


def _write_meta(out_path: str, meta: dict) -> None:
    sio.atomic_write_text(out_path + ".meta.json", json.dumps(meta, indent=2) + "\n")


# --------------------------------------------------------------------------


def cmd_stability(args) -> int:
    g = sio.load_graph(args.graph)
    conditioning = frozenset(_parse_nodes(args.condition or ""))
    verdict = is_stable_conditional(g, conditioning)
    diagram_stable = selection_stable(to_selection_diagram(g), conditioning)
    word = {True: "stable", False: "unstable"}
    print(f"target: {g.target}")
    print(f"conditioning: {{{', '.join(sorted(conditioning)) or ''}}}")
    print(f"path criterion:      {word[verdict.stable]}")
    print(f"selection diagram:   {word[diagram_stable]}")
    if not verdict.stable:
        print("witness paths (unstable edges marked *):")
        for w in verdict.witnesses:
            print(f"  {w.render(g)}")
    if verdict.stable != diagram_stable:
        print("error: the two stability oracles disagree; this is a bug",
              file=sys.stderr)
        return 4
    return 0


def cmd_hierarchy(args) -> int:
    g = sio.load_graph(args.graph)
    report = hierarchy_report(g, max_combinations=args.max_subsets)
    sio.write_hierarchy_csv(args.out, report)
    print(f"stable level-1 sets: {len(report.level1)}")
    print(f"stable level-2 pairs: {len(report.level2)}")
    print(f"optimal: {report.optimal.describe()}")
    if report.level2 or report.optimal.level >= 2:
        print(CAVEAT)
    print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    m = sio.load_scm(args.scm)
    edge = _parse_edge(args.edge) if args.edge else None
    result = coefficient_sweep(m, _parse_grid(args.lambda_grid), edge)
    sio.write_sweep_csv(args.out, result)
    meta = result.as_meta()
    meta["lambda_grid"] = args.lambda_grid
    _write_meta(args.out, meta)
    if result.crossover is None:
        print("the source-fit predictor never beats the stable one on this grid")
    else:
        lo, hi = result.crossover
        print(f"source-fit predictor beats the stable one for lambda in "
              f"[{lo:g}, {hi:g}]")
    print(CAVEAT)
    print(f"wrote {args.out}")
    return 0


def cmd_tradeoff(args) -> int:
    source, origin = _source_model(args)
    fitting = None
    meta_fit = {"coeff_source": args.coeff_source}
    if args.coeff_source == "estimated":
        train_seed = np.random.SeedSequence(args.seed).spawn(2)[1]
        table = sample(source, args.n_train, train_seed)
        fitting = fit_scm_from_data(source.graph, table)
        meta_fit["n_train"] = args.n_train
    result = tradeoff_sweep(source, _parse_grid(args.sigma_grid), args.n_mc,
                            args.seed, weights_mode=args.weights_mode,
                            fitting_model=fitting)
    sio.write_tradeoff_csv(args.out, result.rows)
    meta = dict(result.meta)
    meta.update(origin)
    meta.update(meta_fit)
    _write_meta(args.out, meta)
    if args.trace_out:
        sio.write_trace_csv(args.trace_out, result.traces)
        print(f"wrote {args.trace_out}")
    print(CAVEAT)
    print(f"wrote {args.out}")
    return 0


def cmd_simulate(args) -> int:
    m, origin = _source_model(args)
    table = sample(m, args.n_samples, args.seed)
    sio.write_data_csv(args.out, table)
    meta = {"seed": args.seed, "n_samples": args.n_samples}
    meta.update(origin)
    _write_meta(args.out, meta)
    print(f"wrote {args.out}")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="shiftstable",
                     description="Stability analysis and risk evaluation for "
                                 "causal graphs with unstable edges.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stability", help="check one conditioning set with both oracles")
    p.add_argument("--graph", required=True, help="graph JSON path")
    p.add_argument("--condition", default="", help="comma-separated node ids")
    p.set_defaults(run=cmd_stability)

    p = sub.add_parser("hierarchy", help="enumerate stable sets at every level")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--max-subsets", type=int, default=2**20,
                   help="enumeration budget (combinations)")
    p.set_defaults(run=cmd_hierarchy)

    p = sub.add_parser("sweep", help="risk curves as one unstable coefficient varies")
    p.add_argument("--scm", required=True, help="SCM JSON path")
    p.add_argument("--lambda-grid", required=True, metavar="LO:HI:STEPS")
    p.add_argument("--edge", default=None, metavar="TAIL:HEAD",
                   help="which unstable edge to sweep (required when several)")
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_sweep)

    p = sub.add_parser("tradeoff", help="average regret and worst case over widening priors")
    p.add_argument("--scm", default=None)
    p.add_argument("--preset", default=None,
                   choices=["triangle", "random-triangle"])
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--n-mc", type=int, default=1000, help="environment draws per spread")
    p.add_argument("--sigma-grid", default="1:4:50", metavar="LO:HI:STEPS")
    p.add_argument("--weights-mode", default="source",
                   choices=["source", "prior-optimal"])
    p.add_argument("--coeff-source", default="exact",
                   choices=["exact", "estimated"])
    p.add_argument("--n-train", type=int, default=10000,
                   help="training rows for --coeff-source estimated")
    p.add_argument("--out", required=True)
    p.add_argument("--trace-out", default=None, help="stepwise trace CSV path")
    p.set_defaults(run=cmd_tradeoff)

    p = sub.add_parser("simulate", help="sample a data table from a model")
    p.add_argument("--scm", default=None)
    p.add_argument("--preset", default=None,
                   choices=["triangle", "random-triangle"])
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.run(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except (SpecError, QueryError, GraphError, CapacityError, UnsupportedError,
            NoStableSolutionError, ModelError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
