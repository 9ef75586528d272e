"""Command-line interface.

Exit codes: 0 success, 1 validation or usage error, 2 solver did not
converge, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import csvio
from .em import estimate_em
from .errors import ConvergenceError, PanelError
from .fixtures import FIXTURES, fixture_files
from .fw import estimate_fw
from .mm import estimate_mm
from .model import (
    EstimationConfig,
    ModelParams,
    SellDownSpec,
    loglik_basic,
    loglik_partial,
    loglik_selldown,
    outside_weights,
    recover_lambda,
)
from .reproduce import TARGETS, reproduce
from .simulate import POLICIES, SimulationSpec, simulate_panel
from .split import disaggregate_panel, merge_identical_assortments

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_IO = 0, 1, 2, 3

# Both spellings are accepted for the bound generator.
BOUND_MODE_ALIASES = {"sales": "sales", "per-period": "sales", "share": "share", "aggregate": "share"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from None


def _add_panel_args(p):
    p.add_argument("--fixture", choices=sorted(FIXTURES), help="use a shipped example panel")
    p.add_argument("--sales", type=Path, help="CSV with product_id,period,sales")
    p.add_argument("--availability", type=Path, help="CSV with product_id,period,open_pct")
    p.add_argument("--offered", type=Path, help="CSV with product_id,period")


def _load(args):
    if args.fixture:
        return csvio.load_panel(fixture_files(args.fixture))
    if not (args.sales and args.availability):
        raise UsageError("either --fixture or both --sales and --availability are required")
    return csvio.load_panel(sales=args.sales, availability=args.availability, offered=args.offered)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mnldemand", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("split", help="split partial-availability periods into open/closed segments")
    _add_panel_args(p)
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("merge", help="merge periods with identical assortments")
    _add_panel_args(p)
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("estimate", help="fit preference weights and arrival rates")
    _add_panel_args(p)
    p.add_argument("--solver", choices=("em", "mm", "fw"), required=True)
    p.add_argument("--config", type=Path, help="key=value file with EstimationConfig fields")
    p.add_argument("--market-share", type=float)
    p.add_argument("--alpha", type=float)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--bounds-file", type=Path, help="CSV with period,bound")
    g.add_argument("--bound-multiplier", type=float)
    p.add_argument("--bound-mode", choices=sorted(BOUND_MODE_ALIASES))
    p.add_argument("--v0t-file", type=Path, help="CSV with period,v0t (mm solver)")
    p.add_argument("--step", choices=("armijo", "default"))
    p.add_argument("--max-iters", type=int)
    p.add_argument("--naive", action="store_true", help="em: treat every product as offered in every period")
    p.add_argument("--out", type=Path, help="demand matrix CSV (metadata goes to <out>.meta.json)")

    p = sub.add_parser("eval", help="evaluate a log-likelihood")
    _add_panel_args(p)
    p.add_argument("--model", choices=("basic", "partial", "selldown"), required=True)
    p.add_argument("--v", type=_floats, required=True, help="comma-separated preference weights")
    p.add_argument("--v0", type=float, help="outside weight used in every period")
    p.add_argument("--v0t-file", type=Path)
    p.add_argument("--market-share", type=float, help="derive v0t from the share constraint")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--lam", type=_floats, help="comma-separated arrival rates (default: profiled)")
    p.add_argument("--l", type=float, default=0.0, help="sell-down excess attraction")

    p = sub.add_parser("simulate", help="draw a synthetic panel")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--periods", type=int, required=True)
    p.add_argument("--v", type=_floats, required=True)
    p.add_argument("--lam", type=_floats, required=True, help="one rate or one per period")
    p.add_argument("--v0", type=float, default=1.0)
    p.add_argument("--policy", choices=POLICIES, default="open")
    p.add_argument("--close-prob", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("reproduce", help="regenerate a published table and diff it against the golden file")
    p.add_argument("target", choices=sorted(TARGETS) + ["all"])
    p.add_argument("--out-dir", type=Path, help="also write the regenerated tables here")
    p.add_argument("--jobs", type=int, default=1)
    return parser


def _config(args, panel) -> EstimationConfig:
    kw = csvio.load_config(args.config) if args.config else {}
    for flag, key in (("market_share", "market_share"), ("alpha", "alpha"), ("bound_multiplier", "bound_multiplier"),
                      ("step", "step"), ("max_iters", "max_iters")):
        val = getattr(args, flag)
        if val is not None:
            kw[key] = val
    if args.bound_mode is not None:
        kw["bound_mode"] = BOUND_MODE_ALIASES[args.bound_mode]
    elif "bound_mode" in kw:
        kw["bound_mode"] = BOUND_MODE_ALIASES.get(kw["bound_mode"], kw["bound_mode"])
    if args.bounds_file:
        kw["bounds"] = tuple(csvio.read_period_vector(args.bounds_file, "bound", panel.periods))
        kw.pop("bound_multiplier", None)
    if "market_share" not in kw:
        raise UsageError("--market-share is required (flag or config file)")
    return EstimationConfig(**kw)


def _cmd_split(args) -> int:
    panel = _load(args)
    fine, pmap = disaggregate_panel(panel)
    csvio.write_panel(fine, args.out_dir)
    rows = [[fine.periods[k], panel.periods[pmap.source[k]], csvio.fmt(pmap.weight[k])] for k in range(fine.T)]
    csvio.atomic_write_text(args.out_dir / "period_map.csv", csvio._csv_text(["period", "source_period", "weight"], rows))
    print(f"{panel.T} periods -> {fine.T} segments written to {args.out_dir}")
    return EXIT_OK


def _cmd_merge(args) -> int:
    panel = _load(args)
    merged, pmap = merge_identical_assortments(panel)
    csvio.write_panel(merged, args.out_dir)
    rows = [[panel.periods[t], merged.periods[pmap.source[t]]] for t in range(panel.T)]
    csvio.atomic_write_text(args.out_dir / "period_map.csv", csvio._csv_text(["period", "merged_period"], rows))
    print(f"{panel.T} periods -> {merged.T} merged periods written to {args.out_dir}")
    return EXIT_OK


def _cmd_estimate(args) -> int:
    panel = _load(args)
    cfg = _config(args, panel)
    if args.solver == "em":
        res = estimate_em(panel, cfg, naive=args.naive)
    elif args.solver == "mm":
        v0t = csvio.read_period_vector(args.v0t_file, "v0t", panel.periods) if args.v0t_file else None
        res = estimate_mm(panel, cfg, v0t)
    else:
        res = estimate_fw(panel, cfg)
    status = "converged" if res.converged else ("diverged" if res.diverged else "not converged")
    print(f"solver={res.solver} iterations={res.iterations} {status} total_demand={res.total_demand:.6f} "
          f"objective={res.objective:.9g}")
    if res.message:
        print(res.message, file=sys.stderr)
    if args.out:
        csvio.write_result(res, args.out, panel.offered)
    else:
        header, rows = csvio.demand_rows(res, panel.offered)
        sys.stdout.write(csvio._csv_text(header, rows))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _cmd_eval(args) -> int:
    panel = _load(args)
    v = np.asarray(args.v, dtype=float)
    if v.size != panel.n:
        raise UsageError(f"--v needs {panel.n} values, got {v.size}")
    if args.v0 is not None:
        v0t = np.full(panel.T, args.v0)
    elif args.v0t_file:
        v0t = csvio.read_period_vector(args.v0t_file, "v0t", panel.periods)
    elif args.market_share is not None:
        cfg = EstimationConfig(args.market_share, alpha=args.alpha)
        v0t = outside_weights(panel, v, cfg.r, cfg.alpha)
    else:
        raise UsageError("give --v0, --v0t-file or --market-share")
    if args.lam is not None:
        lam = np.broadcast_to(np.asarray(args.lam, dtype=float), (panel.T,))
    else:
        lam = recover_lambda(panel, v, v0t, None)
    params = ModelParams(v, v0t, lam)
    if args.model == "basic":
        val = loglik_basic(panel, params)
    elif args.model == "partial":
        val = loglik_partial(panel, params)
    else:
        val = loglik_selldown(panel, params, SellDownSpec.from_panel(panel, args.l))
    print(csvio.fmt(val))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    lam = args.lam[0] if len(args.lam) == 1 else tuple(args.lam)
    spec = SimulationSpec(args.n, args.periods, tuple(args.v), lam, args.v0, args.policy, args.close_prob, args.seed)
    panel, truth = simulate_panel(spec)
    csvio.write_panel(panel, args.out_dir)
    truth_doc = {"v": truth.v.tolist(), "v0": args.v0, "lambda": truth.lam.tolist(), "seed": args.seed,
                 "policy": args.policy}
    csvio.atomic_write_text(args.out_dir / "truth.json", json.dumps(truth_doc, indent=2) + "\n")
    print(f"simulated {args.n} products x {args.periods} periods into {args.out_dir}")
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    if args.target == "all":
        from .reproduce import reproduce_all

        results = reproduce_all(args.jobs)
    else:
        results = [reproduce(args.target)]
    failed = 0
    for rep in results:
        if args.out_dir:
            csvio.atomic_write_text(args.out_dir / f"{rep.target}.csv", csvio._csv_text(rep.header, rep.rows))
        if rep.ok:
            print(f"{rep.target}: matches golden file")
        else:
            failed += 1
            print(f"{rep.target}: {len(rep.diffs)} difference(s)")
            for d in rep.diffs:
                print(f"  {d}")
    return EXIT_OK if failed == 0 else EXIT_INVALID


COMMANDS = {
    "split": _cmd_split,
    "merge": _cmd_merge,
    "estimate": _cmd_estimate,
    "eval": _cmd_eval,
    "simulate": _cmd_simulate,
    "reproduce": _cmd_reproduce,
}


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"mnldemand: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as exc:
        print(f"mnldemand: solver failure: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (PanelError, ValueError, KeyError) as exc:
        print(f"mnldemand: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"mnldemand: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def main(argv=None) -> int:
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
