"""Command-line front end: campaign runners, design generation, diagnostics.

Subcommands: ``refine | optimize | invert | external | doe | eval | validate``.
Exit codes: 0 success, 1 run failure, 2 config/usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .campaign import ConfigError, load_config, run_campaign, validate_tree
from .core import Bounds, Dataset, write_points_csv
from .distribution import UpParams, up_at, up_mean, up_variance
from .doe import DoeConfig, lhs
from .surrogate import SurrogateSpec, fit_loo_submodels


def _parse_bounds(text: str) -> Bounds:
    lows, highs = [], []
    for i, part in enumerate(text.split(",")):
        try:
            lo, hi = part.split(":")
            lows.append(float(lo))
            highs.append(float(hi))
        except ValueError:
            raise ConfigError(f"bad bounds component {part!r} (expected lo:hi)") from None
    return Bounds(lows, highs)


def _campaign_command(args, expected_kind: str | None, require_external: bool = False) -> int:
    cfg = load_config(args.config)
    if expected_kind is not None and cfg.kind != expected_kind:
        raise ConfigError(
            f"config kind is {cfg.kind!r} but the {expected_kind!r} subcommand was invoked"
        )
    if require_external and cfg.external is None:
        raise ConfigError("the 'external' subcommand requires an 'external' objective in the config")
    outcomes = run_campaign(cfg, args.out, jobs=args.jobs, seed_offset=args.seed_offset)
    failed = [o for o in outcomes if o.status != "completed"]
    for o in outcomes:
        print(f"{o.algorithm} seed={o.seed}: {o.status}" + (f" ({o.error})" if o.error else ""))
    print(f"{len(outcomes) - len(failed)}/{len(outcomes)} runs completed; output in {args.out}")
    return 1 if failed else 0


def _cmd_doe(args) -> int:
    bounds = _parse_bounds(args.bounds) if args.bounds else Bounds.unit(args.dim)
    if bounds.dim != args.dim:
        raise ConfigError(f"--bounds has {bounds.dim} dimensions but --dim is {args.dim}")
    design = lhs(DoeConfig(args.n, args.dim, seed=args.seed, maximin_iters=args.maximin_iters), bounds)
    write_points_csv(args.out, design)
    print(f"wrote {args.n} x {args.dim} design to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    bounds = _parse_bounds(args.bounds)
    from .core import read_points_csv

    X, y = read_points_csv(args.design)
    if y is None:
        raise ConfigError(f"{args.design}: design CSV must include a y column for eval")
    data = Dataset(X, y, bounds)
    model_arg = args.model.strip()
    if model_arg.startswith("{"):
        spec = SurrogateSpec.from_dict(json.loads(model_arg))
    else:
        spec = SurrogateSpec(family=model_arg, seed=args.seed)
    params = (
        UpParams(rho=args.rho, rho_policy="fixed") if args.rho is not None else UpParams()
    )
    x = np.array([float(v) for v in args.at.split(",")])
    cv = fit_loo_submodels(spec, data)
    dist = up_at(x, cv, params)
    master_pred = cv.master.predict(x)
    doc = {
        "query": x.tolist(),
        "rho": dist.rho,
        "predictions": dist.predictions.tolist(),
        "weights": dist.weights.tolist(),
        "up_mean": up_mean(dist),
        "up_variance": up_variance(dist),
        "master_mean": master_pred.mean,
        "master_variance": master_pred.model_variance,
        "degenerate_weights": dist.degenerate,
    }
    json.dump(doc, sys.stdout, indent=2)
    print()
    return 0


def _cmd_validate(args) -> int:
    problems = validate_tree(args.out)
    for p in problems:
        print(p, file=sys.stderr)
    print(f"{'INVALID' if problems else 'OK'}: {args.out}")
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="updist",
        description="Cross-validation prediction uncertainty: refinement, optimization, "
        "and inversion campaigns over black-box objectives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_campaign(name: str, help_text: str):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="campaign config (JSON)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel (algorithm, seed) runs")
        p.add_argument("--seed-offset", type=int, default=0, help="added to every seed in the config")
        return p

    add_campaign("refine", "global refinement campaign (tracks Q2 on a test set)")
    add_campaign("optimize", "minimization campaign (tracks the incumbent best)")
    add_campaign("invert", "contour/excursion campaign (tracks band accuracy)")
    add_campaign("external", "any campaign whose objective is an external command")

    p = sub.add_parser("doe", help="emit a Latin hypercube design as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bounds", help="lo:hi,lo:hi,... (default: unit hypercube [-1,1]^dim)")
    p.add_argument("--maximin-iters", type=int, default=200)

    p = sub.add_parser("eval", help="print the prediction distribution at a point as JSON")
    p.add_argument("--at", required=True, help="comma-separated coordinates")
    p.add_argument("--design", required=True, help="design CSV with y column")
    p.add_argument("--bounds", required=True, help="lo:hi,lo:hi,...")
    p.add_argument("--model", default="kriging", help="surrogate family name or inline JSON spec")
    p.add_argument("--rho", type=float, help="fixed smoothing length (default: largest NN distance)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("validate", help="re-parse and schema-check emitted campaign files")
    p.add_argument("--out", required=True, help="campaign output directory")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "refine":
            return _campaign_command(args, "refine")
        if args.command == "optimize":
            return _campaign_command(args, "optimize")
        if args.command == "invert":
            return _campaign_command(args, "invert")
        if args.command == "external":
            return _campaign_command(args, None, require_external=True)
        if args.command == "doe":
            return _cmd_doe(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "validate":
            return _cmd_validate(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
