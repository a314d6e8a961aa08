"""Command-line entry point.

    hanova fit --data FILE --model "y ~ a + b + a:b" --method all \
        [--draws N] [--chains C --iters I --warmup W --thin T] [--seed S] \
        [--format text|json|csv|svg] [--out PATH] [--alias "trt=row:col"] \
        [--figure PATH.png] [--px/--no-px]

Exit codes: 0 ok, 2 input error, 3 numerical failure.  ``HANOVA_SEED`` is
used when ``--seed`` is not given.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import bayes, classical
from .dataio import read_csv
from .design import build_design
from .errors import ConfigError, HanovaError, InputError, NumericalError
from .formula import expand_terms, parse_alias_option, parse_model, render_model
from .numerics import RngStream
from .report import (
    RunResult,
    render_classical_table,
    render_vc_display,
    render_vc_figure,
    write_csv,
    write_json,
)
from .results import vc_summary_from_moments


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hanova",
        description="Hierarchical ANOVA: classical table, moments variance "
        "components with simulated intervals, and Gibbs posterior inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fit = sub.add_parser("fit", help="fit a model to a CSV dataset")
    fit.add_argument("--data", required=True, help="CSV file with a header row")
    fit.add_argument("--model", required=True, help='model text, e.g. "y ~ a + b + a:b"')
    fit.add_argument(
        "--method",
        choices=["classical", "moments", "bayes", "all"],
        default="all",
    )
    fit.add_argument("--draws", type=int, default=1000,
                     help="simulation draws for the moments intervals")
    fit.add_argument("--chains", type=int, default=4)
    fit.add_argument("--iters", type=int, default=2000)
    fit.add_argument("--warmup", type=int, default=1000)
    fit.add_argument("--thin", type=int, default=1)
    fit.add_argument("--seed", type=int, default=None,
                     help="RNG seed (falls back to HANOVA_SEED, then 0)")
    fit.add_argument("--format", choices=["text", "json", "csv", "svg"], default="text")
    fit.add_argument("--out", default=None, help="output path (default stdout)")
    fit.add_argument("--alias", action="append", default=[], metavar="LHS=RHS",
                     help='aliasing declaration, e.g. "trt=row:col" (repeatable)')
    fit.add_argument("--px", action=argparse.BooleanOptionalAction, default=True,
                     help="use the parameter-expanded sampler (default on)")
    fit.add_argument("--sigma-max", type=float, default=None,
                     help="truncation bound for improper-posterior batches")
    fit.add_argument("--figure", default=None,
                     help="also render the display as a matplotlib figure file")
    return parser


def _resolve_seed(seed) -> int:
    if seed is not None:
        return int(seed)
    env = os.environ.get("HANOVA_SEED")
    return int(env) if env else 0


def run_fit(args) -> RunResult:
    spec = parse_model(args.model)
    extra = tuple(parse_alias_option(a) for a in args.alias)
    if extra:
        spec = replace(spec, aliases=spec.aliases + extra)
    dataset = read_csv(args.data, spec.response, spec.factors)
    batches = expand_terms(spec, spec.factors)
    design = build_design(batches, dataset, spec.aliases)

    seed = _resolve_seed(args.seed)
    method = args.method
    run = RunResult(render_model(spec), method, seed, design)

    want_classical = method in ("classical", "moments", "all")
    want_moments = method in ("moments", "all", "bayes")
    want_bayes = method in ("bayes", "all")

    moments = None
    if want_classical or want_moments:
        try:
            estimates = classical.fit_effects(design)
            run.table = classical.anova_table(estimates, design)
        except HanovaError:
            if method != "bayes":
                raise
        if want_moments and run.table is not None and method != "classical":
            moments = classical.run_moments(
                design, n_draws=args.draws, rng=RngStream(seed).child(1)
            )
            run.moments = moments
            run.warnings.extend(moments.notes)
            run.vc = vc_summary_from_moments(moments, design)
            run.draws_meta["n_draws"] = int(args.draws)

    if want_bayes:
        config = bayes.ChainConfig(
            chains=args.chains,
            iters=args.iters,
            warmup=args.warmup,
            thin=args.thin,
            seed=seed,
            px=args.px,
            sigma_max=args.sigma_max,
        )
        draws, diag = bayes.run_chains(design, prior=None, config=config, moments=moments)
        run.vc = bayes.summarize_posterior(draws, design)
        run.warnings.extend(diag.warnings)
        run.draws_meta.update(
            {
                "chains": config.chains,
                "iters": config.iters,
                "warmup": config.warmup,
                "thin": config.thin,
                "px": bool(config.px),
                "max_rhat_sigma": max(
                    (v for k, v in diag.rhat.items() if k.startswith("sigma[")),
                    default=None,
                ),
            }
        )
    return run


def render_output(run: RunResult, fmt: str):
    """Returns str or bytes for the chosen format."""
    if fmt == "json":
        return write_json(run)
    if fmt == "csv":
        return write_csv(run)
    if fmt == "svg":
        if run.vc is None:
            raise ConfigError("svg output needs interval estimates; use --method "
                              "moments, bayes or all")
        return render_vc_display(run.vc, "svg")
    parts = []
    if run.table is not None:
        parts.append(render_classical_table(run.table))
    if run.vc is not None:
        origin = "method-of-moments" if run.vc.point_origin == "moments" else "posterior median"
        parts.append(f"Variance components (points: {origin})\n")
        parts.append(render_vc_display(run.vc, "text"))
    if run.warnings:
        parts.append("".join(f"warning: {w}\n" for w in run.warnings))
    if not parts:
        parts.append("nothing to report\n")
    return "\n".join(parts)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = run_fit(args)
        out = render_output(run, args.format)
        if args.figure:
            if run.vc is None:
                raise ConfigError("figure output needs interval estimates; use "
                                  "--method moments, bayes or all")
            render_vc_figure(run.vc, args.figure)
        if args.out:
            mode = "wb" if isinstance(out, bytes) else "w"
            with open(args.out, mode) as fh:
                fh.write(out)
        else:
            if isinstance(out, bytes):
                sys.stdout.buffer.write(out)
            else:
                sys.stdout.write(out)
    except InputError as exc:
        print(f"hanova: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"hanova: numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"hanova: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
