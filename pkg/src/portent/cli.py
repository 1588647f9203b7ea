"""Command-line front end for the pipeline and evaluation harness.

Subcommands: generate, run, eval, sweep, report. Exit codes: 0 on
success, 1 for configuration/usage errors, 2 for input parse errors,
3 for runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .corpus import CorpusError, write_records
from .evaluation import read_curve
from .pipeline import (
    ConfigError,
    PipelineConfig,
    load_config,
    load_inputs,
    replace_config,
    run_pipeline,
)
from .synth import generate, load_spec

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARSE = 2
EXIT_RUNTIME = 3


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    # Flags mirror config keys one-to-one; unset flags leave the file value.
    parser.add_argument("--output-dir")
    parser.add_argument("--rng-seed", type=int)
    parser.add_argument("--seed-fraction", type=float)
    parser.add_argument("--step-prefix", type=int)
    parser.add_argument("--probability-floor", type=float)
    parser.add_argument("--min-support", type=int)
    parser.add_argument("--min-ips", type=int)
    parser.add_argument("--priors-budget", type=int)
    parser.add_argument("--prediction-budget", type=int)
    parser.add_argument("--partitions", type=int)
    parser.add_argument("--curve-sample-every", type=int)


_OVERRIDE_KEYS = ("output_dir", "rng_seed", "seed_fraction", "step_prefix",
                  "probability_floor", "min_support", "min_ips", "priors_budget",
                  "prediction_budget", "partitions", "curve_sample_every")


def _apply_overrides(config: PipelineConfig, args) -> PipelineConfig:
    overrides = {key: getattr(args, key) for key in _OVERRIDE_KEYS
                 if getattr(args, key, None) is not None}
    if overrides:
        config = replace_config(config, **overrides)
    return config


def cmd_generate(args) -> int:
    spec = load_spec(args.spec)
    corpus = generate(spec)
    write_records(corpus.services, args.out)
    print(f"wrote {len(corpus)} services from {len(spec.templates)} template(s) "
          f"to {args.out}")
    return EXIT_OK


def _prepare_run(args):
    config = load_config(args.config)
    config = _apply_overrides(config, args)
    if config.output_dir is None:
        raise ConfigError("no output_dir set (config key or --output-dir)")
    corpus, asn_table = load_inputs(config)
    return config, corpus, asn_table


def cmd_run(args) -> int:
    config, corpus, asn_table = _prepare_run(args)
    result = run_pipeline(corpus, config, asn_table=asn_table)
    result.write_artifacts(config.output_dir)
    summary = result.summary()
    print(f"artifacts written to {config.output_dir}")
    print(f"truth services: {summary['truth_services']}, "
          f"found: {summary['found_truth_services']} "
          f"({(summary['found_truth_fraction'] or 0.0):.1%})")
    return EXIT_OK


def cmd_eval(args) -> int:
    # A single-cell evaluation: one pipeline run, curves as the product.
    return cmd_run(args)


def cmd_sweep(args) -> int:
    from .evaluation import sweep

    config, corpus, asn_table = _prepare_run(args)
    fractions = config.sweep_seed_fractions or (config.seed_fraction,)
    prefixes = config.sweep_step_prefixes or (config.step_prefix,)
    results = sweep(corpus, config, fractions, prefixes,
                    asn_table=asn_table, artifacts_root=config.output_dir)
    failures = 0
    for (fraction, prefix), outcome in sorted(results.items()):
        label = f"seed={fraction:g} step=/{prefix}"
        if isinstance(outcome, Exception):
            failures += 1
            print(f"{label}: FAILED: {outcome}", file=sys.stderr)
        else:
            print(f"{label}: truth={len(outcome.truth)} "
                  f"found={len((outcome.seed_result.found_keys() | outcome.priors_result.found_keys() | outcome.prediction_result.found_keys()) & outcome.truth)}")
    if failures == len(results):
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_report(args) -> int:
    outdir = Path(args.artifacts)
    summary_path = outdir / "summary.json"
    if not summary_path.exists():
        print(f"error: no summary.json under {outdir}", file=sys.stderr)
        return EXIT_CONFIG
    with open(summary_path, "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    print(f"truth services:        {summary['truth_services']}")
    print(f"eligible ports:        {summary['eligible_ports']}")
    print(f"seed/test IPs:         {summary['seed_ips']}/{summary['test_ips']}")
    print(f"model entries:         {summary['model_entries']}")
    print(f"priors entries:        {summary['priors_entries']}")
    print(f"predictions:           {summary['predictions']}")
    frac = summary.get("found_truth_fraction")
    print(f"truth services found:  {summary['found_truth_services']}"
          + (f" ({frac:.1%})" if frac is not None else ""))
    prec = summary.get("prediction_precision")
    if prec is not None:
        print(f"prediction precision:  {prec:.1%}")
    units = summary["ledger"]["total_full_scan_units"]
    print(f"bandwidth spent:       {units:.4g} full-scan units")
    report_path = outdir / "feature_report.csv"
    if report_path.exists():
        with open(report_path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        if rows:
            print(f"top predictive features (of {len(rows)}):")
            for row in rows[:args.top]:
                print(f"  {row['kinds']:40s} "
                      f"normalized {float(row['normalized_share']):7.2%}  "
                      f"services {float(row['service_share']):7.2%}")
    curves = outdir / "curves_noseed.csv"
    if curves.exists():
        points = read_curve(curves)
        if points:
            last = points[-1]
            print(f"final point (post-seed curve): {last.fraction_services:.1%} of "
                  f"services, {last.normalized_services:.1%} normalized, "
                  f"precision {last.precision:.2%}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="portent",
        description="Predictive all-port service discovery against a "
                    "simulated address space.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate a synthetic corpus file")
    p_gen.add_argument("--spec", required=True, help="synthetic spec JSON")
    p_gen.add_argument("--out", required=True, help="corpus file to write")
    p_gen.set_defaults(func=cmd_generate)

    for name, func, help_text in (
            ("run", cmd_run, "run the four-phase pipeline and evaluation"),
            ("eval", cmd_eval, "run one evaluation cell and emit curves"),
            ("sweep", cmd_sweep, "run the seed-fraction x step-prefix grid")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline config JSON")
        _add_override_flags(p)
        p.set_defaults(func=func)

    p_rep = sub.add_parser("report", help="summarize a finished run directory")
    p_rep.add_argument("--artifacts", required=True, help="pipeline output directory")
    p_rep.add_argument("--top", type=int, default=5,
                       help="feature report rows to show")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
