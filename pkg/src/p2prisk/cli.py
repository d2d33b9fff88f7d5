"""Command-line entry point: ``prepare``, ``run``, ``synth`` and ``report``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, DataError, P2PRiskError
from .harness import (
    ExperimentConfig,
    SyntheticSpec,
    generate_synthetic,
    load_dataset_for,
    load_results,
    render_report,
    run_grid,
    write_results,
)
from .ingest import (
    PipelineConfig,
    load_csv,
    prepare,
    write_correlations_csv,
    write_dataset_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="p2prisk", description="Imbalance-aware credit risk experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    prep = sub.add_parser("prepare", help="feature-engineer a raw loan CSV")
    prep.add_argument("input", help="raw loan CSV with a header row")
    prep.add_argument("--config", help="pipeline config JSON (column mapping, leak list)")
    prep.add_argument("--out", required=True, help="processed dataset CSV")
    prep.add_argument("--correlations", help="correlation report CSV")
    prep.add_argument("--summary", help="write the stage-by-stage row counts as JSON")

    run = sub.add_parser("run", help="run the classifier x resampler grid")
    run.add_argument("--config", required=True, help="experiment config JSON")
    run.add_argument("--data", help="prepared dataset CSV (overrides the config's data block)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--seed", type=int, help="master seed (overrides the config)")
    run.add_argument("--repetitions", type=int, help="overrides the config")

    syn = sub.add_parser("synth", help="write a synthetic imbalanced dataset")
    syn.add_argument("--n", type=int, default=5460)
    syn.add_argument("--ratio", type=float, default=4.46)
    syn.add_argument("--sep", type=float, default=1.0)
    syn.add_argument("--features", type=int, default=10)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--out", required=True)

    rep = sub.add_parser("report", help="re-render a stored results.json")
    rep.add_argument("results", help="results.json written by `run`")
    rep.add_argument("--format", choices=("text", "csv", "json"), default="text")
    rep.add_argument("--out", help="write to a file instead of stdout")
    return p


def _cmd_prepare(args) -> int:
    cfg = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    result = prepare(load_csv(args.input), cfg)
    write_dataset_csv(result.dataset, args.out)
    if args.correlations:
        write_correlations_csv(result.correlations, args.correlations)
    if args.summary:
        Path(args.summary).write_text(json.dumps(result.log, indent=2) + "\n")
    final = result.log["final"]
    print(
        f"{final['rows']} rows, {final['features']} features, "
        f"{final['default_pct']:.1f}% default, imbalance ratio {final['imbalance_ratio']:.2f}"
    )
    return EXIT_OK


def _cmd_run(args) -> int:
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config = replace(config, master_seed=args.seed)
    if args.repetitions is not None:
        config = replace(config, repetitions=args.repetitions)
    dataset = load_dataset_for(config, args.data)
    result = run_grid(config, dataset, threads=args.threads)
    paths = write_results(result, args.out)
    sys.stdout.write(paths["text"].read_text())
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(args.n, args.ratio, args.features, args.sep, args.seed)
    write_dataset_csv(generate_synthetic(spec), args.out)
    return EXIT_OK


def _cmd_report(args) -> int:
    rows, _ = load_results(args.results)
    text = render_report(rows, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"prepare": _cmd_prepare, "run": _cmd_run, "synth": _cmd_synth, "report": _cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"UsageError: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except P2PRiskError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
