"""The ``prefadapt`` command: gradcheck, adapt, eval, curve, simulate,
pairs-from-scores, and serve.

Exit codes: 0 success, 1 validation error (bad flags or bad values in
otherwise readable inputs), 2 I/O or file-format error, 3 internal
invariant violation (a failed gradient check, corrupted persisted state).

Output goes to stdout as a human-readable summary, or as a single JSON
document with --quiet. Every subcommand that takes --seed writes
byte-deterministic files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    EmbeddingTable,
    load_embeddings,
    load_pairs,
    pairs_from_scores,
    save_embeddings,
    save_pairs,
)
from .errors import (
    CorruptionError,
    DomainError,
    FormatError,
    IntegrityError,
    ParseError,
    PrefAdaptError,
    ValidationError,
)
from .evalharness import derive_seed, emit_report, report_to_dict, run_protocol
from .prefcore import (
    AdaptConfig,
    Embedding,
    PreferencePair,
    adapt,
    finite_diff_grad,
    normalize,
    pair_outcome,
)
from .simulator import gen_population, oracle_accuracy, random_ground_truth, sample_preferences

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_INTERNAL = 3

GRADCHECK_TOLERANCE = 1e-6

QUERY_BASE_ID = "query-base"
TRUTH_ID = "truth-u"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _sizes_arg(text: str) -> list[int]:
    try:
        sizes = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be comma-separated integers, got {text!r}")
    if not sizes:
        raise argparse.ArgumentTypeError("sizes must be nonempty")
    return sizes


def _add_config_flags(parser):
    parser.add_argument("--epsilon", type=float, default=0.1, help="learning rate (default 0.1)")
    parser.add_argument("--steps", type=int, default=1, help="gradient steps per adaptation (default 1)")
    parser.add_argument("--temperature", type=float, default=1.0, help="similarity sharpening (default 1.0)")
    parser.add_argument(
        "--renormalize",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="project the query back to unit norm after each step (default on)",
    )


def _config_from_args(args) -> AdaptConfig:
    return AdaptConfig(
        epsilon=args.epsilon,
        steps=args.steps,
        temperature=args.temperature,
        renormalize=args.renormalize,
    )


def _add_corpus_flags(parser):
    parser.add_argument("--matrix", required=True, help="PEMB embedding file")
    parser.add_argument("--meta", required=True, help="JSONL metadata sidecar")


def _emit(args, result: dict, human_lines: list[str]) -> None:
    if args.quiet:
        print(json.dumps(result))
    else:
        for line in human_lines:
            print(line)


# -- subcommands ---------------------------------------------------------

def cmd_gradcheck(args) -> int:
    if args.trials < 1:
        raise DomainError(f"trials must be >= 1, got {args.trials}")
    if args.dim < 1:
        raise DomainError(f"dim must be >= 1, got {args.dim}")
    rng = np.random.default_rng(derive_seed(args.seed, "gradcheck", args.dim))
    worst = 0.0
    for _ in range(args.trials):
        x = normalize(rng.standard_normal(args.dim))
        pair = PreferencePair(
            winner=normalize(rng.standard_normal(args.dim)),
            loser=normalize(rng.standard_normal(args.dim)),
        )
        config = AdaptConfig(temperature=float(rng.uniform(0.5, 4.0)))
        analytic = pair_outcome(x, pair, config).gradient
        numeric = finite_diff_grad(x, pair, config, step=1e-5)
        denom = max(float(np.linalg.norm(analytic)), 1e-12)
        worst = max(worst, float(np.linalg.norm(numeric - analytic)) / denom)
    passed = worst < GRADCHECK_TOLERANCE
    result = {
        "dim": args.dim,
        "trials": args.trials,
        "seed": args.seed,
        "max_relative_error": worst,
        "tolerance": GRADCHECK_TOLERANCE,
        "pass": passed,
    }
    _emit(args, result, [
        f"gradient check: d={args.dim} trials={args.trials} "
        f"max relative error {worst:.3e} -> {'PASS' if passed else 'FAIL'}"
    ])
    return EXIT_OK if passed else EXIT_INTERNAL


def cmd_adapt(args) -> int:
    table = load_embeddings(args.matrix, args.meta)
    dataset = load_pairs(args.pairs, table)
    if len(dataset) == 0:
        raise DomainError(f"{args.pairs}: no usable pairs")
    query = normalize(table.vector(args.query_id), f"query {args.query_id!r}")
    config = _config_from_args(args)
    adapted, trace = adapt(query, dataset.preference_pairs(), config)
    result = {
        "query_id": args.query_id,
        "n_pairs": len(dataset),
        "ties_dropped": dataset.ties_dropped,
        "config": {
            "epsilon": config.epsilon,
            "steps": config.steps,
            "temperature": config.temperature,
            "renormalize": config.renormalize,
        },
        "adapted": [float(v) for v in adapted.values],
        "trace": [
            {
                "loss_before": record.loss_before,
                "gradient_norm": record.gradient_norm,
                "post_step_norm": record.post_step_norm,
            }
            for record in trace.steps
        ],
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(result, fh, indent=2)
            fh.write("\n")
    lines = [
        f"adapted {args.query_id!r} on {len(dataset)} pairs "
        f"({dataset.ties_dropped} ties dropped)"
    ]
    for step, record in enumerate(trace.steps, start=1):
        lines.append(
            f"  step {step}: loss {record.loss_before:.6f} "
            f"|grad| {record.gradient_norm:.6f} |x'| {record.post_step_norm:.6f}"
        )
    drift = float(adapted.values @ query.values)
    lines.append(f"  cosine(adapted, base) = {drift:.6f}")
    if args.out:
        lines.append(f"wrote {args.out}")
    _emit(args, result, lines)
    return EXIT_OK


def _run_eval(args, default_format: str) -> int:
    table = load_embeddings(args.matrix, args.meta)
    dataset = load_pairs(args.pairs, table)
    query = normalize(table.vector(args.query_id), f"query {args.query_id!r}")
    config = _config_from_args(args)
    report = run_protocol(
        query,
        dataset,
        args.sizes,
        args.repeats,
        config,
        args.seed,
        eval_size=args.eval_size,
    )
    fmt = args.format or default_format
    machine = report_to_dict(report)
    if args.out:
        emit_report(report, args.out, fmt)
        # the file holds the full report; stdout gets a pointer
        machine = {"out": str(args.out), "format": fmt, "eval_size": report.eval_size}
    lines = [
        f"protocol: {len(dataset)} pairs, eval reserve {report.eval_size}, "
        f"{report.n_repeats} repeats, seed {report.master_seed}",
        f"{'variant':>10} {'n_train':>8} {'mean':>8} {'std':>8}",
    ]
    for cell in report.cells:
        lines.append(
            f"{cell.variant:>10} {cell.n_train:>8} {cell.mean:>8.4f} {cell.std:>8.4f}"
        )
    if args.out:
        lines.append(f"wrote {args.out} ({fmt})")
    _emit(args, machine, lines)
    return EXIT_OK


def cmd_eval(args) -> int:
    return _run_eval(args, default_format="json")


def cmd_curve(args) -> int:
    return _run_eval(args, default_format="csv")


def cmd_simulate(args) -> int:
    if args.count < 2:
        raise DomainError(f"count must be >= 2, got {args.count}")
    if args.pairs_count < 1:
        raise DomainError(f"pairs-count must be >= 1, got {args.pairs_count}")
    population = gen_population(args.dim, args.count, seed=args.seed)
    truth = random_ground_truth(
        args.dim, args.gen_temperature, seed=derive_seed(args.seed, "truth")
    )
    base_rng = np.random.default_rng(derive_seed(args.seed, "query"))
    base = normalize(base_rng.standard_normal(args.dim))
    dataset = sample_preferences(
        truth, population, args.pairs_count, seed=derive_seed(args.seed, "pairs")
    )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    # The corpus ships with two extra addressable rows: the unadapted query
    # and the latent direction (handy as an oracle reference); pairs only
    # ever reference img-* rows.
    full = EmbeddingTable(
        ids=population.ids + [QUERY_BASE_ID, TRUTH_ID],
        vectors=np.vstack([population.vectors, base.values, truth.direction.values]),
    )
    matrix_path = out_dir / "embeddings.pemb"
    meta_path = out_dir / "embeddings.meta.jsonl"
    pairs_path = out_dir / "pairs.jsonl"
    save_embeddings(full, matrix_path, meta_path)
    save_pairs(dataset, pairs_path)

    oracle = oracle_accuracy(truth, dataset)
    result = {
        "dim": args.dim,
        "count": args.count,
        "pairs_count": args.pairs_count,
        "gen_temperature": args.gen_temperature,
        "seed": args.seed,
        "query_id": QUERY_BASE_ID,
        "truth_id": TRUTH_ID,
        "oracle_accuracy": oracle,
        "matrix": str(matrix_path),
        "meta": str(meta_path),
        "pairs": str(pairs_path),
    }
    _emit(args, result, [
        f"simulated corpus: {args.count} vectors (d={args.dim}) "
        f"+ rows {QUERY_BASE_ID!r}, {TRUTH_ID!r}",
        f"labeled {args.pairs_count} pairs at gen temperature {args.gen_temperature} "
        f"(oracle accuracy {oracle:.4f})",
        f"wrote {matrix_path}, {meta_path}, {pairs_path}",
    ])
    return EXIT_OK


def cmd_pairs_from_scores(args) -> int:
    table = load_embeddings(args.matrix, args.meta)
    dataset = pairs_from_scores(
        table, args.high_quantile, args.low_quantile, args.count, args.seed
    )
    save_pairs(dataset, args.out)
    result = {
        "n_pairs": len(dataset),
        "high_quantile": args.high_quantile,
        "low_quantile": args.low_quantile,
        "seed": args.seed,
        "out": str(args.out),
    }
    _emit(args, result, [f"wrote {len(dataset)} pairs to {args.out}"])
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import load_service_config, run_server

    config = load_service_config(args.config)
    overrides = {}
    if args.listen:
        overrides["listen"] = args.listen
    if args.matrix:
        overrides["matrix_path"] = args.matrix
    if args.meta:
        overrides["meta_path"] = args.meta
    if args.data_dir:
        overrides["data_dir"] = args.data_dir
    if overrides:
        config = replace(config, **overrides)
    if not args.quiet:
        print(f"serving on {config.listen} (corpus {config.matrix_path})")
    run_server(config)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="prefadapt", description=__doc__)
    parser.add_argument("--version", action="version", version=f"prefadapt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gradcheck", help="verify the closed-form gradient against finite differences")
    p.add_argument("--dim", type=int, default=16, help="embedding dimension (default 16)")
    p.add_argument("--trials", type=int, default=100, help="random instances to check (default 100)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("adapt", help="adapt a query embedding on a pair file")
    _add_corpus_flags(p)
    p.add_argument("--pairs", required=True, help="JSONL preference pairs")
    p.add_argument("--query-id", required=True, help="table id of the query embedding")
    p.add_argument("--out", help="write adapted vector + trace as JSON")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_adapt)

    for name, help_text, default_sizes in (
        ("eval", "accuracy of original/positive/bt at fixed training sizes", [50]),
        ("curve", "learning curve over training sizes", [0, 1, 5, 10, 25, 50]),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_corpus_flags(p)
        p.add_argument("--pairs", required=True, help="JSONL preference pairs")
        p.add_argument("--query-id", required=True, help="table id of the query embedding")
        p.add_argument(
            "--sizes",
            type=_sizes_arg,
            default=default_sizes,
            help=f"comma-separated training sizes (default {','.join(map(str, default_sizes))})",
        )
        p.add_argument("--repeats", type=int, default=10, help="training draws per size (default 10)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--eval-size", type=int, default=None, help="evaluation reserve (default 2000 or 20%%)")
        p.add_argument("--out", help="report file")
        p.add_argument("--format", choices=("json", "csv"), default=None,
                       help="report format (default: json for eval, csv for curve)")
        _add_config_flags(p)
        p.set_defaults(handler=cmd_eval if name == "eval" else cmd_curve)

    p = sub.add_parser("simulate", help="generate a synthetic corpus and BT-labeled pairs")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--count", type=int, default=500, help="population size (default 500)")
    p.add_argument("--pairs-count", type=int, default=2500, help="number of labeled pairs (default 2500)")
    p.add_argument("--gen-temperature", type=float, default=10.0, help="annotator sharpness (default 10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("pairs-from-scores", help="build pairs from score bands of a scored corpus")
    _add_corpus_flags(p)
    p.add_argument("--high-quantile", type=float, default=0.25, help="winner band fraction (default 0.25)")
    p.add_argument("--low-quantile", type=float, default=0.25, help="loser band fraction (default 0.25)")
    p.add_argument("--count", type=int, required=True, help="number of pairs to emit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output pairs JSONL")
    p.set_defaults(handler=cmd_pairs_from_scores)

    p = sub.add_parser("serve", help="run the preference profile service")
    p.add_argument("--config", help="JSON config file (env vars override it)")
    p.add_argument("--listen", help="host:port (default 127.0.0.1:8787)")
    p.add_argument("--matrix", help="PEMB corpus file")
    p.add_argument("--meta", help="JSONL metadata sidecar")
    p.add_argument("--data-dir", help="profile persistence directory")
    p.set_defaults(handler=cmd_serve)

    for sub_parser in sub.choices.values():
        sub_parser.add_argument("--quiet", action="store_true", help="machine-readable JSON output only")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (DomainError, ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FormatError, CorruptionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except IntegrityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except PrefAdaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def entrypoint() -> None:
    sys.exit(main())
