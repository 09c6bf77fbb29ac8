"""Command-line entry point.

Every subcommand is a thin adapter over the library; exit codes: 0 success,
1 validation/config trouble, 2 backend/transport trouble.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .backends import HashingEmbedder
from .datasets import (
    build_hard_set,
    build_rag_bank,
    load_dataset,
    load_matrix,
    matrix_summary,
    observed_labels,
    save_dataset,
)
from .errors import (
    BackendError,
    EmbeddingFailedError,
    MasRvqaError,
    ValidationError,
    ZeroVectorError,
)
from .metrics import build_report, render_report_table
from .orchestrator import read_results_file, run_batch
from .retrieval import build_index, save_index
from .runconfig import build_embedder, load_run_setup, parse_config_file
from .types import PipelineMode


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="masrvqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    kwargs = {"formatter_class": argparse.ArgumentDefaultsHelpFormatter}

    p_validate = sub.add_parser("validate", help="check a dataset file", **kwargs)
    p_validate.add_argument("dataset", help="line-delimited dataset file")

    p_index = sub.add_parser("index", help="vector index operations", **kwargs)
    p_index.add_argument("action", choices=["build"], help="index operation")
    p_index.add_argument("bank", help="QA bank dataset file")
    p_index.add_argument("--out", required=True, help="output index file")
    p_index.add_argument("--config", default=None, help="run config naming the embedder")
    p_index.add_argument(
        "--seed", type=int, default=0, help="mock embedder seed when no config is given (default 0)"
    )

    p_run = sub.add_parser("run", help="run the pipeline over a dataset", **kwargs)
    p_run.add_argument("--dataset", required=True, help="dataset file to answer")
    p_run.add_argument(
        "--mode",
        choices=[m.value for m in PipelineMode],
        default=None,
        help="agent configuration (overrides config file)",
    )
    p_run.add_argument("--config", required=True, help="run config file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override config seed")

    p_hard = sub.add_parser("hardset", help="model-disagreement difficulty filter", **kwargs)
    p_hard.add_argument("--pool", required=True, help="pool dataset file")
    p_hard.add_argument("--matrix", required=True, help="model result matrix JSON")
    p_hard.add_argument(
        "--min-wrong", type=int, default=3, help="min models answering wrong (default 3)"
    )
    p_hard.add_argument("--out", required=True, help="output dataset file")

    p_rag = sub.add_parser("ragbank", help="build the retrieval bank", **kwargs)
    p_rag.add_argument("--dataset", required=True, help="full dataset file")
    p_rag.add_argument("--pool", required=True, help="pool dataset file to exclude")
    p_rag.add_argument("--size", type=int, required=True, help="bank size")
    p_rag.add_argument("--seed", type=int, required=True, help="sampling seed")
    p_rag.add_argument("--out", required=True, help="output dataset file")

    p_eval = sub.add_parser("eval", help="score a results file", **kwargs)
    p_eval.add_argument("--results", required=True, help="results.jsonl from a run")
    p_eval.add_argument("--dataset", required=True, help="dataset with gold answers")
    p_eval.add_argument(
        "--embed-backend",
        default=None,
        help="embedder for the embedding-similarity metric: 'mock' or 'mock:<dim>:<seed>'",
    )
    p_eval.add_argument("--report", required=True, help="output report JSON file")

    p_trace = sub.add_parser("trace", help="inspect run traces", **kwargs)
    p_trace.add_argument("action", choices=["show"], help="trace operation")
    p_trace.add_argument("dir", help="run output directory")
    p_trace.add_argument("example_id", help="example id to show")
    p_trace.add_argument(
        "--full", action="store_true", help="include prompts and raw outputs"
    )

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (BackendError, EmbeddingFailedError, ZeroVectorError) as err:
        print(f"backend error: {err}", file=sys.stderr)
        return 2
    except MasRvqaError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "index":
        return _cmd_index_build(args)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "hardset":
        return _cmd_hardset(args)
    if args.command == "ragbank":
        return _cmd_ragbank(args)
    if args.command == "eval":
        return _cmd_eval(args)
    if args.command == "trace":
        return _cmd_trace_show(args)
    raise AssertionError(f"unhandled command {args.command!r}")


def _cmd_validate(args) -> int:
    examples = load_dataset(args.dataset)
    tasks, categories = observed_labels(examples)
    print(f"{len(examples)} examples OK")
    print(f"tasks ({len(tasks)}): {', '.join(tasks)}")
    print(f"categories ({len(categories)}): {', '.join(categories)}")
    return 0


def _cmd_index_build(args) -> int:
    bank = load_dataset(args.bank)
    if args.config:
        values = parse_config_file(args.config)
        embedder = build_embedder(values, Path(args.config).parent, seed=args.seed)
    else:
        embedder = HashingEmbedder(dim=32, seed=args.seed)
    index = build_index(bank, embedder)
    save_index(index, args.out)
    print(f"indexed {len(index)} entries (dim {index.dim}) -> {args.out}")
    return 0


def _cmd_run(args) -> int:
    setup = load_run_setup(args.config, mode_override=args.mode, seed_override=args.seed)
    dataset = load_dataset(args.dataset)
    results, report = run_batch(dataset, setup.deps, setup.cfg, out_dir=args.out)
    correct = sum(1 for r in results if r.correct)
    print(
        f"{len(results)} examples, {correct} correct "
        f"(accuracy {report.accuracy:.4f}) -> {args.out}"
    )
    return 0


def _cmd_hardset(args) -> int:
    pool = load_dataset(args.pool)
    matrix = load_matrix(args.matrix)
    hard = build_hard_set(pool, matrix, args.min_wrong)
    summary = matrix_summary(pool, matrix)
    save_dataset(hard, args.out)
    print(f"{len(hard)} of {len(pool)} examples kept (min_wrong={args.min_wrong})")
    for model in matrix.model_names:
        print(f"  {model}: accuracy {summary.per_model_accuracy[model]:.4f}")
    hist = " ".join(
        f"{k}:{v}" for k, v in sorted(summary.wrong_count_histogram.items())
    )
    print(f"  wrong-count histogram: {hist}")
    return 0


def _cmd_ragbank(args) -> int:
    dataset = load_dataset(args.dataset)
    pool = load_dataset(args.pool)
    bank = build_rag_bank(dataset, pool, args.size, args.seed)
    save_dataset(bank, args.out)
    print(f"{len(bank)} bank examples -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    rows = read_results_file(args.results)
    dataset = load_dataset(args.dataset)
    embedder = _eval_embedder(args.embed_backend)
    report = build_report(rows, {ex.id: ex for ex in dataset}, embedder=embedder)
    Path(args.report).write_text(report.to_json(), encoding="utf-8")
    print(render_report_table(report), end="")
    return 0


def _eval_embedder(spec: Optional[str]):
    if spec is None or spec == "none":
        return None
    parts = spec.split(":")
    if parts[0] != "mock" or len(parts) > 3:
        raise ValidationError(
            f"--embed-backend must be 'mock' or 'mock:<dim>:<seed>', got {spec!r}"
        )
    dim = int(parts[1]) if len(parts) > 1 else 32
    seed = int(parts[2]) if len(parts) > 2 else 0
    return HashingEmbedder(dim=dim, seed=seed)


def _cmd_trace_show(args) -> int:
    import urllib.parse

    name = urllib.parse.quote(args.example_id, safe="-_.") + ".json"
    path = Path(args.dir) / "traces" / name
    if not path.is_file():
        raise ValidationError(f"no trace for {args.example_id!r} under {args.dir}")
    trace = json.loads(path.read_text(encoding="utf-8"))
    print(f"example {trace['example_id']}")
    if trace.get("flags"):
        print(f"flags: {', '.join(trace['flags'])}")
    for i, stage in enumerate(trace["stages"], start=1):
        err = f" error={stage['error']}" if stage.get("error") else ""
        print(
            f"{i:3d}. {stage['stage_name']}  attempts={stage['attempts']}  "
            f"{stage['duration'] * 1000:.0f}ms  {stage['parsed_result_summary']}{err}"
        )
        if args.full:
            print("     --- prompt ---")
            for line in stage["prompt_rendered"].splitlines():
                print(f"     {line}")
            print("     --- output ---")
            for line in stage["raw_model_output"].splitlines():
                print(f"     {line}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
