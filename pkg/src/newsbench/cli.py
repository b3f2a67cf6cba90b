"""Command-line entry points for the benchmark harness.

Verbs: ingest, label, run, ablate, sweep-length, swap-embeddings, report.
Exit codes: 0 success, 2 config error, 3 data error, 4 run failure.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import corpus as corpus_mod
from . import harness, labeling
from .errors import ConfigError, DataError, NewsbenchError, RunError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUN = 4


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config (JSON)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the config output directory")
    parser.add_argument("--workers", type=int, default=None, help="parallel fold workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="newsbench",
        description="Benchmark harness for fake-news detection and early-virality prediction",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    for verb, help_text in (
        ("ingest", "load + validate a corpus, write its canonical form and validation report"),
        ("label", "fit the configured label rule and write the label file + diagnostics"),
        ("run", "run one experiment end to end (stratified 10-fold CV)"),
        ("ablate", "run the all/text_only/numeric_only input-view ablation"),
        ("sweep-length", "sweep the maximum series length and report r(length, F1)"),
        ("swap-embeddings", "run twice with two embedding stores and report metric deltas"),
    ):
        p = sub.add_parser(verb, help=help_text)
        _add_common(p)
        if verb == "sweep-length":
            p.add_argument(
                "--lengths",
                default=",".join(str(l) for l in harness.SWEEP_LENGTHS),
                help="comma-separated max lengths",
            )

    p = sub.add_parser("report", help="render a delimited result table as aligned text")
    p.add_argument("--rows", required=True, help="result-table CSV produced by a run")
    p.add_argument("--out", default=None, help="output directory (default: alongside the CSV)")
    return parser


def _load_config(args) -> harness.ExperimentConfig:
    config = harness.load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = args.out
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    if changes:
        config = harness.derive_config(config, **changes)
    return config


def _cmd_ingest(args) -> int:
    config = _load_config(args)
    if config.synthetic is not None:
        items, store, _ = corpus_mod.generate_synthetic_corpus(config.synthetic)
    elif config.corpus_shape == "article":
        items = corpus_mod.load_articles(config.corpus_path)
        store = None
    else:
        items = corpus_mod.load_tweet_series(config.corpus_path)
        store = None
    report = corpus_mod.validate_corpus(items)
    out_dir = config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    corpus_mod.write_corpus(items, os.path.join(out_dir, "corpus.canonical.jsonl"))
    with open(os.path.join(out_dir, "validation.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.render())
    if config.synthetic is not None and store is not None:
        store.save(os.path.join(out_dir, "embeddings.store"))
    print(f"ingested {len(items)} items; validation {'clean' if report.ok else 'FAILED'}")
    if not report.ok:
        print(report.render(), end="")
        return EXIT_DATA
    return EXIT_OK


def _cmd_label(args) -> int:
    config = _load_config(args)
    bundle = harness.resolve_data(config)
    out_dir = config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    labeling.write_labels(bundle.instances, os.path.join(out_dir, "labels.jsonl"))
    diag = labeling.imbalance_diagnostics([i.label for i in bundle.instances])
    print(
        f"labeled {diag.n_items} items: prevalence {diag.prevalence:.4f}, "
        f"suggested w_pos {diag.positive_weight}, expected dummy F1 {diag.expected_dummy_f1:.4f}"
    )
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _load_config(args)
    outcome = harness.run_experiment(config)
    mean = outcome.row.aggregate.mean
    print(
        f"{outcome.row.dataset_task} {outcome.row.model}: "
        f"F1 {mean.f1:.3f} (acc {mean.accuracy:.3f}, auc {mean.roc_auc:.3f}) -> {outcome.out_dir}"
    )
    return EXIT_OK


def _cmd_ablate(args) -> int:
    config = _load_config(args)
    outcomes = harness.run_ablation(config)
    for view, outcome in zip(harness.ABLATION_VIEWS, outcomes):
        print(f"{view:<14} F1 {outcome.row.aggregate.mean.f1:.3f}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    lengths = [int(x) for x in args.lengths.split(",") if x.strip()]
    result = harness.run_length_sweep(config, lengths=lengths)
    for length, f1 in zip(result["lengths"], result["f1"]):
        print(f"l={length:<4} F1 {f1:.3f}")
    flag = " (zero variance)" if result["zero_variance"] else ""
    print(f"pearson r(l, F1) = {result['pearson_r']:.3f}{flag}")
    return EXIT_OK


def _cmd_swap(args) -> int:
    config = _load_config(args)
    result = harness.run_embedding_swap(config)
    for key, value in sorted(result["deltas"].items()):
        print(f"delta {key}: {value:+.4f}")
    return EXIT_OK


def _cmd_report(args) -> int:
    rows = harness.read_report_csv(args.rows)
    if not rows:
        raise DataError(f"no rows in {args.rows}")
    out_dir = args.out or os.path.dirname(os.path.abspath(args.rows))
    # rebuild the aligned text table from the delimited values
    header = ["dataset/task", "model", *harness.TABLE_COLUMNS]
    keys = ["accuracy", "balanced_accuracy", "f1", "precision", "recall", "roc_auc"]
    col_max = {k: max(r[f"{k}_mean"] for r in rows) for k in keys}
    widths = [
        max(len(header[0]), max(len(r["dataset_task"]) for r in rows)),
        max(len(header[1]), max(len(r["model"]) for r in rows)),
    ]
    lines = [
        f"{header[0]:<{widths[0]}}  {header[1]:<{widths[1]}}  "
        + "  ".join(f"{c:>14}" for c in harness.TABLE_COLUMNS)
    ]
    lines.append("-" * len(lines[0]))
    for r in rows:
        cells = []
        for k in keys:
            marker = "*" if len(rows) > 1 and r[f"{k}_mean"] == col_max[k] else " "
            cells.append(f"{r[f'{k}_mean']:.3f}±{r[f'{k}_std']:.3f}{marker}".rjust(14))
        lines.append(f"{r['dataset_task']:<{widths[0]}}  {r['model']:<{widths[1]}}  " + "  ".join(cells))
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "label": _cmd_label,
    "run": _cmd_run,
    "ablate": _cmd_ablate,
    "sweep-length": _cmd_sweep,
    "swap-embeddings": _cmd_swap,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RunError, NewsbenchError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
