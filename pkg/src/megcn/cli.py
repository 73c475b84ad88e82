"""Command-line entry point: ``megcn <command> [options]``."""

import argparse
import json
import logging
import sys

from . import _accel
from .config import load_config
from .errors import MegcnError
from .graph import graph_stats
from .pipeline import Run, baseline_over_seeds, export_embeddings, run_pipeline, sweep, sweep_table


def _csv(kind):
    def parse(text):
        return [kind(x) for x in text.split(",") if x.strip()]
    return parse


def _global_flags(suppress):
    default = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=default, help="JSON or TOML config file")
    p.add_argument("--seed", type=int, default=default, help="run seed (splits, embeddings, model)")
    p.add_argument("--out", default=default, help="run directory")
    p.add_argument("--threads", type=int, default=default, help="numba worker threads")
    p.add_argument("--dataset", default=default, help="dataset path (overrides corpus.dataset)")
    p.add_argument("--preset", default=default, help="dataset preset, e.g. r8 or synthetic3")
    p.add_argument("-v", "--verbose", action="store_true", default=default)
    return p


def build_parser():
    parser = argparse.ArgumentParser(prog="megcn", parents=[_global_flags(False)])
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_global_flags(True)]

    sub.add_parser("prepare", parents=common, help="tokenize, build the vocabulary and the splits")
    sub.add_parser("embed", parents=common, help="train word and document embeddings")
    sub.add_parser("graph", parents=common, help="build the multi-dimensional edge graph")
    sub.add_parser("train", parents=common, help="train the model and write a checkpoint")
    sub.add_parser("evaluate", parents=common, help="run everything missing and write the report")

    p = sub.add_parser("baseline", parents=common, help="TF-IDF + logistic regression")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive split seeds")

    p = sub.add_parser("sweep", parents=common, help="grid search over T, u and pooling")
    p.add_argument("--T", dest="T", type=_csv(int), default=[10, 15, 20, 25, 30, 35])
    p.add_argument("--u", type=_csv(int), default=[3, 5, 10, 15])
    p.add_argument("--pooling", type=_csv(str), default=["max", "avg", "min"])
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("export", parents=common, help="write per-document layer outputs as TSV")
    p.add_argument("--layer", choices=("input", "hidden", "output"), default="output")
    p.add_argument("--path", required=True)

    sub.add_parser("stats", parents=common, help="corpus and graph statistics as JSON")
    sub.add_parser("config", parents=common, help="print the resolved config as JSON")
    return parser


def _overrides(args):
    o = {}
    if args.seed is not None:
        o.setdefault("run", {})["seed"] = args.seed
    if args.out is not None:
        o.setdefault("run", {})["out"] = args.out
    if args.threads is not None:
        o.setdefault("run", {})["threads"] = args.threads
    if args.preset is not None:
        o.setdefault("run", {})["preset"] = args.preset
    if args.dataset is not None:
        o.setdefault("corpus", {})["dataset"] = args.dataset
    return o


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (MegcnError, ValueError, OSError) as exc:
        print(f"megcn: error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args):
    cmd = args.command
    if cmd == "export" and args.config is None:
        # only the run directory matters; it holds its own resolved config
        print(export_embeddings(args.out or "runs/default", args.layer, args.path))
        return 0
    config = load_config(args.config, _overrides(args))
    if cmd == "config":
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return 0
    if cmd == "export":
        print(export_embeddings(config.run.out, args.layer, args.path))
        return 0
    if cmd == "sweep":
        rows = sweep(config, {"T": args.T, "u": args.u, "pooling": args.pooling},
                     repeats=args.repeats, jobs=args.jobs)
        print(sweep_table(rows), end="")
        return 0
    if cmd == "baseline" and args.seeds > 1:
        seeds = range(config.run.seed, config.run.seed + args.seeds)
        accs = baseline_over_seeds(config, seeds)
        for s, a in zip(seeds, accs):
            print(f"seed {s}: test accuracy {a:.4f}")
        print(f"mean: {sum(accs) / len(accs):.4f}")
        return 0

    run = Run(config)
    run.write_config_files()
    if cmd == "prepare":
        corpus, splits = run.corpus()
        print(f"{corpus.n_docs} documents, {corpus.n_words} words, {corpus.n_classes} classes; "
              f"train {len(splits.train_ids)} val {len(splits.val_ids)} test {len(splits.test_ids)}")
    elif cmd == "embed":
        words, docs = run.embeddings()
        print(f"word vectors {words.values.shape}, document vectors {docs.values.shape}")
    elif cmd == "graph":
        g = run.graph()
        print(f"{g.n_nodes} nodes, {g.dims} edge dimensions, {g.values.shape[1]} stored edges")
    elif cmd == "train":
        ckpt = run.train()
        h = ckpt.metrics.get("history", {})
        print(f"{h.get('epochs')} epochs, best epoch {ckpt.best_epoch} ({h.get('stop_reason')}), "
              f"{ckpt.params.n_params} parameters")
    elif cmd == "evaluate":
        print(run_pipeline(config).text(), end="")
    elif cmd == "baseline":
        print(run.baseline().text(), end="")
    elif cmd == "stats":
        corpus, splits = run.corpus()
        out = {
            "backend": _accel.backend_name(),
            "corpus": {"documents": corpus.n_docs, "words": corpus.n_words,
                       "classes": corpus.label_names,
                       "splits": {"train": len(splits.train_ids), "val": len(splits.val_ids),
                                  "test": len(splits.test_ids)}},
            "graph": graph_stats(run.graph()),
        }
        print(json.dumps(out, indent=2))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
