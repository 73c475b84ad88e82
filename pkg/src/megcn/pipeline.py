"""Stage orchestration: corpus -> embeddings -> graph -> training -> report.

Each stage writes its artifacts into the run directory and records a
fingerprint of everything it depends on in ``manifest.json``. A stage whose
fingerprint matches the manifest is loaded instead of recomputed.
"""

import copy
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _accel
from ._io import atomic_write, sha256_bytes, sha256_file
from .baseline import baseline_predictions
from .config import REFERENCE_ACCURACY, ExperimentConfig, default_config_text, from_dict
from .corpus import (
    UNLABELLED,
    dump_corpus,
    generate_synthetic,
    load_corpus,
    load_dataset,
    make_splits,
)
from .embed import export_embeddings as export_embedding_tsv
from .embed import load_embeddings, train_doc2vec, train_word2vec
from .errors import MissingCheckpoint, StageError
from .graph import build_graph, graph_bytes, load_graph
from .model import (
    TrainHistory,
    checkpoint_bytes,
    concat_streams,
    forward,
    load_checkpoint,
    _activate,
)
from .model import train as train_model

logger = logging.getLogger(__name__)

STAGE_FILES = {
    "corpus": ("corpus.json",),
    "embed": ("word_vectors.tsv", "doc_vectors.tsv"),
    "graph": ("graph.npz",),
    "train": ("checkpoint.npz", "history.json"),
}


def derive_seed(seed, tag):
    return int(np.random.SeedSequence([int(seed), int(tag)]).generate_state(1)[0])


def _fingerprint(obj):
    return sha256_bytes(json.dumps(obj, sort_keys=True, default=str).encode("utf-8"))


def _dataset_hash(section):
    if section.synthetic and section.format in ("auto", "synthetic"):
        return {"synthetic": section.synthetic}
    path = Path(section.dataset)
    if path.is_dir():
        return {"docs": sha256_file(path / "docs.txt"), "labels": sha256_file(path / "labels.txt")}
    return {"tsv": sha256_file(path)}


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class RunReport:
    method: str
    config_fingerprint: str
    seed: int
    accuracy: dict
    per_class: list
    confusion_matrix: list
    counts: dict
    history: dict = field(default_factory=dict)
    n_params: int | None = None
    reference: dict | None = None
    settings: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict, compare=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("timings")
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def text(self):
        acc = self.accuracy
        lines = [
            f"method        {self.method}",
            f"fingerprint   {self.config_fingerprint[:16]}",
            f"seed          {self.seed}",
            f"documents     train {self.counts['train']}  val {self.counts['val']}  test {self.counts['test']}",
            f"accuracy      train {_fmt(acc['train'])}  val {_fmt(acc['val'])}  test {_fmt(acc['test'])}",
        ]
        if self.n_params is not None:
            lines.append(f"parameters    {self.n_params}")
        if self.history:
            h = self.history
            lines.append(f"training      {h.get('epochs')} epochs, best {h.get('best_epoch')}, stop: {h.get('stop_reason')}")
        if self.reference:
            lines.append(
                f"reference     {self.reference['preset']}: reported {self.reference['reference_accuracy']:.4f}, "
                f"delta {self.reference['delta']:+.4f} (informational)"
            )
        lines += ["", f"{'class':<16}{'precision':>10}{'recall':>10}{'support':>9}"]
        for row in self.per_class:
            lines.append(f"{row['label']:<16}{row['precision']:>10.4f}{row['recall']:>10.4f}{row['support']:>9d}")
        lines += ["", "confusion matrix (test; rows = true, columns = predicted)"]
        for row in self.confusion_matrix:
            lines.append("  " + " ".join(f"{v:>6d}" for v in row))
        if self.timings:
            lines += ["", "wall-clock seconds"]
            lines += [f"  {k:<10}{v:>9.3f}" for k, v in self.timings.items()]
        return "\n".join(lines) + "\n"


def _fmt(x):
    return "n/a" if x is None else f"{x:.4f}"


def _accuracy(pred, labels, ids):
    return float(np.mean(pred[ids] == labels[ids])) if len(ids) else None


def make_report(method, fingerprint, seed, pred, corpus, splits, **extra):
    labels = corpus.labels
    C = corpus.n_classes
    test = splits.test_ids
    cm = np.zeros((C, C), dtype=np.int64)
    np.add.at(cm, (labels[test], pred[test]), 1)
    per_class = []
    for c in range(C):
        predicted = int(cm[:, c].sum())
        support = int(cm[c].sum())
        per_class.append({
            "label": corpus.label_names[c],
            "precision": float(cm[c, c] / predicted) if predicted else 0.0,
            "recall": float(cm[c, c] / support) if support else 0.0,
            "support": support,
        })
    return RunReport(
        method=method,
        config_fingerprint=fingerprint,
        seed=int(seed),
        accuracy={
            "train": _accuracy(pred, labels, splits.train_ids),
            "val": _accuracy(pred, labels, splits.val_ids),
            "test": _accuracy(pred, labels, test),
        },
        per_class=per_class,
        confusion_matrix=cm.tolist(),
        counts={
            "words": corpus.n_words,
            "documents": corpus.n_docs,
            "classes": C,
            "train": int(len(splits.train_ids)),
            "val": int(len(splits.val_ids)),
            "test": int(len(test)),
        },
        **extra,
    )


# --------------------------------------------------------------------------
# a single run
# --------------------------------------------------------------------------


class Run:
    """One configured run rooted at ``out`` (defaults to ``config.run.out``).

    ``cache_dir`` optionally names a content-addressed store shared between
    runs (used by sweeps so settings that only differ downstream reuse
    embeddings and graphs).
    """

    def __init__(self, config, out=None, cache_dir=None):
        self.config = config
        self.out = Path(out if out is not None else config.run.out)
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.timings = {}
        self._objects = {}
        self._fps = {}
        _accel.set_threads(config.run.threads)

    # -- fingerprints ---------------------------------------------------

    def fingerprint(self, stage):
        if stage in self._fps:
            return self._fps[stage]
        cfg, seed = self.config, self.config.run.seed
        if stage == "corpus":
            section = asdict(cfg.corpus)
            section.pop("dataset")
            payload = {"corpus": section, "data": _dataset_hash(cfg.corpus), "seed": seed}
        elif stage == "embed":
            section = asdict(cfg.embed)
            if cfg.embed.word_vectors:
                section["word_vectors"] = sha256_file(cfg.embed.word_vectors)
            payload = {"up": self.fingerprint("corpus"), "embed": section}
        elif stage == "graph":
            payload = {"up": self.fingerprint("embed"), "graph": asdict(cfg.graph)}
        elif stage == "train":
            payload = {"up": self.fingerprint("graph"), "model": asdict(cfg.train_config())}
        else:
            raise ValueError(stage)
        self._fps[stage] = _fingerprint(payload)
        return self._fps[stage]

    @property
    def config_fingerprint(self):
        return self.fingerprint("train")

    # -- manifest / caching --------------------------------------------

    def _manifest(self):
        path = self.out / "manifest.json"
        return json.loads(path.read_text()) if path.exists() else {}

    def _record(self, stage, fp):
        manifest = self._manifest()
        manifest[stage] = fp
        atomic_write(self.out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=2))

    def _stage(self, stage, compute, load):
        if stage in self._objects:
            return self._objects[stage]
        fp = self.fingerprint(stage)
        files = [self.out / name for name in STAGE_FILES[stage]]
        try:
            if self._manifest().get(stage) == fp and all(f.exists() for f in files):
                obj = load()
                self.timings[stage] = 0.0
            elif self._from_cache(stage, fp, files):
                obj = load()
                self.timings[stage] = 0.0
            else:
                t0 = time.perf_counter()
                obj = compute()
                self.timings[stage] = time.perf_counter() - t0
                self._record(stage, fp)
                self._to_cache(stage, fp, files)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc
        self._objects[stage] = obj
        return obj

    def _cache_path(self, stage, fp, name):
        return self.cache_dir / f"{stage}-{fp[:24]}-{name}"

    def _from_cache(self, stage, fp, files):
        if self.cache_dir is None:
            return False
        cached = [self._cache_path(stage, fp, f.name) for f in files]
        if not all(c.exists() for c in cached):
            return False
        for src, dst in zip(cached, files):
            atomic_write(dst, src.read_bytes())
        self._record(stage, fp)
        return True

    def _to_cache(self, stage, fp, files):
        if self.cache_dir is None:
            return
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        for f in files:
            dst = self._cache_path(stage, fp, f.name)
            if not dst.exists():
                atomic_write(dst, f.read_bytes())

    # -- stages ---------------------------------------------------------

    def corpus(self):
        def compute():
            c = self.config.corpus
            if c.synthetic and c.format in ("auto", "synthetic"):
                corpus = generate_synthetic(**c.synthetic, min_count=c.min_count)
            else:
                corpus = load_dataset(c.dataset, min_count=c.min_count, mode=c.tokenizer)
            splits = make_splits(corpus, c.label_ratio, c.val_fraction, seed=self.config.run.seed)
            atomic_write(self.out / "corpus.json", dump_corpus(corpus, splits, self.config.run.seed))
            return corpus, splits

        def load():
            return load_corpus((self.out / "corpus.json").read_text(encoding="utf-8"))

        return self._stage("corpus", compute, load)

    def embeddings(self):
        corpus, _ = self.corpus()
        e, seed = self.config.embed, self.config.run.seed
        opts = dict(dim=e.dim, window=e.window, epochs=e.epochs, negatives=e.negatives,
                    lr_start=e.lr_start, mean=e.mean, exponent=e.exponent)

        def compute():
            if e.word_vectors:
                words = load_embeddings(e.word_vectors, corpus.vocab.id_to_token, e.dim)
            else:
                words = train_word2vec(corpus, seed=derive_seed(seed, 1), **opts)
            docs = train_doc2vec(corpus, seed=derive_seed(seed, 2), **opts)
            export_embedding_tsv(words, self.out / "word_vectors.tsv")
            export_embedding_tsv(docs, self.out / "doc_vectors.tsv")
            return words, docs

        def load():
            words = load_embeddings(self.out / "word_vectors.tsv", corpus.vocab.id_to_token, e.dim)
            docs = load_embeddings(self.out / "doc_vectors.tsv",
                                   [f"doc:{i}" for i in range(corpus.n_docs)], e.dim)
            return words, docs

        return self._stage("embed", compute, load)

    def graph(self):
        def compute():
            corpus, _ = self.corpus()
            words, docs = self.embeddings()
            g = self.config.graph
            graph = build_graph(corpus, words, docs, u=g.u, window=g.window, pair_mode=g.pairs,
                                tfidf_variant=g.tfidf, prune=g.prune)
            atomic_write(self.out / "graph.npz", graph_bytes(graph))
            return graph

        return self._stage("graph", compute, lambda: load_graph(self.out / "graph.npz"))

    def train(self):
        def compute():
            corpus, splits = self.corpus()
            graph = self.graph()
            tc = self.config.train_config()
            params, history = train_model(graph, corpus.labels, splits, tc, n_classes=corpus.n_classes)
            metrics = {"history": history.summary()}
            data = checkpoint_bytes(tc, params, history.optimizer_state, history.best_epoch, metrics)
            atomic_write(self.out / "checkpoint.npz", data)
            hist = {k: getattr(history, k) for k in ("train_loss", "val_loss", "val_acc", "train_acc")}
            hist.update(best_epoch=history.best_epoch, stop_reason=history.stop_reason,
                        monitor=history.monitor)
            atomic_write(self.out / "history.json", json.dumps(hist, sort_keys=True))
            return load_checkpoint(data)

        return self._stage("train", compute, lambda: load_checkpoint(self.out / "checkpoint.npz"))

    def history(self):
        self.train()
        d = json.loads((self.out / "history.json").read_text())
        h = TrainHistory(d["train_loss"], d["val_loss"], d["val_acc"], d["train_acc"],
                         d["best_epoch"], d["stop_reason"], d["monitor"])
        return h

    def evaluate(self):
        corpus, splits = self.corpus()
        graph = self.graph()
        ckpt = self.train()
        t0 = time.perf_counter()
        logits, _ = forward(graph.astype(np.dtype(ckpt.config.dtype)), ckpt.params, ckpt.config)
        pred = np.argmax(logits[graph.n_words:], axis=1)
        report = make_report(
            "megcn", self.config_fingerprint, self.config.run.seed, pred, corpus, splits,
            history=ckpt.metrics.get("history", {}),
            n_params=ckpt.params.n_params,
            settings={"T": self.config.T, "u": self.config.graph.u,
                      "pooling": self.config.model.pooling, "mode": self.config.model.mode},
        )
        report.reference = self._reference(report.accuracy["test"])
        self.timings["evaluate"] = time.perf_counter() - t0
        report.timings = dict(self.timings)
        self._write_report(report, "report")
        return report

    def baseline(self):
        corpus, splits = self.corpus()
        r = self.config.run
        t0 = time.perf_counter()
        pred = baseline_predictions(corpus, splits, l2=r.baseline_l2, epochs=r.baseline_epochs,
                                    lr=r.baseline_lr, variant=self.config.graph.tfidf)
        report = make_report(
            "tfidf_lr", self.fingerprint("corpus"), r.seed, pred, corpus, splits,
            settings={"l2": r.baseline_l2, "epochs": r.baseline_epochs, "lr": r.baseline_lr,
                      "tfidf": self.config.graph.tfidf, "features": "l2-normalised rows"},
        )
        report.timings = {"baseline": time.perf_counter() - t0}
        self._write_report(report, "baseline")
        return report

    def _reference(self, test_acc):
        key = self.config.run.preset
        if key not in REFERENCE_ACCURACY:
            return None
        ref = REFERENCE_ACCURACY[key]
        return {"preset": key, "reference_accuracy": ref,
                "delta": None if test_acc is None else test_acc - ref,
                "within_0.03": None if test_acc is None else abs(test_acc - ref) <= 0.03}

    def _write_report(self, report, stem):
        atomic_write(self.out / f"{stem}.json", report.to_json())
        atomic_write(self.out / f"{stem}.txt", report.text())
        atomic_write(self.out / f"{stem}.timings.json", json.dumps(report.timings, indent=2))

    def write_config_files(self):
        self.out.mkdir(parents=True, exist_ok=True)
        atomic_write(self.out / "config.default", default_config_text())
        atomic_write(self.out / "config.resolved.json",
                     json.dumps(self.config.to_dict(), sort_keys=True, indent=2))


def run_pipeline(config, out=None, cache_dir=None):
    """Run every stage and return the :class:`RunReport`."""
    run = Run(config, out, cache_dir)
    run.write_config_files()
    return run.evaluate()


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------


def _with(config, **sections):
    d = copy.deepcopy(config.to_dict())
    for section, values in sections.items():
        d[section].update(values)
    return from_dict(d)


def _sweep_one(args):
    cfg_dict, out, cache = args
    cfg = from_dict(cfg_dict)
    run = Run(cfg, out, cache)
    report = run.evaluate()
    return report.to_dict()


def sweep(config, grid, repeats=None, jobs=1, out=None):
    """Grid search over streams T, doc threshold u and pooling.

    Every combination runs ``repeats`` times with seeds base..base+repeats-1.
    Results are ranked by mean validation accuracy (descending), ties broken
    by fewer parameters.
    """
    keys = ("T", "u", "pooling")
    if not grid or any(not grid.get(k) for k in keys):
        raise ValueError("grid needs non-empty 'T', 'u' and 'pooling' lists")
    repeats = config.run.repeats if repeats is None else repeats
    base = Path(out if out is not None else config.run.out) / "sweep"
    cache = base / "cache"
    jobs_args, combos = [], []
    for T in grid["T"]:
        for u in grid["u"]:
            for pooling in grid["pooling"]:
                combos.append((T, u, pooling))
                for r in range(repeats):
                    seed = config.run.seed + r
                    cfg = _with(config, embed={"dim": T}, graph={"u": u},
                                model={"pooling": pooling, "T": None}, run={"seed": seed})
                    run_dir = base / f"T{T}_u{u}_{pooling}" / f"seed{seed}"
                    jobs_args.append((cfg.to_dict(), str(run_dir), str(cache)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_sweep_one, jobs_args))
    else:
        reports = [_sweep_one(a) for a in jobs_args]

    rows = []
    for i, (T, u, pooling) in enumerate(combos):
        chunk = reports[i * repeats:(i + 1) * repeats]
        val = [r["accuracy"]["val"] for r in chunk if r["accuracy"]["val"] is not None]
        test = [r["accuracy"]["test"] for r in chunk if r["accuracy"]["test"] is not None]
        rows.append({
            "T": T, "u": u, "pooling": pooling,
            "runs": len(chunk),
            "seeds": [r["seed"] for r in chunk],
            "mean_val_accuracy": float(np.mean(val)) if val else float("nan"),
            "mean_test_accuracy": float(np.mean(test)) if test else float("nan"),
            "best_test_accuracy": float(np.max(test)) if test else float("nan"),
            "n_params": chunk[0]["n_params"],
        })
    rows.sort(key=lambda r: (-_nan_low(r["mean_val_accuracy"]), r["n_params"], r["T"], r["u"], r["pooling"]))
    for rank, row in enumerate(rows, start=1):
        row["rank"] = rank
    atomic_write(base / "sweep.json", json.dumps(rows, indent=2, sort_keys=True))
    atomic_write(base / "sweep.txt", sweep_table(rows))
    return rows


def _nan_low(x):
    return -1.0 if x != x else x


def sweep_table(rows):
    """Settings as columns, one row per hyperparameter, best first."""
    head = ["", *[f"#{r['rank']}" for r in rows]]
    body = [
        ["# Stream", *[str(r["T"]) for r in rows]],
        ["Document Threshold", *[str(r["u"]) for r in rows]],
        ["Pooling Method", *[r["pooling"] for r in rows]],
        ["Mean val accuracy", *[f"{r['mean_val_accuracy']:.4f}" for r in rows]],
        ["Mean test accuracy", *[f"{r['mean_test_accuracy']:.4f}" for r in rows]],
        ["Best test accuracy", *[f"{r['best_test_accuracy']:.4f}" for r in rows]],
    ]
    widths = [max(len(line[i]) for line in [head, *body]) for i in range(len(head))]
    fmt = lambda line: " | ".join(cell.ljust(w) for cell, w in zip(line, widths))  # noqa: E731
    return "\n".join([fmt(head), "-+-".join("-" * w for w in widths), *map(fmt, body)]) + "\n"


def baseline_over_seeds(config, seeds, out=None):
    """TF-IDF + LR test accuracies, one run per split seed."""
    accs = []
    for seed in seeds:
        cfg = _with(config, run={"seed": seed})
        run = Run(cfg, Path(out if out is not None else cfg.run.out) / f"baseline_seed{seed}")
        accs.append(run.baseline().accuracy["test"])
    return accs


# --------------------------------------------------------------------------
# embedding export
# --------------------------------------------------------------------------


def layer_outputs(graph, ckpt, layer):
    """Per-node features at ``input`` (H0), ``hidden`` (concatenated first
    layer output) or ``output`` (pooled logits), dropout disabled."""
    cfg = ckpt.config
    graph = graph.astype(np.dtype(cfg.dtype))
    if layer == "input":
        return graph.node_features
    logits, cache = forward(graph, ckpt.params, cfg)
    if layer == "output":
        return logits
    if layer == "hidden":
        return concat_streams(_activate(cache["pre"][0], cfg.activation, cfg.leaky_slope))
    raise ValueError(f"layer must be input, hidden or output, not {layer!r}")


def export_embeddings(run_dir, layer, path):
    """Write per-document vectors of a finished run as TSV:
    ``doc_id<TAB>label<TAB>v1...`` after a ``#layer=...`` header."""
    run_dir = Path(run_dir)
    ckpt_path = run_dir / "checkpoint.npz"
    if not ckpt_path.exists():
        raise MissingCheckpoint(f"no checkpoint in {run_dir}; run 'train' first")
    ckpt = load_checkpoint(ckpt_path)
    graph = load_graph(run_dir / "graph.npz")
    corpus, _ = load_corpus((run_dir / "corpus.json").read_text(encoding="utf-8"))
    feats = layer_outputs(graph, ckpt, layer)[graph.n_words:]
    lines = [f"#layer={layer}\tdim={feats.shape[1]}"]
    for i, (row, lab) in enumerate(zip(feats, corpus.labels)):
        name = corpus.label_names[lab] if lab != UNLABELLED else ""
        lines.append("\t".join([str(i), name] + [repr(float(v)) for v in row]))
    return atomic_write(path, "\n".join(lines) + "\n")


def read_exported(path):
    """Parse an exported TSV into ``(ids, labels, matrix)``."""
    ids, labels, rows = [], [], []
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            ids.append(int(parts[0]))
            labels.append(parts[1])
            rows.append([float(v) for v in parts[2:]])
    return ids, labels, np.array(rows)


__all__ = [
    "ExperimentConfig",
    "Run",
    "RunReport",
    "baseline_over_seeds",
    "export_embeddings",
    "run_pipeline",
    "sweep",
]
