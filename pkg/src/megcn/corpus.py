"""Loading, tokenizing, vocabulary filtering, stratified splits and
synthetic corpora."""

import json
import logging
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AllTokensFiltered, ClassTooSmall

logger = logging.getLogger(__name__)

UNLABELLED = -1

_WORD_RE = re.compile(r"\w+(?:'\w+)*")


def tokenize(text, mode="english"):
    """Split ``text`` into token strings.

    ``english`` lowercases and keeps runs of word characters (apostrophe
    contractions stay joined); tokens made only of underscores are dropped.
    ``pretokenized`` splits on whitespace and nothing else.
    """
    if mode == "pretokenized":
        return text.split()
    if mode != "english":
        raise ValueError(f"unknown tokenizer mode {mode!r}")
    text = unicodedata.normalize("NFC", text).lower()
    return [tok for tok in _WORD_RE.findall(text) if tok.strip("_")]


@dataclass(frozen=True)
class Vocabulary:
    token_to_id: dict
    id_to_token: list
    frequency: np.ndarray
    min_count: int

    def __len__(self):
        return len(self.id_to_token)


def build_vocab(docs, min_count=5):
    """Keep tokens whose corpus frequency is strictly above ``min_count``.

    Ids follow descending frequency, ties broken lexicographically.
    """
    if not docs:
        raise ValueError("build_vocab needs at least one document")
    counts = Counter()
    for toks in docs:
        counts.update(toks)
    kept = sorted(
        ((tok, n) for tok, n in counts.items() if n > min_count),
        key=lambda item: (-item[1], item[0]),
    )
    if not kept:
        raise AllTokensFiltered(
            f"no token occurs more than {min_count} times "
            f"({len(counts)} distinct tokens); lower min_count"
        )
    id_to_token = [tok for tok, _ in kept]
    return Vocabulary(
        token_to_id={tok: i for i, tok in enumerate(id_to_token)},
        id_to_token=id_to_token,
        frequency=np.array([n for _, n in kept], dtype=np.int64),
        min_count=min_count,
    )


@dataclass
class Document:
    id: int
    tokens: np.ndarray
    label: int = UNLABELLED
    raw_text: str = ""


@dataclass
class Corpus:
    docs: list
    vocab: Vocabulary
    label_names: list = field(default_factory=list)

    @property
    def n_docs(self):
        return len(self.docs)

    @property
    def n_words(self):
        return len(self.vocab)

    @property
    def n_classes(self):
        return len(self.label_names)

    @property
    def labels(self):
        return np.array([d.label for d in self.docs], dtype=np.int64)

    def flat_tokens(self):
        """Concatenated token ids and the (K+1,) offsets delimiting documents."""
        lengths = np.array([len(d.tokens) for d in self.docs], dtype=np.int64)
        offsets = np.zeros(len(self.docs) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        flat = np.concatenate([d.tokens for d in self.docs]).astype(np.int64)
        return flat, offsets


def build_corpus(texts, labels=None, min_count=5, mode="english", label_names=None):
    """Tokenize, filter by frequency and attach labels.

    ``labels`` holds label strings (``""``/``None`` marks an unlabelled
    document). Strings are interned in first-appearance order unless
    ``label_names`` fixes the order. Documents that lose every token to the
    frequency filter are dropped with a warning and the survivors renumbered.
    """
    token_lists = [tokenize(t, mode) for t in texts]
    vocab = build_vocab(token_lists, min_count)
    names = list(label_names) if label_names is not None else []
    index = {name: i for i, name in enumerate(names)}
    docs = []
    dropped = 0
    for i, (text, toks) in enumerate(zip(texts, token_lists)):
        ids = np.array([vocab.token_to_id[t] for t in toks if t in vocab.token_to_id], dtype=np.int64)
        if ids.size == 0:
            dropped += 1
            continue
        raw_label = None if labels is None else labels[i]
        if raw_label is None or raw_label == "":
            label = UNLABELLED
        else:
            raw_label = str(raw_label)
            if raw_label not in index:
                index[raw_label] = len(names)
                names.append(raw_label)
            label = index[raw_label]
        docs.append(Document(len(docs), ids, label, text))
    if dropped:
        logger.warning("dropped %d document(s) left empty by min_count=%d", dropped, min_count)
    return Corpus(docs, vocab, names)


# --------------------------------------------------------------------------
# dataset files
# --------------------------------------------------------------------------


def load_dataset(path, min_count=5, mode="english"):
    """Read a dataset directory (``docs.txt`` + ``labels.txt``) or a
    ``label<TAB>text`` TSV file."""
    path = Path(path)
    if path.is_dir():
        texts = (path / "docs.txt").read_text(encoding="utf-8").splitlines()
        labels = (path / "labels.txt").read_text(encoding="utf-8").splitlines()
        if len(texts) != len(labels):
            raise ValueError(f"{path}: {len(texts)} documents but {len(labels)} labels")
        labels = [lab.strip() for lab in labels]
    else:
        texts, labels = [], []
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            label, _, text = line.partition("\t")
            labels.append(label.strip())
            texts.append(text)
    return build_corpus(texts, labels, min_count=min_count, mode=mode)


# --------------------------------------------------------------------------
# splits
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitAssignment:
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray
    seed: int
    label_ratio: float

    def to_dict(self):
        return {
            "train": self.train_ids.tolist(),
            "val": self.val_ids.tolist(),
            "test": self.test_ids.tolist(),
            "seed": self.seed,
            "label_ratio": self.label_ratio,
        }

    @classmethod
    def from_dict(cls, d):
        arr = lambda key: np.array(d[key], dtype=np.int64)  # noqa: E731
        return cls(arr("train"), arr("val"), arr("test"), int(d["seed"]), float(d["label_ratio"]))


def _round_half_up(x):
    return int(math.floor(x + 0.5 + 1e-9))


def _apportion(total, weights, floor=0):
    """Largest-remainder split of ``total`` proportional to ``weights``.

    Every share gets at least ``floor``; ties in the remainder go to the lower
    index.
    """
    weights = np.asarray(weights, dtype=np.float64)
    quotas = total * weights / weights.sum()
    shares = np.floor(quotas + 1e-9).astype(np.int64)
    rest = total - int(shares.sum())
    if rest > 0:
        order = sorted(range(len(weights)), key=lambda c: (-(quotas[c] - shares[c]), c))
        for c in order[:rest]:
            shares[c] += 1
    short = shares < floor
    while short.any():
        c = int(np.flatnonzero(short)[0])
        donors = [i for i in np.argsort(-shares, kind="stable") if shares[i] > floor]
        if not donors:
            shares[c] = floor
        else:
            shares[donors[0]] -= 1
            shares[c] += 1
        short = shares < floor
    return shares


def make_splits(corpus, label_ratio=0.01, val_fraction=0.10, seed=0):
    """Stratified train/val/test split over the labelled documents."""
    labels = corpus.labels
    labelled = np.flatnonzero(labels != UNLABELLED)
    n_classes = corpus.n_classes
    per_class = np.bincount(labels[labelled], minlength=n_classes)
    empty = [corpus.label_names[c] for c in range(n_classes) if per_class[c] == 0]
    if empty:
        raise ClassTooSmall(f"classes without documents: {empty}")

    n_labelled = max(_round_half_up(label_ratio * labelled.size), n_classes)
    n_val = _round_half_up(val_fraction * n_labelled)
    n_train = n_labelled - n_val
    if n_train < n_classes:
        n_train = n_classes
        n_val = max(0, n_labelled - n_train)
    train_counts = _apportion(n_train, per_class, floor=1)
    val_counts = _apportion(n_val, per_class) if n_val else np.zeros(n_classes, dtype=np.int64)
    for c in range(n_classes):
        if train_counts[c] + val_counts[c] > per_class[c]:
            raise ClassTooSmall(
                f"class {corpus.label_names[c]!r} has {per_class[c]} documents, "
                f"needs {train_counts[c]} train + {val_counts[c]} validation"
            )

    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for c in range(n_classes):
        members = labelled[labels[labelled] == c]
        members = members[rng.permutation(members.size)]
        a, b = train_counts[c], train_counts[c] + val_counts[c]
        train.append(members[:a])
        val.append(members[a:b])
        test.append(members[b:])
    cat = lambda parts: np.sort(np.concatenate(parts)).astype(np.int64)  # noqa: E731
    return SplitAssignment(cat(train), cat(val), cat(test), seed, label_ratio)


# --------------------------------------------------------------------------
# synthetic corpora
# --------------------------------------------------------------------------


def synthetic_texts(classes, docs_per_class, vocab_per_class, shared_vocab, doc_length,
                    seed, signal=0.5):
    """Raw texts and label strings for :func:`generate_synthetic`."""
    rng = np.random.default_rng(seed)
    texts, labels = [], []
    for c in range(classes):
        own = [f"c{c}w{i}" for i in range(vocab_per_class)]
        shared = [f"s{i}" for i in range(shared_vocab)]
        for _ in range(docs_per_class):
            from_own = rng.random(doc_length) < signal if shared_vocab else np.ones(doc_length, bool)
            own_pick = rng.integers(0, vocab_per_class, doc_length)
            shared_pick = rng.integers(0, max(shared_vocab, 1), doc_length)
            words = [own[o] if f else shared[s] for f, o, s in zip(from_own, own_pick, shared_pick)]
            texts.append(" ".join(words))
            labels.append(f"class{c}")
    return texts, labels


def generate_synthetic(classes, docs_per_class, vocab_per_class, shared_vocab, doc_length,
                       seed, signal=0.5, min_count=0):
    """Corpus whose documents mix a class-exclusive word pool and a shared one.

    Each token comes from the document's class pool with probability
    ``signal`` and from the shared pool otherwise.
    """
    texts, labels = synthetic_texts(classes, docs_per_class, vocab_per_class, shared_vocab,
                                    doc_length, seed, signal)
    return build_corpus(texts, labels, min_count=min_count, mode="pretokenized",
                        label_names=[f"class{c}" for c in range(classes)])


# --------------------------------------------------------------------------
# snapshots
# --------------------------------------------------------------------------


def corpus_to_dict(corpus, splits=None, seed=None):
    return {
        "vocab": {
            "tokens": corpus.vocab.id_to_token,
            "frequency": corpus.vocab.frequency.tolist(),
            "min_count": corpus.vocab.min_count,
        },
        "label_names": corpus.label_names,
        "docs": [d.tokens.tolist() for d in corpus.docs],
        "labels": corpus.labels.tolist(),
        "splits": splits.to_dict() if splits is not None else None,
        "seed": seed,
    }


def corpus_from_dict(d):
    tokens = d["vocab"]["tokens"]
    vocab = Vocabulary(
        {t: i for i, t in enumerate(tokens)},
        list(tokens),
        np.array(d["vocab"]["frequency"], dtype=np.int64),
        int(d["vocab"]["min_count"]),
    )
    docs = [
        Document(i, np.array(ids, dtype=np.int64), int(lab))
        for i, (ids, lab) in enumerate(zip(d["docs"], d["labels"]))
    ]
    splits = SplitAssignment.from_dict(d["splits"]) if d.get("splits") else None
    return Corpus(docs, vocab, list(d["label_names"])), splits


def dump_corpus(corpus, splits=None, seed=None):
    """Canonical JSON text of a corpus snapshot (stable key order)."""
    return json.dumps(corpus_to_dict(corpus, splits, seed), sort_keys=True, separators=(",", ":"))


def load_corpus(text):
    return corpus_from_dict(json.loads(text))
