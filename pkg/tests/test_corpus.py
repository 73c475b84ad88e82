import numpy as np
import pytest

from megcn.corpus import (
    UNLABELLED,
    build_corpus,
    build_vocab,
    dump_corpus,
    generate_synthetic,
    load_corpus,
    load_dataset,
    make_splits,
    tokenize,
)
from megcn.errors import AllTokensFiltered, ClassTooSmall


def test_tokenize_english():
    assert tokenize("Don't STOP, the_end __ x2 café") == ["don't", "stop", "the_end", "x2", "café"]
    assert tokenize("") == []


def test_tokenize_pretokenized_keeps_case_and_punct():
    assert tokenize("外卖 很 好吃 !", "pretokenized") == ["外卖", "很", "好吃", "!"]
    with pytest.raises(ValueError):
        tokenize("x", "nope")


def test_vocab_threshold_is_strict_and_ordering():
    docs = [["b", "a", "a", "c"], ["b", "a", "d", "c"]]
    v = build_vocab(docs, min_count=1)
    # a:3, b:2, c:2 kept; d:1 is not > 1
    assert v.id_to_token == ["a", "b", "c"]
    assert v.frequency.tolist() == [3, 2, 2]
    with pytest.raises(AllTokensFiltered):
        build_vocab(docs, min_count=3)


def test_build_corpus_labels_and_dropped_docs(caplog):
    texts = ["x y", "x y z", "q", "y x"]
    labels = ["pos", "", "neg", "pos"]
    c = build_corpus(texts, labels, min_count=1)
    assert c.n_docs == 3  # "q" occurs once and its document empties
    assert c.label_names == ["pos"]
    assert c.labels.tolist() == [0, UNLABELLED, 0]
    assert [d.id for d in c.docs] == [0, 1, 2]
    assert "dropped 1" in caplog.text


def test_label_names_fix_order():
    c = build_corpus(["a", "a"], ["b", "a"], min_count=0, label_names=["a", "b"])
    assert c.labels.tolist() == [1, 0]


def test_flat_tokens():
    c = build_corpus(["a b c", "b c", "c"], min_count=0)
    flat, offsets = c.flat_tokens()
    assert offsets.tolist() == [0, 3, 5, 6]
    assert flat.size == 6


def test_load_dataset_dir_and_tsv(tmp_path):
    d = tmp_path / "ds"
    d.mkdir()
    (d / "docs.txt").write_text("good food\nbad food\ngood day\n", encoding="utf-8")
    (d / "labels.txt").write_text("pos\nneg\npos\n", encoding="utf-8")
    a = load_dataset(d, min_count=0)
    (tmp_path / "ds.tsv").write_text("pos\tgood food\nneg\tbad food\n\npos\tgood day\n", encoding="utf-8")
    b = load_dataset(tmp_path / "ds.tsv", min_count=0)
    assert a.labels.tolist() == b.labels.tolist() == [0, 1, 0]
    assert a.vocab.id_to_token == b.vocab.id_to_token
    (d / "labels.txt").write_text("pos\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_dataset(d, min_count=0)


def _counts(ids, labels, C):
    return np.bincount(labels[ids], minlength=C)


def test_splits_stratified_and_disjoint():
    c = generate_synthetic(3, 40, 5, 5, 8, seed=0, min_count=0)
    s = make_splits(c, label_ratio=0.25, val_fraction=0.2, seed=7)
    ids = np.concatenate([s.train_ids, s.val_ids, s.test_ids])
    assert sorted(ids.tolist()) == list(range(c.n_docs))
    # 0.25 * 120 = 30 labelled; 6 of those validate
    assert len(s.train_ids) == 24 and len(s.val_ids) == 6
    assert _counts(s.train_ids, c.labels, 3).tolist() == [8, 8, 8]
    assert _counts(s.val_ids, c.labels, 3).tolist() == [2, 2, 2]


def test_splits_minimum_one_per_class():
    c = generate_synthetic(4, 10, 5, 5, 8, seed=0, min_count=0)
    s = make_splits(c, label_ratio=0.01, val_fraction=0.1, seed=0)
    assert _counts(s.train_ids, c.labels, 4).min() >= 1


def test_splits_imbalanced_apportion():
    texts = ["a b"] * 90 + ["c d"] * 10
    labels = ["big"] * 90 + ["small"] * 10
    c = build_corpus(texts, labels, min_count=0)
    s = make_splits(c, label_ratio=0.1, val_fraction=0.0, seed=0)
    assert _counts(s.train_ids, c.labels, 2).tolist() == [9, 1]


def test_splits_deterministic_per_seed():
    c = generate_synthetic(2, 30, 5, 5, 8, seed=0, min_count=0)
    a = make_splits(c, 0.2, 0.1, seed=3)
    b = make_splits(c, 0.2, 0.1, seed=3)
    d = make_splits(c, 0.2, 0.1, seed=4)
    assert a.to_dict() == b.to_dict()
    assert a.train_ids.tolist() != d.train_ids.tolist()


def test_class_too_small():
    c = build_corpus(["a b", "a c", "b c"], ["x", "x", "y"], min_count=0, label_names=["x", "y", "z"])
    with pytest.raises(ClassTooSmall, match="z"):
        make_splits(c, label_ratio=1.0, val_fraction=0.5, seed=0)


def test_unlabelled_docs_never_split():
    c = build_corpus(["a b", "a c", "b c", "a"], ["x", "", "y", "x"], min_count=0)
    s = make_splits(c, label_ratio=1.0, val_fraction=0.0, seed=0)
    assert 1 not in np.concatenate([s.train_ids, s.val_ids, s.test_ids])


def test_synthetic_generator_shape_and_determinism():
    a = generate_synthetic(3, 10, 6, 4, 12, seed=2, min_count=0)
    b = generate_synthetic(3, 10, 6, 4, 12, seed=2, min_count=0)
    assert a.n_docs == 30 and a.n_classes == 3
    assert all(len(d.tokens) == 12 for d in a.docs)
    assert dump_corpus(a) == dump_corpus(b)
    # class-specific tokens only occur in their class
    for d in a.docs:
        for t in d.tokens:
            tok = a.vocab.id_to_token[t]
            if tok.startswith("c"):
                assert tok.startswith(f"c{d.label}w")


def test_snapshot_roundtrip():
    c = generate_synthetic(2, 10, 5, 5, 6, seed=1, min_count=0)
    s = make_splits(c, 0.3, 0.2, seed=1)
    text = dump_corpus(c, s, seed=1)
    c2, s2 = load_corpus(text)
    assert dump_corpus(c2, s2, seed=1) == text
    assert s2.to_dict() == s.to_dict()
