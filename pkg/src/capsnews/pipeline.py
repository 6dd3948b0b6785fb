"""Glue between datasets, models, and the training loop.

Owns the decisions that need a loaded dataset: vocabulary construction,
feature normalization, instance preparation, and the artifact layout of a
run directory (model.xcap, history.csv, metrics_<split>.csv).
"""

from __future__ import annotations

import dataclasses
from collections import Counter
from pathlib import Path

import numpy as np

from .data import load_covid, load_liar
from .embeddings import PrecomputedStore, pad_to
from .errors import ConfigError, HashMismatchError
from .features import (
    indirect_feature_vector,
    load_lexicon,
    load_stopwords,
    raw_feature_vector,
    NormalizationStats,
    tokenize,
)
from .metrics import headline_metric, write_metrics_csv
from .models import ModelConfig, build, load_model, save_model, vocab_content_hash
from .runconfig import RunConfig
from .train import PreparedExample, evaluate_prepared, train, write_history_csv

_SPLIT_ALIASES = {"train": "train", "val": "validation", "validation": "validation",
                  "test": "test"}


def resolve_split(name: str) -> str:
    if name not in _SPLIT_ALIASES:
        raise ConfigError(f"unknown split {name!r}; expected train, val, or test")
    return _SPLIT_ALIASES[name]


def load_bundle(kind: str, path):
    if kind == "covid":
        return load_covid(path)
    if kind == "liar":
        return load_liar(path)
    raise ConfigError(f"unknown dataset kind {kind!r}; expected covid or liar")


def validate_paths(rcfg: RunConfig, need_dataset: bool = True):
    """Fail before any work starts, naming the offending path."""
    if need_dataset:
        if not rcfg.dataset_path:
            raise ConfigError("dataset.path is not set")
        if not Path(rcfg.dataset_path).is_dir():
            raise FileNotFoundError(f"dataset path {rcfg.dataset_path} does not exist")
    if rcfg.model_kw.get("embedding_mode") == "frozen-store":
        for split in ("train", "validation", "test"):
            store = rcfg.stores.get(split)
            if not store:
                raise ConfigError(f"frozen-store mode needs store.{split}")
            if not Path(store).is_file():
                raise FileNotFoundError(f"store path {store} does not exist")


def build_vocab(examples, cap: int):
    """Most frequent train tokens, ties broken alphabetically."""
    if cap < 1:
        raise ConfigError(f"vocab size must be positive, got {cap}")
    counts = Counter()
    for ex in examples:
        counts.update(tokenize(ex.text))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(t for t, _ in ranked[:cap])


def fit_normalization(examples, lex, stopwords) -> NormalizationStats:
    rows = np.stack([raw_feature_vector(ex, lex, stopwords) for ex in examples])
    return NormalizationStats.fit(rows)


def _token_ids(text: str, table, max_len: int) -> np.ndarray:
    ids = np.full(max_len, table.pad_index, dtype=np.int64)
    for j, tok in enumerate(tokenize(text)[:max_len]):
        ids[j] = table.lookup(tok)
    return ids


def prepare_split(model, examples, lex, stopwords, store_path=None) -> list:
    """PreparedExample list for one split, in file order."""
    cfg = model.config
    want_features = cfg.variant == "mlp-capsnet"
    out = []
    store = None
    try:
        if cfg.embedding_mode == "frozen-store":
            if store_path is None:
                raise ConfigError("frozen-store preparation needs a store path")
            store = PrecomputedStore(store_path)
        for ex in examples:
            if store is not None:
                seq = pad_to(store.read(ex.id), cfg.max_len)
                inst = PreparedExample(ex.id, ex.label, matrix=seq.matrix.data,
                                       true_length=seq.true_length)
            else:
                tokens = tokenize(ex.text)
                inst = PreparedExample(ex.id, ex.label,
                                       token_ids=_token_ids(ex.text, model.table, cfg.max_len),
                                       true_length=min(len(tokens), cfg.max_len))
            if want_features:
                inst.features = indirect_feature_vector(ex, lex, stopwords, model.norm_stats)
            out.append(inst)
    finally:
        if store is not None:
            store.close()
    return out


def _log_counts(bundle, log):
    for name in ("train", "validation", "test"):
        split = bundle.split(name)
        per_class = Counter(ex.label for ex in split)
        detail = ", ".join(
            f"{bundle.class_names[c]}={per_class.get(c, 0)}"
            for c in range(len(bundle.class_names)) if per_class.get(c, 0)
        )
        log(f"{name}: {len(split)} examples ({detail})")


def run_training(rcfg: RunConfig, log=lambda s: None) -> dict:
    """Train per config; writes model.xcap, history.csv, metrics CSVs.

    Returns the reports and artifact paths.  Validation/test metrics are
    computed after the best-epoch weights are restored, so evaluating the
    written checkpoint reproduces them exactly.
    """
    validate_paths(rcfg)
    bundle = load_bundle(rcfg.dataset_kind, rcfg.dataset_path)
    _log_counts(bundle, log)
    lex = load_lexicon()
    stopwords = load_stopwords()

    kw = dict(rcfg.model_kw)
    mode = kw.get("embedding_mode", "static-trainable")
    vocab = () if mode == "frozen-store" else build_vocab(bundle.train, rcfg.vocab_size)
    mcfg = ModelConfig(
        num_classes=len(bundle.class_names),
        class_names=bundle.class_names,
        vocab=vocab,
        **kw,
    )
    model = build(mcfg, lexicon_hash=lex.content_hash, stopword_hash=stopwords.content_hash)
    if mcfg.variant == "mlp-capsnet":
        model.norm_stats = fit_normalization(bundle.train, lex, stopwords)

    splits = {
        name: prepare_split(model, bundle.split(name), lex, stopwords,
                            rcfg.stores.get(name) if mode == "frozen-store" else None)
        for name in ("train", "validation", "test")
    }
    result = train(model, splits["train"], splits["validation"], rcfg.train_cfg, log=log)

    out = Path(rcfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = out / "model.xcap"
    save_model(model, checkpoint)
    write_history_csv(result.history, out / "history.csv")
    val_report = evaluate_prepared(model, splits["validation"])
    test_report = evaluate_prepared(model, splits["test"])
    write_metrics_csv(val_report, bundle.class_names, out / "metrics_validation.csv")
    write_metrics_csv(test_report, bundle.class_names, out / "metrics_test.csv")
    log(f"best epoch {result.best_epoch} (val metric {result.best_metric:.4f}); "
        f"checkpoint {checkpoint}")
    return {
        "model": model,
        "result": result,
        "val_report": val_report,
        "test_report": test_report,
        "checkpoint": checkpoint,
        "class_names": bundle.class_names,
    }


def _check_hashes(model, rcfg, bundle, lex, stopwords):
    if model.lexicon_hash and model.lexicon_hash != lex.content_hash:
        raise HashMismatchError(
            f"lexicon hash mismatch: checkpoint {model.lexicon_hash}, "
            f"current {lex.content_hash}"
        )
    if model.stopword_hash and model.stopword_hash != stopwords.content_hash:
        raise HashMismatchError(
            f"stopword hash mismatch: checkpoint {model.stopword_hash}, "
            f"current {stopwords.content_hash}"
        )
    if model.config.embedding_mode == "static-trainable":
        derived = vocab_content_hash(build_vocab(bundle.train, rcfg.vocab_size))
        if model.vocab_hash and model.vocab_hash != derived:
            raise HashMismatchError(
                f"vocab hash mismatch: checkpoint {model.vocab_hash}, "
                f"dataset-derived {derived}"
            )


def run_eval(rcfg: RunConfig, checkpoint_path, split_name: str, log=lambda s: None) -> dict:
    validate_paths(rcfg)
    if not Path(checkpoint_path).is_file():
        raise FileNotFoundError(f"checkpoint {checkpoint_path} does not exist")
    model = load_model(checkpoint_path)
    bundle = load_bundle(rcfg.dataset_kind, rcfg.dataset_path)
    lex = load_lexicon()
    stopwords = load_stopwords()
    _check_hashes(model, rcfg, bundle, lex, stopwords)

    split = resolve_split(split_name)
    examples = bundle.split(split)
    store = (rcfg.stores.get(split)
             if model.config.embedding_mode == "frozen-store" else None)
    insts = prepare_split(model, examples, lex, stopwords, store)
    report = evaluate_prepared(model, insts)

    out = Path(rcfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"metrics_{split}.csv"
    write_metrics_csv(report, bundle.class_names, csv_path)
    log(f"wrote {csv_path}")
    return {"report": report, "csv_path": csv_path, "class_names": bundle.class_names}


def run_sweep(rcfg: RunConfig, r_values, log=lambda s: None) -> dict:
    if not r_values:
        raise ConfigError("sweep needs at least one routing iteration count")
    if any(r < 1 for r in r_values):
        raise ConfigError(f"routing iteration counts must be >= 1, got {list(r_values)}")
    rows = []
    for r in r_values:
        sub = dataclasses.replace(
            rcfg,
            out_dir=str(Path(rcfg.out_dir) / f"r{r}"),
            model_kw={**rcfg.model_kw, "routing_iterations": r},
            train_cfg=dataclasses.replace(rcfg.train_cfg),
            stores=dict(rcfg.stores),
        )
        log(f"sweep: routing iterations {r}")
        outcome = run_training(sub, log=log)
        rows.append((r, headline_metric(outcome["val_report"]),
                     headline_metric(outcome["test_report"])))
    out = Path(rcfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sweep.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        f.write("r,val_metric,test_metric\n")
        for r, vm, tm in rows:
            f.write(f"{r},{vm!r},{tm!r}\n")
    return {"rows": rows, "csv_path": csv_path}


def run_analyze(rcfg: RunConfig, split_name: str, k: int, log=lambda s: None):
    from .data import corpus_report, write_corpus_report

    validate_paths(rcfg)
    bundle = load_bundle(rcfg.dataset_kind, rcfg.dataset_path)
    split = resolve_split(split_name)
    report = corpus_report(bundle.split(split), load_stopwords(), load_lexicon(),
                           k=k, class_names=bundle.class_names)
    write_corpus_report(report, rcfg.out_dir)
    log(f"wrote corpus report for {split} to {rcfg.out_dir}")
    return report
