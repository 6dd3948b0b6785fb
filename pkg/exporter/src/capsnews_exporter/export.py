"""Export frozen transformer token embeddings into XSEQ stores.

The exporter touches the classifier package only at its store boundary:
records are written with ``capsnews.embeddings.write_precomputed_store`` and
verified back through ``PrecomputedStore``.  Everything transformer-side
(tokenizer, model, batching) lives here.

Subword tokens are written as-is, one row per subword; the downstream models
treat the sequence axis opaquely, and any merge-to-word policy would be
lossy.  Only the last hidden state is exported.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from capsnews.embeddings import PrecomputedStore, write_precomputed_store
from capsnews.errors import CapsnewsError


class ExportError(Exception):
    """Bad input: dataset, model/tokenizer pair, or job parameters."""


DATASET_KINDS = ("covid", "liar")

_COVID_HEADER = ["id", "tweet", "label"]


def _find_split_file(path, split: str) -> Path:
    base = Path(path)
    candidates = [base / f"{split}{ext}" for ext in (".tsv", ".csv", ".txt", "")]
    for c in candidates:
        if c.is_file():
            return c
    raise FileNotFoundError(
        f"no {split} split under {base} (tried {', '.join(c.name for c in candidates)})"
    )


def _read_covid(path: Path) -> list:
    with open(path, encoding="utf-8", newline="") as f:
        header_line = f.readline()
        delim = "\t" if "\t" in header_line else ","
        header = [c.strip().casefold() for c in header_line.strip().split(delim)]
        if header != _COVID_HEADER:
            raise ExportError(f"{path}: expected header id{delim}tweet{delim}label, got {header}")
        out = []
        for row in csv.reader(f, delimiter=delim):
            if not row:
                continue
            if len(row) != 3:
                raise ExportError(f"{path}: expected 3 columns, got {len(row)}: {row!r}")
            out.append((row[0].strip(), row[1]))
    return out


def _read_liar(path: Path) -> list:
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        for row in csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE):
            if not row:
                continue
            if len(row) != 14:
                raise ExportError(f"{path}: expected 14 tab-separated columns, got {len(row)}")
            out.append((row[0].strip(), row[2]))
    return out


def read_examples(dataset_path, kind: str, split: str) -> list:
    """(example id, text) pairs for one split, in file order."""
    if kind not in DATASET_KINDS:
        raise ExportError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
    path = _find_split_file(dataset_path, split)
    pairs = _read_covid(path) if kind == "covid" else _read_liar(path)
    if not pairs:
        raise ExportError(f"{path}: split is empty")
    seen = set()
    for example_id, _ in pairs:
        if example_id in seen:
            raise ExportError(f"{path}: duplicate example id {example_id!r}")
        seen.add(example_id)
    return pairs


@dataclass
class ExportJob:
    """One store per (dataset split, model); layer choice is fixed to the
    last hidden state."""

    model_id: str                 # hub name or local checkpoint directory
    dataset_path: str
    dataset_kind: str
    split: str
    store_path: str
    max_len: int = 64
    batch_size: int = 16

    def validate(self):
        problems = []
        if not self.model_id:
            problems.append("model_id is empty")
        if self.max_len < 1:
            problems.append(f"max_len must be >= 1, got {self.max_len}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if problems:
            raise ExportError("; ".join(problems))


def tokenizer_content_hash(tokenizer) -> str:
    items = sorted(tokenizer.get_vocab().items(), key=lambda kv: (kv[1], kv[0]))
    text = "\n".join(f"{idx}\t{tok}" for tok, idx in items)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def manifest_path(store_path) -> Path:
    return Path(str(store_path) + ".manifest")


def _write_manifest(path, entries):
    lines = [f"{key} = {value}" for key, value in entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "=" not in line:
            raise ExportError(f"{path} line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


@dataclass
class ExportReport:
    store_path: Path
    manifest: Path
    examples: int
    dim: int


def export(job: ExportJob, log=lambda s: None) -> ExportReport:
    """Run the model over one split and write the store plus its manifest.

    The store is written in dataset order with a trailing index, so an
    interrupted export leaves no valid footer; the manifest only appears
    after the store is complete.
    """
    import torch
    from transformers import AutoModel, AutoTokenizer

    job.validate()
    pairs = read_examples(job.dataset_path, job.dataset_kind, job.split)

    tokenizer = AutoTokenizer.from_pretrained(job.model_id)
    model = AutoModel.from_pretrained(job.model_id)
    model.eval()

    vocab_rows = getattr(model.config, "vocab_size", None)
    if vocab_rows is not None and len(tokenizer) > vocab_rows:
        raise ExportError(
            f"tokenizer/model mismatch: tokenizer defines {len(tokenizer)} ids "
            f"but the model embeds only {vocab_rows}"
        )
    dim = int(model.config.hidden_size)

    records = []
    with torch.no_grad():
        for start in range(0, len(pairs), job.batch_size):
            batch = pairs[start:start + job.batch_size]
            enc = tokenizer([text for _, text in batch], truncation=True,
                            max_length=job.max_len, padding=True, return_tensors="pt")
            hidden = model(**enc).last_hidden_state  # (B, L_pad, D) float32
            lengths = enc["attention_mask"].sum(dim=1).tolist()
            for (example_id, _), row, true_len in zip(batch, hidden, lengths):
                records.append((example_id, row[:true_len].numpy()))
            log(f"{job.split}: embedded {min(start + job.batch_size, len(pairs))}"
                f"/{len(pairs)}")

    store = Path(job.store_path)
    store.parent.mkdir(parents=True, exist_ok=True)
    write_precomputed_store(store, dim, records)
    mpath = manifest_path(store)
    _write_manifest(mpath, [
        ("model", job.model_id),
        ("dim", dim),
        ("tokenizer_hash", tokenizer_content_hash(tokenizer)),
        ("examples", len(records)),
        ("max_len", job.max_len),
    ])
    log(f"{job.split}: wrote {len(records)} records ({dim}-d) to {store}")
    return ExportReport(store, mpath, len(records), dim)


# ---------------------------------------------------------------------------
# verification


@dataclass
class VerifyReport:
    ok: bool
    records: int
    problems: list = field(default_factory=list)

    def summary(self) -> str:
        if self.ok:
            return f"OK, {self.records} records"
        return "\n".join(self.problems)


def _listed(ids, cap=20):
    ids = sorted(ids)
    shown = ", ".join(ids[:cap])
    if len(ids) > cap:
        shown += f", ... ({len(ids)} total)"
    return shown


def verify(store_path, dataset_path, kind: str, split: str, max_len=None) -> VerifyReport:
    """Check id coverage, record shapes, and finiteness of one store."""
    problems = []
    try:
        store = PrecomputedStore(store_path)
    except (CapsnewsError, OSError) as e:
        return VerifyReport(False, 0, [f"unreadable store: {e}"])

    with store:
        manifest = {}
        mpath = manifest_path(store_path)
        if mpath.exists():
            manifest = read_manifest(mpath)
            if "dim" in manifest and int(manifest["dim"]) != store.dim:
                problems.append(
                    f"manifest dim {manifest['dim']} != store dim {store.dim}"
                )
            if "examples" in manifest and int(manifest["examples"]) != len(store):
                problems.append(
                    f"manifest examples {manifest['examples']} != store records {len(store)}"
                )
        if max_len is None and "max_len" in manifest:
            max_len = int(manifest["max_len"])

        dataset_ids = [example_id for example_id, _ in
                       read_examples(dataset_path, kind, split)]
        store_ids = set(store.ids())
        missing = set(dataset_ids) - store_ids
        extra = store_ids - set(dataset_ids)
        if missing:
            problems.append(f"missing records for ids: {_listed(missing)}")
        if extra:
            problems.append(f"records for unknown ids: {_listed(extra)}")

        bad_shape = []
        bad_values = []
        for example_id in store.ids():
            seq = store.read(example_id)
            L = seq.matrix.data.shape[0]
            if L < 1 or (max_len is not None and L > max_len):
                bad_shape.append(example_id)
            if not np.isfinite(seq.matrix.data).all():
                bad_values.append(example_id)
        if bad_shape:
            bound = f"1..{max_len}" if max_len is not None else ">= 1"
            problems.append(f"record length outside {bound} for ids: {_listed(bad_shape)}")
        if bad_values:
            problems.append(f"non-finite values for ids: {_listed(bad_values)}")

        return VerifyReport(not problems, len(store), problems)
