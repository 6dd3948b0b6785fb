"""Embedding tables and per-example embedded sequences.

Two sources feed the models: a trainable static table (rows update during
training, padding row pinned to zero) or a frozen store of precomputed
contextual embeddings written offline.

File formats, both little-endian:

  XEMB (static matrix):  magic "XEMB", u32 version=1, u32 V, u32 D,
                         then V*D float32 row-major.  The vocab lives in a
                         companion text file, one token per line, line
                         number = row index.
  XSEQ (frozen store):   magic "XSEQ", u32 version=1, u32 D, u32 N, then N
                         records (u32 id-length, UTF-8 id, u32 L, L*D
                         float32), then an index of (u32 id-length, id,
                         u64 record offset) entries, and finally a u64
                         index offset as the last 8 bytes of the file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, FormatError, UnknownIdError
from .tensor import Tensor

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_XEMB_MAGIC = b"XEMB"
_XSEQ_MAGIC = b"XSEQ"


@dataclass
class EmbeddingTable:
    vocab: dict            # token -> row index
    matrix: Tensor         # (V, D); requires_grad per trainable
    dim: int
    trainable: bool
    unk_index: int
    pad_index: int         # row kept exactly zero

    def lookup(self, token: str) -> int:
        return self.vocab.get(token, self.unk_index)


@dataclass
class EmbeddedSequence:
    matrix: Tensor         # (L, D); rows >= true_length are zero
    true_length: int
    example_id: str = ""


def new_table(tokens, dim: int, rng, trainable: bool = True) -> EmbeddingTable:
    """Fresh table: pad and unk rows are zero, the rest uniform in +-0.25.

    ``tokens`` must not contain the pad/unk specials or duplicates; they
    get rows 0 and 1.
    """
    if dim < 1:
        raise ConfigError(f"embedding dim must be positive, got {dim}")
    vocab = {PAD_TOKEN: 0, UNK_TOKEN: 1}
    for t in tokens:
        if t in vocab:
            raise ConfigError(f"duplicate or reserved token in vocab: {t!r}")
        vocab[t] = len(vocab)
    matrix = rng.uniform(-0.25, 0.25, size=(len(vocab), dim))
    matrix[0] = 0.0  # pad
    matrix[1] = 0.0  # unk starts at zero but trains
    return EmbeddingTable(vocab, Tensor(matrix, requires_grad=trainable), dim, trainable, 1, 0)


def embed_sequence(tokens, table: EmbeddingTable, max_len: int, example_id: str = "") -> EmbeddedSequence:
    """Look up the first max_len tokens and zero-pad to exactly max_len rows."""
    if max_len < 1:
        raise ConfigError(f"max_len must be >= 1, got {max_len}")
    ids = [table.lookup(t) for t in tokens[:max_len]]
    true_len = len(ids)
    ids.extend([table.pad_index] * (max_len - true_len))
    mat = T.gather_rows(table.matrix, np.asarray(ids, dtype=np.int64),
                        frozen_rows={table.pad_index})
    return EmbeddedSequence(mat, true_len, example_id)


def pad_to(seq: EmbeddedSequence, max_len: int) -> EmbeddedSequence:
    """Pad (or truncate) a frozen sequence to exactly max_len rows."""
    data = seq.matrix.data
    L, D = data.shape
    if L == max_len:
        return seq
    if L > max_len:
        out = data[:max_len].copy()
    else:
        out = np.vstack([data, np.zeros((max_len - L, D))])
    return EmbeddedSequence(Tensor(out), min(seq.true_length, max_len), seq.example_id)


# ---------------------------------------------------------------------------
# XEMB static tables


def write_static_embeddings(tokens, matrix, vocab_path, matrix_path):
    """Write a vocab text file and an XEMB matrix file."""
    m = np.ascontiguousarray(matrix, dtype=np.float32)
    if m.ndim != 2:
        raise ConfigError(f"embedding matrix must be 2-D, got shape {m.shape}")
    tokens = list(tokens)
    if len(tokens) != m.shape[0]:
        raise ConfigError(f"{len(tokens)} tokens but {m.shape[0]} matrix rows")
    with open(vocab_path, "w", encoding="utf-8") as f:
        for t in tokens:
            f.write(t + "\n")
    with open(matrix_path, "wb") as f:
        f.write(_XEMB_MAGIC)
        f.write(struct.pack("<III", 1, m.shape[0], m.shape[1]))
        f.write(m.tobytes())


def load_static_embeddings(vocab_path, matrix_path, trainable: bool = True) -> EmbeddingTable:
    """Read a vocab + XEMB pair.

    Tables lacking the pad/unk specials get synthetic zero rows appended;
    the pad row is forced to zero either way so padding stays inert.
    """
    with open(vocab_path, encoding="utf-8") as f:
        tokens = f.read().splitlines()
    with open(matrix_path, "rb") as f:
        blob = f.read()
    if len(blob) < 16 or blob[:4] != _XEMB_MAGIC:
        raise FormatError(f"{matrix_path}: not an XEMB file")
    version, v, d = struct.unpack_from("<III", blob, 4)
    if version != 1:
        raise FormatError(f"{matrix_path}: unsupported XEMB version {version}")
    if v != len(tokens):
        raise FormatError(
            f"vocab file lists {len(tokens)} tokens but matrix header declares {v} rows"
        )
    expect = 16 + 4 * v * d
    if len(blob) != expect:
        raise FormatError(
            f"{matrix_path}: expected {expect} bytes for {v}x{d} float32, got {len(blob)}"
        )
    matrix = np.frombuffer(blob, dtype="<f4", offset=16).reshape(v, d).astype(np.float64)

    vocab = {}
    for i, t in enumerate(tokens):
        if t in vocab:
            raise FormatError(f"duplicate token {t!r} in vocab file")
        vocab[t] = i
    rows = [matrix]
    if PAD_TOKEN not in vocab:
        vocab[PAD_TOKEN] = len(vocab)
        rows.append(np.zeros((1, d)))
    if UNK_TOKEN not in vocab:
        vocab[UNK_TOKEN] = len(vocab)
        rows.append(np.zeros((1, d)))
    full = np.vstack(rows) if len(rows) > 1 else matrix.copy()
    pad_index = vocab[PAD_TOKEN]
    full[pad_index] = 0.0
    return EmbeddingTable(vocab, Tensor(full, requires_grad=trainable), d, trainable,
                          vocab[UNK_TOKEN], pad_index)


# ---------------------------------------------------------------------------
# XSEQ frozen stores


def write_precomputed_store(path, dim: int, records):
    """Write an XSEQ store from (example_id, L x dim array) pairs.

    Ids must be unique; arrays are stored as float32.  The index and its
    trailing offset go last, so a truncated write leaves no valid footer.
    """
    records = list(records)
    index = []
    with open(path, "wb") as f:
        f.write(_XSEQ_MAGIC)
        f.write(struct.pack("<III", 1, dim, len(records)))
        seen = set()
        for example_id, mat in records:
            if example_id in seen:
                raise ConfigError(f"duplicate example id {example_id!r}")
            seen.add(example_id)
            m = np.ascontiguousarray(mat, dtype=np.float32)
            if m.ndim != 2 or m.shape[1] != dim or m.shape[0] < 1:
                raise ConfigError(
                    f"record {example_id!r}: expected (L>=1, {dim}) matrix, got shape {m.shape}"
                )
            ident = example_id.encode("utf-8")
            index.append((ident, f.tell()))
            f.write(struct.pack("<I", len(ident)))
            f.write(ident)
            f.write(struct.pack("<I", m.shape[0]))
            f.write(m.tobytes())
        index_offset = f.tell()
        for ident, offset in index:
            f.write(struct.pack("<I", len(ident)))
            f.write(ident)
            f.write(struct.pack("<Q", offset))
        f.write(struct.pack("<Q", index_offset))


class PrecomputedStore:
    """Random-access reader over an XSEQ store; safe for concurrent readers."""

    def __init__(self, path):
        self.path = path
        self._f = open(path, "rb")
        try:
            self._parse()
        except Exception:
            self._f.close()
            raise

    def _fail(self, why):
        raise FormatError(f"{self.path}: {why}")

    def _parse(self):
        f = self._f
        header = f.read(16)
        if len(header) < 16 or header[:4] != _XSEQ_MAGIC:
            self._fail("not an XSEQ store")
        version, dim, count = struct.unpack_from("<III", header, 4)
        if version != 1:
            self._fail(f"unsupported version {version}")
        f.seek(0, 2)
        size = f.tell()
        if size < 24:
            self._fail("truncated store (no footer)")
        f.seek(size - 8)
        (index_offset,) = struct.unpack("<Q", f.read(8))
        if not 16 <= index_offset <= size - 8:
            self._fail("invalid index offset (incomplete write?)")
        f.seek(index_offset)
        offsets = {}
        for _ in range(count):
            raw = f.read(4)
            if len(raw) < 4:
                self._fail("truncated index")
            (id_len,) = struct.unpack("<I", raw)
            ident = f.read(id_len)
            raw = f.read(8)
            if len(ident) < id_len or len(raw) < 8:
                self._fail("truncated index")
            (offset,) = struct.unpack("<Q", raw)
            offsets[ident.decode("utf-8")] = offset
        if f.tell() != size - 8:
            self._fail("index size mismatch")
        if len(offsets) != count:
            self._fail(f"index lists {len(offsets)} unique ids, header declares {count}")
        self.dim = dim
        self._offsets = offsets

    def ids(self):
        return list(self._offsets)

    def __contains__(self, example_id):
        return example_id in self._offsets

    def __len__(self):
        return len(self._offsets)

    def read(self, example_id: str) -> EmbeddedSequence:
        offset = self._offsets.get(example_id)
        if offset is None:
            raise UnknownIdError(f"{self.path}: no record for example id {example_id!r}")
        f = self._f
        f.seek(offset)
        (id_len,) = struct.unpack("<I", f.read(4))
        ident = f.read(id_len).decode("utf-8")
        if ident != example_id:
            self._fail(f"index points at record {ident!r}, expected {example_id!r}")
        (L,) = struct.unpack("<I", f.read(4))
        raw = f.read(4 * L * self.dim)
        if len(raw) < 4 * L * self.dim:
            self._fail(f"record {example_id!r} truncated")
        mat = np.frombuffer(raw, dtype="<f4").reshape(L, self.dim).astype(np.float64)
        return EmbeddedSequence(Tensor(mat), L, example_id)

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def load_precomputed(store_path, example_id: str) -> EmbeddedSequence:
    """One-shot read of a single example from an XSEQ store."""
    with PrecomputedStore(store_path) as store:
        return store.read(example_id)
