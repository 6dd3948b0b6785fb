"""The two classifier variants and their checkpoint format.

dcnn-capsnet (long statements): three parallel n-gram convolution branches
(widths 2/3/4, F filters each, global max-pool, leaky-ReLU) plus the
capsule feature branch, concatenated to 3F+32 and fed through a two-layer
dense head with per-class sigmoids.

mlp-capsnet (short statements): a 12-64-32-32 MLP over the indirect
feature vector plus the same capsule branch over embeddings, concatenated
to 64, then the same dense head.

Checkpoints (XCAP, little-endian): magic "XCAP", u32 version, canonical
key-sorted config text, optional feature-normalization stats, the
lexicon/stopword/vocab content hashes, and named float32 parameter blobs
sorted by name.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, fields as dc_fields, replace

import numpy as np

from . import tensor as T
from .capsules import (
    BRANCH_OUTPUT,
    CONV_CAPS_CHANNELS,
    CONV_CAPS_DIM,
    CONV_CAPS_WINDOW,
    FC_CAPS,
    FC_CAPS_DIM,
    NGRAM_FILTERS,
    NGRAM_WIDTH,
    PRIMARY_CHANNELS,
    PRIMARY_DIM,
    CapsuleBranchParams,
    MarginLossConfig,
    capsule_branch,
    fc_input_capsules,
)
from .embeddings import EmbeddingTable, embed_sequence, new_table, pad_to
from .errors import CapsnewsError, ConfigError, FormatError
from .features import FEATURE_NAMES, NormalizationStats, indirect_feature_vector, tokenize
from .tensor import Tensor

VARIANTS = ("dcnn-capsnet", "mlp-capsnet")
EMBEDDING_MODES = ("static-trainable", "frozen-store")
LOSSES = ("margin", "cross-entropy")

_XCAP_MAGIC = b"XCAP"


@dataclass
class ModelConfig:
    variant: str
    num_classes: int
    class_names: tuple
    embedding_mode: str = "static-trainable"
    embed_dim: int = 100
    max_len: int = 64
    vocab: tuple = ()                   # row order after <pad>, <unk>
    filter_widths: tuple = (2, 3, 4)
    filters_per_width: int = 128
    routing_iterations: int = 1
    mlp_sizes: tuple = (12, 64, 32, 32)
    hidden_dense: int = 32
    dropout: float = 0.5
    leaky_alpha: float = 0.01
    m_plus: float = 0.9
    m_minus: float = 0.1
    lambda_down: float = 0.5
    loss: str = "margin"
    seed: int = 0

    def validate(self) -> list:
        """Collect every violation instead of stopping at the first."""
        bad = []
        if self.variant not in VARIANTS:
            bad.append(f"unknown variant {self.variant!r}")
        if self.num_classes < 2:
            bad.append(f"num_classes must be >= 2, got {self.num_classes}")
        if len(self.class_names) != self.num_classes:
            bad.append(
                f"{len(self.class_names)} class names for {self.num_classes} classes"
            )
        if self.embedding_mode not in EMBEDDING_MODES:
            bad.append(f"unknown embedding_mode {self.embedding_mode!r}")
        if self.embed_dim < 1:
            bad.append("embed_dim must be positive")
        min_len = NGRAM_WIDTH + CONV_CAPS_WINDOW - 1
        if self.max_len < min_len:
            bad.append(f"max_len must be >= {min_len} for the capsule branch")
        if self.variant == "dcnn-capsnet":
            if not self.filter_widths:
                bad.append("dcnn-capsnet needs at least one filter width")
            if any(w < 1 for w in self.filter_widths):
                bad.append("filter widths must be positive")
            if any(w > self.max_len for w in self.filter_widths):
                bad.append(
                    f"filter widths {tuple(self.filter_widths)} must all be <= max_len {self.max_len}"
                )
            if self.filters_per_width < 1:
                bad.append("filters_per_width must be positive")
        if self.variant == "mlp-capsnet":
            s = tuple(self.mlp_sizes)
            if len(s) != 4 or any(v < 1 for v in s):
                bad.append(f"mlp_sizes must be 4 positive sizes, got {s}")
            elif s[0] != len(FEATURE_NAMES):
                bad.append(f"mlp input size must be {len(FEATURE_NAMES)}, got {s[0]}")
            elif s[-1] != BRANCH_OUTPUT:
                bad.append(
                    f"mlp output size must be {BRANCH_OUTPUT} to concatenate with the capsule branch"
                )
        if self.routing_iterations < 1:
            bad.append("routing_iterations must be >= 1")
        if self.hidden_dense < 1:
            bad.append("hidden_dense must be positive")
        if not 0.0 <= self.dropout < 1.0:
            bad.append(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0.0 <= self.leaky_alpha < 1.0:
            bad.append(f"leaky_alpha must be in [0, 1), got {self.leaky_alpha}")
        if not 0.0 < self.m_minus < self.m_plus < 1.0:
            bad.append(f"need 0 < m_minus < m_plus < 1, got {self.m_minus}, {self.m_plus}")
        if self.lambda_down < 0:
            bad.append("lambda_down must be nonnegative")
        if self.loss not in LOSSES:
            bad.append(f"unknown loss {self.loss!r}")
        return bad

    def margin_cfg(self) -> MarginLossConfig:
        return MarginLossConfig(self.m_plus, self.m_minus, self.lambda_down)


# canonical key = value serialization for checkpoints

_INT_FIELDS = {
    "num_classes", "embed_dim", "max_len", "filters_per_width",
    "routing_iterations", "hidden_dense", "seed",
}
_FLOAT_FIELDS = {"dropout", "leaky_alpha", "m_plus", "m_minus", "lambda_down"}
_STR_FIELDS = {"variant", "embedding_mode", "loss"}
_INT_TUPLE_FIELDS = {"filter_widths", "mlp_sizes"}
_STR_TUPLE_FIELDS = {"class_names", "vocab"}


def config_to_text(cfg: ModelConfig) -> str:
    lines = []
    for f in sorted(f.name for f in dc_fields(ModelConfig)):
        v = getattr(cfg, f)
        if f in _INT_TUPLE_FIELDS:
            v = " ".join(str(int(x)) for x in v)
        elif f in _STR_TUPLE_FIELDS:
            v = " ".join(v)
        elif f in _FLOAT_FIELDS:
            v = repr(float(v))
        lines.append(f"{f} = {v}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> ModelConfig:
    kw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"config line {lineno}: expected key = value")
        key, value = key.strip(), value.strip()
        if key in _INT_FIELDS:
            kw[key] = int(value)
        elif key in _FLOAT_FIELDS:
            kw[key] = float(value)
        elif key in _STR_FIELDS:
            kw[key] = value
        elif key in _INT_TUPLE_FIELDS:
            kw[key] = tuple(int(x) for x in value.split())
        elif key in _STR_TUPLE_FIELDS:
            kw[key] = tuple(value.split())
        else:
            raise FormatError(f"config line {lineno}: unknown key {key!r}")
    missing = {f.name for f in dc_fields(ModelConfig)} - set(kw)
    if missing:
        raise FormatError(f"config missing keys: {', '.join(sorted(missing))}")
    return ModelConfig(**kw)


@dataclass
class Model:
    config: ModelConfig
    params: dict                        # name -> Tensor
    norm_stats: NormalizationStats | None = None
    lexicon_hash: str = ""
    stopword_hash: str = ""
    vocab_hash: str = ""
    table: EmbeddingTable | None = None  # static mode only

    def parameters(self):
        return [self.params[k] for k in sorted(self.params)]

    def zero_grads(self):
        for p in self.params.values():
            p.zero_grad()

    def branch_params(self) -> CapsuleBranchParams:
        p = self.params
        return CapsuleBranchParams(
            p["caps.conv.w"], p["caps.conv.b"], p["caps.conv_caps.w"], p["caps.fc_caps.w"]
        )


def vocab_content_hash(vocab) -> str:
    return hashlib.sha256("\n".join(vocab).encode("utf-8")).hexdigest()


def _glorot(rng, shape, fan_in, fan_out) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def _zeros(*shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def build(config: ModelConfig, seed=None, lexicon_hash: str = "", stopword_hash: str = "") -> Model:
    """Deterministically initialize a model: Glorot weights, zero biases."""
    issues = config.validate()
    if issues:
        raise ConfigError("invalid model config: " + "; ".join(issues))
    rng = np.random.default_rng(config.seed if seed is None else seed)
    D = config.embed_dim
    params = {}
    table = None
    if config.embedding_mode == "static-trainable":
        table = new_table(config.vocab, D, rng, trainable=True)
        params["embedding.matrix"] = table.matrix

    params["caps.conv.w"] = _glorot(
        rng, (NGRAM_FILTERS, NGRAM_WIDTH, D), NGRAM_WIDTH * D, NGRAM_FILTERS
    )
    params["caps.conv.b"] = _zeros(NGRAM_FILTERS)
    n_in = CONV_CAPS_WINDOW * PRIMARY_CHANNELS
    params["caps.conv_caps.w"] = _glorot(
        rng, (n_in, CONV_CAPS_CHANNELS, PRIMARY_DIM, CONV_CAPS_DIM), PRIMARY_DIM, CONV_CAPS_DIM
    )
    n3 = fc_input_capsules(config.max_len)
    params["caps.fc_caps.w"] = _glorot(
        rng, (n3, FC_CAPS, CONV_CAPS_DIM, FC_CAPS_DIM), CONV_CAPS_DIM, FC_CAPS_DIM
    )

    if config.variant == "dcnn-capsnet":
        F_ = config.filters_per_width
        for w in config.filter_widths:
            params[f"conv{w}.w"] = _glorot(rng, (F_, w, D), w * D, F_)
            params[f"conv{w}.b"] = _zeros(F_)
        concat_width = len(config.filter_widths) * F_ + BRANCH_OUTPUT
    else:
        s = tuple(config.mlp_sizes)
        for i in range(3):
            params[f"mlp{i + 1}.w"] = _glorot(rng, (s[i + 1], s[i]), s[i], s[i + 1])
            params[f"mlp{i + 1}.b"] = _zeros(s[i + 1])
        concat_width = s[-1] + BRANCH_OUTPUT

    params["head1.w"] = _glorot(
        rng, (config.hidden_dense, concat_width), concat_width, config.hidden_dense
    )
    params["head1.b"] = _zeros(config.hidden_dense)
    params["head2.w"] = _glorot(
        rng, (config.num_classes, config.hidden_dense), config.hidden_dense, config.num_classes
    )
    params["head2.b"] = _zeros(config.num_classes)

    return Model(config, params, None, lexicon_hash, stopword_hash,
                 vocab_content_hash(config.vocab), table)


# ---------------------------------------------------------------------------
# forward passes


def _check_embedded(model: Model, embedded) -> Tensor:
    x = embedded.matrix
    if x.data.ndim != 2 or x.data.shape[1] != model.config.embed_dim:
        raise ConfigError(
            f"embedded dim {x.data.shape[-1]} does not match model embed_dim "
            f"{model.config.embed_dim}"
        )
    return x


def forward_dcnn(model: Model, embedded, training: bool = False, rng=None) -> Tensor:
    """Class activations in (0,1) for the convolutional variant."""
    cfg = model.config
    x = _check_embedded(model, embedded)
    p = model.params
    branches = []
    for w in cfg.filter_widths:
        conv = T.conv1d(x, p[f"conv{w}.w"], p[f"conv{w}.b"])
        branches.append(T.leaky_relu(T.global_max_pool(conv), alpha=cfg.leaky_alpha))
    branches.append(capsule_branch(x, model.branch_params(), cfg.routing_iterations,
                                   alpha=cfg.leaky_alpha))
    cat = T.concat(branches)
    cat = T.dropout(cat, cfg.dropout, training=training,
                    seed=rng if rng is not None else 0)
    h = T.leaky_relu(T.dense(cat, p["head1.w"], p["head1.b"]), alpha=cfg.leaky_alpha)
    return T.sigmoid(T.dense(h, p["head2.w"], p["head2.b"]))


def forward_mlp(model: Model, embedded, feats, training: bool = False, rng=None) -> Tensor:
    """Class activations for the indirect-feature variant."""
    cfg = model.config
    if feats.lexicon_hash and model.lexicon_hash and feats.lexicon_hash != model.lexicon_hash:
        raise ConfigError("feature vector built with a different sentiment lexicon than the model")
    if feats.stopword_hash and model.stopword_hash and feats.stopword_hash != model.stopword_hash:
        raise ConfigError("feature vector built with a different stopword list than the model")
    v = np.asarray(feats.values, dtype=np.float64)
    if v.shape != (cfg.mlp_sizes[0],):
        raise ConfigError(f"feature vector has shape {v.shape}, expected ({cfg.mlp_sizes[0]},)")
    x = _check_embedded(model, embedded)
    p = model.params
    h = T.relu(T.dense(Tensor(v), p["mlp1.w"], p["mlp1.b"]))
    h = T.relu(T.dense(h, p["mlp2.w"], p["mlp2.b"]))
    h = T.dense(h, p["mlp3.w"], p["mlp3.b"])  # linear output block
    caps = capsule_branch(x, model.branch_params(), cfg.routing_iterations,
                          alpha=cfg.leaky_alpha)
    cat = T.concat([h, caps])
    cat = T.dropout(cat, cfg.dropout, training=training,
                    seed=rng if rng is not None else 0)
    h = T.leaky_relu(T.dense(cat, p["head1.w"], p["head1.b"]), alpha=cfg.leaky_alpha)
    return T.sigmoid(T.dense(h, p["head2.w"], p["head2.b"]))


def forward(model: Model, embedded, feats=None, training: bool = False, rng=None) -> Tensor:
    if model.config.variant == "mlp-capsnet":
        if feats is None:
            raise ConfigError("mlp-capsnet forward needs an indirect feature vector")
        return forward_mlp(model, embedded, feats, training=training, rng=rng)
    return forward_dcnn(model, embedded, training=training, rng=rng)


def predict(model: Model, example, lex=None, stopwords=None, store=None):
    """(label index, per-class activations) for one example, inference mode.

    Ties break toward the lowest class index.  Static models embed with
    their own table; frozen-store models need the opened store passed in.
    """
    from . import features as feat_mod

    cfg = model.config
    try:
        if cfg.embedding_mode == "static-trainable":
            seq = embed_sequence(tokenize(example.text), model.table, cfg.max_len, example.id)
        else:
            if store is None:
                raise ConfigError("frozen-store model needs a precomputed store to predict")
            seq = pad_to(store.read(example.id), cfg.max_len)
        if cfg.variant == "mlp-capsnet":
            lex = lex if lex is not None else feat_mod.load_lexicon()
            stopwords = stopwords if stopwords is not None else feat_mod.load_stopwords()
            feats = indirect_feature_vector(example, lex, stopwords, model.norm_stats)
            act = forward_mlp(model, seq, feats, training=False)
        else:
            act = forward_dcnn(model, seq, training=False)
    except CapsnewsError as e:
        raise type(e)(f"example {example.id}: {e}") from e
    a = act.data
    return int(np.argmax(a)), a.copy()


# ---------------------------------------------------------------------------
# checkpoint io


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_model(model: Model, path):
    """Write an XCAP checkpoint; parameters stored as float32."""
    with open(path, "wb") as f:
        f.write(_XCAP_MAGIC)
        f.write(struct.pack("<I", 1))
        f.write(_pack_str(config_to_text(model.config)))
        if model.norm_stats is not None:
            f.write(struct.pack("<B", 1))
            f.write(np.ascontiguousarray(model.norm_stats.mean, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(model.norm_stats.std, dtype="<f8").tobytes())
        else:
            f.write(struct.pack("<B", 0))
        for h in (model.lexicon_hash, model.stopword_hash, model.vocab_hash):
            f.write(_pack_str(h))
        f.write(struct.pack("<I", len(model.params)))
        for name in sorted(model.params):
            data = np.ascontiguousarray(model.params[name].data, dtype="<f4")
            f.write(_pack_str(name))
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.tobytes())


class _Reader:
    def __init__(self, blob, path):
        self.blob, self.pos, self.path = blob, 0, path

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise FormatError(f"{self.path}: truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def string(self):
        return self.take(self.u32()).decode("utf-8")


def load_model(path) -> Model:
    """Read an XCAP checkpoint back into a Model (parameters float64)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _XCAP_MAGIC:
        raise FormatError(f"{path}: not an XCAP checkpoint")
    r = _Reader(blob, path)
    r.take(4)
    version = r.u32()
    if version != 1:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    config = config_from_text(r.string())
    issues = config.validate()
    if issues:
        raise FormatError(f"{path}: invalid stored config: " + "; ".join(issues))

    norm = None
    if r.take(1)[0]:
        n = len(FEATURE_NAMES)
        mean = np.frombuffer(r.take(8 * n), dtype="<f8").copy()
        std = np.frombuffer(r.take(8 * n), dtype="<f8").copy()
        norm = NormalizationStats(mean, std)
    lex_hash, stop_hash, vocab_hash = r.string(), r.string(), r.string()

    params = {}
    for _ in range(r.u32()):
        name = r.string()
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(np.float64)
        params[name] = Tensor(data, requires_grad=True)
    if r.pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - r.pos} trailing bytes")

    table = None
    if config.embedding_mode == "static-trainable":
        if "embedding.matrix" not in params:
            raise FormatError(f"{path}: static model without embedding matrix")
        vocab = {t: i + 2 for i, t in enumerate(config.vocab)}
        vocab = {"<pad>": 0, "<unk>": 1, **vocab}
        matrix = params["embedding.matrix"]
        if matrix.data.shape != (len(vocab), config.embed_dim):
            raise FormatError(
                f"{path}: embedding matrix shape {matrix.data.shape} does not match "
                f"vocab of {len(vocab)} and dim {config.embed_dim}"
            )
        table = EmbeddingTable(vocab, matrix, config.embed_dim, True, 1, 0)

    return Model(config, params, norm, lex_hash, stop_hash, vocab_hash, table)


def canonicalize_params(model: Model):
    """Round parameters to float32 precision in place.

    Training does this when restoring the best epoch so that in-memory
    predictions match a save/load round trip bit for bit.
    """
    for p in model.params.values():
        p.data[...] = p.data.astype(np.float32).astype(np.float64)
