"""Line-based run configuration: `key = value`, `#` comments, dotted keys.

A run config merges dataset location, model hyperparameters, and training
settings.  Later sources win: file, then repeated --set overrides, then
direct flags.  Unknown keys are rejected up front.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .train import TrainConfig

# key -> (type tag, destination)
_SCHEMA = {
    "dataset.kind": ("choice:covid,liar", ("run", "dataset_kind")),
    "dataset.path": ("str", ("run", "dataset_path")),
    "out": ("str", ("run", "out_dir")),
    "seed": ("int", ("run", "seed")),
    "vocab.size": ("int", ("run", "vocab_size")),
    "analyze.k": ("int", ("run", "analyze_k")),
    "model.variant": ("str", ("model", "variant")),
    "model.embedding_mode": ("str", ("model", "embedding_mode")),
    "model.embed_dim": ("int", ("model", "embed_dim")),
    "model.max_len": ("int", ("model", "max_len")),
    "model.filters": ("int", ("model", "filters_per_width")),
    "model.filter_widths": ("ints", ("model", "filter_widths")),
    "model.routing_iterations": ("int", ("model", "routing_iterations")),
    "model.hidden_dense": ("int", ("model", "hidden_dense")),
    "model.dropout": ("float", ("model", "dropout")),
    "model.leaky_alpha": ("float", ("model", "leaky_alpha")),
    "model.m_plus": ("float", ("model", "m_plus")),
    "model.m_minus": ("float", ("model", "m_minus")),
    "model.lambda_down": ("float", ("model", "lambda_down")),
    "model.loss": ("str", ("model", "loss")),
    "train.batch_size": ("int", ("train", "batch_size")),
    "train.max_epochs": ("int", ("train", "max_epochs")),
    "train.learning_rate": ("float", ("train", "learning_rate")),
    "train.optimizer": ("str", ("train", "optimizer")),
    "train.patience": ("int", ("train", "patience")),
    "train.shuffle": ("bool", ("train", "shuffle")),
    "store.train": ("str", ("store", "train")),
    "store.validation": ("str", ("store", "validation")),
    "store.test": ("str", ("store", "test")),
}

# applied when the key is absent; per dataset kind
_KIND_DEFAULTS = {
    "covid": {
        "model.variant": "dcnn-capsnet",
        "model.max_len": "64",
        "model.routing_iterations": "1",
    },
    "liar": {
        "model.variant": "mlp-capsnet",
        "model.max_len": "32",
        "model.routing_iterations": "2",
    },
}


@dataclass
class RunConfig:
    dataset_kind: str = ""
    dataset_path: str = ""
    out_dir: str = "out"
    seed: int = 0
    vocab_size: int = 20000
    analyze_k: int = 10
    model_kw: dict = field(default_factory=dict)
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    stores: dict = field(default_factory=dict)


def _coerce(key: str, value: str, tag: str):
    try:
        if tag == "int":
            return int(value)
        if tag == "float":
            return float(value)
        if tag == "bool":
            low = value.strip().casefold()
            if low in ("true", "false"):
                return low == "true"
            raise ValueError(value)
        if tag == "ints":
            return tuple(int(v) for v in value.replace(",", " ").split())
        if tag.startswith("choice:"):
            allowed = tag.split(":", 1)[1].split(",")
            if value not in allowed:
                raise ValueError(value)
            return value
        return value
    except ValueError:
        raise ConfigError(f"config key {key}: cannot parse {value!r} as {tag}") from None


def parse_config_file(path) -> list:
    """Returns ordered (key, value) pairs; keys checked against the schema."""
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path} line {lineno}: expected key = value")
            key, value = key.strip(), value.strip()
            if key not in _SCHEMA:
                raise ConfigError(f"{path} line {lineno}: unknown config key {key!r}")
            pairs.append((key, value))
    return pairs


def parse_set_override(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, value = key.strip(), value.strip()
    if key not in _SCHEMA:
        raise ConfigError(f"--set: unknown config key {key!r}")
    return key, value


def make_run_config(pairs) -> RunConfig:
    """Merge ordered (key, value) string pairs; later pairs win."""
    merged = {}
    for key, value in pairs:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = value
    kind = merged.get("dataset.kind", "")
    for key, value in _KIND_DEFAULTS.get(kind, {}).items():
        merged.setdefault(key, value)

    rcfg = RunConfig()
    for key, value in merged.items():
        tag, (section, name) = _SCHEMA[key]
        typed = _coerce(key, value, tag)
        if section == "run":
            setattr(rcfg, name, typed)
        elif section == "model":
            rcfg.model_kw[name] = typed
        elif section == "train":
            setattr(rcfg.train_cfg, name, typed)
        else:
            rcfg.stores[name] = typed
    rcfg.train_cfg.seed = rcfg.seed
    rcfg.model_kw["seed"] = rcfg.seed
    return rcfg


def load_run_config(config_path=None, set_overrides=(), out_dir=None, seed=None,
                    routing_iterations=None) -> RunConfig:
    pairs = list(parse_config_file(config_path)) if config_path else []
    for text in set_overrides:
        pairs.append(parse_set_override(text))
    if out_dir is not None:
        pairs.append(("out", str(out_dir)))
    if seed is not None:
        pairs.append(("seed", str(seed)))
    if routing_iterations is not None:
        pairs.append(("model.routing_iterations", str(routing_iterations)))
    return make_run_config(pairs)
