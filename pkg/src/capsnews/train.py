"""Training loop: seeded shuffling, Adam/SGD, early stopping on the
validation metric, best-epoch weight restore.

Examples are prepared once (token ids or precomputed matrices, feature
vectors, labels) and the loop works purely on those, so the same code
trains both variants in both embedding modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .capsules import margin_loss
from .embeddings import EmbeddedSequence
from .errors import ConfigError, TrainingDiverged
from .metrics import MetricsReport, headline_metric, metrics_from_pairs
from .models import Model, forward_dcnn, forward_mlp
from .tensor import Tensor

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    batch_size: int = 50
    max_epochs: int = 20
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    patience: int = 5
    seed: int = 0
    shuffle: bool = True

    def validate(self) -> list:
        bad = []
        if self.batch_size < 1:
            bad.append("batch_size must be >= 1")
        if self.max_epochs < 1:
            bad.append("max_epochs must be >= 1")
        if not self.learning_rate > 0:
            bad.append("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            bad.append(f"unknown optimizer {self.optimizer!r}")
        if self.patience < 0:
            bad.append("patience must be >= 0")
        return bad


@dataclass
class PreparedExample:
    """One example reduced to what the forward pass needs."""
    id: str
    label: int
    token_ids: np.ndarray | None = None   # (max_len,) int64; static mode
    matrix: np.ndarray | None = None      # (max_len, D) float64; frozen mode
    features: object | None = None        # IndirectFeatureVector; mlp variant
    true_length: int = 0


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    val_accuracy: float


@dataclass
class TrainResult:
    model: Model
    history: list
    best_epoch: int
    best_metric: float


# --- optimizers ------------------------------------------------------------


def adam_step(value, grad, m, v, t, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
    """One bias-corrected Adam update; returns (new_value, new_m, new_v)."""
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    return value - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    def __init__(self, params, lr=1e-3, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            p.data[...], self.m[i], self.v[i] = adam_step(
                p.data, p.grad, self.m[i], self.v[i], self.t,
                self.lr, self.beta1, self.beta2, self.eps,
            )


class SGD:
    def __init__(self, params, lr=1e-3):
        self.params = list(params)
        self.lr = lr

    def step(self):
        for p in self.params:
            if p.grad is not None:
                p.data -= self.lr * p.grad


def make_optimizer(name: str, params, lr: float):
    if name == "adam":
        return Adam(params, lr=lr)
    if name == "sgd":
        return SGD(params, lr=lr)
    raise ConfigError(f"unknown optimizer {name!r}")


# --- forward plumbing ------------------------------------------------------


def _embed_instance(model: Model, inst: PreparedExample) -> EmbeddedSequence:
    if inst.matrix is not None:
        return EmbeddedSequence(Tensor(np.asarray(inst.matrix, dtype=np.float64)),
                                inst.true_length, inst.id)
    if inst.token_ids is None:
        raise ConfigError(f"example {inst.id}: prepared with neither token ids nor a matrix")
    table = model.table
    if table is None:
        raise ConfigError(f"example {inst.id}: static embedding lookup without a table")
    mat = T.gather_rows(table.matrix, inst.token_ids, frozen_rows={table.pad_index})
    return EmbeddedSequence(mat, inst.true_length, inst.id)


def forward_instance(model: Model, inst: PreparedExample, training=False, rng=None) -> Tensor:
    emb = _embed_instance(model, inst)
    if model.config.variant == "mlp-capsnet":
        if inst.features is None:
            raise ConfigError(f"example {inst.id}: mlp-capsnet needs a feature vector")
        return forward_mlp(model, emb, inst.features, training=training, rng=rng)
    return forward_dcnn(model, emb, training=training, rng=rng)


def _one_hot(label: int, num_classes: int) -> np.ndarray:
    if not 0 <= label < num_classes:
        raise ConfigError(f"label {label} out of range for {num_classes} classes")
    t = np.zeros(num_classes)
    t[label] = 1.0
    return t


_BCE_EPS = 1e-7


def bce_loss(act: Tensor, target: np.ndarray) -> Tensor:
    # squeeze activations into (eps, 1-eps) so the logs stay finite
    a = T.add_scalar(T.scale(act, 1.0 - 2.0 * _BCE_EPS), _BCE_EPS)
    t = np.asarray(target, dtype=np.float64)
    pos = T.mul(Tensor(t), T.log(a))
    neg = T.mul(Tensor(1.0 - t), T.log(T.add_scalar(T.neg(a), 1.0)))
    return T.neg(T.sum_all(T.add(pos, neg)))


def example_loss(model: Model, act: Tensor, label: int) -> Tensor:
    target = _one_hot(label, model.config.num_classes)
    if model.config.loss == "cross-entropy":
        return bce_loss(act, target)
    return margin_loss(act, target, model.config.margin_cfg())


# --- evaluation ------------------------------------------------------------


def predict_prepared(model: Model, insts) -> np.ndarray:
    out = np.empty(len(insts), dtype=np.int64)
    for i, inst in enumerate(insts):
        act = forward_instance(model, inst, training=False)
        out[i] = int(np.argmax(act.data))
    return out


def evaluate_prepared(model: Model, insts) -> MetricsReport:
    """Confusion-matrix metrics of argmax predictions over a prepared split."""
    if not insts:
        raise ConfigError("cannot evaluate an empty split")
    truth = np.array([inst.label for inst in insts], dtype=np.int64)
    return metrics_from_pairs(truth, predict_prepared(model, insts),
                              model.config.num_classes)


# --- the loop --------------------------------------------------------------


def _param_norms(model: Model) -> str:
    parts = []
    for name in sorted(model.params):
        parts.append(f"{name}={float(np.linalg.norm(model.params[name].data)):.6g}")
    return ", ".join(parts)


def train(model: Model, train_set, val_set, tcfg: TrainConfig, log=None) -> TrainResult:
    """Fit in place; afterwards the model holds the best-validation weights
    rounded to float32 precision, so a checkpoint round trip is exact."""
    issues = tcfg.validate()
    if issues:
        raise ConfigError("invalid train config: " + "; ".join(issues))
    if not train_set:
        raise ConfigError("training split is empty")
    if not val_set:
        raise ConfigError("validation split is empty")

    say = log if log is not None else (lambda s: None)
    order_rng = np.random.default_rng(tcfg.seed)
    drop_rng = np.random.default_rng([tcfg.seed, 0xD407])
    opt = make_optimizer(tcfg.optimizer, model.parameters(), tcfg.learning_rate)

    n = len(train_set)
    history = []
    best_metric = -np.inf
    best_epoch = 0
    best_state = None
    bad = 0

    for epoch in range(1, tcfg.max_epochs + 1):
        order = order_rng.permutation(n) if tcfg.shuffle else np.arange(n)
        epoch_loss = 0.0
        for b0 in range(0, n, tcfg.batch_size):
            batch = [train_set[i] for i in order[b0:b0 + tcfg.batch_size]]
            model.zero_grads()
            batch_loss = 0.0
            seed_share = 1.0 / len(batch)
            for inst in batch:
                act = forward_instance(model, inst, training=True,
                                       rng=int(drop_rng.integers(2 ** 62)))
                loss = example_loss(model, act, inst.label)
                batch_loss += loss.item()
                T.backward(loss, seed=seed_share)
            batch_loss *= seed_share
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"non-finite loss {batch_loss} at epoch {epoch}, "
                    f"batch {b0 // tcfg.batch_size + 1}; parameter norms: "
                    + _param_norms(model)
                )
            opt.step()
            epoch_loss += batch_loss * len(batch)
        epoch_loss /= n

        report = evaluate_prepared(model, val_set)
        metric = headline_metric(report)
        history.append(EpochRecord(epoch, epoch_loss, metric, report.accuracy))
        say(f"epoch {epoch}: loss {epoch_loss:.6f}, val metric {metric:.4f}")

        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_state = {k: p.data.astype(np.float32) for k, p in model.params.items()}
            bad = 0
        else:
            bad += 1
            if bad > tcfg.patience:
                say(f"stopping: no improvement for {bad} epochs")
                break

    for k, p in model.params.items():
        p.data[...] = best_state[k].astype(np.float64)
    model.zero_grads()
    return TrainResult(model, history, best_epoch, best_metric)


def history_to_csv(history) -> str:
    lines = ["epoch,train_loss,val_metric,val_accuracy"]
    for rec in history:
        lines.append(f"{rec.epoch},{rec.train_loss!r},{rec.val_metric!r},{rec.val_accuracy!r}")
    return "\n".join(lines) + "\n"


def write_history_csv(history, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(history_to_csv(history))
