"""Capsule machinery: squash, routing by agreement, the capsule feature
branch, and margin loss.

All functions are pure; routing keeps no state between calls beyond the
optional RoutingState snapshot handed back for inspection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractViolation, DimensionError, SequenceTooShortError
from .tensor import Tensor, _accum, _make

_SQUASH_EPS = 1e-12


def squash(s, axis: int = -1) -> Tensor:
    """Length-preserving-direction nonlinearity v = s * |s| / (1 + |s|^2).

    Shrinks every pose to norm < 1; the zero vector maps to itself.  Applied
    along ``axis`` so a whole stack of poses squashes in one call.
    """
    s = T._tensor(s)
    d = s.data
    n = np.linalg.norm(d, axis=axis, keepdims=True)
    w = np.where(n < _SQUASH_EPS, 0.0, n / (1.0 + n * n))
    v = d * w

    def push(g):
        if s.requires_grad:
            dot = (g * d).sum(axis=axis, keepdims=True)
            denom = np.where(n < _SQUASH_EPS, 1.0, (1.0 + n * n) ** 2 * n)
            coef = np.where(n < _SQUASH_EPS, 0.0, (1.0 - n * n) / denom)
            _accum(s, w * g + dot * coef * d)

    return _make(v, (s,), push, "squash")


@dataclass
class CapsulePoseSet:
    """Stack of capsule pose vectors; after squash every norm is < 1."""

    poses: Tensor


@dataclass
class RoutingState:
    """Snapshot of the last routing iteration, for inspection and sweeps."""

    logits: np.ndarray      # b as used in the final iteration
    couplings: np.ndarray   # softmax(b): rows sum to 1 per input capsule
    iterations: int
    predictions: Tensor     # u_hat the caller routed


def dynamic_routing(u_hat, r: int, with_state: bool = False):
    """Route prediction vectors to output capsules by iterative agreement.

    ``u_hat`` has shape (..., N_in, N_out, D_out); leading axes are treated
    as independent batches.  Logits start at zero, so one iteration is a
    uniform-coupling average followed by squash.  Each further iteration
    adds the scalar-product agreement v . u_hat to the logits and re-runs
    the softmax over the output-capsule axis.  The whole loop is unrolled,
    so gradients flow through every iteration.
    """
    u_hat = T._tensor(u_hat)
    if r < 1:
        raise ConfigError(f"routing iterations must be >= 1, got {r}")
    if u_hat.data.ndim < 3:
        raise DimensionError(
            f"routing expects predictions (..., N_in, N_out, D_out), got shape {u_hat.data.shape}"
        )
    b = Tensor(np.zeros(u_hat.data.shape[:-1]))
    c = v = None
    for it in range(r):
        c = T.softmax(b, axis=-1)
        s = T.einsum_pair("...ij,...ijd->...jd", c, u_hat)
        v = squash(s)
        if it + 1 < r:  # the update after the last iteration would be dead weight
            agreement = T.einsum_pair("...ijd,...jd->...ij", u_hat, v)
            b = T.add(b, agreement)
    poses = CapsulePoseSet(v)
    if with_state:
        return poses, RoutingState(b.data.copy(), c.data.copy(), r, u_hat)
    return poses


# ---------------------------------------------------------------------------
# capsule feature branch
#
# Four stages over an embedded L x D sequence:
#   n-gram conv (32 filters, width 3) -> primary capsules (4 channels, dim 8,
#   squash) -> convolutional capsule layer (window 3, 8 channels, dim 8,
#   routed, weights shared across positions) -> fully connected capsule layer
#   (2 capsules, dim 16, routed), flattened to 32 and passed through
#   leaky-ReLU.

NGRAM_FILTERS = 32
NGRAM_WIDTH = 3
PRIMARY_CHANNELS = 4
PRIMARY_DIM = 8  # PRIMARY_CHANNELS * PRIMARY_DIM == NGRAM_FILTERS
CONV_CAPS_WINDOW = 3
CONV_CAPS_CHANNELS = 8
CONV_CAPS_DIM = 8
FC_CAPS = 2
FC_CAPS_DIM = 16
BRANCH_OUTPUT = FC_CAPS * FC_CAPS_DIM  # 32


@dataclass
class CapsuleBranchParams:
    conv_w: Tensor       # (NGRAM_FILTERS, NGRAM_WIDTH, embed_dim)
    conv_b: Tensor       # (NGRAM_FILTERS,)
    conv_caps_w: Tensor  # (CONV_CAPS_WINDOW * PRIMARY_CHANNELS, CONV_CAPS_CHANNELS, PRIMARY_DIM, CONV_CAPS_DIM)
    fc_caps_w: Tensor    # (fc_input_capsules(L), FC_CAPS, CONV_CAPS_DIM, FC_CAPS_DIM)


def fc_input_capsules(seq_len: int) -> int:
    """Number of capsules feeding the fully connected capsule layer at length L."""
    p0 = seq_len - NGRAM_WIDTH + 1
    p1 = p0 - CONV_CAPS_WINDOW + 1
    if p1 < 1:
        raise SequenceTooShortError(
            f"capsule branch needs length >= {NGRAM_WIDTH + CONV_CAPS_WINDOW - 1}, got {seq_len}"
        )
    return p1 * CONV_CAPS_CHANNELS


def capsule_branch(embedded, params: CapsuleBranchParams, r: int, alpha: float = 0.01) -> Tensor:
    """Run the four-stage capsule branch; returns a flat 32-vector."""
    x = T._tensor(embedded)
    if x.data.ndim != 2:
        raise DimensionError(f"capsule branch expects (L, D) embeddings, got {x.data.shape}")

    feat = T.conv1d(x, params.conv_w, params.conv_b)  # (P0, 32), no activation here
    p0 = feat.shape[0]
    prim = squash(T.reshape(feat, (p0, PRIMARY_CHANNELS, PRIMARY_DIM)))

    win = T.window_stack(prim, CONV_CAPS_WINDOW)      # (P1, 3, 4, 8)
    p1 = win.shape[0]
    n_in = CONV_CAPS_WINDOW * PRIMARY_CHANNELS
    win = T.reshape(win, (p1, n_in, PRIMARY_DIM))
    u_hat = T.einsum_pair("pid,ijde->pije", win, params.conv_caps_w)
    conv_caps = dynamic_routing(u_hat, r).poses       # (P1, 8, 8)

    flat = T.reshape(conv_caps, (p1 * CONV_CAPS_CHANNELS, CONV_CAPS_DIM))
    n3 = flat.shape[0]
    if params.fc_caps_w.data.shape[0] != n3:
        raise DimensionError(
            f"fully connected capsule weights were built for {params.fc_caps_w.data.shape[0]} "
            f"input capsules but this sequence yields {n3}"
        )
    u_hat2 = T.einsum_pair("nd,njde->nje", flat, params.fc_caps_w)
    out_caps = dynamic_routing(u_hat2, r).poses       # (FC_CAPS, FC_CAPS_DIM)

    return T.leaky_relu(T.reshape(out_caps, (BRANCH_OUTPUT,)), alpha=alpha)


# ---------------------------------------------------------------------------
# margin loss


@dataclass(frozen=True)
class MarginLossConfig:
    m_plus: float = 0.9
    m_minus: float = 0.1
    lambda_down: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.m_minus < self.m_plus < 1.0:
            raise ConfigError(
                f"margin loss needs 0 < m_minus < m_plus < 1, got {self.m_minus}, {self.m_plus}"
            )
        if self.lambda_down < 0:
            raise ConfigError(f"lambda_down must be nonnegative, got {self.lambda_down}")


def margin_loss(activations, target, cfg: MarginLossConfig = MarginLossConfig()) -> Tensor:
    """Two-sided margin loss over per-class activation strengths in [0, 1].

    The target class is pushed above m_plus, every other class below
    m_minus, with the down side weighted by lambda_down.
    """
    a = T._tensor(activations)
    t = np.asarray(target, dtype=np.float64)
    if a.data.ndim != 1 or a.data.shape != t.shape:
        raise DimensionError(
            f"margin loss expects matching 1-D activations and target, got {a.data.shape} and {t.shape}"
        )
    if not np.all((t == 0.0) | (t == 1.0)) or t.sum() != 1.0:
        raise ConfigError("margin loss target must be one-hot")
    if a.data.min() < -1e-9 or a.data.max() > 1.0 + 1e-9:
        raise ContractViolation(
            f"class activations must lie in [0, 1], got range "
            f"[{a.data.min():.6g}, {a.data.max():.6g}]"
        )

    up = np.maximum(0.0, cfg.m_plus - a.data)
    down = np.maximum(0.0, a.data - cfg.m_minus)
    value = (t * up ** 2 + cfg.lambda_down * (1.0 - t) * down ** 2).sum()

    def push(g):
        if a.requires_grad:
            da = -2.0 * t * up + 2.0 * cfg.lambda_down * (1.0 - t) * down
            _accum(a, float(g) * da)

    return _make(np.asarray(value), (a,), push, "margin_loss")
