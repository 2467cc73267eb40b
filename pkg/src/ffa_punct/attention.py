"""Multi-head attention layers: vanilla, interaction (head-mixing), and masked.

Shapes follow ``(batch, heads, n, n)`` for attention logits. Public functions
also accept unbatched inputs (``x`` of shape ``(n, d_model)``) and return
unbatched results in that case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .exceptions import ConfigError, ShapeError
from .tensor import Tensor

KINDS = ("vanilla", "interaction", "masked")


@dataclass
class AttentionLayerParams:
    """Weights of one post-LN encoder layer.

    ``p_lambda`` is the H x H head-mixing matrix; it is ``None`` for layers
    that do not mix heads.
    """

    n_heads: int
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_out: Tensor
    b_out: Tensor
    ln1_gamma: Tensor
    ln1_beta: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor
    p_lambda: Tensor | None = None

    def __post_init__(self):
        d = self.d_model
        if self.n_heads <= 0 or d % self.n_heads:
            raise ConfigError(f"d_model={d} is not divisible by n_heads={self.n_heads}")
        if self.p_lambda is not None and self.p_lambda.shape != (self.n_heads, self.n_heads):
            raise ConfigError(f"p_lambda must be {self.n_heads}x{self.n_heads}, got {self.p_lambda.shape}")

    @property
    def d_model(self) -> int:
        return self.w_q.shape[0]

    @property
    def head_size(self) -> int:
        return self.d_model // self.n_heads

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Tensor):
                out[prefix + f.name] = value
        return out


@dataclass
class AttentionTrace:
    """Per-head logits before and after mixing, and the softmax weights."""

    J: np.ndarray | None = None
    J_hat: np.ndarray | None = None
    probs: np.ndarray | None = None


def init_attention_layer(
    d_model: int,
    n_heads: int,
    d_ff: int,
    rng: np.random.Generator,
    *,
    interaction: bool = False,
    init_std: float = 0.02,
    p_lambda_std: float | None = None,
    dtype=np.float32,
) -> AttentionLayerParams:
    """Gaussian weights, zero biases, unit LayerNorm gains.

    The mixing matrix, when requested, is drawn with standard deviation
    ``p_lambda_std`` (default ``0.1 / sqrt(d_model)``).
    """
    if n_heads <= 0 or d_model % n_heads:
        raise ConfigError(f"d_model={d_model} is not divisible by n_heads={n_heads}")

    def normal(*shape, std=init_std):
        return Tensor(rng.normal(0.0, std, size=shape).astype(dtype), requires_grad=True)

    def const(value, n):
        return Tensor(np.full(n, value, dtype=dtype), requires_grad=True)

    p_lambda = None
    if interaction:
        std = 0.1 / math.sqrt(d_model) if p_lambda_std is None else p_lambda_std
        p_lambda = normal(n_heads, n_heads, std=std)
    return AttentionLayerParams(
        n_heads=n_heads,
        w_q=normal(d_model, d_model),
        w_k=normal(d_model, d_model),
        w_v=normal(d_model, d_model),
        w_out=normal(d_model, d_model),
        b_out=const(0.0, d_model),
        ln1_gamma=const(1.0, d_model),
        ln1_beta=const(0.0, d_model),
        ffn_w1=normal(d_model, d_ff),
        ffn_b1=const(0.0, d_ff),
        ffn_w2=normal(d_ff, d_model),
        ffn_b2=const(0.0, d_model),
        ln2_gamma=const(1.0, d_model),
        ln2_beta=const(0.0, d_model),
        p_lambda=p_lambda,
    )


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, n, d = x.shape
    return T.transpose(T.reshape(x, (b, n, n_heads, d // n_heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, h, n, dh = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, n, h * dh))


def head_logits(x: Tensor, params: AttentionLayerParams):
    """Per-head projections and unscaled logits ``J[k] = Q_k K_k^T``.

    Returns ``(q, k, v, J)`` with heads on axis -3.
    """
    unbatched = x.ndim == 2
    if unbatched:
        x = T.reshape(x, (1,) + x.shape)
    if x.ndim != 3 or x.shape[-1] != params.d_model:
        raise ShapeError(f"expected input (..., n, {params.d_model}), got {x.shape}")
    q = _split_heads(x @ params.w_q, params.n_heads)
    k = _split_heads(x @ params.w_k, params.n_heads)
    v = _split_heads(x @ params.w_v, params.n_heads)
    J = q @ T.swapaxes(k, -1, -2)
    if unbatched:
        q, k, v, J = (T.reshape(t, t.shape[1:]) for t in (q, k, v, J))
    return q, k, v, J


def head_interaction(J: Tensor, p_lambda: Tensor) -> Tensor:
    """Mix logits across heads and add the residual: ``J_hat[k] = sum_m P[k, m] J[m] + J[k]``."""
    h = p_lambda.shape[0]
    if p_lambda.shape != (h, h) or J.ndim < 3 or J.shape[-3] != h:
        raise ShapeError(f"head_interaction: J {J.shape} vs P {p_lambda.shape}")
    axes = list(range(J.ndim))
    head_ax = J.ndim - 3
    # move heads last, contract with P^T, move back
    perm = axes[:head_ax] + axes[head_ax + 1 :] + [head_ax]
    inverse = tuple(np.argsort(perm))
    heads_last = T.transpose(J, perm)
    mixed = heads_last @ T.transpose(p_lambda, (1, 0))
    return T.transpose(mixed, inverse) + J


def causal_mask(n: int) -> np.ndarray:
    """True above the diagonal, i.e. where a query would see a later key."""
    return np.triu(np.ones((n, n), dtype=bool), k=1)


def attention_mask(n: int, causal: bool, pad_mask=None) -> np.ndarray | None:
    """Combine causal and key-padding exclusions into one broadcastable mask."""
    mask = causal_mask(n) if causal else None
    if pad_mask is not None:
        pad_mask = np.asarray(pad_mask, dtype=bool)
        if pad_mask.ndim == 1:
            pad_mask = pad_mask[None, :]
        keys = pad_mask[:, None, None, :]
        mask = keys if mask is None else (keys | mask)
    return mask


def attend(
    J: Tensor,
    v: Tensor,
    d_model: int,
    n_heads: int,
    causal: bool = False,
    pad_mask=None,
    *,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
    train: bool = False,
):
    """Scaled, masked softmax over logits followed by the value average.

    Returns ``(per_head_output, probs)``.
    """
    head_size = d_model / n_heads
    if head_size <= 0:
        raise ConfigError("scaling divisor must be positive")
    n = J.shape[-1]
    mask = attention_mask(n, causal, pad_mask)
    if mask is not None and mask.ndim > J.ndim:
        mask = mask.reshape(mask.shape[-J.ndim :])
    scaled = J / float(math.sqrt(head_size))
    probs = T.softmax_last_axis(scaled, mask)
    dropped = T.dropout(probs, dropout_rate, rng, train)
    return dropped @ v, probs


def encoder_layer(
    x: Tensor,
    params: AttentionLayerParams,
    kind: str = "vanilla",
    pad_mask=None,
    *,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
    train: bool = False,
    eps: float = 1e-5,
    trace: AttentionTrace | None = None,
) -> Tensor:
    """One post-LN encoder layer.

    ``kind`` selects the attention flavour: ``"vanilla"`` ignores any mixing
    matrix, ``"interaction"`` mixes logits across heads, ``"masked"`` applies
    a causal mask and must not carry a mixing matrix.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown attention kind {kind!r}; expected one of {KINDS}")
    if kind == "interaction" and params.p_lambda is None:
        raise ConfigError("interaction layer needs p_lambda")
    if kind == "masked" and params.p_lambda is not None:
        raise ConfigError("masked layer must not carry p_lambda")

    unbatched = x.ndim == 2
    if unbatched:
        x = T.reshape(x, (1,) + x.shape)
    _, _, v, J = head_logits(x, params)
    J_hat = head_interaction(J, params.p_lambda) if kind == "interaction" else J
    heads, probs = attend(
        J_hat,
        v,
        params.d_model,
        params.n_heads,
        causal=(kind == "masked"),
        pad_mask=pad_mask,
        dropout_rate=dropout_rate,
        rng=rng,
        train=train,
    )
    if trace is not None:
        trace.J = J.data
        trace.J_hat = J_hat.data
        trace.probs = probs.data

    attn_out = _merge_heads(heads) @ params.w_out + params.b_out
    y1 = T.layer_norm(x + attn_out, params.ln1_gamma, params.ln1_beta, eps)
    hidden = T.gelu(y1 @ params.ffn_w1 + params.ffn_b1)
    ffn_out = T.dropout(hidden @ params.ffn_w2 + params.ffn_b2, dropout_rate, rng, train)
    y2 = T.layer_norm(y1 + ffn_out, params.ln2_gamma, params.ln2_beta, eps)
    if unbatched:
        y2 = T.reshape(y2, y2.shape[1:])
    return y2
