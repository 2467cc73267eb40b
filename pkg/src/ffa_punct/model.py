"""The two-stream tagger: interaction stack and masked stack over one shared
embedding, a fusion encoder layer over their concatenation, and a linear
classifier over the four punctuation labels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .attention import AttentionLayerParams, AttentionTrace, encoder_layer, init_attention_layer
from .config import ModelConfig
from .data import LABELS, Batch, Vocabulary, stitch_predictions, window_sequences
from .exceptions import ConfigError, EmptyBatchError, SequenceLengthError
from .tensor import IGNORE_INDEX, Tensor


def sinusoidal_positions(max_len: int, d: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(max_len)[:, None]
    rates = np.exp(-math.log(10000.0) * (np.arange(0, d, 2) / d))
    table = np.zeros((max_len, d))
    table[:, 0::2] = np.sin(pos * rates)
    table[:, 1::2] = np.cos(pos * rates[: d // 2])
    return table.astype(dtype)


@dataclass
class FFAModel:
    config: ModelConfig
    token_embedding: Tensor
    positional_encoding: np.ndarray
    isa_layers: list[AttentionLayerParams]
    msa_layers: list[AttentionLayerParams]
    fusion_layer: AttentionLayerParams | None
    classifier_w: Tensor
    classifier_b: Tensor
    vocab: Vocabulary | None = None

    @property
    def isa_kind(self) -> str:
        return "interaction" if self.config.use_interaction else "vanilla"

    def named_parameters(self) -> dict[str, Tensor]:
        params = {"token_embedding": self.token_embedding}
        for i, layer in enumerate(self.isa_layers):
            params.update(layer.named_parameters(f"isa.{i}."))
        for i, layer in enumerate(self.msa_layers):
            params.update(layer.named_parameters(f"msa.{i}."))
        if self.fusion_layer is not None:
            params.update(self.fusion_layer.named_parameters("fusion."))
        params["classifier.w"] = self.classifier_w
        params["classifier.b"] = self.classifier_b
        return params

    def zero_grad(self):
        for p in self.named_parameters().values():
            p.grad = None


@dataclass
class ForwardTrace:
    """Intermediate values captured during one forward pass (numpy arrays)."""

    isa: list[AttentionTrace] = field(default_factory=list)
    msa: list[AttentionTrace] = field(default_factory=list)
    fusion: AttentionTrace | None = None
    isa_output: np.ndarray | None = None
    msa_output: np.ndarray | None = None
    fused: np.ndarray | None = None


def init_model(config: ModelConfig, vocab: Vocabulary | None = None) -> FFAModel:
    """Seeded Gaussian(0, init_std) weights, zero biases, unit LN gains."""
    if vocab is not None:
        if config.vocab_size == 0:
            config = config.replace(vocab_size=len(vocab))
        elif config.vocab_size != len(vocab):
            raise ConfigError(f"config vocab_size={config.vocab_size} but vocabulary has {len(vocab)} entries")
    if config.vocab_size < 1:
        raise ConfigError("vocab_size must be positive (or supply a vocabulary)")
    config.validate()

    rng = np.random.default_rng(config.seed)
    dtype = config.np_dtype
    d = config.d_emb
    std = config.init_std

    def normal(*shape):
        return Tensor(rng.normal(0.0, std, size=shape).astype(dtype), requires_grad=True)

    embedding = normal(config.vocab_size, d)
    isa = [
        init_attention_layer(d, config.n_heads, config.d_ff, rng, interaction=config.use_interaction,
                             init_std=std, dtype=dtype)
        for _ in range(config.n_isa_layers)
    ]
    msa = [
        init_attention_layer(d, config.n_heads, config.d_ff, rng, init_std=std, dtype=dtype)
        for _ in range(config.n_msa_layers)
    ]
    width = config.fusion_width
    fusion = None
    if config.use_fusion:
        fusion = init_attention_layer(width, config.fusion_heads, config.fusion_d_ff, rng, init_std=std, dtype=dtype)
    return FFAModel(
        config=config,
        token_embedding=embedding,
        positional_encoding=sinusoidal_positions(config.max_len, d, dtype),
        isa_layers=isa,
        msa_layers=msa,
        fusion_layer=fusion,
        classifier_w=normal(width, config.num_labels),
        classifier_b=Tensor(np.zeros(config.num_labels, dtype=dtype), requires_grad=True),
        vocab=vocab,
    )


def _stack(x, layers, kind, pad_mask, cfg, rng, train, traces):
    for layer in layers:
        tr = AttentionTrace() if traces is not None else None
        x = encoder_layer(x, layer, kind, pad_mask, dropout_rate=cfg.dropout, rng=rng, train=train,
                          eps=cfg.layer_norm_eps, trace=tr)
        if traces is not None:
            traces.append(tr)
    return x


def forward(
    model: FFAModel,
    token_ids,
    pad_mask=None,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
    trace: ForwardTrace | None = None,
) -> Tensor:
    """Logits of shape ``(B, n, K)`` for integer ``token_ids`` of shape ``(B, n)``."""
    cfg = model.config
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
        if pad_mask is not None:
            pad_mask = np.asarray(pad_mask)[None, :]
    n = ids.shape[1]
    if n > cfg.max_len:
        raise SequenceLengthError(f"sequence length {n} exceeds max_len={cfg.max_len}")
    if train and cfg.dropout > 0 and rng is None:
        raise ValueError("train mode with dropout needs an rng")

    emb = T.embedding(model.token_embedding, ids) + Tensor(model.positional_encoding[:n])
    streams = []
    if model.isa_layers:
        c_i = _stack(emb, model.isa_layers, model.isa_kind, pad_mask, cfg, rng, train,
                     trace.isa if trace is not None else None)
        streams.append(c_i)
    if model.msa_layers:
        c_m = _stack(emb, model.msa_layers, "masked", pad_mask, cfg, rng, train,
                     trace.msa if trace is not None else None)
        streams.append(c_m)
    fused = T.concat(streams, axis=-1)
    if trace is not None:
        trace.isa_output = c_i.data if model.isa_layers else None
        trace.msa_output = c_m.data if model.msa_layers else None
    if model.fusion_layer is not None:
        tr = AttentionTrace() if trace is not None else None
        fused = encoder_layer(fused, model.fusion_layer, "vanilla", pad_mask, dropout_rate=cfg.dropout,
                              rng=rng, train=train, eps=cfg.layer_norm_eps, trace=tr)
        if trace is not None:
            trace.fusion = tr
    if trace is not None:
        trace.fused = fused.data
    return fused @ model.classifier_w + model.classifier_b


def _symmetric_kl(logits_p: Tensor, logits_q: Tensor, labels: np.ndarray) -> Tensor:
    valid = (labels != IGNORE_INDEX).astype(logits_p.dtype)
    count = float(valid.sum())
    if count == 0:
        raise EmptyBatchError("every target position is ignored")
    lp = T.log_softmax_last_axis(logits_p)
    lq = T.log_softmax_last_axis(logits_q)
    diff = lp - lq
    per_token = T.tsum((T.exp(lp) - T.exp(lq)) * diff, axis=-1)  # KL(p||q) + KL(q||p)
    return T.tsum(per_token * Tensor(valid)) * (0.5 / count)


def loss(
    model: FFAModel,
    batch: Batch,
    rdrop_alpha: float | None = None,
    *,
    rng: np.random.Generator | None = None,
    train: bool = True,
) -> Tensor:
    """Token-level cross-entropy, plus the symmetric-KL consistency term when
    ``rdrop_alpha > 0`` and training."""
    alpha = model.config.rdrop_alpha if rdrop_alpha is None else rdrop_alpha
    logits_p = forward(model, batch.token_ids, batch.pad_mask, train=train, rng=rng)
    ce_p = T.cross_entropy(logits_p, batch.labels)
    if alpha == 0 or not train:
        return ce_p
    logits_q = forward(model, batch.token_ids, batch.pad_mask, train=train, rng=rng)
    ce_q = T.cross_entropy(logits_q, batch.labels)
    return (ce_p + ce_q) * 0.5 + _symmetric_kl(logits_p, logits_q, batch.labels) * float(alpha)


def predict_ids(model: FFAModel, token_lists, batch_size: int = 32) -> list[np.ndarray]:
    """Argmax label ids for each token list; long inputs are windowed and stitched."""
    if model.vocab is None:
        raise ConfigError("model has no vocabulary attached")
    max_len = model.config.max_len
    stride = max(1, max_len // 2)
    token_lists = [list(t) for t in token_lists]
    windows = window_sequences(token_lists, model.vocab, max_len, stride)
    preds = []
    with T.no_grad():
        for start in range(0, len(windows), batch_size):
            chunk = windows[start : start + batch_size]
            ids = np.stack([w.token_ids for w in chunk])
            pad = np.stack([w.pad_mask for w in chunk])
            width = max(w.length for w in chunk)
            logits = forward(model, ids[:, :width], pad[:, :width]).data
            preds.extend(np.argmax(logits, axis=-1))  # first maximum wins ties
    return stitch_predictions(windows, preds, [len(t) for t in token_lists], max_len, stride)


def predict_tags(model: FFAModel, tokens) -> list[str]:
    tokens = list(tokens)
    if not tokens:
        return []
    return [LABELS[i] for i in predict_ids(model, [tokens])[0]]
