"""scikit-learn style front end: ``fit`` on token/label lists, ``predict`` tags."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_sequences, check_tokens
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig
from .data import LABELS, LabeledSequence, build_vocab, insert_punctuation
from .metrics import compute_metrics
from .model import init_model, predict_ids
from .training import fit


class PunctuationTagger(ClassifierMixin, BaseEstimator):
    """Two-stream attention tagger predicting O / COMMA / PERIOD / QUESTION per word.

    ``X`` is a list of token lists (or whitespace-separated strings) and
    ``y`` a list of aligned label lists (names or ids).
    """

    def __init__(
        self,
        d_emb=32,
        n_heads=4,
        n_isa_layers=2,
        n_msa_layers=2,
        d_ff=0,
        fusion_heads=0,
        fusion_d_ff=0,
        max_len=256,
        dropout=0.2,
        rdrop_alpha=1.0,
        use_interaction=True,
        use_fusion=True,
        init_std=0.02,
        learning_rate=1e-3,
        batch_size=8,
        max_epochs=500,
        patience=8,
        min_freq=1,
        dtype="float32",
        validation_fraction=0.1,
        average="micro",
        random_state=0,
    ):
        self.d_emb = d_emb
        self.n_heads = n_heads
        self.n_isa_layers = n_isa_layers
        self.n_msa_layers = n_msa_layers
        self.d_ff = d_ff
        self.fusion_heads = fusion_heads
        self.fusion_d_ff = fusion_d_ff
        self.max_len = max_len
        self.dropout = dropout
        self.rdrop_alpha = rdrop_alpha
        self.use_interaction = use_interaction
        self.use_fusion = use_fusion
        self.init_std = init_std
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.min_freq = min_freq
        self.dtype = dtype
        self.validation_fraction = validation_fraction
        self.average = average
        self.random_state = random_state

    def _make_config(self) -> ModelConfig:
        params = self.get_params()
        seed = params.pop("random_state")
        for key in ("validation_fraction", "average"):
            params.pop(key)
        return ModelConfig(seed=int(seed or 0), **params)

    def fit(self, X, y=None, X_valid=None, y_valid=None):
        tokens, labels = check_sequences(X, y)
        if labels is None:
            raise ValueError("fit needs labels: pass y or LabeledSequence inputs")
        train = [LabeledSequence(t, lab) for t, lab in zip(tokens, labels) if t]
        if X_valid is not None:
            vt, vl = check_sequences(X_valid, y_valid)
            valid = [LabeledSequence(t, lab) for t, lab in zip(vt, vl) if t]
        elif self.validation_fraction and len(train) > 1:
            rng = np.random.default_rng(self.random_state)
            order = rng.permutation(len(train))
            n_valid = max(1, int(round(self.validation_fraction * len(train))))
            valid = [train[i] for i in order[:n_valid]]
            train = [train[i] for i in order[n_valid:]]
        else:
            valid = train

        config = self._make_config()
        self.vocab_ = build_vocab(train, config.min_freq)
        self.model_ = init_model(config, self.vocab_)
        self.train_log_ = fit(self.model_, train, valid)
        self.classes_ = np.array(LABELS)
        return self

    def predict(self, X) -> list[list[str]]:
        check_is_fitted(self, "model_")
        tokens = check_tokens(X)
        return [[LABELS[i] for i in ids] for ids in predict_ids(self.model_, tokens)]

    def predict_text(self, X) -> list[str]:
        """Punctuated strings, one per input sequence."""
        tokens = check_tokens(X)
        return [insert_punctuation(t, tags) for t, tags in zip(tokens, self.predict(tokens))]

    def score(self, X, y=None, sample_weight=None) -> float:
        """Overall F1 over the three marks."""
        tokens, labels = check_sequences(X, y)
        pred = self.predict(tokens)
        gold = [lab for seq in labels for lab in seq]
        flat = [LABELS.index(p) for seq in pred for p in seq]
        return compute_metrics(gold, flat, average=self.average).f1

    def save(self, path):
        check_is_fitted(self, "model_")
        save_checkpoint(self.model_, path)

    @classmethod
    def load(cls, path) -> PunctuationTagger:
        model = load_checkpoint(path)
        cfg = model.config
        est = cls(**{k: getattr(cfg, k) for k in cls._get_param_names() if hasattr(cfg, k)})
        est.random_state = cfg.seed
        est.model_ = model
        est.vocab_ = model.vocab
        est.classes_ = np.array(LABELS)
        return est
