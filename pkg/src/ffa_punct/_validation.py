"""Input checks for the estimator front end."""

from __future__ import annotations

import numpy as np

from .data import LabeledSequence, label_id
from .exceptions import AlignmentError


def check_tokens(X) -> list[list[str]]:
    """Accept a list of token lists or of whitespace-separated strings."""
    if isinstance(X, str):
        raise TypeError("expected a collection of sequences, got a single string")
    out = []
    for i, seq in enumerate(X):
        if isinstance(seq, str):
            out.append(seq.split())
        elif isinstance(seq, LabeledSequence):
            out.append(list(seq.tokens))
        else:
            tokens = list(seq)
            if not all(isinstance(t, str) for t in tokens):
                raise TypeError(f"sequence {i} contains non-string tokens")
            out.append(tokens)
    return out


def check_sequences(X, y=None):
    """Return ``(tokens, labels)`` with labels mapped to integer ids.

    When ``y`` is None, ``X`` may be a list of :class:`LabeledSequence`.
    """
    if y is None:
        if all(isinstance(s, LabeledSequence) for s in X):
            return [list(s.tokens) for s in X], [list(s.labels) for s in X]
        return check_tokens(X), None
    tokens = check_tokens(X)
    y = list(y)
    if len(y) != len(tokens):
        raise AlignmentError(f"{len(tokens)} sequences but {len(y)} label sequences")
    labels = []
    for i, (tok, lab) in enumerate(zip(tokens, y)):
        lab = [label_id(v) for v in np.asarray(lab, dtype=object).reshape(-1)] if len(lab) else []
        if len(lab) != len(tok):
            raise AlignmentError(f"sequence {i}: {len(tok)} tokens but {len(lab)} labels")
        labels.append(lab)
    return tokens, labels
