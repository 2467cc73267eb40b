"""Corpus ingestion, vocabulary, windowing, and punctuation insertion.

Corpus files hold one ``token<TAB>LABEL`` pair per line with a blank line
between sequences. Labels are case-insensitive members of
``O, COMMA, PERIOD, QUESTION``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import AlignmentError, CorpusParseError, EmptyCorpusError
from .tensor import IGNORE_INDEX

LABELS = ("O", "COMMA", "PERIOD", "QUESTION")
LABEL_TO_ID = {name: i for i, name in enumerate(LABELS)}
MARKS = {1: ",", 2: ".", 3: "?"}
MARK_TO_ID = {mark: i for i, mark in MARKS.items()}

# Label shares reported for the English IWSLT2011 training split.
REFERENCE_TRAIN_DISTRIBUTION = {"O": 0.857, "COMMA": 0.0753, "PERIOD": 0.063, "QUESTION": 0.0047}


def label_id(label) -> int:
    if isinstance(label, (int, np.integer)):
        if not 0 <= label < len(LABELS):
            raise ValueError(f"label id {label} outside [0, {len(LABELS)})")
        return int(label)
    try:
        return LABEL_TO_ID[str(label).upper()]
    except KeyError:
        raise ValueError(f"unknown label {label!r}; expected one of {LABELS}") from None


@dataclass
class LabeledSequence:
    tokens: list[str]
    labels: list[int]

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise AlignmentError(f"{len(self.tokens)} tokens but {len(self.labels)} labels")
        self.labels = [label_id(lab) for lab in self.labels]

    def __len__(self):
        return len(self.tokens)


def read_corpus(path) -> list[LabeledSequence]:
    sequences = []
    tokens, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                if tokens:
                    sequences.append(LabeledSequence(tokens, labels))
                    tokens, labels = [], []
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip():
                raise CorpusParseError(f"expected 'token<TAB>LABEL', got {line!r}", line=lineno, path=path)
            token, label = parts[0].strip(), parts[1].strip().upper()
            if label not in LABEL_TO_ID:
                raise CorpusParseError(f"unknown label {parts[1]!r}", line=lineno, path=path)
            tokens.append(token)
            labels.append(LABEL_TO_ID[label])
    if tokens:
        sequences.append(LabeledSequence(tokens, labels))
    return sequences


def write_corpus(path, sequences) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, seq in enumerate(sequences):
            if i:
                fh.write("\n")
            for tok, lab in zip(seq.tokens, seq.labels):
                fh.write(f"{tok}\t{LABELS[lab]}\n")


class Vocabulary:
    """Lowercased word-to-id map. Id 0 is padding and id 1 is unknown."""

    PAD = 0
    UNK = 1
    RESERVED = ("<pad>", "<unk>")

    def __init__(self, tokens=(), min_freq: int = 1):
        self.min_freq = min_freq
        self.itos = list(self.RESERVED) + [t for t in tokens if t not in self.RESERVED]
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token.lower() in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def lookup(self, token: str) -> int:
        return self.stoi.get(token.lower(), self.UNK)

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.lookup(t) for t in tokens], dtype=np.int64)


def build_vocab(sequences, min_freq: int = 1) -> Vocabulary:
    """Ids in descending frequency order, ties broken lexicographically."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts = Counter(tok.lower() for seq in sequences for tok in _tokens_of(seq))
    for reserved in Vocabulary.RESERVED:
        counts.pop(reserved, None)
    kept = sorted((tok for tok, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    return Vocabulary(kept, min_freq=min_freq)


def _tokens_of(seq):
    return seq.tokens if isinstance(seq, LabeledSequence) else seq


@dataclass
class Window:
    """A fixed-length slice of one sequence, right-padded if the sequence is short."""

    token_ids: np.ndarray
    labels: np.ndarray
    pad_mask: np.ndarray
    seq_id: int
    start: int
    length: int


def window_offsets(length: int, max_len: int, stride: int) -> list[int]:
    """Start offsets stepping by ``stride``; the last window is right-aligned."""
    if not 1 <= stride <= max_len:
        raise ValueError(f"stride must lie in [1, {max_len}], got {stride}")
    if length <= max_len:
        return [0]
    offsets = list(range(0, length - max_len, stride))
    offsets.append(length - max_len)
    return offsets


def stitch_plan(length: int, max_len: int, stride: int) -> list[tuple[int, int]]:
    """For each position, the (window index, offset in window) it is read from.

    A position is taken from the window in which it sits closest to the
    center; ties go to the earlier window.
    """
    offsets = window_offsets(length, max_len, stride)
    span = min(length, max_len)
    centers = np.array(offsets) + (span - 1) / 2.0
    plan = []
    for pos in range(length):
        best = None
        for w, start in enumerate(offsets):
            if start <= pos < start + span:
                dist = abs(pos - centers[w])
                if best is None or dist < best[0]:
                    best = (dist, w)
        plan.append((best[1], pos - offsets[best[1]]))
    return plan


def window_sequences(sequences, vocab: Vocabulary, max_len: int, stride: int | None = None) -> list[Window]:
    """Cut sequences into windows of ``max_len`` tokens.

    Training uses the default ``stride = max_len``; prediction passes
    ``max_len // 2`` and stitches with :func:`stitch_predictions`. Unlabeled
    inputs (plain token lists) get ``IGNORE_INDEX`` everywhere.
    """
    stride = max_len if stride is None else stride
    windows = []
    for seq_id, seq in enumerate(sequences):
        tokens = _tokens_of(seq)
        labels = seq.labels if isinstance(seq, LabeledSequence) else [IGNORE_INDEX] * len(tokens)
        ids = vocab.encode(tokens)
        if len(tokens) == 0:
            continue
        for start in window_offsets(len(tokens), max_len, stride):
            span = min(max_len, len(tokens) - start)
            tok = np.zeros(max_len, dtype=np.int64)
            lab = np.full(max_len, IGNORE_INDEX, dtype=np.int64)
            tok[:span] = ids[start : start + span]
            lab[:span] = labels[start : start + span]
            pad = np.ones(max_len, dtype=bool)
            pad[:span] = False
            windows.append(Window(tok, lab, pad, seq_id, start, span))
    return windows


def stitch_predictions(windows, window_predictions, lengths, max_len: int, stride: int) -> list[np.ndarray]:
    """Reassemble per-window predictions into one array per sequence."""
    by_seq: dict[int, list[int]] = {}
    for i, w in enumerate(windows):
        by_seq.setdefault(w.seq_id, []).append(i)
    out = []
    for seq_id, length in enumerate(lengths):
        result = np.zeros(length, dtype=np.int64)
        if length:
            members = by_seq[seq_id]
            for pos, (w, offset) in enumerate(stitch_plan(length, max_len, stride)):
                result[pos] = window_predictions[members[w]][offset]
        out.append(result)
    return out


@dataclass
class Batch:
    token_ids: np.ndarray
    labels: np.ndarray
    pad_mask: np.ndarray


def collate(windows) -> Batch:
    return Batch(
        token_ids=np.stack([w.token_ids for w in windows]),
        labels=np.stack([w.labels for w in windows]),
        pad_mask=np.stack([w.pad_mask for w in windows]),
    )


def trim_batch(batch: Batch) -> Batch:
    """Drop trailing columns that are padding in every row."""
    real = ~batch.pad_mask
    width = int(real.any(axis=0).nonzero()[0].max()) + 1 if real.any() else 1
    return Batch(batch.token_ids[:, :width], batch.labels[:, :width], batch.pad_mask[:, :width])


def insert_punctuation(tokens, labels) -> str:
    """Join tokens with spaces, attaching each predicted mark to its token."""
    if len(tokens) != len(labels):
        raise AlignmentError(f"{len(tokens)} tokens but {len(labels)} labels")
    return " ".join(tok + MARKS.get(label_id(lab), "") for tok, lab in zip(tokens, labels))


def strip_punctuation(text: str) -> tuple[list[str], list[int]]:
    """Inverse of :func:`insert_punctuation` for tokens that do not end in a mark."""
    tokens, labels = [], []
    for piece in text.split():
        if len(piece) > 1 and piece[-1] in MARK_TO_ID:
            tokens.append(piece[:-1])
            labels.append(MARK_TO_ID[piece[-1]])
        else:
            tokens.append(piece)
            labels.append(0)
    return tokens, labels


def class_distribution(sequences) -> dict[str, float]:
    counts = np.zeros(len(LABELS))
    for seq in sequences:
        counts += np.bincount(np.asarray(seq.labels, dtype=np.int64), minlength=len(LABELS))
    total = counts.sum()
    if total == 0:
        raise EmptyCorpusError("class distribution of an empty corpus")
    return {name: float(c / total) for name, c in zip(LABELS, counts)}


# ---------------------------------------------------------------- synthetic corpus

_SUBJECTS = ["i", "you", "we", "they", "she", "he", "people", "students", "doctors", "children"]
_VERBS = ["like", "need", "see", "want", "build", "read", "find", "love", "make", "use"]
_OBJECTS = ["books", "music", "water", "cars", "houses", "ideas", "food", "games", "pictures", "tools", "time", "money"]
_ADVERBS = ["today", "often", "again", "now", "here"]
_CONJUNCTIONS = ["and", "but", "so", "because"]
_WH_WORDS = ["what", "why", "how", "where", "when"]
_AUX_WORDS = ["do", "can", "will"]


def _clause(rng) -> list[str]:
    words = [rng.choice(_SUBJECTS), rng.choice(_VERBS), rng.choice(_OBJECTS)]
    if rng.random() < 0.3:
        words.append(rng.choice(_ADVERBS))
    return words


def _sentence(rng) -> tuple[list[str], list[int]]:
    question = rng.random() < 0.3
    words: list[str] = []
    labels: list[int] = []
    if question:
        if rng.random() < 0.5:
            words.append(rng.choice(_WH_WORDS))
        words.append(rng.choice(_AUX_WORDS))
    words += _clause(rng)
    labels += [0] * len(words)
    if rng.random() < 0.4:
        labels[-1] = LABEL_TO_ID["COMMA"]
        extra = [rng.choice(_CONJUNCTIONS)] + _clause(rng)
        words += extra
        labels += [0] * len(extra)
    labels[-1] = LABEL_TO_ID["QUESTION"] if question else LABEL_TO_ID["PERIOD"]
    return words, labels


def generate_corpus(seed: int, n_sentences: int, max_sentences_per_sequence: int = 4) -> list[LabeledSequence]:
    """Deterministic toy corpus.

    Sentences end in PERIOD, or QUESTION when they open with an
    interrogative word; the word before a conjunction carries COMMA.
    Sentences are grouped into sequences of 1 to
    ``max_sentences_per_sequence`` sentences.
    """
    rng = np.random.default_rng(seed)
    sentences = [_sentence(rng) for _ in range(n_sentences)]
    out = []
    i = 0
    while i < len(sentences):
        k = int(rng.integers(1, max_sentences_per_sequence + 1))
        tokens, labels = [], []
        for words, labs in sentences[i : i + k]:
            tokens += [str(w) for w in words]
            labels += labs
        out.append(LabeledSequence(tokens, labels))
        i += k
    return out


def write_synthetic_corpus(path, seed: int, n_sentences: int) -> list[LabeledSequence]:
    sequences = generate_corpus(seed, n_sentences)
    write_corpus(Path(path), sequences)
    return sequences
