"""Training loop with early stopping, evaluation, and the ablation runner."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .config import ModelConfig
from .data import build_vocab, collate, read_corpus, trim_batch, window_sequences
from .exceptions import ConfigError
from .metrics import MetricsReport, compute_metrics
from .model import FFAModel, init_model, loss, predict_ids
from .optim import OptimizerState, adam_step

logger = logging.getLogger(__name__)

STOP_REASONS = ("early_stop", "max_epochs")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    valid_f1: float


@dataclass
class TrainLog:
    config_hash: str
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_f1: float = float("-inf")
    stop_reason: str = "max_epochs"

    def to_text(self) -> str:
        lines = [f"# config_hash={self.config_hash}", "epoch\tloss\tvalid_f1"]
        lines += [f"{r.epoch}\t{r.loss:.6f}\t{r.valid_f1:.6f}" for r in self.epochs]
        lines.append(f"# best_epoch={self.best_epoch}\tbest_f1={self.best_f1:.6f}\tstop_reason={self.stop_reason}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> TrainLog:
        lines = text.strip("\n").split("\n")
        log = cls(config_hash=lines[0].split("=", 1)[1])
        for line in lines[2:-1]:
            epoch, value, f1 = line.split("\t")
            log.epochs.append(EpochRecord(int(epoch), float(value), float(f1)))
        footer = dict(item.split("=", 1) for item in lines[-1].lstrip("# ").split("\t"))
        log.best_epoch = int(footer["best_epoch"])
        log.best_f1 = float(footer["best_f1"])
        log.stop_reason = footer["stop_reason"]
        return log


class EarlyStopping:
    """Stop once ``patience`` consecutive epochs fail to beat the best score."""

    def __init__(self, patience: int = 8):
        self.patience = patience
        self.best_score = float("-inf")
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, score: float) -> bool:
        """Record a score; True means it is a new best."""
        if score > self.best_score:
            self.best_score, self.best_epoch, self.bad_epochs = score, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


def evaluate(model: FFAModel, sequences, average: str = "micro") -> MetricsReport:
    preds = predict_ids(model, [seq.tokens for seq in sequences])
    gold = np.concatenate([np.asarray(seq.labels) for seq in sequences]) if sequences else np.zeros(0, int)
    pred = np.concatenate(preds) if preds else np.zeros(0, int)
    return compute_metrics(gold, pred, average=average)


def _snapshot(model: FFAModel) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.named_parameters().items()}


def _restore(model: FFAModel, snapshot: dict[str, np.ndarray]):
    for name, p in model.named_parameters().items():
        p.data = snapshot[name].copy()


def fit(
    model: FFAModel,
    train_sequences,
    valid_sequences,
    *,
    checkpoint_path=None,
    score_fn=None,
) -> TrainLog:
    """Mini-batch Adam with per-epoch validation and early stopping.

    The model ends up holding the best-scoring parameters. ``score_fn``
    overrides the validation score (default: overall micro F1).
    """
    cfg = model.config
    if not valid_sequences:
        raise ConfigError("validation set is empty")
    windows = window_sequences(train_sequences, model.vocab, cfg.max_len)
    if not windows:
        raise ConfigError("training set is empty")
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    dropout_rng = np.random.default_rng([cfg.seed, 2])
    state = OptimizerState(learning_rate=cfg.learning_rate)
    params = model.named_parameters()
    score_fn = score_fn or (lambda m: evaluate(m, valid_sequences).f1)

    log = TrainLog(config_hash=cfg.hash())
    stopper = EarlyStopping(cfg.patience)
    best = _snapshot(model)
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(len(windows))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = trim_batch(collate([windows[i] for i in order[start : start + cfg.batch_size]]))
            value = loss(model, batch, rng=dropout_rng, train=True)
            value.backward()
            adam_step(params, state)
            losses.append(float(value.data))
        score = score_fn(model)
        log.epochs.append(EpochRecord(epoch, float(np.mean(losses)), score))
        logger.info("epoch %d loss %.4f valid_f1 %.4f", epoch, log.epochs[-1].loss, score)
        if stopper.update(epoch, score):
            best = _snapshot(model)
            if checkpoint_path is not None:
                save_checkpoint(model, checkpoint_path)
        if stopper.should_stop:
            log.stop_reason = "early_stop"
            break
    log.best_epoch, log.best_f1 = stopper.best_epoch, stopper.best_score
    _restore(model, best)
    return log


def train(config: ModelConfig, train_path, valid_path, out_dir, seed: int | None = None):
    """Train from corpus files; writes ``model.ffa`` and ``train_log.tsv`` into ``out_dir``.

    Returns ``(model, log, checkpoint_path)``.
    """
    if seed is not None:
        config = config.replace(seed=seed)
    train_seqs = read_corpus(train_path)
    valid_seqs = read_corpus(valid_path)
    if not valid_seqs:
        raise ConfigError("validation set is empty")
    vocab = build_vocab(train_seqs, config.min_freq)
    model = init_model(config.replace(vocab_size=0), vocab)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / "model.ffa"
    log = fit(model, train_seqs, valid_seqs, checkpoint_path=checkpoint_path)
    (out_dir / "train_log.tsv").write_text(log.to_text(), encoding="utf-8")
    return model, log, checkpoint_path


# ---------------------------------------------------------------- ablation

ABLATION_VARIANTS = (
    ("- Interaction", {"use_interaction": False}),
    ("- Interaction & fusion", {"use_interaction": False, "use_fusion": False}),
    ("- Interaction & fusion & R-Drop", {"use_interaction": False, "use_fusion": False, "rdrop_alpha": 0.0}),
    ("w/o ISA", {"n_isa_layers": 0}),
    ("w/o MSA", {"n_msa_layers": 0}),
)
FULL_MODEL = "FFA"


@dataclass
class AblationRow:
    variant: str
    config: ModelConfig
    report: MetricsReport
    log: TrainLog
    parameter_names: list[str]


def ablation_configs(config: ModelConfig) -> list[tuple[str, ModelConfig]]:
    """The full model followed by each ablated variant, all sharing one seed."""
    out = [(FULL_MODEL, config)]
    out += [(name, config.replace(**changes)) for name, changes in ABLATION_VARIANTS]
    return out


def run_ablation(config: ModelConfig, train_sequences, valid_sequences, test_sequences,
                 average: str = "micro") -> list[AblationRow]:
    vocab = build_vocab(train_sequences, config.min_freq)
    rows = []
    for name, variant in ablation_configs(config.replace(vocab_size=0)):
        model = init_model(variant, vocab)
        log = fit(model, train_sequences, valid_sequences)
        report = evaluate(model, test_sequences, average=average)
        rows.append(AblationRow(name, model.config, report, log, list(model.named_parameters())))
        logger.info("%s: F1 %.4f", name, report.f1)
    return rows


def format_ablation_table(rows: list[AblationRow]) -> str:
    average = rows[0].report.average if rows else "micro"
    lines = [f"# overall aggregation: {average} over COMMA/PERIOD/QUESTION (O excluded)",
             "variant\tP\tR\tF1"]
    for row in rows:
        p, r, f = row.report.overall
        lines.append(f"{row.variant}\t{100 * p:.1f}\t{100 * r:.1f}\t{100 * f:.1f}")
    scores = {row.variant: row.report.f1 for row in rows}
    if FULL_MODEL in scores:
        for single in ("w/o ISA", "w/o MSA"):
            if single in scores:
                verdict = "yes" if scores[FULL_MODEL] >= scores[single] else "no"
                lines.append(f"# full FFA >= {single}: {verdict} (reported, not gated)")
    return "\n".join(lines)
