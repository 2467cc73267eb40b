import numpy as np
import pytest

from ffa_punct import checkpoint
from ffa_punct.config import ModelConfig
from ffa_punct.data import build_vocab, generate_corpus, write_corpus
from ffa_punct.exceptions import ConfigError
from ffa_punct.model import init_model
from ffa_punct.training import (
    ABLATION_VARIANTS,
    EarlyStopping,
    TrainLog,
    ablation_configs,
    evaluate,
    fit,
    format_ablation_table,
    run_ablation,
    train,
)

TINY = ModelConfig(d_emb=8, n_heads=2, n_isa_layers=1, n_msa_layers=1, max_len=32, dropout=0.1,
                   learning_rate=3e-3, batch_size=8, max_epochs=6, patience=3, seed=0)


@pytest.fixture(scope="module")
def tiny_corpus():
    return generate_corpus(seed=1, n_sentences=30)


def scripted(scores):
    it = iter(scores)
    return lambda model: next(it)


class TestEarlyStopping:
    def test_patience_example(self, tiny_corpus):
        scores = [0.5, 0.6] + [0.6] * 9
        model = init_model(TINY.replace(patience=8, max_epochs=50), build_vocab(tiny_corpus))
        log = fit(model, tiny_corpus, tiny_corpus, score_fn=scripted(scores))
        assert log.best_epoch == 2
        assert len(log.epochs) == 10
        assert log.stop_reason == "early_stop"

    def test_equal_score_is_not_improvement(self):
        stopper = EarlyStopping(patience=2)
        assert stopper.update(1, 0.7)
        assert not stopper.update(2, 0.7)
        assert not stopper.update(3, 0.7)
        assert stopper.should_stop and stopper.best_epoch == 1

    def test_reaches_max_epochs(self, tiny_corpus):
        model = init_model(TINY, build_vocab(tiny_corpus))
        log = fit(model, tiny_corpus, tiny_corpus, score_fn=scripted([0.1 * i for i in range(1, 7)]))
        assert log.stop_reason == "max_epochs" and log.best_epoch == 6


class TestFit:
    def test_deterministic(self, tiny_corpus):
        vocab = build_vocab(tiny_corpus)
        logs = [fit(init_model(TINY, vocab), tiny_corpus, tiny_corpus) for _ in range(2)]
        assert logs[0].to_text() == logs[1].to_text()

    def test_best_parameters_restored(self, tiny_corpus, tmp_path):
        model = init_model(TINY, build_vocab(tiny_corpus))
        path = tmp_path / "best.ffa"
        log = fit(model, tiny_corpus, tiny_corpus, checkpoint_path=path)
        assert log.best_f1 == max(r.valid_f1 for r in log.epochs)
        assert evaluate(model, tiny_corpus).f1 == log.best_f1
        assert evaluate(checkpoint.load_checkpoint(path), tiny_corpus).f1 == log.best_f1

    def test_empty_validation(self, tiny_corpus):
        with pytest.raises(ConfigError):
            fit(init_model(TINY, build_vocab(tiny_corpus)), tiny_corpus, [])

    def test_train_writes_artifacts(self, tiny_corpus, tmp_path):
        write_corpus(tmp_path / "train.tsv", tiny_corpus)
        model, log, ckpt = train(TINY, tmp_path / "train.tsv", tmp_path / "train.tsv", tmp_path / "run")
        assert ckpt.read_bytes()[:4] == b"FFA1"
        saved = TrainLog.from_text((tmp_path / "run" / "train_log.tsv").read_text())
        assert saved.best_epoch == log.best_epoch and saved.config_hash == model.config.hash()


class TestTrainLog:
    def test_text_round_trip(self):
        log = TrainLog("abc123", best_epoch=2, best_f1=0.75, stop_reason="early_stop")
        from ffa_punct.training import EpochRecord

        log.epochs = [EpochRecord(1, 1.25, 0.5), EpochRecord(2, 0.875, 0.75)]
        assert TrainLog.from_text(log.to_text()) == log

    def test_header_layout(self):
        lines = TrainLog("h").to_text().splitlines()
        assert lines[0] == "# config_hash=h" and lines[1] == "epoch\tloss\tvalid_f1"


class TestAblation:
    def test_configs(self):
        names = [name for name, _ in ablation_configs(TINY)]
        assert names == ["FFA"] + [name for name, _ in ABLATION_VARIANTS]
        cfgs = dict(ablation_configs(TINY))
        assert not cfgs["- Interaction"].use_interaction and cfgs["- Interaction"].use_fusion
        assert cfgs["- Interaction & fusion & R-Drop"].rdrop_alpha == 0.0
        assert cfgs["w/o ISA"].n_isa_layers == 0 and cfgs["w/o MSA"].n_msa_layers == 0

    def test_run_and_format(self, tiny_corpus):
        rows = run_ablation(TINY.replace(max_epochs=2), tiny_corpus, tiny_corpus, tiny_corpus)
        assert len(rows) == 6
        by_name = {row.variant: row for row in rows}
        assert any("p_lambda" in n for n in by_name["FFA"].parameter_names)
        assert not any("p_lambda" in n for n in by_name["- Interaction"].parameter_names)
        assert not any(n.startswith("fusion.") for n in by_name["- Interaction & fusion"].parameter_names)
        table = format_ablation_table(rows)
        assert "reported, not gated" in table
        assert len([line for line in table.splitlines() if not line.startswith("#")]) == 7
