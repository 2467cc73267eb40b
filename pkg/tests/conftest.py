import numpy as np
import pytest

from ffa_punct.config import ModelConfig
from ffa_punct.data import build_vocab, generate_corpus
from ffa_punct.model import init_model

# filled by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def micro_config():
    return ModelConfig(vocab_size=20, d_emb=8, n_heads=2, n_isa_layers=1, n_msa_layers=1, max_len=16,
                       dropout=0.0, rdrop_alpha=0.0, seed=3)


@pytest.fixture
def micro_model(micro_config):
    return init_model(micro_config)


@pytest.fixture(scope="session")
def synthetic_corpus():
    return generate_corpus(seed=0, n_sentences=200)


@pytest.fixture(scope="session")
def synthetic_vocab(synthetic_corpus):
    return build_vocab(synthetic_corpus)
