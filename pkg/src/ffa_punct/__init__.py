"""Two-stream attention tagger for punctuation restoration."""

from .config import ModelConfig
from .data import LABELS, LabeledSequence, Vocabulary
from .model import FFAModel, forward, init_model, loss, predict_tags
from .tensor import Tensor

__version__ = "0.1.0"
