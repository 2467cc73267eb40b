"""Model/training configuration and its flat ``key = value`` text format."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields

import numpy as np

from .exceptions import ConfigError

NUM_LABELS = 4
DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass
class ModelConfig:
    """Every architectural and training hyperparameter.

    ``vocab_size = 0`` means "take it from the vocabulary at build time".
    ``fusion_heads``, ``fusion_d_ff`` and ``d_ff`` of 0 are resolved to
    defaults derived from ``d_emb``.
    """

    vocab_size: int = 0
    d_emb: int = 32
    n_heads: int = 4
    n_isa_layers: int = 2
    n_msa_layers: int = 2
    d_ff: int = 0
    fusion_heads: int = 0
    fusion_d_ff: int = 0
    num_labels: int = NUM_LABELS
    max_len: int = 256
    dropout: float = 0.2
    rdrop_alpha: float = 1.0
    use_interaction: bool = True
    use_fusion: bool = True
    init_std: float = 0.02
    layer_norm_eps: float = 1e-5
    seed: int = 0
    dtype: str = "float32"
    learning_rate: float = 1e-3
    batch_size: int = 8
    max_epochs: int = 500
    patience: int = 8
    min_freq: int = 1

    def __post_init__(self):
        if self.d_ff == 0:
            self.d_ff = 4 * self.d_emb
        if self.fusion_heads == 0:
            self.fusion_heads = 8 if 2 * self.d_emb >= 64 else 2
        if self.fusion_d_ff == 0:
            self.fusion_d_ff = 6 * self.d_emb
        self.validate()

    @property
    def np_dtype(self):
        return DTYPES[self.dtype]

    @property
    def fusion_width(self) -> int:
        return self.d_emb * (self.n_isa_layers > 0) + self.d_emb * (self.n_msa_layers > 0)

    def validate(self):
        if self.d_emb <= 0 or self.n_heads <= 0:
            raise ConfigError("d_emb and n_heads must be positive")
        if self.d_emb % self.n_heads:
            raise ConfigError(f"d_emb={self.d_emb} is not divisible by n_heads={self.n_heads}")
        if self.n_isa_layers < 0 or self.n_msa_layers < 0:
            raise ConfigError("layer counts must be non-negative")
        if self.n_isa_layers + self.n_msa_layers == 0:
            raise ConfigError("at least one of n_isa_layers / n_msa_layers must be positive")
        if self.use_fusion and self.fusion_width % self.fusion_heads:
            raise ConfigError(f"fusion width {self.fusion_width} is not divisible by fusion_heads={self.fusion_heads}")
        if self.num_labels != NUM_LABELS:
            raise ConfigError(f"num_labels must be {NUM_LABELS}")
        if self.max_len < 1:
            raise ConfigError("max_len must be >= 1")
        if self.vocab_size < 0:
            raise ConfigError("vocab_size must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.rdrop_alpha < 0:
            raise ConfigError("rdrop_alpha must be >= 0")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}")
        if self.d_ff <= 0 or self.fusion_d_ff <= 0 or self.init_std <= 0:
            raise ConfigError("d_ff, fusion_d_ff and init_std must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1 or self.min_freq < 1:
            raise ConfigError("batch_size, max_epochs, patience and min_freq must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")

    def replace(self, **changes) -> ModelConfig:
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:12]

    @classmethod
    def from_text(cls, text: str) -> ModelConfig:
        return cls(**parse_config_text(text))

    @classmethod
    def from_file(cls, path) -> ModelConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(name: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw.strip("\"'")
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


_FIELD_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    known = {f.name: _FIELD_TYPES[f.type] for f in fields(ModelConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, value, known[key])
    return values
