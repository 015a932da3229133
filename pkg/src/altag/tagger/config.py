"""Tagger hyperparameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass
class TaggerConfig:
    """Model and optimization hyperparameters.

    Defaults follow the reference setup: character Bi-LSTM hidden size 25,
    modeling layer 100, token-level Bi-LSTM 200, 30-dim character embeddings,
    0.3 dropout on character embeddings, 0.5 on all Bi-LSTM outputs, SGD with
    learning rate 0.015.
    """

    char_embed_dim: int = 30
    char_hidden: int = 25
    modeling_hidden: int = 100
    token_hidden: int = 200
    dropout_char: float = 0.3
    dropout_outputs: float = 0.5
    sgd_lr: float = 0.015
    seed: int = 0
    use_cvt: bool = True
    decoder: str = "crf"  # "crf" or "softmax"

    # training-loop knobs ("till convergence" = early stopping on dev accuracy)
    max_epochs: int = 50
    patience: int = 5
    batch_size: int = 16
    grad_clip: float = 5.0
    cvt_weight: float = 1.0
    sgd_momentum: float = 0.0

    def __post_init__(self):
        for name in ("char_embed_dim", "char_hidden", "modeling_hidden",
                     "token_hidden", "max_epochs", "patience", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("dropout_char", "dropout_outputs"):
            value = getattr(self, name)
            if not (0.0 <= value < 1.0):
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.decoder not in ("crf", "softmax"):
            raise ValueError(f"decoder must be 'crf' or 'softmax', got {self.decoder!r}")
        if self.sgd_lr <= 0:
            raise ValueError("sgd_lr must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TaggerConfig":
        return cls(**data)
