"""Hierarchical encoder + linear-chain CRF tagger with cross-view training."""

from altag.tagger.config import TaggerConfig
from altag.tagger.crf import (
    constrained_log_likelihood,
    crf_log_partition,
    crf_marginals,
    sequence_log_score,
    viterbi,
)
from altag.tagger.model import Tagger, load_checkpoint, save_checkpoint
from altag.tagger.training import TrainResult, train

__all__ = [
    "TaggerConfig",
    "Tagger",
    "TrainResult",
    "constrained_log_likelihood",
    "crf_log_partition",
    "crf_marginals",
    "load_checkpoint",
    "save_checkpoint",
    "sequence_log_score",
    "train",
    "viterbi",
]
