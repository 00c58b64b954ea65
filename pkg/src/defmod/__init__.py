"""Sememe-conditioned definition generation on a minimal autodiff core."""

from .config import ModelConfig
from .data import Entry, Vocab
from .models import build_model
from .training import TrainedModel, train

__all__ = ["ModelConfig", "Entry", "Vocab", "build_model", "TrainedModel", "train"]
__version__ = "0.1.0"
