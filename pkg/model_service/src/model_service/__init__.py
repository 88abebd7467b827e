"""Generation service wrapping a fine-tunable sequence-to-sequence model."""
from .app import create_app
from .data import PairsFileError, TrainingPair, load_pairs
from .engine import GRAMMAR_TOKENS, GenerationEngine, ServiceConfig
from .training import FinetuneConfig, FinetuneResult, finetune

__all__ = [
    "GRAMMAR_TOKENS",
    "FinetuneConfig",
    "FinetuneResult",
    "GenerationEngine",
    "PairsFileError",
    "ServiceConfig",
    "TrainingPair",
    "create_app",
    "finetune",
    "load_pairs",
]
