"""Teacher-forced fine-tuning on a prepared pairs file.

All four task types may be mixed in one file (multitask) or a single
task may be used alone; the training loop is identical. Padded label
positions are masked out of the loss.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from pathlib import Path

import torch
from torch.optim import AdamW

from .data import TrainingPair, load_pairs
from .engine import GRAMMAR_TOKENS, GenerationEngine

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FinetuneConfig:
    pairs_path: str
    output_dir: str
    base_model: str | None = None  # None = fresh tiny model
    batch_size: int = 4
    epochs: int = 10
    learning_rate: float = 1e-3
    seed: int = 0
    max_input_length: int = 128
    max_target_length: int = 32

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class FinetuneResult:
    checkpoint_dir: str
    epoch_losses: list[float]


def _encode_batch(engine: GenerationEngine, batch: list[TrainingPair]):
    inputs = engine.tokenizer(
        [f"{p.question} {p.context}" for p in batch],
        truncation=True,
        max_length=engine.max_input_length,
        padding=True,
        return_tensors="pt",
    )
    labels = engine.tokenizer(
        [p.answer for p in batch],
        truncation=True,
        max_length=engine.max_target_length,
        padding=True,
        return_tensors="pt",
    ).input_ids
    labels[labels == engine.tokenizer.pad_token_id] = -100
    return inputs, labels


def finetune(config: FinetuneConfig) -> FinetuneResult:
    pairs = load_pairs(config.pairs_path)
    torch.manual_seed(config.seed)
    if config.base_model:
        engine = GenerationEngine.load(
            config.base_model,
            max_input_length=config.max_input_length,
            max_target_length=config.max_target_length,
        )
    else:
        engine = GenerationEngine.build_tiny(
            special_tokens=GRAMMAR_TOKENS,
            seed=config.seed,
            max_input_length=config.max_input_length,
            max_target_length=config.max_target_length,
        )

    model = engine.model
    optimizer = AdamW(model.parameters(), lr=config.learning_rate)
    order_rng = random.Random(config.seed)

    losses: list[float] = []
    model.train()
    for epoch in range(1, config.epochs + 1):
        shuffled = list(pairs)
        order_rng.shuffle(shuffled)
        epoch_loss, batches = 0.0, 0
        for start in range(0, len(shuffled), config.batch_size):
            batch = shuffled[start : start + config.batch_size]
            inputs, labels = _encode_batch(engine, batch)
            loss = model(**inputs, labels=labels).loss
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += loss.item()
            batches += 1
        losses.append(epoch_loss / batches)
        logger.info("epoch %d/%d loss %.4f", epoch, config.epochs, losses[-1])
    model.eval()

    engine.save(config.output_dir)
    return FinetuneResult(checkpoint_dir=str(Path(config.output_dir)), epoch_losses=losses)
