"""Sequence-to-sequence generation engine.

Wraps a byte-level encoder-decoder model plus its tokenizer. The answer
grammar tokens are registered as atomic added tokens before any training
or serving, so they survive tokenize/detokenize round trips unchanged.

A fresh engine is a small randomly initialized model (useful for tests
and for fine-tuning from scratch on modest hardware); checkpoints saved
by :meth:`GenerationEngine.save` reload with :meth:`GenerationEngine.load`.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch
from transformers import AutoTokenizer, ByT5Tokenizer, T5Config, T5ForConditionalGeneration

GRAMMAR_TOKENS = ("<Start>", "<next>", "<ade>", "<suspect>")


@dataclass(frozen=True)
class ServiceConfig:
    """Serving parameters; ``model`` is a checkpoint path or "tiny"."""

    model: str = "tiny"
    max_input_length: int = 128
    max_target_length: int = 32
    port: int = 8321
    host: str = "127.0.0.1"
    special_tokens: Sequence[str] = GRAMMAR_TOKENS
    repetition_penalty: float = 1.3  # applied only when a request enables it

    def __post_init__(self) -> None:
        if self.max_input_length < 1 or self.max_target_length < 1:
            raise ValueError("sequence lengths must be positive")


class GenerationEngine:
    def __init__(
        self,
        model: T5ForConditionalGeneration,
        tokenizer,
        max_input_length: int = 128,
        max_target_length: int = 32,
        repetition_penalty: float = 1.3,
    ):
        self.model = model
        self.tokenizer = tokenizer
        self.max_input_length = max_input_length
        self.max_target_length = max_target_length
        self.repetition_penalty = repetition_penalty
        self._lock = threading.Lock()  # serialize generation across requests
        self.model.eval()

    # -- construction -------------------------------------------------------

    @classmethod
    def build_tiny(
        cls,
        special_tokens: Sequence[str] = GRAMMAR_TOKENS,
        seed: int = 0,
        max_input_length: int = 128,
        max_target_length: int = 32,
        repetition_penalty: float = 1.3,
    ) -> "GenerationEngine":
        """Randomly initialized small model over a byte vocabulary."""
        tokenizer = ByT5Tokenizer()
        tokenizer.add_tokens(list(special_tokens))
        torch.manual_seed(seed)
        config = T5Config(
            vocab_size=len(tokenizer),
            d_model=64,
            d_ff=256,
            d_kv=16,
            num_layers=2,
            num_heads=4,
            decoder_start_token_id=tokenizer.pad_token_id,
            eos_token_id=tokenizer.eos_token_id,
            pad_token_id=tokenizer.pad_token_id,
        )
        model = T5ForConditionalGeneration(config)
        return cls(model, tokenizer, max_input_length, max_target_length, repetition_penalty)

    @classmethod
    def load(
        cls,
        checkpoint: str | Path,
        max_input_length: int = 128,
        max_target_length: int = 32,
        repetition_penalty: float = 1.3,
    ) -> "GenerationEngine":
        tokenizer = AutoTokenizer.from_pretrained(str(checkpoint))
        model = T5ForConditionalGeneration.from_pretrained(str(checkpoint))
        return cls(model, tokenizer, max_input_length, max_target_length, repetition_penalty)

    @classmethod
    def from_config(cls, config: ServiceConfig) -> "GenerationEngine":
        common = dict(
            max_input_length=config.max_input_length,
            max_target_length=config.max_target_length,
            repetition_penalty=config.repetition_penalty,
        )
        if config.model == "tiny":
            return cls.build_tiny(special_tokens=config.special_tokens, **common)
        return cls.load(config.model, **common)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.model.save_pretrained(directory)
        self.tokenizer.save_pretrained(directory)

    # -- inference ----------------------------------------------------------

    def encode_input(self, question: str, context: str) -> dict:
        # The question is the task prefix of the input sequence.
        return self.tokenizer(
            f"{question} {context}",
            truncation=True,
            max_length=self.max_input_length,
            return_tensors="pt",
        )

    def generate_text(
        self,
        question: str,
        context: str,
        max_new_tokens: int = 32,
        repetition_penalty_disabled: bool = True,
    ) -> str:
        encoded = self.encode_input(question, context)
        penalty = 1.0 if repetition_penalty_disabled else self.repetition_penalty
        with self._lock, torch.no_grad():
            output = self.model.generate(
                **encoded,
                max_new_tokens=max_new_tokens,
                do_sample=False,
                num_beams=1,
                repetition_penalty=penalty,
            )
        return self.tokenizer.decode(
            output[0], skip_special_tokens=True, spaces_between_special_tokens=False
        )
