"""Shared fixtures: the known-good sample row and a synthetic gold corpus."""
from __future__ import annotations

import random

import pytest

from adeqa.backend import GenerationBackend, GenerationRequest, GenerationResponse
from adeqa.corpus import Example, RawRecord, parse_corpus, text_id

SAMPLE_ROW = (
    "10030778|Intravenous azithromycin-induced ototoxicity.|"
    "ototoxicity|43|54|azithromycin|22|34"
)
SAMPLE_TEXT = "Intravenous azithromycin-induced ototoxicity."

DRUGS = [
    "metformin", "tylenol", "azithromycin", "ibuprofen", "warfarin",
    "lisinopril", "amoxicillin", "prednisone", "cisplatin", "heparin",
    "clozapine", "omeprazole", "simvastatin", "rituximab",
]
EVENTS = [
    "fever", "severe fever", "nausea", "ototoxicity", "rash", "skin rash",
    "headache", "dizziness", "vomiting", "fatigue", "insomnia",
    "renal failure", "acute renal failure", "hearing loss", "tremor",
    "confusion", "seizures", "hepatitis",
]


def make_synthetic_examples(n: int, seed: int = 0) -> list[Example]:
    """Deterministic gold examples with 1-3 pairs per text.

    Every entity of an example appears in at least one pair, so the
    entity lists are exactly the pair projections.
    """
    rng = random.Random(seed)
    examples = []
    for i in range(n):
        n_pairs = rng.choice([1, 1, 1, 2, 2, 3])
        events = rng.sample(EVENTS, n_pairs)
        drugs = rng.sample(DRUGS, rng.randint(1, n_pairs))
        pairs = []
        for j, event in enumerate(events):
            drug = drugs[j] if j < len(drugs) else rng.choice(drugs)
            pairs.append((event, drug))
        text = (
            f"Case {i}: the patient developed {' and '.join(events)} "
            f"after receiving {' plus '.join(drugs)}."
        )
        examples.append(
            Example(
                id=text_id(text),
                pmids=(f"9{i:06d}",),
                text=text,
                pairs=tuple(pairs),
            )
        )
    return examples


class ScriptedBackend(GenerationBackend):
    """Answers from a fixed question->answer table; unknown questions fail."""

    def __init__(self, answers: dict[str, str]):
        self.answers = dict(answers)
        self.calls: list[GenerationRequest] = []

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        self.calls.append(request)
        return GenerationResponse(text=self.answers[request.question])


@pytest.fixture
def sample_record() -> RawRecord:
    return parse_corpus([SAMPLE_ROW])[0]


@pytest.fixture
def sample_example(sample_record) -> Example:
    from adeqa.corpus import group_examples

    return group_examples([sample_record])[0]
