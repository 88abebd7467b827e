"""Extraction pipelines over a generation backend.

Two approaches are implemented as sklearn-style estimators so they
compose with the wider ecosystem (``get_params``/``set_params``/clone):

* :class:`ApproachOneExtractor` asks for the ADEs, asks for the
  suspects, then confirms every (ade, suspect) combination with a
  yes/no question and keeps the confirmed pairs.
* :class:`ApproachTwoExtractor` asks one joint question per text and
  decodes the answer as a tuple list.

Both consume texts as (id, context) items, issue one backend request per
question, and never abort a batch on a per-text backend failure: the
failure is recorded on ``failures_`` and the text is skipped.

:func:`prepare_training_pairs` emits the question/answer supervision for
either approach, serialized as JSON Lines for the fine-tuning service.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from sklearn.base import BaseEstimator

from .backend import BackendError, GenerationBackend, GenerationRequest
from .codec import (
    DEFAULT_GRAMMAR,
    DEFAULT_TEMPLATES,
    NO_SUSPECT_SENTINEL,
    AnswerGrammar,
    BinaryAnswer,
    DecodeDiagnostics,
    PairFormat,
    Task,
    TemplateSet,
    build_question,
    decode_bool,
    decode_entity_list,
    decode_pair_list,
    dedup_entities,
    encode_bool,
    encode_entity_list,
    encode_pair_list,
    normalize_entity,
)
from .corpus import Example
from .evaluation import RePairJudgment

logger = logging.getLogger(__name__)

TextItem = tuple[str, str]  # (example id, context text)


@dataclass(frozen=True)
class QAInstance:
    """One (task, question, context, answer) training or inference item."""

    example_id: str
    task: Task
    question: str
    context: str
    answer: str

    def to_json(self) -> dict:
        return {
            "example_id": self.example_id,
            "task": self.task.value,
            "question": self.question,
            "context": self.context,
            "answer": self.answer,
        }

    @classmethod
    def from_json(cls, data: dict) -> "QAInstance":
        return cls(
            example_id=data["example_id"],
            task=Task(data["task"]),
            question=data["question"],
            context=data["context"],
            answer=data["answer"],
        )


@dataclass(frozen=True)
class Prediction:
    """Extraction result for one text."""

    example_id: str
    ades: tuple[str, ...]
    suspects: tuple[str, ...]
    pairs: tuple[tuple[str, str], ...]
    diagnostics: DecodeDiagnostics = field(default_factory=DecodeDiagnostics)
    backend_calls: int = 0
    unparseable_binary: int = 0

    def to_json(self) -> dict:
        return {
            "example_id": self.example_id,
            "ades": list(self.ades),
            "suspects": list(self.suspects),
            "pairs": [[a, s] for a, s in self.pairs],
            "backend_calls": self.backend_calls,
            "malformed": self.diagnostics.malformed,
            "dropped_fragments": self.diagnostics.dropped_fragments,
            "missing_start": self.diagnostics.missing_start,
            "unparseable_binary": self.unparseable_binary,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Prediction":
        return cls(
            example_id=data["example_id"],
            ades=tuple(data["ades"]),
            suspects=tuple(data["suspects"]),
            pairs=tuple((a, s) for a, s in data["pairs"]),
            diagnostics=DecodeDiagnostics(
                dropped_fragments=data.get("dropped_fragments", 0),
                missing_start=data.get("missing_start", False),
            ),
            backend_calls=data["backend_calls"],
            unparseable_binary=data.get("unparseable_binary", 0),
        )


@dataclass(frozen=True)
class PipelineConfig:
    approach: int = 1
    grammar: AnswerGrammar = DEFAULT_GRAMMAR
    templates: TemplateSet = DEFAULT_TEMPLATES
    pair_format: PairFormat = PairFormat.TAGGED
    negative_ratio: float | None = None  # None = keep every available negative
    no_suspect_sentinel_enabled: bool = False
    concurrency_limit: int = 1

    def __post_init__(self) -> None:
        if self.approach not in (1, 2):
            raise ValueError("approach must be 1 or 2")
        if self.negative_ratio is not None and self.negative_ratio < 0:
            raise ValueError("negative_ratio must be non-negative")
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")


def prepare_training_pairs(
    examples: Sequence[Example], config: PipelineConfig
) -> list[QAInstance]:
    """Emit gold question/answer supervision for the configured approach.

    Approach 1 yields, per example: the ADE-list item, the suspect-list
    item, one positive confirmation per gold pair, and negative
    confirmations taken from the within-text cross product of gold
    entities minus the gold pairs (capped at negative_ratio x positives,
    in cross-product order).
    """
    g, t = config.grammar, config.templates
    instances: list[QAInstance] = []
    for example in examples:
        if config.approach == 2:
            if not example.pairs and config.no_suspect_sentinel_enabled:
                answer = NO_SUSPECT_SENTINEL
            else:
                answer = encode_pair_list(example.pairs, g, config.pair_format)
            instances.append(
                QAInstance(
                    example_id=example.id,
                    task=Task.JOINT_PAIRS,
                    question=build_question(t, Task.JOINT_PAIRS),
                    context=example.text,
                    answer=answer,
                )
            )
            continue

        instances.append(
            QAInstance(
                example_id=example.id,
                task=Task.ADE_LIST,
                question=build_question(t, Task.ADE_LIST),
                context=example.text,
                answer=encode_entity_list(example.ades, g),
            )
        )
        instances.append(
            QAInstance(
                example_id=example.id,
                task=Task.SUSPECT_LIST,
                question=build_question(t, Task.SUSPECT_LIST),
                context=example.text,
                answer=encode_entity_list(example.suspects, g),
            )
        )
        for ade, suspect in example.pairs:
            instances.append(
                QAInstance(
                    example_id=example.id,
                    task=Task.PAIR_CONFIRM,
                    question=build_question(t, Task.PAIR_CONFIRM, ade, suspect),
                    context=example.text,
                    answer=encode_bool(True),
                )
            )
        gold = example.normalized_pairs()
        negatives = [
            (ade, suspect)
            for ade in example.ades
            for suspect in example.suspects
            if (normalize_entity(ade), normalize_entity(suspect)) not in gold
        ]
        if config.negative_ratio is not None:
            cap = math.floor(config.negative_ratio * len(example.pairs))
            negatives = negatives[:cap]
        for ade, suspect in negatives:
            instances.append(
                QAInstance(
                    example_id=example.id,
                    task=Task.PAIR_CONFIRM,
                    question=build_question(t, Task.PAIR_CONFIRM, ade, suspect),
                    context=example.text,
                    answer=encode_bool(False),
                )
            )
    return instances


def as_text_items(texts: Iterable) -> list[TextItem]:
    """Validate pipeline input into (id, context) items.

    Accepts (id, context) tuples or objects with ``id``/``text``
    attributes (e.g. :class:`~adeqa.corpus.Example`).
    """
    items: list[TextItem] = []
    for position, item in enumerate(texts):
        if hasattr(item, "id") and hasattr(item, "text"):
            item = (item.id, item.text)
        try:
            example_id, context = item
        except (TypeError, ValueError):
            raise ValueError(
                f"texts[{position}] is not an (id, context) item: {item!r}"
            ) from None
        if not isinstance(example_id, str) or not isinstance(context, str):
            raise ValueError(f"texts[{position}] must hold two strings")
        if not context.strip():
            raise ValueError(f"texts[{position}] has an empty context")
        items.append((example_id, context))
    return items


class _QaExtractor(BaseEstimator):
    """Common batch machinery; subclasses implement ``_predict_one``."""

    backend: GenerationBackend | None
    grammar: AnswerGrammar
    templates: TemplateSet
    concurrency_limit: int

    def fit(self, X=None, y=None):
        """No-op: the generation model is trained behind the backend."""
        return self

    def _predict_one(self, example_id: str, context: str) -> Prediction:
        raise NotImplementedError

    def predict(self, texts: Iterable) -> list[Prediction]:
        """Extract from every text; per-text backend failures are skipped.

        Failures land on ``failures_`` as (example_id, error) tuples.
        Output order follows input order and is independent of the
        concurrency limit.
        """
        if self.backend is None:
            raise ValueError("a backend is required before predict()")
        items = as_text_items(texts)
        slots: list[Prediction | None] = [None] * len(items)
        failures: list[tuple[str, BackendError]] = []

        def work(index: int) -> None:
            example_id, context = items[index]
            try:
                slots[index] = self._predict_one(example_id, context)
            except BackendError as error:
                logger.warning("text %s skipped: %s", example_id, error)
                failures.append((example_id, error))

        if self.concurrency_limit > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.concurrency_limit) as pool:
                list(pool.map(work, range(len(items))))
        else:
            for index in range(len(items)):
                work(index)

        self.failures_ = sorted(failures, key=lambda f: f[0])
        return [p for p in slots if p is not None]


class ApproachOneExtractor(_QaExtractor):
    """Entity extraction followed by per-combination relation confirmation.

    Backend calls per text: 2 + |ades| x |suspects|. Unparseable yes/no
    answers count as "No" and are tallied on the prediction.
    """

    def __init__(
        self,
        backend: GenerationBackend | None = None,
        grammar: AnswerGrammar = DEFAULT_GRAMMAR,
        templates: TemplateSet = DEFAULT_TEMPLATES,
        concurrency_limit: int = 1,
    ):
        self.backend = backend
        self.grammar = grammar
        self.templates = templates
        self.concurrency_limit = concurrency_limit

    def _ask(self, question: str, context: str) -> str:
        assert self.backend is not None
        return self.backend.generate(GenerationRequest(question, context)).text

    def _predict_one(self, example_id: str, context: str) -> Prediction:
        calls = 0
        answer = self._ask(build_question(self.templates, Task.ADE_LIST), context)
        calls += 1
        ades, diag_a = decode_entity_list(answer, self.grammar)

        answer = self._ask(build_question(self.templates, Task.SUSPECT_LIST), context)
        calls += 1
        suspects, diag_s = decode_entity_list(answer, self.grammar)

        pairs: list[tuple[str, str]] = []
        unparseable = 0
        for ade in ades:
            question = None
            for suspect in suspects:
                question = build_question(
                    self.templates, Task.PAIR_CONFIRM, ade, suspect
                )
                verdict = decode_bool(self._ask(question, context))
                calls += 1
                if verdict is BinaryAnswer.YES:
                    pairs.append((ade, suspect))
                elif verdict is BinaryAnswer.UNPARSEABLE:
                    unparseable += 1  # treated as No, conservatively

        return Prediction(
            example_id=example_id,
            ades=tuple(ades),
            suspects=tuple(suspects),
            pairs=_dedup_pairs(pairs),
            diagnostics=diag_a.merge(diag_s),
            backend_calls=calls,
            unparseable_binary=unparseable,
        )


class ApproachTwoExtractor(_QaExtractor):
    """Joint tuple generation: one question per text, backend_calls = 1."""

    def __init__(
        self,
        backend: GenerationBackend | None = None,
        grammar: AnswerGrammar = DEFAULT_GRAMMAR,
        templates: TemplateSet = DEFAULT_TEMPLATES,
        pair_format: PairFormat = PairFormat.TAGGED,
        no_suspect_sentinel_enabled: bool = False,
        concurrency_limit: int = 1,
    ):
        self.backend = backend
        self.grammar = grammar
        self.templates = templates
        self.pair_format = pair_format
        self.no_suspect_sentinel_enabled = no_suspect_sentinel_enabled
        self.concurrency_limit = concurrency_limit

    def _predict_one(self, example_id: str, context: str) -> Prediction:
        assert self.backend is not None
        question = build_question(self.templates, Task.JOINT_PAIRS)
        response = self.backend.generate(GenerationRequest(question, context))
        sentinel = NO_SUSPECT_SENTINEL if self.no_suspect_sentinel_enabled else None
        pairs, diag = decode_pair_list(
            response.text, self.grammar, self.pair_format, no_suspect_sentinel=sentinel
        )
        deduped = _dedup_pairs(pairs)
        return Prediction(
            example_id=example_id,
            ades=dedup_entities(a for a, _ in deduped),
            suspects=dedup_entities(s for _, s in deduped),
            pairs=deduped,
            diagnostics=diag,
            backend_calls=1,
        )


def _dedup_pairs(pairs: Sequence[tuple[str, str]]) -> tuple[tuple[str, str], ...]:
    out: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    for ade, suspect in pairs:
        key = (normalize_entity(ade), normalize_entity(suspect))
        if key in seen:
            continue
        seen.add(key)
        out.append((ade, suspect))
    return tuple(out)


def make_extractor(
    config: PipelineConfig, backend: GenerationBackend
) -> _QaExtractor:
    if config.approach == 1:
        return ApproachOneExtractor(
            backend=backend,
            grammar=config.grammar,
            templates=config.templates,
            concurrency_limit=config.concurrency_limit,
        )
    return ApproachTwoExtractor(
        backend=backend,
        grammar=config.grammar,
        templates=config.templates,
        pair_format=config.pair_format,
        no_suspect_sentinel_enabled=config.no_suspect_sentinel_enabled,
        concurrency_limit=config.concurrency_limit,
    )


def run_approach1(
    texts: Iterable, backend: GenerationBackend, config: PipelineConfig | None = None
) -> list[Prediction]:
    config = dataclasses.replace(config or PipelineConfig(), approach=1)
    return make_extractor(config, backend).predict(texts)


def run_approach2(
    texts: Iterable, backend: GenerationBackend, config: PipelineConfig | None = None
) -> list[Prediction]:
    config = dataclasses.replace(config or PipelineConfig(), approach=2)
    return make_extractor(config, backend).predict(texts)


def collect_relation_judgments(
    examples: Sequence[Example],
    backend: GenerationBackend,
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> list[RePairJudgment]:
    """Confirm every gold-entity combination per text, independent of NER output.

    Candidates are the cross product of the gold ADEs and suspects; a
    candidate is gold-positive iff it is one of the text's gold pairs.
    Feeds the relation confusion matrix.
    """
    judgments: list[RePairJudgment] = []
    for example in examples:
        gold_pairs = example.normalized_pairs()
        for ade in example.ades:
            for suspect in example.suspects:
                question = build_question(templates, Task.PAIR_CONFIRM, ade, suspect)
                response = backend.generate(GenerationRequest(question, example.text))
                verdict = decode_bool(response.text)
                judgments.append(
                    RePairJudgment(
                        example_id=example.id,
                        ade=ade,
                        suspect=suspect,
                        gold=(normalize_entity(ade), normalize_entity(suspect))
                        in gold_pairs,
                        predicted=verdict is BinaryAnswer.YES,
                    )
                )
    return judgments


def write_instances_jsonl(fh: IO[str], instances: Iterable[QAInstance]) -> None:
    for instance in instances:
        fh.write(json.dumps(instance.to_json(), ensure_ascii=False) + "\n")


def read_instances_jsonl(fh: IO[str]) -> list[QAInstance]:
    return [QAInstance.from_json(json.loads(line)) for line in fh if line.strip()]


def write_predictions_jsonl(fh: IO[str], predictions: Iterable[Prediction]) -> None:
    for prediction in predictions:
        fh.write(json.dumps(prediction.to_json(), ensure_ascii=False) + "\n")


def read_predictions_jsonl(fh: IO[str]) -> list[Prediction]:
    return [Prediction.from_json(json.loads(line)) for line in fh if line.strip()]
