"""Question templates and reversible answer-sequence grammars.

The generation model exchanges structured results as flat text: entity
lists joined by a ``<next>`` marker, (ade, suspect) tuples demarcated by
``<ade>``/``<suspect>`` tags or flattened into an alternating list, and
plain Yes/No strings for relation confirmation. This module owns that
wire text in both directions. Encoding is strict (it produces training
targets), decoding is forgiving (model output is untrusted) and reports
what it had to repair through :class:`DecodeDiagnostics`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence


class Task(str, Enum):
    """The four question-answering tasks the pipelines issue."""

    ADE_LIST = "ade_list"
    SUSPECT_LIST = "suspect_list"
    PAIR_CONFIRM = "pair_confirm"
    JOINT_PAIRS = "joint_pairs"


class PairFormat(str, Enum):
    """Wire format for tuple answers.

    TAGGED:      <Start><ade>a1<suspect>s1<ade>a2<suspect>s2
    ALTERNATING: <Start>a1<next>s1<next>a2<next>s2
    """

    TAGGED = "tagged"
    ALTERNATING = "alternating"


class BinaryAnswer(Enum):
    YES = "yes"
    NO = "no"
    UNPARSEABLE = "unparseable"


#: Sentinel answer a joint-pairs model may emit for texts without any
#: drug/event relationship; recognized only when explicitly enabled.
NO_SUSPECT_SENTINEL = "no-suspect"


class TokenCollision(ValueError):
    """An entity surface contains a grammar token and cannot be encoded."""


class MissingPlaceholderArg(ValueError):
    """A pair-confirmation question was requested without both entities."""


def normalize_entity(s: str) -> str:
    """Lowercase, trim, and collapse internal whitespace to single spaces."""
    return " ".join(s.split()).lower()


@dataclass(frozen=True)
class AnswerGrammar:
    """Token inventory for answer sequences.

    All four tokens must be non-empty and pairwise distinct; they are
    matched as literal, case-sensitive substrings.
    """

    start_token: str = "<Start>"
    next_token: str = "<next>"
    ade_token: str = "<ade>"
    suspect_token: str = "<suspect>"

    def __post_init__(self) -> None:
        tokens = self.tokens
        if any(not t for t in tokens):
            raise ValueError("grammar tokens must be non-empty")
        if len(set(tokens)) != len(tokens):
            raise ValueError("grammar tokens must be pairwise distinct")

    @property
    def tokens(self) -> tuple[str, str, str, str]:
        return (self.start_token, self.next_token, self.ade_token, self.suspect_token)

    @classmethod
    def from_mapping(cls, data: Mapping[str, str]) -> "AnswerGrammar":
        known = {"start_token", "next_token", "ade_token", "suspect_token"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown grammar keys: {sorted(unknown)}")
        return cls(**dict(data))


DEFAULT_GRAMMAR = AnswerGrammar()


@dataclass
class DecodeDiagnostics:
    """What a decode had to repair.

    ``malformed`` is derived: an answer is malformed exactly when a
    fragment was dropped or the start token was absent.
    """

    dropped_fragments: int = 0
    missing_start: bool = False

    @property
    def malformed(self) -> bool:
        return self.dropped_fragments > 0 or self.missing_start

    def merge(self, other: "DecodeDiagnostics") -> "DecodeDiagnostics":
        return DecodeDiagnostics(
            dropped_fragments=self.dropped_fragments + other.dropped_fragments,
            missing_start=self.missing_start or other.missing_start,
        )


@dataclass(frozen=True)
class TemplateSet:
    """One question template per task.

    The pair-confirmation template carries ``{ade}`` and ``{suspect}``
    placeholders; the three list templates carry none.
    """

    templates: Mapping[Task, str] = field(
        default_factory=lambda: dict(_DEFAULT_TEMPLATES)
    )

    def __post_init__(self) -> None:
        missing = [t for t in Task if t not in self.templates]
        if missing:
            raise ValueError(f"missing templates for tasks: {[t.value for t in missing]}")
        for task, template in self.templates.items():
            has_ade, has_suspect = "{ade}" in template, "{suspect}" in template
            if task is Task.PAIR_CONFIRM:
                if not (has_ade and has_suspect):
                    raise ValueError(
                        "pair_confirm template needs both {ade} and {suspect}"
                    )
            elif has_ade or has_suspect:
                raise ValueError(f"{task.value} template must not carry placeholders")

    def __getitem__(self, task: Task) -> str:
        return self.templates[task]

    @classmethod
    def from_mapping(cls, data: Mapping[str, str]) -> "TemplateSet":
        templates = dict(_DEFAULT_TEMPLATES)
        for key, value in data.items():
            templates[Task(key)] = value
        return cls(templates)


_DEFAULT_TEMPLATES: Mapping[Task, str] = {
    Task.ADE_LIST: "what are the ADEs?",
    Task.SUSPECT_LIST: "what are the suspects?",
    Task.PAIR_CONFIRM: "is {ade} caused by {suspect}?",
    Task.JOINT_PAIRS: "what are the ADEs and suspects?",
}

DEFAULT_TEMPLATES = TemplateSet()

# Alternate pair-confirmation phrasing; selectable, not the default.
CONFIRM_WAS_TEMPLATES = TemplateSet(
    {**_DEFAULT_TEMPLATES, Task.PAIR_CONFIRM: "Was the {ade} caused by {suspect}?"}
)

TEMPLATE_REGISTRY: Mapping[str, TemplateSet] = {
    "default": DEFAULT_TEMPLATES,
    "confirm_was": CONFIRM_WAS_TEMPLATES,
}


def load_codec_config(path: str | Path) -> tuple[AnswerGrammar, TemplateSet]:
    """Load grammar tokens and templates from a JSON key-value document.

    Recognized top-level keys: ``grammar`` (token name -> token) and
    ``templates`` (task name -> template). Missing entries fall back to
    the defaults.
    """
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("codec config must be a JSON object")
    grammar = AnswerGrammar.from_mapping(data.get("grammar", {}))
    templates = TemplateSet.from_mapping(data.get("templates", {}))
    return grammar, templates


def build_question(
    templates: TemplateSet,
    task: Task,
    ade: str | None = None,
    suspect: str | None = None,
) -> str:
    """Instantiate the question for ``task``, substituting placeholders verbatim."""
    template = templates[task]
    if task is Task.PAIR_CONFIRM:
        if ade is None or suspect is None:
            raise MissingPlaceholderArg("pair_confirm needs both ade and suspect")
        return template.replace("{ade}", ade).replace("{suspect}", suspect)
    if ade is not None or suspect is not None:
        raise ValueError(f"{task.value} takes no entity arguments")
    return template


def _check_surface(surface: str, grammar: AnswerGrammar) -> None:
    for token in grammar.tokens:
        if token in surface:
            raise TokenCollision(f"entity {surface!r} contains grammar token {token!r}")


def _strip_start(answer: str, grammar: AnswerGrammar, diag: DecodeDiagnostics) -> str:
    body = answer.strip()
    if body.startswith(grammar.start_token):
        return body[len(grammar.start_token) :]
    diag.missing_start = True
    return body


def _split_fragments(
    body: str, grammar: AnswerGrammar, diag: DecodeDiagnostics
) -> list[str]:
    # Empty fragments (from doubled separators or empty tails) are dropped
    # and counted; a fully empty body yields no fragments at all.
    if not body.strip():
        return []
    fragments = []
    for fragment in body.split(grammar.next_token):
        fragment = fragment.strip()
        if not fragment:
            diag.dropped_fragments += 1
            continue
        fragments.append(fragment)
    return fragments


def encode_entity_list(
    entities: Sequence[str], grammar: AnswerGrammar = DEFAULT_GRAMMAR
) -> str:
    """Encode an ordered entity list; the empty list encodes to the start token alone."""
    for entity in entities:
        _check_surface(entity, grammar)
    return grammar.start_token + grammar.next_token.join(entities)


def decode_entity_list(
    answer: str, grammar: AnswerGrammar = DEFAULT_GRAMMAR
) -> tuple[list[str], DecodeDiagnostics]:
    """Decode an untrusted entity-list answer.

    Duplicates (by :func:`normalize_entity`) keep their first occurrence
    and are not counted as malformations.
    """
    diag = DecodeDiagnostics()
    body = _strip_start(answer, grammar, diag)
    entities: list[str] = []
    seen: set[str] = set()
    for fragment in _split_fragments(body, grammar, diag):
        key = normalize_entity(fragment)
        if key in seen:
            continue
        seen.add(key)
        entities.append(fragment)
    return entities, diag


def encode_pair_list(
    pairs: Sequence[tuple[str, str]],
    grammar: AnswerGrammar = DEFAULT_GRAMMAR,
    kind: PairFormat = PairFormat.TAGGED,
) -> str:
    """Encode ordered (ade, suspect) pairs in the requested wire format."""
    for ade, suspect in pairs:
        _check_surface(ade, grammar)
        _check_surface(suspect, grammar)
    if kind is PairFormat.TAGGED:
        body = "".join(
            f"{grammar.ade_token}{ade}{grammar.suspect_token}{suspect}"
            for ade, suspect in pairs
        )
        return grammar.start_token + body
    flat = [part for pair in pairs for part in pair]
    return grammar.start_token + grammar.next_token.join(flat)


def decode_pair_list(
    answer: str,
    grammar: AnswerGrammar = DEFAULT_GRAMMAR,
    kind: PairFormat = PairFormat.TAGGED,
    no_suspect_sentinel: str | None = None,
) -> tuple[list[tuple[str, str]], DecodeDiagnostics]:
    """Decode an untrusted pair-list answer.

    Incomplete trailing tuples (odd arity when alternating, a dangling
    ``<ade>`` segment when tagged) are dropped and counted. When
    ``no_suspect_sentinel`` is given, an answer equal to it (with or
    without the start token) decodes to the empty pair list with clean
    diagnostics.
    """
    diag = DecodeDiagnostics()
    if no_suspect_sentinel is not None:
        probe = answer.strip()
        if probe.startswith(grammar.start_token):
            probe = probe[len(grammar.start_token) :].strip()
        if probe == no_suspect_sentinel:
            return [], diag

    body = _strip_start(answer, grammar, diag)
    raw: list[tuple[str, str]] = []
    if kind is PairFormat.ALTERNATING:
        fragments = _split_fragments(body, grammar, diag)
        for i in range(0, len(fragments) - 1, 2):
            raw.append((fragments[i], fragments[i + 1]))
        if len(fragments) % 2:
            diag.dropped_fragments += 1
    else:
        segments = body.split(grammar.ade_token)
        if segments[0].strip():
            diag.dropped_fragments += 1  # stray text before the first <ade>
        for segment in segments[1:]:
            ade, tag, suspect = segment.partition(grammar.suspect_token)
            if not tag:
                diag.dropped_fragments += 1  # dangling <ade> with no suspect
                continue
            ade, suspect = ade.strip(), suspect.strip()
            if not ade or not suspect:
                diag.dropped_fragments += 1
                continue
            raw.append((ade, suspect))

    pairs: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    for ade, suspect in raw:
        key = (normalize_entity(ade), normalize_entity(suspect))
        if key in seen:
            continue
        seen.add(key)
        pairs.append((ade, suspect))
    return pairs, diag


def encode_bool(value: bool) -> str:
    return "Yes" if value else "No"


def decode_bool(answer: str) -> BinaryAnswer:
    """Case-insensitive read of the trimmed first word; anything else is unparseable."""
    words = answer.split()
    if not words:
        return BinaryAnswer.UNPARSEABLE
    first = words[0].strip(".,;:!?'\"").lower()
    if first == "yes":
        return BinaryAnswer.YES
    if first == "no":
        return BinaryAnswer.NO
    return BinaryAnswer.UNPARSEABLE


def dedup_entities(entities: Iterable[str]) -> tuple[str, ...]:
    """Order-preserving dedup by normalized form (no sorting anywhere)."""
    out: list[str] = []
    seen: set[str] = set()
    for entity in entities:
        key = normalize_entity(entity)
        if key and key not in seen:
            seen.add(key)
            out.append(entity)
    return tuple(out)
