"""Pipe-delimited drug/adverse-event relation corpus handling.

One source line carries eight pipe-separated fields:

    PMID|TEXT|ADE|ADE_BEGIN|ADE_END|DRUG|DRUG_BEGIN|DRUG_END

Rows sharing the same (whitespace-normalized) text are grouped into a
single :class:`Example` carrying the deduplicated gold (ade, suspect)
pairs for that text. Character offsets in the source are document-level,
not sentence-level, so they frequently do not slice the sentence text;
:func:`validate_offsets` classifies that without failing, since the
extraction pipelines never consume offsets.
"""
from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Sequence

from .codec import dedup_entities, normalize_entity


class CorpusError(Exception):
    """Base class for corpus parse failures; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class MalformedRecord(CorpusError):
    def __init__(self, line_no: int, field_count: int):
        super().__init__(line_no, f"expected 8 pipe-separated fields, got {field_count}")
        self.field_count = field_count


class NonNumericOffset(CorpusError):
    def __init__(self, line_no: int):
        super().__init__(line_no, "offset fields must be integers")


class InvalidRecord(CorpusError):
    """8 fields parsed but a field-level invariant failed (empty surface, bad span)."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(line_no, reason)
        self.reason = reason


class TrainSizeTooLarge(ValueError):
    pass


def normalize_text(s: str) -> str:
    """Whitespace-collapsed, trimmed, case-preserved grouping key."""
    return " ".join(s.split())


def text_id(text: str) -> str:
    """Stable identifier derived from the normalized text."""
    digest = hashlib.sha1(normalize_text(text).encode("utf-8")).hexdigest()
    return digest[:12]


@dataclass(frozen=True)
class RawRecord:
    """One annotated source row."""

    pmid: str
    text: str
    ade_surface: str
    ade_begin: int
    ade_end: int
    drug_surface: str
    drug_begin: int
    drug_end: int

    def __post_init__(self) -> None:
        for name in ("text", "ade_surface", "drug_surface"):
            if not getattr(self, name).strip():
                raise ValueError(f"{name} is empty")
        for prefix in ("ade", "drug"):
            begin = getattr(self, f"{prefix}_begin")
            end = getattr(self, f"{prefix}_end")
            if begin < 0 or begin >= end:
                raise ValueError(f"invalid {prefix} span [{begin}, {end})")

    def to_line(self) -> str:
        """Re-emit the 8-field pipe format (inverse of parsing, pipe-free fields only)."""
        fields = (
            self.pmid,
            self.text,
            self.ade_surface,
            str(self.ade_begin),
            str(self.ade_end),
            self.drug_surface,
            str(self.drug_begin),
            str(self.drug_end),
        )
        if any("|" in f for f in fields[:3] + fields[5:6]):
            raise ValueError("fields containing '|' cannot be serialized")
        return "|".join(fields)


class OffsetStatus(Enum):
    VALID = "valid"
    RECOVERED_BY_SEARCH = "recovered_by_search"
    FAILED = "failed"


def parse_corpus(source: Iterable[str]) -> list[RawRecord]:
    """Parse a line stream into records, in input order; blank lines are skipped."""
    records: list[RawRecord] = []
    for line_no, line in enumerate(source, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split("|")
        if len(fields) != 8:
            raise MalformedRecord(line_no, len(fields))
        try:
            offsets = [int(fields[i]) for i in (3, 4, 6, 7)]
        except ValueError:
            raise NonNumericOffset(line_no) from None
        try:
            record = RawRecord(
                pmid=fields[0],
                text=fields[1],
                ade_surface=fields[2],
                ade_begin=offsets[0],
                ade_end=offsets[1],
                drug_surface=fields[5],
                drug_begin=offsets[2],
                drug_end=offsets[3],
            )
        except ValueError as exc:
            raise InvalidRecord(line_no, str(exc)) from None
        records.append(record)
    return records


def parse_corpus_file(path: str | Path) -> list[RawRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh)


def validate_offsets(record: RawRecord) -> OffsetStatus:
    """Classify whether the annotated spans slice the text, or at least occur in it."""
    exact = (
        record.text[record.ade_begin : record.ade_end] == record.ade_surface
        and record.text[record.drug_begin : record.drug_end] == record.drug_surface
    )
    if exact:
        return OffsetStatus.VALID
    if record.ade_surface in record.text and record.drug_surface in record.text:
        return OffsetStatus.RECOVERED_BY_SEARCH
    return OffsetStatus.FAILED


@dataclass(frozen=True)
class Example:
    """One grouped text with its gold (ade, suspect) pairs.

    ``ades`` and ``suspects`` are the order-preserving projections of
    ``pairs``, deduplicated by normalized form.
    """

    id: str
    pmids: tuple[str, ...]
    text: str
    pairs: tuple[tuple[str, str], ...]

    @property
    def ades(self) -> tuple[str, ...]:
        return dedup_entities(ade for ade, _ in self.pairs)

    @property
    def suspects(self) -> tuple[str, ...]:
        return dedup_entities(suspect for _, suspect in self.pairs)

    def normalized_pairs(self) -> set[tuple[str, str]]:
        return {
            (normalize_entity(ade), normalize_entity(suspect))
            for ade, suspect in self.pairs
        }

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "pmids": list(self.pmids),
            "text": self.text,
            "pairs": [[ade, suspect] for ade, suspect in self.pairs],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Example":
        return cls(
            id=data["id"],
            pmids=tuple(data["pmids"]),
            text=data["text"],
            pairs=tuple((ade, suspect) for ade, suspect in data["pairs"]),
        )


def group_examples(records: Sequence[RawRecord]) -> list[Example]:
    """Group rows by normalized text, deduplicating pairs, ordered by first appearance."""
    grouped: dict[str, dict] = {}
    for record in records:
        key = normalize_text(record.text)
        entry = grouped.setdefault(
            key, {"text": record.text, "pmids": [], "pairs": [], "seen": set()}
        )
        if record.pmid not in entry["pmids"]:
            entry["pmids"].append(record.pmid)
        pair = (record.ade_surface.strip(), record.drug_surface.strip())
        pair_key = (normalize_entity(pair[0]), normalize_entity(pair[1]))
        if pair_key not in entry["seen"]:
            entry["seen"].add(pair_key)
            entry["pairs"].append(pair)
    return [
        Example(
            id=text_id(key),
            pmids=tuple(entry["pmids"]),
            text=entry["text"],
            pairs=tuple(entry["pairs"]),
        )
        for key, entry in grouped.items()
    ]


@dataclass(frozen=True)
class SplitSpec:
    train_size: int
    seed: int = 13


def split(
    examples: Sequence[Example], spec: SplitSpec
) -> tuple[list[Example], list[Example]]:
    """Seeded uniform shuffle, then prefix-take; deterministic for a given seed."""
    if not 0 < spec.train_size < len(examples):
        raise TrainSizeTooLarge(
            f"train_size must be in (0, {len(examples)}), got {spec.train_size}"
        )
    order = list(examples)
    random.Random(spec.seed).shuffle(order)
    return order[: spec.train_size], order[spec.train_size :]


@dataclass(frozen=True)
class CorpusStats:
    num_texts: int
    num_records: int
    ades_per_text_hist: dict[int, int]
    suspects_per_text_hist: dict[int, int]
    pairs_per_text_hist: dict[int, int]
    num_unique_ades: int
    num_unique_suspects: int
    pct_multi_entity: float
    offset_valid: int
    offset_recovered: int
    offset_failed: int

    def to_json(self) -> dict:
        return {
            "num_texts": self.num_texts,
            "num_records": self.num_records,
            "ades_per_text_hist": {str(k): v for k, v in sorted(self.ades_per_text_hist.items())},
            "suspects_per_text_hist": {str(k): v for k, v in sorted(self.suspects_per_text_hist.items())},
            "pairs_per_text_hist": {str(k): v for k, v in sorted(self.pairs_per_text_hist.items())},
            "num_unique_ades": self.num_unique_ades,
            "num_unique_suspects": self.num_unique_suspects,
            "pct_multi_entity": self.pct_multi_entity,
            "offset_valid": self.offset_valid,
            "offset_recovered": self.offset_recovered,
            "offset_failed": self.offset_failed,
        }


def stats(examples: Sequence[Example], records: Sequence[RawRecord]) -> CorpusStats:
    """Descriptive statistics over grouped examples and the rows they came from."""
    ades_hist: Counter[int] = Counter()
    suspects_hist: Counter[int] = Counter()
    pairs_hist: Counter[int] = Counter()
    unique_ades: set[str] = set()
    unique_suspects: set[str] = set()
    multi = 0
    for example in examples:
        ades, suspects = example.ades, example.suspects
        ades_hist[len(ades)] += 1
        suspects_hist[len(suspects)] += 1
        pairs_hist[len(example.pairs)] += 1
        unique_ades.update(normalize_entity(a) for a in ades)
        unique_suspects.update(normalize_entity(s) for s in suspects)
        if len(ades) > 1 or len(suspects) > 1:
            multi += 1

    offsets = Counter(validate_offsets(r) for r in records)
    return CorpusStats(
        num_texts=len(examples),
        num_records=len(records),
        ades_per_text_hist=dict(ades_hist),
        suspects_per_text_hist=dict(suspects_hist),
        pairs_per_text_hist=dict(pairs_hist),
        num_unique_ades=len(unique_ades),
        num_unique_suspects=len(unique_suspects),
        pct_multi_entity=(multi / len(examples)) if examples else 0.0,
        offset_valid=offsets[OffsetStatus.VALID],
        offset_recovered=offsets[OffsetStatus.RECOVERED_BY_SEARCH],
        offset_failed=offsets[OffsetStatus.FAILED],
    )


def write_examples_jsonl(fh: IO[str], examples: Iterable[Example]) -> None:
    for example in examples:
        fh.write(json.dumps(example.to_json(), ensure_ascii=False) + "\n")


def read_examples_jsonl(fh: IO[str]) -> list[Example]:
    return [Example.from_json(json.loads(line)) for line in fh if line.strip()]


def load_examples_file(path: str | Path) -> list[Example]:
    with open(path, encoding="utf-8") as fh:
        return read_examples_jsonl(fh)


def save_examples_file(path: str | Path, examples: Iterable[Example]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_examples_jsonl(fh, examples)


def bundled_excerpt_path() -> Path:
    """Path of the 50-line corpus excerpt shipped with the package."""
    return Path(resources.files("adeqa").joinpath("data/drug_ae_excerpt.rel"))  # type: ignore[arg-type]
