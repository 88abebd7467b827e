"""Scoring of predicted entities and relations against gold annotations.

Two match modes are supported. Strict requires equality of normalized
strings. Partial accepts whole-token containment in either direction or
normalized Levenshtein similarity at or above a threshold; containment is
needed because adjective drift ("severe fever" vs "fever") leaves the
character similarity far below any sensible threshold.

Counts are aggregated micro-style: true/false positives and false
negatives are summed over all texts per entity kind, and precision,
recall, and F1 are computed once from the sums.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Mapping, Sequence

from .codec import normalize_entity
from .corpus import Example

if TYPE_CHECKING:  # pragma: no cover - type-only import, avoids a cycle
    from .pipeline import Prediction

KINDS = ("ade", "suspect", "relation")
BUCKET_LABELS = ("1", "2", "3", "4", "5+")


class Matching(str, Enum):
    STRICT = "strict"
    PARTIAL = "partial"


@dataclass(frozen=True)
class MatchMode:
    kind: Matching = Matching.STRICT
    tau: float = 0.7

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")


STRICT = MatchMode(Matching.STRICT)
PARTIAL = MatchMode(Matching.PARTIAL, tau=0.7)


class MissingGold(KeyError):
    def __init__(self, example_id: str):
        super().__init__(example_id)
        self.example_id = example_id


def levenshtein(a: str, b: str) -> int:
    """Minimum single-character insert/delete/substitute count."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,  # delete
                    current[j - 1] + 1,  # insert
                    previous[j - 1] + (ca != cb),  # substitute
                )
            )
        previous = current
    return previous[-1]


def similarity(a: str, b: str) -> float:
    """Normalized Levenshtein similarity 1 - d/max(len); 1.0 when both empty."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def _contains_tokens(haystack: str, needle: str) -> bool:
    h, n = haystack.split(), needle.split()
    if not n or len(n) > len(h):
        return False
    return any(h[i : i + len(n)] == n for i in range(len(h) - len(n) + 1))


def entity_match(pred: str, gold: str, mode: MatchMode) -> bool:
    """Whether a predicted entity counts as the gold entity under ``mode``."""
    p, g = normalize_entity(pred), normalize_entity(gold)
    if p == g:
        return True
    if mode.kind is Matching.STRICT:
        return False
    if not p or not g:
        return False
    if _contains_tokens(p, g) or _contains_tokens(g, p):
        return True
    return similarity(p, g) >= mode.tau


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float
    counts: Counts


def scores_from(counts: Counts) -> Scores:
    p = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    r = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return Scores(precision=p, recall=r, f1=f1, counts=counts)


def _greedy_assign(
    candidates: list[tuple[float, int, int]], n_pred: int, n_gold: int
) -> Counts:
    # candidates: (similarity, pred index, gold index) for eligible pairs;
    # taken in descending similarity, ties broken by (pred, gold) index.
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    used_pred: set[int] = set()
    used_gold: set[int] = set()
    tp = 0
    for _, pi, gi in candidates:
        if pi in used_pred or gi in used_gold:
            continue
        used_pred.add(pi)
        used_gold.add(gi)
        tp += 1
    return Counts(tp=tp, fp=n_pred - tp, fn=n_gold - tp)


def assign_matches(
    preds: Sequence[str], golds: Sequence[str], mode: MatchMode
) -> Counts:
    """One-to-one greedy assignment of predicted to gold entities."""
    candidates = []
    for pi, pred in enumerate(preds):
        for gi, gold in enumerate(golds):
            if entity_match(pred, gold, mode):
                sim = similarity(normalize_entity(pred), normalize_entity(gold))
                candidates.append((sim, pi, gi))
    return _greedy_assign(candidates, len(preds), len(golds))


def assign_pair_matches(
    pred_pairs: Sequence[tuple[str, str]],
    gold_pairs: Sequence[tuple[str, str]],
    mode: MatchMode,
) -> Counts:
    """One-to-one pair assignment; both components must match under the mode."""
    candidates = []
    for pi, (pa, ps) in enumerate(pred_pairs):
        for gi, (ga, gs) in enumerate(gold_pairs):
            if entity_match(pa, ga, mode) and entity_match(ps, gs, mode):
                sim = (
                    similarity(normalize_entity(pa), normalize_entity(ga))
                    + similarity(normalize_entity(ps), normalize_entity(gs))
                ) / 2
                candidates.append((sim, pi, gi))
    return _greedy_assign(candidates, len(pred_pairs), len(gold_pairs))


@dataclass(frozen=True)
class RePairJudgment:
    """One relation-confirmation verdict over a candidate (ade, suspect) pair."""

    example_id: str
    ade: str
    suspect: str
    gold: bool
    predicted: bool

    def to_json(self) -> dict:
        return {
            "example_id": self.example_id,
            "ade": self.ade,
            "suspect": self.suspect,
            "gold": self.gold,
            "predicted": self.predicted,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RePairJudgment":
        return cls(
            example_id=data["example_id"],
            ade=data["ade"],
            suspect=data["suspect"],
            gold=bool(data["gold"]),
            predicted=bool(data["predicted"]),
        )


@dataclass(frozen=True)
class ConfusionMatrix:
    """2x2 relation confusion: rows are gold yes/no, columns predicted yes/no."""

    yes_yes: int = 0
    yes_no: int = 0
    no_yes: int = 0
    no_no: int = 0

    @property
    def total(self) -> int:
        return self.yes_yes + self.yes_no + self.no_yes + self.no_no

    @property
    def diagonal(self) -> bool:
        return self.yes_no == 0 and self.no_yes == 0

    def to_json(self) -> dict:
        return {
            "gold_yes_pred_yes": self.yes_yes,
            "gold_yes_pred_no": self.yes_no,
            "gold_no_pred_yes": self.no_yes,
            "gold_no_pred_no": self.no_no,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ConfusionMatrix":
        return cls(
            yes_yes=data["gold_yes_pred_yes"],
            yes_no=data["gold_yes_pred_no"],
            no_yes=data["gold_no_pred_yes"],
            no_no=data["gold_no_pred_no"],
        )


def re_confusion(judgments: Sequence[RePairJudgment]) -> ConfusionMatrix:
    yes_yes = yes_no = no_yes = no_no = 0
    for j in judgments:
        if j.gold and j.predicted:
            yes_yes += 1
        elif j.gold:
            yes_no += 1
        elif j.predicted:
            no_yes += 1
        else:
            no_no += 1
    return ConfusionMatrix(yes_yes, yes_no, no_yes, no_no)


@dataclass(frozen=True)
class EvalReport:
    mode: MatchMode
    per_kind: Mapping[str, Scores]
    per_count_breakdown: Mapping[str, Counts]
    skipped_texts: int = 0
    confusion: ConfusionMatrix | None = None


def _join(
    predictions: Sequence["Prediction"], gold: Sequence[Example]
) -> list[tuple["Prediction", Example]]:
    by_id = {e.id: e for e in gold}
    joined = []
    for pred in predictions:
        example = by_id.get(pred.example_id)
        if example is None:
            raise MissingGold(pred.example_id)
        joined.append((pred, example))
    return joined


def micro_scores(
    predictions: Sequence["Prediction"], gold: Sequence[Example], mode: MatchMode
) -> dict[str, Scores]:
    """Micro precision/recall/F1 per kind: counts summed over texts first."""
    totals = {kind: Counts() for kind in KINDS}
    for pred, example in _join(predictions, gold):
        totals["ade"] += assign_matches(pred.ades, example.ades, mode)
        totals["suspect"] += assign_matches(pred.suspects, example.suspects, mode)
        totals["relation"] += assign_pair_matches(pred.pairs, example.pairs, mode)
    return {kind: scores_from(counts) for kind, counts in totals.items()}


def bucket_label(entity_count: int) -> str:
    return "5+" if entity_count >= 5 else str(entity_count)


def per_count_breakdown(
    predictions: Sequence["Prediction"], gold: Sequence[Example], mode: MatchMode
) -> dict[str, Counts]:
    """Entity counts bucketed by gold entities per text (|ades| + |suspects|).

    Per bucket, tp/fp/fn read as correct/wrong/missed entities; bucket
    totals partition the global ade+suspect totals.
    """
    buckets: dict[str, Counts] = {}
    for pred, example in _join(predictions, gold):
        label = bucket_label(len(example.ades) + len(example.suspects))
        counts = assign_matches(pred.ades, example.ades, mode) + assign_matches(
            pred.suspects, example.suspects, mode
        )
        buckets[label] = buckets.get(label, Counts()) + counts
    order = [b for b in BUCKET_LABELS if b in buckets]
    extras = sorted(b for b in buckets if b not in BUCKET_LABELS)
    return {label: buckets[label] for label in extras + order}


def evaluate(
    predictions: Sequence["Prediction"],
    gold: Sequence[Example],
    mode: MatchMode,
    judgments: Sequence[RePairJudgment] | None = None,
) -> EvalReport:
    """Assemble the full report; texts with no prediction count as skipped."""
    predicted_ids = {p.example_id for p in predictions}
    skipped = sum(1 for e in gold if e.id not in predicted_ids)
    return EvalReport(
        mode=mode,
        per_kind=micro_scores(predictions, gold, mode),
        per_count_breakdown=per_count_breakdown(predictions, gold, mode),
        skipped_texts=skipped,
        confusion=re_confusion(judgments) if judgments is not None else None,
    )


class UnsupportedFormat(ValueError):
    pass


def report_to_json(report: EvalReport) -> dict:
    return {
        "mode": {"kind": report.mode.kind.value, "tau": report.mode.tau},
        "per_kind": {
            kind: {
                "precision": s.precision,
                "recall": s.recall,
                "f1": s.f1,
                "tp": s.counts.tp,
                "fp": s.counts.fp,
                "fn": s.counts.fn,
            }
            for kind, s in report.per_kind.items()
        },
        "per_count_breakdown": {
            label: {"correct": c.tp, "wrong": c.fp, "missed": c.fn}
            for label, c in report.per_count_breakdown.items()
        },
        "skipped_texts": report.skipped_texts,
        "confusion": report.confusion.to_json() if report.confusion else None,
    }


def report_from_json(data: dict) -> EvalReport:
    per_kind = {
        kind: Scores(
            precision=s["precision"],
            recall=s["recall"],
            f1=s["f1"],
            counts=Counts(s["tp"], s["fp"], s["fn"]),
        )
        for kind, s in data["per_kind"].items()
    }
    breakdown = {
        label: Counts(c["correct"], c["wrong"], c["missed"])
        for label, c in data["per_count_breakdown"].items()
    }
    return EvalReport(
        mode=MatchMode(Matching(data["mode"]["kind"]), data["mode"]["tau"]),
        per_kind=per_kind,
        per_count_breakdown=breakdown,
        skipped_texts=data["skipped_texts"],
        confusion=ConfusionMatrix.from_json(data["confusion"]) if data["confusion"] else None,
    )


def emit_report(report: EvalReport, format: str = "json") -> str:
    """Serialize a report as json (canonical), csv, or a markdown table."""
    if format == "json":
        return json.dumps(report_to_json(report), sort_keys=True, indent=2)
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["kind", "mode", "precision", "recall", "f1", "tp", "fp", "fn"])
        for kind, s in report.per_kind.items():
            writer.writerow(
                [
                    kind,
                    report.mode.kind.value,
                    f"{s.precision:.4f}",
                    f"{s.recall:.4f}",
                    f"{s.f1:.4f}",
                    s.counts.tp,
                    s.counts.fp,
                    s.counts.fn,
                ]
            )
        return buffer.getvalue()
    if format == "markdown":
        lines = [
            f"| Entity | Precision | Recall | F1 ({report.mode.kind.value}) |",
            "|---|---|---|---|",
        ]
        for kind, s in report.per_kind.items():
            lines.append(
                f"| {kind} | {s.precision:.2f} | {s.recall:.2f} | {s.f1:.2f} |"
            )
        return "\n".join(lines) + "\n"
    raise UnsupportedFormat(format)


def write_judgments_jsonl(fh, judgments: Sequence[RePairJudgment]) -> None:
    for judgment in judgments:
        fh.write(json.dumps(judgment.to_json(), ensure_ascii=False) + "\n")


def read_judgments_jsonl(fh) -> list[RePairJudgment]:
    return [RePairJudgment.from_json(json.loads(line)) for line in fh if line.strip()]
