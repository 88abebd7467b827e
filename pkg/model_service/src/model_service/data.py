"""Reader for the prepared question/answer pairs file (JSON Lines).

Each line carries at least ``question``, ``context``, and ``answer``;
``example_id`` and ``task`` are passed through when present. Malformed
lines are rejected with their line number.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

REQUIRED_KEYS = ("question", "context", "answer")


class PairsFileError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}" if line_no else message)
        self.line_no = line_no


@dataclass(frozen=True)
class TrainingPair:
    question: str
    context: str
    answer: str
    example_id: str = ""
    task: str = ""


def load_pairs(path: str | Path) -> list[TrainingPair]:
    pairs: list[TrainingPair] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PairsFileError(line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(data, dict):
                raise PairsFileError(line_no, "expected a JSON object")
            for key in REQUIRED_KEYS:
                if not isinstance(data.get(key), str) or not data[key]:
                    raise PairsFileError(line_no, f"missing or empty {key!r}")
            pairs.append(
                TrainingPair(
                    question=data["question"],
                    context=data["context"],
                    answer=data["answer"],
                    example_id=str(data.get("example_id", "")),
                    task=str(data.get("task", "")),
                )
            )
    if not pairs:
        raise PairsFileError(0, f"no training pairs in {path}")
    return pairs
