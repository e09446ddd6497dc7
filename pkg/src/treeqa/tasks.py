"""Domain types for multiple-choice video QA tasks and dataset ingestion.

The canonical on-disk format is JSON lines, one task per line:

    {"id": str, "video": str, "question": str, "options": [str, ...],
     "answer": int|null, "type": str|null}

Unknown extra keys are preserved on round-trip.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import DuplicateIdError, SchemaError


class QuestionType(Enum):
    TEMPORAL = "Temporal"
    CAUSAL = "Causal"
    DESCRIPTIVE = "Descriptive"
    SPATIAL = "Spatial"
    ACTION = "Action"
    OBJECT = "Object"
    UNKNOWN = "Unknown"


class DatasetVariant(Enum):
    ORIGINAL = "Original"
    REWRITTEN = "Rewritten"


@dataclass(frozen=True)
class AnswerOption:
    index: int
    text: str


@dataclass(frozen=True)
class QATask:
    """One multiple-choice question bound to an opaque video reference."""

    id: str
    video_ref: str
    question: str
    options: tuple[AnswerOption, ...]
    ground_truth_index: int | None = None
    question_type: QuestionType = QuestionType.UNKNOWN
    extra: Mapping[str, Any] = field(default_factory=dict)

    @property
    def option_texts(self) -> list[str]:
        return [o.text for o in self.options]

    def ground_truth_text(self) -> str | None:
        if self.ground_truth_index is None:
            return None
        return self.options[self.ground_truth_index].text


@dataclass
class Dataset:
    name: str
    tasks: list[QATask]
    variant: DatasetVariant = DatasetVariant.ORIGINAL


@dataclass(frozen=True)
class Violation:
    """A task invariant breach; data, not an exception."""

    rule: str
    field: str
    detail: str = ""

    def __str__(self) -> str:
        msg = f"{self.rule} ({self.field})"
        return f"{msg}: {self.detail}" if self.detail else msg


def validate_task(task: QATask) -> list[Violation]:
    """Check every QATask invariant; empty list means the task is well-formed."""
    violations: list[Violation] = []
    if not task.id:
        violations.append(Violation("EmptyId", "id"))
    if not task.question.strip():
        violations.append(Violation("EmptyQuestion", "question"))
    if len(task.options) < 2:
        violations.append(
            Violation("TooFewOptions", "options", f"got {len(task.options)}, need >= 2")
        )
    seen: set[str] = set()
    for opt in task.options:
        if not opt.text.strip():
            violations.append(Violation("EmptyOption", "options", f"index {opt.index}"))
        elif opt.text in seen:
            violations.append(Violation("DuplicateOption", "options", opt.text))
        seen.add(opt.text)
    for position, opt in enumerate(task.options):
        if opt.index != position:
            violations.append(
                Violation(
                    "OptionIndexMismatch",
                    "options",
                    f"option at position {position} carries index {opt.index}",
                )
            )
    if task.ground_truth_index is not None and not (
        0 <= task.ground_truth_index < len(task.options)
    ):
        violations.append(
            Violation(
                "GroundTruthOutOfRange",
                "ground_truth_index",
                f"{task.ground_truth_index} not in 0..{len(task.options) - 1}",
            )
        )
    return violations


_REQUIRED_KEYS = ("id", "video", "question", "options")
_CANONICAL_KEYS = ("id", "video", "question", "options", "answer", "type")


def task_from_record(record: Mapping[str, Any]) -> QATask:
    """Build a QATask from one canonical JSON record, raising SchemaError on defects."""
    for key in _REQUIRED_KEYS:
        if key not in record:
            raise SchemaError(f"missing required key '{key}'")
    if not isinstance(record["id"], str) or not isinstance(record["video"], str):
        raise SchemaError("'id' and 'video' must be strings")
    if not isinstance(record["question"], str):
        raise SchemaError("'question' must be a string")
    raw_options = record["options"]
    if not isinstance(raw_options, list) or not all(isinstance(o, str) for o in raw_options):
        raise SchemaError("'options' must be a list of strings")
    answer = record.get("answer")
    if answer is not None and not isinstance(answer, int):
        raise SchemaError("'answer' must be an integer or null")
    type_name = record.get("type")
    if type_name is None:
        qtype = QuestionType.UNKNOWN
    else:
        try:
            qtype = QuestionType(str(type_name))
        except ValueError as exc:
            known = ", ".join(t.value for t in QuestionType)
            raise SchemaError(f"unknown question type '{type_name}' (known: {known})") from exc
    extra = {k: v for k, v in record.items() if k not in _CANONICAL_KEYS}
    task = QATask(
        id=record["id"],
        video_ref=record["video"],
        question=record["question"],
        options=tuple(AnswerOption(i, text) for i, text in enumerate(raw_options)),
        ground_truth_index=answer,
        question_type=qtype,
        extra=extra,
    )
    violations = validate_task(task)
    if violations:
        raise SchemaError("; ".join(str(v) for v in violations))
    return task


def task_to_record(task: QATask) -> dict[str, Any]:
    record: dict[str, Any] = {
        "id": task.id,
        "video": task.video_ref,
        "question": task.question,
        "options": task.option_texts,
        "answer": task.ground_truth_index,
        "type": None
        if task.question_type is QuestionType.UNKNOWN
        else task.question_type.value,
    }
    for key in sorted(task.extra):
        record[key] = task.extra[key]
    return record


def load_dataset(
    path: str | Path,
    format_hint: str | None = None,
    name: str | None = None,
) -> Dataset:
    """Load and validate a canonical JSON-lines dataset.

    Records failing validation are rejected together: a SchemaError carrying a
    line-numbered error list is raised. Duplicate task ids raise DuplicateIdError.
    """
    if format_hint not in (None, "jsonl"):
        raise SchemaError(f"unsupported format hint '{format_hint}' (canonical format is jsonl)")
    path = Path(path)
    text = path.read_text(encoding="utf-8")

    tasks: list[QATask] = []
    errors: list[str] = []
    seen_ids: set[str] = set()
    has_provenance = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(f"line {lineno}: invalid JSON ({exc.msg})")
            continue
        if not isinstance(record, dict):
            errors.append(f"line {lineno}: record is not a JSON object")
            continue
        try:
            task = task_from_record(record)
        except SchemaError as exc:
            errors.append(f"line {lineno}: {exc}")
            continue
        if task.id in seen_ids:
            raise DuplicateIdError(f"line {lineno}: duplicate task id '{task.id}'")
        seen_ids.add(task.id)
        if "provenance" in task.extra:
            has_provenance = True
        tasks.append(task)
    if errors:
        raise SchemaError(f"{len(errors)} invalid record(s) in {path}", errors=errors)

    variant = DatasetVariant.REWRITTEN if has_provenance else DatasetVariant.ORIGINAL
    return Dataset(name=name or path.stem, tasks=tasks, variant=variant)


def save_dataset(dataset: Dataset | Iterable[QATask], path: str | Path) -> None:
    """Write tasks in the canonical JSON-lines format."""
    tasks = dataset.tasks if isinstance(dataset, Dataset) else list(dataset)
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task_to_record(task), sort_keys=False) + "\n")
