"""Answer-set de-biasing: distractor rewriting, validation, and bias probes.

Rewriting replaces a task's wrong options with new plausible candidates while
leaving the question and the correct answer untouched, so the answer can no
longer be guessed from text associations alone. A mechanical validator
enforces everything that can be checked without a model; the non-mechanical
guarantee ("not derivable from QA associations") is measured operationally by
the blind-probe accuracy delta between the original and rewritten sets.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .errors import FailedRewriteError, MalformedCompletionError, ProviderError
from .prompts import ProviderRole
from .providers.base import ProviderHub, ProviderSession
from .tasks import AnswerOption, Dataset, DatasetVariant, QATask

log = logging.getLogger(__name__)

REWRITE_PROMPT_VERSION = "v1"


@dataclass
class RewriteResult:
    original: QATask
    rewritten: QATask
    attempts: int
    violations_history: list[list[str]] = field(default_factory=list)


@dataclass
class BiasReport:
    dataset: str
    variant: str
    n: int
    correct: int
    abstained: int
    blind_accuracy: float
    per_type: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "variant": self.variant,
            "n": self.n,
            "correct": self.correct,
            "abstained": self.abstained,
            "blind_accuracy": self.blind_accuracy,
            "per_type": dict(sorted(self.per_type.items())),
        }


def _normalize(text: str) -> str:
    text = re.sub(r"[^\w\s]", "", text.lower())
    return re.sub(r"\s+", " ", text).strip()


def validate_rewrite(original: QATask, candidate: QATask) -> list[str]:
    """Mechanical checks a rewrite must pass; empty list means accepted.

    Checks: question unchanged byte-wise, ground-truth option unchanged
    byte-wise at the same index, every distractor differs from its original
    under normalization, options pairwise distinct and non-empty, option count
    unchanged.
    """
    violations: list[str] = []
    if candidate.question != original.question:
        violations.append("QuestionAltered")
    if len(candidate.options) != len(original.options):
        violations.append("OptionCountChanged")
        return violations
    gt = original.ground_truth_index
    if gt is not None:
        if candidate.ground_truth_index != gt:
            violations.append("GroundTruthAltered")
        elif candidate.options[gt].text != original.options[gt].text:
            violations.append("GroundTruthAltered")
    unchanged = [
        opt.index
        for opt in candidate.options
        if opt.index != gt
        and _normalize(opt.text) == _normalize(original.options[opt.index].text)
    ]
    if unchanged:
        violations.append("DistractorsUnchanged")
    texts = [opt.text for opt in candidate.options]
    if any(not t.strip() for t in texts):
        violations.append("EmptyOption")
    if len({_normalize(t) for t in texts}) != len(texts):
        violations.append("DuplicateOption")
    return violations


def _distractor_lines(task: QATask) -> str:
    return "\n".join(
        f"OPTION {opt.index}: {opt.text}"
        for opt in task.options
        if opt.index != task.ground_truth_index
    )


def _parse_rewrites(text: str, expected: set[int]) -> dict[int, str]:
    found: dict[int, str] = {}
    for line in text.splitlines():
        match = re.match(r"\s*OPTION\s+(\d+)\s*:\s*(.+)$", line)
        if match:
            found[int(match.group(1))] = match.group(2).strip()
    if set(found) != expected or any(not v for v in found.values()):
        raise MalformedCompletionError(
            f"rewrite response covered options {sorted(found)} "
            f"instead of {sorted(expected)}"
        )
    return found


def rewrite_answers(
    task: QATask,
    session: ProviderSession,
    max_attempts: int = 3,
    dataset_name: str = "dataset",
    provenance: dict | None = None,
) -> RewriteResult:
    """Rewrite the task's distractors, keeping question and ground truth intact.

    The first candidate passing validate_rewrite wins; after max_attempts
    failures a FailedRewriteError carries the accumulated violations and the
    task stays in its original form.
    """
    if task.ground_truth_index is None:
        raise ValueError("rewriting requires a ground-truth index to protect")
    expected = {o.index for o in task.options if o.index != task.ground_truth_index}
    history: list[list[str]] = []
    for attempt in range(1, max_attempts + 1):
        try:
            result = session.complete(
                "rewrite_distractors",
                question=task.question,
                ground_truth=task.ground_truth_text(),
                distractor_lines=_distractor_lines(task),
                dataset_name=dataset_name,
                use_cache=attempt == 1,
            )
            rewrites = _parse_rewrites(result.text, expected)
        except MalformedCompletionError as exc:
            history.append([f"MalformedCompletion: {exc}"])
            continue
        new_options = tuple(
            AnswerOption(opt.index, rewrites.get(opt.index, opt.text))
            for opt in task.options
        )
        extra = dict(task.extra)
        if provenance is not None:
            extra["provenance"] = dict(provenance, attempts=attempt)
        candidate = QATask(
            id=task.id,
            video_ref=task.video_ref,
            question=task.question,
            options=new_options,
            ground_truth_index=task.ground_truth_index,
            question_type=task.question_type,
            extra=extra,
        )
        violations = validate_rewrite(task, candidate)
        if not violations:
            return RewriteResult(
                original=task,
                rewritten=candidate,
                attempts=attempt,
                violations_history=history,
            )
        history.append(violations)
        session.flag_last("rewrite_rejected")
    raise FailedRewriteError(
        f"no accepted rewrite for task '{task.id}' after {max_attempts} attempts",
        violations_history=history,
    )


def rewrite_dataset(
    dataset: Dataset,
    hub: ProviderHub,
    max_attempts: int = 3,
) -> tuple[Dataset, list[str]]:
    """Rewrite every task that has a ground truth; failures keep the original.

    Returns the rewritten dataset and the ids of tasks left unrewritten.
    """
    model_id = hub.backend_for(ProviderRole.REWRITER).model_id
    provenance = {"rewriter_model": model_id, "prompt_version": REWRITE_PROMPT_VERSION}
    tasks: list[QATask] = []
    kept_original: list[str] = []
    for task in dataset.tasks:
        if task.ground_truth_index is None:
            kept_original.append(task.id)
            tasks.append(task)
            continue
        session = hub.session()
        try:
            outcome = rewrite_answers(
                task,
                session,
                max_attempts=max_attempts,
                dataset_name=dataset.name,
                provenance=provenance,
            )
            tasks.append(outcome.rewritten)
        except (FailedRewriteError, ProviderError) as exc:
            log.warning("task %s kept original options: %s", task.id, exc)
            kept_original.append(task.id)
            tasks.append(task)
    return (
        Dataset(name=dataset.name, tasks=tasks, variant=DatasetVariant.REWRITTEN),
        kept_original,
    )


# ---------------------------------------------------------------------------
# Blind probing
# ---------------------------------------------------------------------------

ABSTAIN = None


def blind_probe(task: QATask, session: ProviderSession) -> int | None:
    """Ask the provider to answer from question and options alone (no frames).

    Returns the predicted option index, or None (abstain) when the completion
    cannot be parsed into a valid index.
    """
    option_lines = "\n".join(f"{o.index}. {o.text}" for o in task.options)
    try:
        result = session.complete(
            "blind_probe", question=task.question, option_lines=option_lines
        )
    except ProviderError:
        session.flag_last("probe_abstain")
        return ABSTAIN
    match = re.search(r"\d+", result.text)
    if match:
        index = int(match.group())
        if 0 <= index < len(task.options):
            return index
    letters = re.search(r"\b([A-Da-d])\b", result.text)
    if letters:
        index = ord(letters.group(1).upper()) - ord("A")
        if 0 <= index < len(task.options):
            return index
    session.flag_last("probe_abstain")
    return ABSTAIN


def bias_report(dataset: Dataset, probes: dict[str, int | None]) -> BiasReport:
    """Blind accuracy over probed tasks with ground truth.

    Abstentions count against accuracy (excluded from the numerator only) and
    are reported separately.
    """
    scored = [t for t in dataset.tasks if t.id in probes and t.ground_truth_index is not None]
    if not scored:
        raise ValueError("bias report requires at least one probed task with ground truth")
    correct = 0
    abstained = 0
    per_type_counts: dict[str, list[int]] = {}
    for task in scored:
        prediction = probes[task.id]
        hit = prediction == task.ground_truth_index
        if prediction is ABSTAIN:
            abstained += 1
        correct += int(hit)
        bucket = per_type_counts.setdefault(task.question_type.value, [0, 0])
        bucket[0] += int(hit)
        bucket[1] += 1
    per_type = {name: hits / total for name, (hits, total) in per_type_counts.items()}
    return BiasReport(
        dataset=dataset.name,
        variant=dataset.variant.value,
        n=len(scored),
        correct=correct,
        abstained=abstained,
        blind_accuracy=correct / len(scored),
        per_type=per_type,
    )


def probe_dataset(dataset: Dataset, hub: ProviderHub) -> tuple[BiasReport, int]:
    """Blind-probe every task; returns the report and total frames attached (always 0)."""
    probes: dict[str, int | None] = {}
    attached = 0
    for task in dataset.tasks:
        session = hub.session()
        probes[task.id] = blind_probe(task, session)
        attached += sum(len(e.attachments) for e in session.transcript)
    return bias_report(dataset, probes), attached


def audit_rewrites(original: Dataset, rewritten: Dataset) -> dict[str, list[str]]:
    """Post-hoc validator sweep over an emitted rewritten dataset.

    Maps task id to its violation list; unchanged tasks (kept-original
    fallbacks, identified by a missing provenance block) are skipped.
    """
    by_id = {t.id: t for t in original.tasks}
    findings: dict[str, list[str]] = {}
    for task in rewritten.tasks:
        source = by_id.get(task.id)
        if source is None:
            findings[task.id] = ["UnknownTask"]
            continue
        if "provenance" not in task.extra:
            continue
        violations = validate_rewrite(source, task)
        if violations:
            findings[task.id] = violations
    return findings
