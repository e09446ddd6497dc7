"""Batch evaluation harness: frame resolution, grounding modes, reports.

Per task the harness resolves the opaque video reference into sampled frames,
runs evidence grounding once (mode-dependent), grows and scores the entailment
forest, and records a JSON trace. Reports aggregate accuracy overall and per
question type plus per-role provider call counts; traces are the source of
truth and reports are recomputable from them alone.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import grounding, tree
from .config import RunConfig
from .errors import GroundingError, MismatchedDatasetsError, ProviderError, TreeQAError
from .grounding import (
    CaptionedFrame,
    FrameRef,
    GroundedMoment,
    NavigationDirective,
)
from .prompts import ProviderRole
from .providers.base import ProviderHub, ProviderSession, ProviderTranscript
from .providers.cache import ResponseCache
from .providers.http import HttpChatBackend
from .synth import OracleBackend, WorldSpec
from .tasks import Dataset, QATask

log = logging.getLogger(__name__)

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


class WorldFrameCatalog:
    """Resolves synthetic video refs to the virtual frames of attached worlds."""

    def __init__(self, worlds: Mapping[str, WorldSpec]):
        self.worlds = worlds

    def frames(self, video_ref: str) -> list[FrameRef]:
        world = self.worlds.get(video_ref)
        if world is None:
            raise GroundingError(f"unknown synthetic video '{video_ref}'")
        return [
            FrameRef(index=i, timestamp_s=float(i), ref=f"{video_ref}#{i}")
            for i in range(world.num_frames)
        ]


class DirectoryFrameCatalog:
    """Resolves video refs to pre-extracted image files under root/<video_ref>/."""

    def __init__(self, root: str | Path, fps: float = 1.0):
        self.root = Path(root)
        self.fps = fps

    def frames(self, video_ref: str) -> list[FrameRef]:
        directory = self.root / video_ref
        if not directory.is_dir():
            raise GroundingError(f"no frame directory for video '{video_ref}'")
        files = sorted(
            p for p in directory.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
        )
        if not files:
            raise GroundingError(f"no frames found under {directory}")
        return [
            FrameRef(index=i, timestamp_s=i / self.fps, ref=str(path))
            for i, path in enumerate(files)
        ]


def sample_video_frames(frames: Sequence[FrameRef], k: int) -> list[FrameRef]:
    """Pick up to k uniformly spaced frames and re-index them consecutively."""
    positions = grounding.uniform_indices(len(frames), k)
    return [
        FrameRef(index=new_index, timestamp_s=frames[p].timestamp_s, ref=frames[p].ref)
        for new_index, p in enumerate(positions)
    ]


def build_hub(
    config: RunConfig,
    provider: str = "http",
    worlds: Mapping[str, WorldSpec] | None = None,
) -> ProviderHub:
    """Assemble the provider hub for a run: oracle backends or HTTP endpoints."""
    cache = ResponseCache(config.cache_dir) if config.cache_dir else None
    if provider == "oracle":
        backend = OracleBackend(worlds or {}, noise_epsilon=config.noise_epsilon)
        backends = {role: backend for role in ProviderRole}
    elif provider == "http":
        backends = {}
        for role in ProviderRole:
            endpoint = config.providers.get(role.value)
            if endpoint is None:
                continue
            backends[role] = HttpChatBackend(
                endpoint_url=endpoint.endpoint_url,
                model_id=endpoint.model_id,
                api_key_env=endpoint.api_key_env,
                requests_per_second=config.requests_per_second,
            )
    else:
        raise ValueError(f"unknown provider kind '{provider}'")
    return ProviderHub(
        backends,
        cache=cache,
        retries=config.retries,
        backoff_base_s=config.backoff_base_s,
    )


# ---------------------------------------------------------------------------
# Grounding modes
# ---------------------------------------------------------------------------


def _grounded_moment(
    task: QATask,
    session: ProviderSession,
    frames: Sequence[FrameRef],
    config: RunConfig,
) -> GroundedMoment:
    fact = grounding.extract_fact(task.question, session)
    fact_triplets = tuple(grounding.parse_triplets(fact.text, session))
    fact = grounding.FactStatement(fact.text, fact_triplets, fact.fallback)

    captions: list[CaptionedFrame] | None = None
    cache_path = None
    if config.captions_dir:
        cache_path = grounding.caption_cache_path(
            config.captions_dir, task.video_ref, fact
        )
        cached = grounding.load_captions(cache_path, task.video_ref, fact)
        if cached is not None and len(cached) == len(frames):
            captions = cached
    if captions is None:
        captions = grounding.caption_frames(frames, fact, session)
        if cache_path is not None:
            cache_path.parent.mkdir(parents=True, exist_ok=True)
            grounding.save_captions(cache_path, task.video_ref, fact, captions)

    anchor = grounding.retrieve_anchor(captions, fact, session)
    directive = grounding.navigate(task.question, task.question_type, session)
    return grounding.ground_moment(
        anchor, directive, len(frames), config.look_around_window
    )


def _gt_interval_moment(
    task: QATask,
    frames: Sequence[FrameRef],
    intervals: Mapping[str, tuple[float, float]],
) -> GroundedMoment:
    if task.id not in intervals:
        raise GroundingError(f"no ground-truth interval supplied for task '{task.id}'")
    start_s, end_s = intervals[task.id]
    inside = [f.index for f in frames if start_s <= f.timestamp_s <= end_s]
    if not inside:
        mid = (start_s + end_s) / 2.0
        inside = [min(frames, key=lambda f: abs(f.timestamp_s - mid)).index]
    return GroundedMoment(
        anchor_index=inside[0],
        directive=NavigationDirective.LOOK_AROUND,
        start_index=inside[0],
        end_index=inside[-1],
        video_len=len(frames),
    )


def resolve_moment(
    task: QATask,
    session: ProviderSession,
    frames: Sequence[FrameRef],
    config: RunConfig,
    gt_intervals: Mapping[str, tuple[float, float]] | None = None,
) -> GroundedMoment:
    if config.grounding_mode == "full_video":
        # Whole video as evidence: look behind from the very first frame.
        return GroundedMoment(
            anchor_index=0,
            directive=NavigationDirective.LOOK_BEHIND,
            start_index=0,
            end_index=len(frames) - 1,
            video_len=len(frames),
        )
    if config.grounding_mode == "gt_intervals":
        return _gt_interval_moment(task, frames, gt_intervals or {})
    return _grounded_moment(task, session, frames, config)


def evaluate_task(
    task: QATask,
    hub: ProviderHub,
    config: RunConfig,
    frames: Sequence[FrameRef],
    gt_intervals: Mapping[str, tuple[float, float]] | None = None,
) -> tuple[tree.EntailmentForest, ProviderTranscript]:
    """Ground the task once, grow its entailment forest, select its answer."""
    session = hub.session()
    moment = resolve_moment(task, session, frames, config, gt_intervals)
    forest = tree.build_forest(
        task,
        session,
        moment,
        frames,
        max_depth=config.max_depth,
        prover_kind=config.prover_kind,
        prover_frame_count=config.prover_frame_count,
        retries=config.retries,
        static=config.expansion == "static",
    )
    forest.call_counts["moment"] = {
        "start": moment.start_index,
        "anchor": moment.anchor_index,
        "end": moment.end_index,
        "directive": moment.directive.value,
    }
    return forest, session.transcript


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    dataset: str
    variant: str
    config_digest: str
    grounding_mode: str
    expansion: str
    n_tasks: int
    answered: int
    correct: int
    accuracy: float | None
    per_type: dict[str, dict[str, float]]
    calls_by_role: dict[str, int]
    avg_calls_per_task: float
    decompose_calls: int
    avg_decompose_per_root: float
    backend_calls: int
    failed: list[dict[str, str]]
    wall_time_s: float = 0.0

    def to_dict(self, include_volatile: bool = True) -> dict:
        doc = {
            "dataset": self.dataset,
            "variant": self.variant,
            "config_digest": self.config_digest,
            "grounding_mode": self.grounding_mode,
            "expansion": self.expansion,
            "n_tasks": self.n_tasks,
            "answered": self.answered,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "per_type": self.per_type,
            "calls_by_role": self.calls_by_role,
            "avg_calls_per_task": self.avg_calls_per_task,
            "decompose_calls": self.decompose_calls,
            "avg_decompose_per_root": self.avg_decompose_per_root,
            "failed": self.failed,
        }
        if include_volatile:
            # Run diagnostics, not results: cache hits zero these out on replay
            # and timing varies per machine.
            doc["backend_calls"] = self.backend_calls
            doc["wall_time_s"] = self.wall_time_s
        return doc

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization of the results; volatile fields excluded."""
        return json.dumps(self.to_dict(include_volatile=False), sort_keys=True).encode()


@dataclass
class EvalOutcome:
    report: EvalReport
    forests: dict[str, tree.EntailmentForest] = field(default_factory=dict)
    traces: dict[str, dict] = field(default_factory=dict)


def run_eval(
    dataset: Dataset,
    hub: ProviderHub,
    config: RunConfig,
    catalog,
    gt_intervals: Mapping[str, tuple[float, float]] | None = None,
    out_dir: str | Path | None = None,
) -> EvalOutcome:
    """Evaluate every task; per-task failures are recorded and the run completes."""
    config.validate()
    started = time.perf_counter()

    def run_one(task: QATask):
        frames = sample_video_frames(
            catalog.frames(task.video_ref), config.frames_per_video
        )
        return evaluate_task(task, hub, config, frames, gt_intervals)

    results: dict[str, tuple[tree.EntailmentForest, ProviderTranscript]] = {}
    failures: list[dict[str, str]] = []
    if config.concurrency > 1:
        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            futures = {task.id: pool.submit(run_one, task) for task in dataset.tasks}
        for task in dataset.tasks:
            try:
                results[task.id] = futures[task.id].result()
            except (TreeQAError, ProviderError) as exc:
                failures.append({"task_id": task.id, "error": str(exc)})
    else:
        for task in dataset.tasks:
            try:
                results[task.id] = run_one(task)
            except (TreeQAError, ProviderError) as exc:
                log.warning("task %s failed: %s", task.id, exc)
                failures.append({"task_id": task.id, "error": str(exc)})

    answered = correct = 0
    per_type_counts: dict[str, list[int]] = {}
    calls_by_role: dict[str, int] = {}
    decompose_total = 0
    root_count = 0
    backend_calls = 0
    forests: dict[str, tree.EntailmentForest] = {}
    traces: dict[str, dict] = {}
    for task in dataset.tasks:
        if task.id not in results:
            continue
        forest, _transcript = results[task.id]
        forests[task.id] = forest
        traces[task.id] = tree.forest_to_dict(forest, task)
        for role, count in forest.call_counts.get("by_role", {}).items():
            calls_by_role[role] = calls_by_role.get(role, 0) + count
        per_root = forest.call_counts.get("decompose_per_root", [])
        decompose_total += sum(per_root)
        root_count += len(per_root)
        backend_calls += forest.call_counts.get("backend_calls", 0)
        if task.ground_truth_index is not None:
            answered += 1
            hit = forest.selected_index == task.ground_truth_index
            correct += int(hit)
            bucket = per_type_counts.setdefault(task.question_type.value, [0, 0])
            bucket[0] += int(hit)
            bucket[1] += 1

    per_type = {
        name: {"n": total, "correct": hits, "accuracy": hits / total}
        for name, (hits, total) in sorted(per_type_counts.items())
    }
    evaluated = len(results)
    report = EvalReport(
        dataset=dataset.name,
        variant=dataset.variant.value,
        config_digest=config.digest(),
        grounding_mode=config.grounding_mode,
        expansion=config.expansion,
        n_tasks=len(dataset.tasks),
        answered=answered,
        correct=correct,
        accuracy=(correct / answered) if answered else None,
        per_type=per_type,
        calls_by_role=dict(sorted(calls_by_role.items())),
        avg_calls_per_task=(sum(calls_by_role.values()) / evaluated) if evaluated else 0.0,
        decompose_calls=decompose_total,
        avg_decompose_per_root=(decompose_total / root_count) if root_count else 0.0,
        backend_calls=backend_calls,
        failed=failures,
        wall_time_s=time.perf_counter() - started,
    )

    if out_dir is not None:
        write_outputs(report, traces, out_dir)
    return EvalOutcome(report=report, forests=forests, traces=traces)


def write_outputs(report: EvalReport, traces: Mapping[str, dict], out_dir: str | Path) -> None:
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    for task_id, doc in traces.items():
        emit_trace(doc, out / "traces" / f"{task_id}.json")
    (out / "report.json").write_bytes(report.canonical_bytes())
    (out / "report.md").write_text(render_report(report), encoding="utf-8")


def emit_trace(trace: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(trace, sort_keys=True, indent=1), encoding="utf-8")


def load_trace(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def accuracy_from_traces(traces: Sequence[dict]) -> tuple[int, int]:
    """(answered, correct) recomputed from trace documents alone."""
    answered = correct = 0
    for doc in traces:
        gt = doc.get("ground_truth_index")
        if gt is None:
            continue
        answered += 1
        correct += int(doc.get("selected_index") == gt)
    return answered, correct


def prune_events(trace: dict) -> list[tuple[str, float, float]]:
    """(node_id, direct, provisional proof) for every score-pruned node."""
    events = []
    for node_id in sorted(trace["nodes"]):
        node = trace["nodes"][node_id]
        record = node.get("pruned_record")
        if record and record.get("reason") == "score_prune":
            events.append((node_id, node["direct"], record["provisional_proof"]))
    return events


# ---------------------------------------------------------------------------
# Rendering and comparison
# ---------------------------------------------------------------------------

_REPORT_COLUMNS = ("type", "n", "correct", "accuracy")


def _fmt_acc(value: float | None) -> str:
    return "-" if value is None else f"{value:.3f}"


def render_report(report: EvalReport) -> str:
    lines = [
        f"# Evaluation report: {report.dataset} ({report.variant})",
        "",
        f"- config digest: {report.config_digest}",
        f"- grounding mode: {report.grounding_mode}",
        f"- expansion: {report.expansion}",
        f"- tasks: {report.n_tasks} (answered {report.answered}, failed {len(report.failed)})",
        f"- accuracy: {_fmt_acc(report.accuracy)}",
        f"- provider calls/task: {report.avg_calls_per_task:.1f} "
        f"(backend calls: {report.backend_calls})",
        f"- decompositions/root: {report.avg_decompose_per_root:.2f}",
        f"- wall time: {report.wall_time_s:.2f}s",
        "",
        "| " + " | ".join(_REPORT_COLUMNS) + " |",
        "|" + "|".join("---" for _ in _REPORT_COLUMNS) + "|",
    ]
    for name, row in report.per_type.items():
        lines.append(
            f"| {name} | {row['n']} | {row['correct']} | {_fmt_acc(row['accuracy'])} |"
        )
    lines.append("")
    lines.append("| role | calls |")
    lines.append("|---|---|")
    for role, count in report.calls_by_role.items():
        lines.append(f"| {role} | {count} |")
    if report.failed:
        lines.append("")
        lines.append("Failed tasks:")
        for item in report.failed:
            lines.append(f"- {item['task_id']}: {item['error']}")
    return "\n".join(lines) + "\n"


def compare_runs(a: EvalReport | dict, b: EvalReport | dict) -> dict:
    """Accuracy and call-count deltas between two runs of the same dataset."""
    doc_a = a.to_dict() if isinstance(a, EvalReport) else a
    doc_b = b.to_dict() if isinstance(b, EvalReport) else b
    if doc_a["dataset"] != doc_b["dataset"] or doc_a["n_tasks"] != doc_b["n_tasks"]:
        raise MismatchedDatasetsError(
            f"cannot compare '{doc_a['dataset']}' ({doc_a['n_tasks']} tasks) "
            f"with '{doc_b['dataset']}' ({doc_b['n_tasks']} tasks)"
        )
    types = sorted(set(doc_a["per_type"]) | set(doc_b["per_type"]))
    per_type = {}
    for name in types:
        acc_a = doc_a["per_type"].get(name, {}).get("accuracy")
        acc_b = doc_b["per_type"].get(name, {}).get("accuracy")
        delta = None if acc_a is None or acc_b is None else acc_b - acc_a
        per_type[name] = {"a": acc_a, "b": acc_b, "delta": delta}
    acc_a, acc_b = doc_a["accuracy"], doc_b["accuracy"]
    return {
        "dataset": doc_a["dataset"],
        "variant_a": doc_a["variant"],
        "variant_b": doc_b["variant"],
        "accuracy_a": acc_a,
        "accuracy_b": acc_b,
        "accuracy_delta": None if acc_a is None or acc_b is None else acc_b - acc_a,
        "per_type": per_type,
        "decompose_calls_a": doc_a["decompose_calls"],
        "decompose_calls_b": doc_b["decompose_calls"],
        "decompose_calls_delta": doc_b["decompose_calls"] - doc_a["decompose_calls"],
        "avg_calls_delta": doc_b["avg_calls_per_task"] - doc_a["avg_calls_per_task"],
    }


def render_comparison(delta: dict) -> str:
    lines = [
        f"# Run comparison: {delta['dataset']}",
        "",
        f"- A: {delta['variant_a']} accuracy {_fmt_acc(delta['accuracy_a'])}",
        f"- B: {delta['variant_b']} accuracy {_fmt_acc(delta['accuracy_b'])}",
        f"- accuracy delta (B - A): {_fmt_acc(delta['accuracy_delta'])}",
        f"- decompose calls: {delta['decompose_calls_a']} -> {delta['decompose_calls_b']} "
        f"({delta['decompose_calls_delta']:+d})",
        "",
        "| type | A | B | delta |",
        "|---|---|---|---|",
    ]
    for name, row in delta["per_type"].items():
        lines.append(
            f"| {name} | {_fmt_acc(row['a'])} | {_fmt_acc(row['b'])} | "
            f"{_fmt_acc(row['delta'])} |"
        )
    return "\n".join(lines) + "\n"
