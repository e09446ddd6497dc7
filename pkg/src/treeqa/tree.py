"""Entailment forest construction, dynamic expansion, scoring, and backtrace.

One tree is grown per answer option: the root statement merges question and
option, and every internal node is entailed by the conjunction of its two
children. Each node carries a direct score (the prover's belief in the
statement itself) and, once decomposed, a proof score (the product of its
children's scores). Expansion is dynamic: right after one decomposition step,
if the children's direct-score product fails to reach the node's own direct
score, the decomposition is discarded, the node becomes a leaf, and its
subtree is never explored. Kept subtrees are expanded recursively and the
proof score is then recomputed from the children's final scores. The final
score of every node is max(direct, proof), backtraced bottom-up; the answer is
the root with the highest final score (ties broken by lowest option index).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

from . import grounding
from .errors import (
    EmptyForestError,
    MalformedCompletionError,
    ProviderError,
    StructuralError,
)
from .grounding import FrameRef, GroundedMoment
from .providers.base import ProviderSession
from .tasks import QATask

log = logging.getLogger(__name__)

LEAF_MAX_DEPTH = "leaf_max_depth"
LEAF_PRUNED = "leaf_pruned"
INTERNAL = "internal"


@dataclass(frozen=True)
class RootOrigin:
    option_index: int


@dataclass(frozen=True)
class DecomposedOrigin:
    parent_id: str
    child_slot: int  # 0 or 1


@dataclass(frozen=True)
class Statement:
    text: str
    depth: int  # roots sit at depth 1
    origin: RootOrigin | DecomposedOrigin

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("statement text must be non-empty")
        if self.depth < 1:
            raise ValueError("statement depth must be >= 1")


@dataclass(frozen=True)
class ScoreCard:
    direct: float
    proof: float | None
    final: float

    @classmethod
    def of(cls, direct: float, proof: float | None = None) -> "ScoreCard":
        for name, value in (("direct", direct), ("proof", proof)):
            if value is not None and not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} score {value} outside [0, 1]")
        final = direct if proof is None else max(direct, proof)
        return cls(direct=direct, proof=proof, final=final)


@dataclass
class PrunedRecord:
    """Audit record of a discarded decomposition (or of why one never ran)."""

    reason: str  # score_prune | provider_failure | single_option
    provisional_proof: float | None = None
    children: list[tuple[str, float]] = field(default_factory=list)
    detail: str = ""


@dataclass
class EntailmentNode:
    node_id: str
    statement: Statement
    scores: ScoreCard
    children: tuple[str, ...] = ()
    status: str = LEAF_MAX_DEPTH
    pruned_record: PrunedRecord | None = None


@dataclass
class EntailmentForest:
    task_id: str
    roots: list[str]
    nodes: dict[str, EntailmentNode]
    selected_index: int | None = None
    call_counts: dict[str, Any] = field(default_factory=dict)

    def node(self, node_id: str) -> EntailmentNode:
        return self.nodes[node_id]

    def walk(self):
        return self.nodes.values()


def proof_score(children_finals: tuple[float, float]) -> float:
    """Proof confidence of a statement from its two sub-statement scores."""
    a, b = children_finals
    for value in (a, b):
        if not (0.0 <= value <= 1.0):
            raise ValueError(f"score {value} outside [0, 1]")
    return a * b


# ---------------------------------------------------------------------------
# Provider-backed statement operations
# ---------------------------------------------------------------------------


def generate_root_statements(task: QATask, session: ProviderSession) -> list[Statement]:
    """Convert each question-option pair into a declarative root statement.

    One call per option, order preserved; empty completions are retried and
    ultimately rejected by the session's retry policy (configured on the hub).
    """
    statements: list[Statement] = []
    for option in task.options:
        result = session.complete(
            "statement_generation", question=task.question, option=option.text
        )
        statements.append(
            Statement(text=result.text.strip(), depth=1, origin=RootOrigin(option.index))
        )
    return statements


def _parse_two_statements(text: str) -> list[str] | None:
    lines = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        for prefix in ("1.", "2.", "1)", "2)", "-"):
            if line.startswith(prefix):
                line = line[len(prefix):].strip()
                break
        if line.lower().startswith("sub-statement"):
            _, _, rest = line.partition(":")
            line = rest.strip()
        if line:
            lines.append(line)
    return lines if len(lines) == 2 else None


def decompose(
    statement: Statement,
    session: ProviderSession,
    parent_id: str,
    max_depth: int,
    retries: int = 2,
) -> tuple[Statement, Statement]:
    """Produce the two sub-statements whose conjunction entails the statement."""
    if statement.depth >= max_depth:
        raise ValueError(
            f"cannot decompose at depth {statement.depth} (max depth {max_depth})"
        )
    for attempt in range(retries + 1):
        result = session.complete(
            "decomposition",
            statement=statement.text,
            use_cache=attempt == 0,
        )
        parts = _parse_two_statements(result.text)
        if parts is None:
            session.flag_last("malformed_decomposition")
            continue
        first, second = parts
        if first == second or statement.text in (first, second):
            session.flag_last("degenerate_decomposition")
            continue
        return (
            Statement(first, statement.depth + 1, DecomposedOrigin(parent_id, 0)),
            Statement(second, statement.depth + 1, DecomposedOrigin(parent_id, 1)),
        )
    raise MalformedCompletionError(
        f"could not parse two distinct sub-statements after {retries + 1} attempts"
    )


# ---------------------------------------------------------------------------
# Expansion
# ---------------------------------------------------------------------------


@dataclass
class ExpansionContext:
    session: ProviderSession
    moment: GroundedMoment
    frames: Sequence[FrameRef]
    max_depth: int = 5
    prover_kind: str = "video"
    prover_frame_count: int = 8
    retries: int = 2
    static: bool = False  # fixed-depth expansion with no pruning
    decompose_calls: int = 0

    def score(self, statement: Statement) -> float:
        return grounding.prove(
            self.session,
            statement.text,
            self.moment,
            self.frames,
            prover_kind=self.prover_kind,
            frame_count=self.prover_frame_count,
        )


def expand_node(node: EntailmentNode, forest: EntailmentForest, ctx: ExpansionContext) -> None:
    """Grow the subtree under a node that already carries its direct score.

    Dynamic mode decomposes once, scores both children directly, and prunes the
    decomposition outright when the children's direct-score product falls below
    the node's direct score; otherwise the children are attached and expanded
    recursively, and the node's proof score becomes the product of their final
    scores. Static mode always expands to max depth and never prunes. Provider
    failures under a node degrade it to a pruned leaf so one bad call cannot
    kill the whole task.
    """
    if node.statement.depth >= ctx.max_depth:
        node.status = LEAF_MAX_DEPTH
        node.children = ()
        node.scores = ScoreCard.of(node.scores.direct)
        return

    try:
        sub1, sub2 = decompose(
            node.statement, ctx.session, node.node_id, ctx.max_depth, ctx.retries
        )
        ctx.decompose_calls += 1
        direct1 = ctx.score(sub1)
        direct2 = ctx.score(sub2)
    except ProviderError as exc:
        log.warning("expansion failed under %s: %s", node.node_id, exc)
        node.status = LEAF_PRUNED
        node.children = ()
        node.scores = ScoreCard.of(node.scores.direct)
        node.pruned_record = PrunedRecord(reason="provider_failure", detail=str(exc))
        return

    provisional = proof_score((direct1, direct2))
    if not ctx.static and provisional < node.scores.direct:
        node.status = LEAF_PRUNED
        node.children = ()
        node.scores = ScoreCard.of(node.scores.direct)
        node.pruned_record = PrunedRecord(
            reason="score_prune",
            provisional_proof=provisional,
            children=[(sub1.text, direct1), (sub2.text, direct2)],
        )
        return

    child_nodes = []
    for slot, (sub, direct) in enumerate(((sub1, direct1), (sub2, direct2))):
        child = EntailmentNode(
            node_id=f"{node.node_id}.{slot}",
            statement=sub,
            scores=ScoreCard.of(direct),
        )
        forest.nodes[child.node_id] = child
        child_nodes.append(child)
    node.children = tuple(c.node_id for c in child_nodes)
    node.status = INTERNAL

    for child in child_nodes:
        expand_node(child, forest, ctx)

    proof = proof_score((child_nodes[0].scores.final, child_nodes[1].scores.final))
    node.scores = ScoreCard.of(node.scores.direct, proof)


# ---------------------------------------------------------------------------
# Backtrace and answer selection
# ---------------------------------------------------------------------------


def backtrace(forest: EntailmentForest) -> EntailmentForest:
    """Recompute every node's proof and final score bottom-up; idempotent."""

    def visit(node_id: str) -> float:
        node = forest.nodes[node_id]
        if len(node.children) == 0:
            if node.status == INTERNAL:
                raise StructuralError(f"node {node_id} marked internal but has no children")
            node.scores = ScoreCard.of(node.scores.direct)
        elif len(node.children) == 2:
            finals = tuple(visit(child) for child in node.children)
            node.scores = ScoreCard.of(node.scores.direct, proof_score(finals))
        else:
            raise StructuralError(
                f"node {node_id} has {len(node.children)} children (must be 0 or 2)"
            )
        return node.scores.final

    for root_id in forest.roots:
        visit(root_id)
    return forest


def select_answer(forest: EntailmentForest) -> int:
    """Index of the top-scoring root; ties break toward the lowest option index."""
    if not forest.roots:
        raise EmptyForestError(f"forest for task '{forest.task_id}' has no roots")
    finals = [forest.nodes[r].scores.final for r in forest.roots]
    best = max(finals)
    return finals.index(best)


# ---------------------------------------------------------------------------
# Task evaluation
# ---------------------------------------------------------------------------


def build_forest(
    task: QATask,
    session: ProviderSession,
    moment: GroundedMoment,
    frames: Sequence[FrameRef],
    *,
    max_depth: int = 5,
    prover_kind: str = "video",
    prover_frame_count: int = 8,
    retries: int = 2,
    static: bool = False,
) -> EntailmentForest:
    """Build, expand, score, and backtrace the full forest for one task.

    Grounding has already resolved the evidence moment; this routine generates
    one root per option, scores it, grows its tree, and selects the answer.
    A single-option task is answered from the root's direct score alone, with
    no decomposition.
    """
    statements = generate_root_statements(task, session)
    forest = EntailmentForest(task_id=task.id, roots=[], nodes={})
    ctx = ExpansionContext(
        session=session,
        moment=moment,
        frames=frames,
        max_depth=max_depth,
        prover_kind=prover_kind,
        prover_frame_count=prover_frame_count,
        retries=retries,
        static=static,
    )
    decompose_per_root: list[int] = []
    for statement in statements:
        root = EntailmentNode(
            node_id=f"o{statement.origin.option_index}",
            statement=statement,
            scores=ScoreCard.of(ctx.score(statement)),
        )
        forest.nodes[root.node_id] = root
        forest.roots.append(root.node_id)
        before = ctx.decompose_calls
        if len(statements) == 1:
            root.status = LEAF_PRUNED
            root.pruned_record = PrunedRecord(
                reason="single_option",
                detail="degenerate arity: answer determined by the only option",
            )
        else:
            expand_node(root, forest, ctx)
        decompose_per_root.append(ctx.decompose_calls - before)

    backtrace(forest)
    forest.selected_index = select_answer(forest)
    forest.call_counts = {
        "by_role": session.transcript.count_by_role(),
        "decompose_per_root": decompose_per_root,
        "backend_calls": session.backend_calls,
    }
    return forest


# ---------------------------------------------------------------------------
# Trace serialization (stable key order for diff-ability)
# ---------------------------------------------------------------------------


def forest_to_dict(forest: EntailmentForest, task: QATask | None = None) -> dict:
    nodes = {}
    for node_id in sorted(forest.nodes):
        node = forest.nodes[node_id]
        record = None
        if node.pruned_record is not None:
            record = {
                "reason": node.pruned_record.reason,
                "provisional_proof": node.pruned_record.provisional_proof,
                "children": [
                    {"text": text, "direct": direct}
                    for text, direct in node.pruned_record.children
                ],
                "detail": node.pruned_record.detail,
            }
        nodes[node_id] = {
            "text": node.statement.text,
            "depth": node.statement.depth,
            "direct": node.scores.direct,
            "proof": node.scores.proof,
            "final": node.scores.final,
            "status": node.status,
            "children": list(node.children),
            "pruned_record": record,
        }
    # backend_calls is run-volatile (a warm cache zeroes it); traces stay
    # byte-stable across replays without it.
    call_counts = {k: v for k, v in forest.call_counts.items() if k != "backend_calls"}
    doc = {
        "task_id": forest.task_id,
        "roots": list(forest.roots),
        "nodes": nodes,
        "selected_index": forest.selected_index,
        "call_counts": call_counts,
    }
    if task is not None:
        doc["ground_truth_index"] = task.ground_truth_index
        doc["question_type"] = task.question_type.value
    return doc


def forest_from_dict(doc: dict) -> EntailmentForest:
    nodes: dict[str, EntailmentNode] = {}
    for node_id, item in doc["nodes"].items():
        origin: RootOrigin | DecomposedOrigin
        if "." in node_id:
            parent, slot = node_id.rsplit(".", 1)
            origin = DecomposedOrigin(parent, int(slot))
        else:
            origin = RootOrigin(int(node_id.lstrip("o")))
        record = None
        if item.get("pruned_record"):
            raw = item["pruned_record"]
            record = PrunedRecord(
                reason=raw["reason"],
                provisional_proof=raw.get("provisional_proof"),
                children=[(c["text"], c["direct"]) for c in raw.get("children", [])],
                detail=raw.get("detail", ""),
            )
        nodes[node_id] = EntailmentNode(
            node_id=node_id,
            statement=Statement(item["text"], item["depth"], origin),
            scores=ScoreCard(item["direct"], item["proof"], item["final"]),
            children=tuple(item["children"]),
            status=item["status"],
            pruned_record=record,
        )
    return EntailmentForest(
        task_id=doc["task_id"],
        roots=list(doc["roots"]),
        nodes=nodes,
        selected_index=doc.get("selected_index"),
        call_counts=doc.get("call_counts", {}),
    )


def static_decompose_budget(max_depth: int) -> int:
    """Decomposition calls a full static expansion performs per root."""
    return 2 ** (max_depth - 1) - 1


def check_score_invariants(forest: EntailmentForest) -> list[str]:
    """Exact structural and arithmetic invariants over every node; [] when clean."""
    problems: list[str] = []
    for node in forest.walk():
        s = node.scores
        expected_final = s.direct if s.proof is None else max(s.direct, s.proof)
        if s.final != expected_final:
            problems.append(f"{node.node_id}: final {s.final} != {expected_final}")
        if not math.isfinite(s.final) or not (0.0 <= s.final <= 1.0):
            problems.append(f"{node.node_id}: final {s.final} outside [0,1]")
        if node.status == INTERNAL:
            if len(node.children) != 2:
                problems.append(f"{node.node_id}: internal without 2 children")
                continue
            child_finals = tuple(forest.nodes[c].scores.final for c in node.children)
            if s.proof != child_finals[0] * child_finals[1]:
                problems.append(
                    f"{node.node_id}: proof {s.proof} != product {child_finals}"
                )
        else:
            if node.children:
                problems.append(f"{node.node_id}: leaf with children")
            if node.status == LEAF_PRUNED and node.pruned_record is None:
                problems.append(f"{node.node_id}: pruned leaf without audit record")
    return problems
