"""Evidence grounding: fact-conditioned captions, anchor retrieval, moments.

The pipeline converts a video's sampled frames into fact-conditioned captions,
parses each caption into semantic triplets, retrieves the frame most relevant
to the question's fact (the anchor), resolves a navigation directive into a
concrete frame interval, and finally scores statements against frames
resampled from that interval.

Directive naming follows the source convention, which is counterintuitive:
"look behind" covers the interval from the anchor to the video's end (evidence
later in time), "look ahead" covers the start of the video up to the anchor
(evidence earlier in time), and "look around" is a fixed-width window centered
on the anchor.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .errors import GroundingError, MalformedCompletionError, ProviderError
from .providers.base import ProviderSession

log = logging.getLogger(__name__)


class NavigationDirective(Enum):
    LOOK_AHEAD = "look ahead"
    LOOK_BEHIND = "look behind"
    LOOK_AROUND = "look around"


@dataclass(frozen=True)
class SemanticTriplet:
    subject: str
    predicate: str
    object: str = ""

    def __post_init__(self):
        if not self.subject.strip() or not self.predicate.strip():
            raise ValueError("triplet subject and predicate must be non-empty")

    def normalized(self) -> tuple[str, str, str]:
        return (
            self.subject.strip().lower(),
            self.predicate.strip().lower(),
            self.object.strip().lower(),
        )


@dataclass(frozen=True)
class FactStatement:
    text: str
    triplets: tuple[SemanticTriplet, ...] = ()
    fallback: bool = False

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("fact text must be non-empty")


@dataclass(frozen=True)
class FrameRef:
    """One sampled frame: its position, its timestamp, and an opaque attachment ref."""

    index: int
    timestamp_s: float
    ref: str


@dataclass(frozen=True)
class CaptionedFrame:
    frame_index: int
    timestamp_s: float
    caption: str
    triplets: tuple[SemanticTriplet, ...] = ()
    failed: bool = False  # sentinel marker: captioner failed, excluded from retrieval


@dataclass(frozen=True)
class GroundedMoment:
    anchor_index: int
    directive: NavigationDirective
    start_index: int
    end_index: int
    video_len: int

    def __post_init__(self):
        ok = (
            0 <= self.start_index <= self.anchor_index <= self.end_index
            and self.end_index <= self.video_len - 1
        )
        if not ok:
            raise ValueError(
                f"invalid moment bounds start={self.start_index} "
                f"anchor={self.anchor_index} end={self.end_index} len={self.video_len}"
            )

    def length(self) -> int:
        return self.end_index - self.start_index + 1


# ---------------------------------------------------------------------------
# Pure interval arithmetic
# ---------------------------------------------------------------------------


def ground_moment(
    anchor: int,
    directive: NavigationDirective,
    video_len: int,
    window: int = 8,
) -> GroundedMoment:
    """Resolve the directive into an inclusive frame interval around the anchor.

    Look-behind spans anchor to the last frame, look-ahead spans the first
    frame to the anchor, and look-around is a window-length interval centered
    on the anchor, shift-clamped into bounds (length preserved whenever the
    video has at least `window` frames).
    """
    if not (0 <= anchor < video_len):
        raise ValueError(f"anchor {anchor} outside video of length {video_len}")
    if window < 1:
        raise ValueError("window must be >= 1")

    if directive is NavigationDirective.LOOK_BEHIND:
        start, end = anchor, video_len - 1
    elif directive is NavigationDirective.LOOK_AHEAD:
        start, end = 0, anchor
    else:
        if video_len <= window:
            start, end = 0, video_len - 1
        else:
            start = anchor - window // 2
            end = start + window - 1
            if start < 0:
                start, end = 0, window - 1
            elif end > video_len - 1:
                end = video_len - 1
                start = end - window + 1
    return GroundedMoment(
        anchor_index=anchor,
        directive=directive,
        start_index=start,
        end_index=end,
        video_len=video_len,
    )


def resample_frames(moment: GroundedMoment, k: int) -> list[int]:
    """Uniformly resample k frame indices across the moment, endpoints included.

    Indices are monotone; duplicates appear when the interval holds fewer than
    k frames.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    start, end = moment.start_index, moment.end_index
    if k == 1:
        return [start]
    span = end - start
    return [start + round(j * span / (k - 1)) for j in range(k)]


def uniform_indices(length: int, k: int) -> list[int]:
    """Up to k distinct uniformly spaced positions into a sequence of `length`."""
    if length <= 0:
        return []
    if k >= length:
        return list(range(length))
    if k == 1:
        return [0]
    picked = [round(j * (length - 1) / (k - 1)) for j in range(k)]
    return sorted(set(picked))


# ---------------------------------------------------------------------------
# Provider-backed operations
# ---------------------------------------------------------------------------


def extract_fact(question: str, session: ProviderSession) -> FactStatement:
    """Extract the event fact referenced by the question as a declarative clause.

    An empty completion falls back to the full question text, flagged in the
    transcript.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    try:
        result = session.complete("fact_extraction", question=question)
        text = result.text.strip()
    except ProviderError:
        text = ""
    if not text:
        session.flag_last("empty_fact_fallback")
        log.warning("fact extraction produced no clause; falling back to question text")
        return FactStatement(text=question.strip(), fallback=True)
    return FactStatement(text=text)


def parse_triplets(text: str, session: ProviderSession) -> list[SemanticTriplet]:
    """Parse `subject | predicate | object` lines out of a triplet completion.

    Malformed completions degrade to an empty list (flagged); retrieval then
    falls back to raw-text overlap.
    """
    if not text.strip():
        raise ValueError("text must be non-empty")
    try:
        result = session.complete("triplet_parsing", text=text)
    except ProviderError:
        session.flag_last("triplet_parse_failed")
        return []
    triplets: list[SemanticTriplet] = []
    for line in result.text.splitlines():
        line = line.strip().strip("()")
        if not line or "|" not in line:
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) == 2:
            parts.append("")
        if len(parts) != 3 or not parts[0] or not parts[1]:
            continue
        triplets.append(SemanticTriplet(parts[0], parts[1], parts[2]))
    if not triplets:
        session.flag_last("no_triplets")
    return triplets


def _prior_caption_block(captions: Sequence[CaptionedFrame]) -> str:
    lines = [f"- frame {c.frame_index}: {c.caption}" for c in captions if not c.failed]
    return "\n".join(lines) if lines else "(none)"


def caption_frames(
    frames: Sequence[FrameRef],
    fact: FactStatement,
    session: ProviderSession,
    parse: bool = True,
) -> list[CaptionedFrame]:
    """Caption every frame, conditioning each request on the fact and on all
    captions generated so far (sequential by construction).

    A captioner failure on one frame yields a sentinel empty-caption entry that
    is excluded from retrieval.
    """
    if not frames:
        raise ValueError("at least one frame is required")
    captioned: list[CaptionedFrame] = []
    for frame in frames:
        try:
            result = session.complete(
                "captioning",
                attachments=(frame.ref,),
                fact=fact.text,
                prior_captions=_prior_caption_block(captioned),
                frame_index=frame.index,
            )
            caption = result.text.strip()
        except ProviderError:
            caption = ""
        if not caption:
            session.flag_last("caption_failed")
            captioned.append(
                CaptionedFrame(frame.index, frame.timestamp_s, caption="", failed=True)
            )
            continue
        triplets = tuple(parse_triplets(caption, session)) if parse else ()
        captioned.append(
            CaptionedFrame(frame.index, frame.timestamp_s, caption, triplets)
        )
    return captioned


def _word_set(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9]+", text.lower()))


def _overlap_score(frame: CaptionedFrame, fact: FactStatement) -> float:
    if fact.triplets and frame.triplets:
        fact_set = {t.normalized() for t in fact.triplets}
        frame_set = {t.normalized() for t in frame.triplets}
        return float(len(fact_set & frame_set))
    return float(len(_word_set(frame.caption) & _word_set(fact.text)))


def _fallback_anchor(candidates: Sequence[CaptionedFrame], fact: FactStatement) -> int:
    best_index = candidates[0].frame_index
    best_score = -1.0
    for frame in candidates:
        score = _overlap_score(frame, fact)
        if score > best_score:
            best_score = score
            best_index = frame.frame_index
    return best_index


def _parse_frame_index(text: str) -> int | None:
    match = re.search(r"-?\d+", text)
    return int(match.group()) if match else None


def retrieve_anchor(
    captions: Sequence[CaptionedFrame],
    fact: FactStatement,
    session: ProviderSession,
) -> int:
    """Retrieve the index of the frame most relevant to the fact.

    The retriever is queried with the fact's triplets against each frame's
    triplets. Invalid responses are retried once; the deterministic fallback
    picks the frame maximizing exact triplet overlap (raw word overlap when
    triplets are missing), earliest frame on ties. Total: always returns an
    index present in `captions`.
    """
    candidates = [c for c in captions if not c.failed]
    if not candidates:
        raise GroundingError("no usable captions for anchor retrieval")
    if len(candidates) == 1:
        return candidates[0].frame_index

    valid = {c.frame_index for c in candidates}
    frame_lines = "\n".join(
        f"frame {c.frame_index}: "
        + ("; ".join("|".join(t.normalized()) for t in c.triplets) or c.caption)
        for c in candidates
    )
    fact_triplets = "; ".join("|".join(t.normalized()) for t in fact.triplets) or "(none)"

    for attempt in range(2):
        try:
            result = session.complete(
                "anchor_retrieval",
                fact=fact.text,
                fact_triplets=fact_triplets,
                frame_lines=frame_lines,
                use_cache=attempt == 0,
            )
        except ProviderError:
            break
        index = _parse_frame_index(result.text)
        if index is not None and index in valid:
            return index
        session.flag_last("invalid_frame_id")
    session.flag_last("retrieval_fallback")
    return _fallback_anchor(candidates, fact)


def navigate(question: str, question_type, session: ProviderSession) -> NavigationDirective:
    """Pick the navigation directive for the question's evidence.

    Evidence later than the fact (e.g. "what happened after ...") maps to
    look-behind, evidence earlier to look-ahead, causal/descriptive questions
    to look-around. Malformed completions default to look-around, flagged.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    type_name = getattr(question_type, "value", str(question_type))
    try:
        result = session.complete(
            "navigation", question=question, question_type=type_name
        )
    except ProviderError:
        session.flag_last("navigation_fallback")
        return NavigationDirective.LOOK_AROUND
    reply = result.text.strip().lower()
    if "behind" in reply:
        return NavigationDirective.LOOK_BEHIND
    if "ahead" in reply:
        return NavigationDirective.LOOK_AHEAD
    if "around" in reply:
        return NavigationDirective.LOOK_AROUND
    session.flag_last("navigation_fallback")
    return NavigationDirective.LOOK_AROUND


# ---------------------------------------------------------------------------
# Statement proving
# ---------------------------------------------------------------------------


def prove(
    session: ProviderSession,
    statement_text: str,
    moment: GroundedMoment,
    frames: Sequence[FrameRef],
    prover_kind: str = "video",
    frame_count: int = 8,
) -> float:
    """Confidence that the statement holds, judged on frames resampled from the moment.

    A video prover receives all resampled frames in one call; an image prover
    is called once per frame and the scores are averaged. Partial image-prover
    failures degrade to the mean over the successful frames (at least one is
    required).
    """
    indices = resample_frames(moment, frame_count)
    refs = [frames[i].ref for i in indices]
    if prover_kind == "video":
        return session.score_binary(
            "verification", attachments=refs, statement=statement_text
        )
    if prover_kind != "image":
        raise ValueError(f"unknown prover kind '{prover_kind}'")
    scores: list[float] = []
    failures = 0
    for ref in refs:
        try:
            scores.append(
                session.score_binary(
                    "verification", attachments=[ref], statement=statement_text
                )
            )
        except ProviderError:
            failures += 1
    if not scores:
        raise MalformedCompletionError(
            f"image prover failed on all {len(refs)} frames"
        )
    if failures:
        session.flag_last("partial_prover")
    return sum(scores) / len(scores)


# ---------------------------------------------------------------------------
# Caption cache files (fact-conditioned, so the fact hash is part of the key)
# ---------------------------------------------------------------------------


def fact_hash(fact: FactStatement) -> str:
    return hashlib.sha256(fact.text.encode("utf-8")).hexdigest()[:16]


def caption_cache_path(root: str | Path, video_ref: str, fact: FactStatement) -> Path:
    safe = re.sub(r"[^A-Za-z0-9._-]", "_", video_ref)
    return Path(root) / f"{safe}.{fact_hash(fact)}.json"


def save_captions(
    path: str | Path,
    video_ref: str,
    fact: FactStatement,
    captions: Sequence[CaptionedFrame],
) -> None:
    doc = {
        "video_ref": video_ref,
        "fact_hash": fact_hash(fact),
        "frames": [
            {
                "index": c.frame_index,
                "timestamp_s": c.timestamp_s,
                "caption": c.caption,
                "triplets": [list(t.normalized()) for t in c.triplets],
                "failed": c.failed,
            }
            for c in captions
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_captions(
    path: str | Path, video_ref: str, fact: FactStatement
) -> list[CaptionedFrame] | None:
    """Load a caption cache file; None when absent or keyed to another fact."""
    path = Path(path)
    if not path.exists():
        return None
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    if doc.get("video_ref") != video_ref or doc.get("fact_hash") != fact_hash(fact):
        return None
    frames = []
    for item in doc.get("frames", []):
        frames.append(
            CaptionedFrame(
                frame_index=int(item["index"]),
                timestamp_s=float(item["timestamp_s"]),
                caption=item["caption"],
                triplets=tuple(
                    SemanticTriplet(s, p, o) for s, p, o in item.get("triplets", [])
                ),
                failed=bool(item.get("failed", False)),
            )
        )
    return frames
