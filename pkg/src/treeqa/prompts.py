"""Prompt templates for every model role.

Templates are data, not code: the reasoning engine never embeds prompt text, so
wording changes here do not touch control flow. Each template declares the role
it is issued under and a version tag that participates in cache keys and
provenance records.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from enum import Enum


class ProviderRole(Enum):
    CAPTIONER = "captioner"
    DECOMPOSER = "decomposer"
    RETRIEVER = "retriever"
    NAVIGATOR = "navigator"
    FACT_EXTRACTOR = "fact_extractor"
    TRIPLET_PARSER = "triplet_parser"
    PROVER = "prover"
    REWRITER = "rewriter"


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    role: ProviderRole
    version: str
    text: str

    def placeholders(self) -> set[str]:
        return {
            field
            for _, field, _, _ in string.Formatter().parse(self.text)
            if field is not None
        }

    def render(self, **args: object) -> str:
        """Substitute template placeholders; every placeholder must be bound."""
        missing = self.placeholders() - set(args)
        if missing:
            raise KeyError(
                f"template '{self.name}' missing arguments: {', '.join(sorted(missing))}"
            )
        return self.text.format(**args)


_TEMPLATES = [
    PromptTemplate(
        name="statement_generation",
        role=ProviderRole.DECOMPOSER,
        version="v1",
        text=(
            "Convert the question and one answer candidate into a single declarative "
            "sentence that preserves the meaning of the question-answer pair. Reply "
            "with the sentence only.\n"
            "Question: {question}\n"
            "Answer candidate: {option}\n"
            "Statement:"
        ),
    ),
    PromptTemplate(
        name="decomposition",
        role=ProviderRole.DECOMPOSER,
        version="v1",
        text=(
            "Break the statement below into two simpler sub-statements such that the "
            "statement is true if and only if both sub-statements are true. Reply with "
            "exactly two lines:\n"
            "1. <first sub-statement>\n"
            "2. <second sub-statement>\n"
            "Statement: {statement}"
        ),
    ),
    PromptTemplate(
        name="fact_extraction",
        role=ProviderRole.FACT_EXTRACTOR,
        version="v1",
        text=(
            "The question below refers to an event that is visible in a video. State "
            "that event as one short declarative clause, dropping the interrogative "
            "part of the question. Reply with the clause only.\n"
            "Question: {question}\n"
            "Fact:"
        ),
    ),
    PromptTemplate(
        name="captioning",
        role=ProviderRole.CAPTIONER,
        version="v1",
        text=(
            "Describe what happens in the attached video frame in one sentence. Focus "
            "on details relevant to this fact: {fact}\n"
            "Captions of the earlier frames, in order:\n"
            "{prior_captions}\n"
            "Frame {frame_index} caption:"
        ),
    ),
    PromptTemplate(
        name="triplet_parsing",
        role=ProviderRole.TRIPLET_PARSER,
        version="v1",
        text=(
            "Extract the semantic triplets from the text below. Reply with one "
            "triplet per line in the form: subject | predicate | object (leave the "
            "object blank for intransitive descriptions).\n"
            "Text: {text}"
        ),
    ),
    PromptTemplate(
        name="anchor_retrieval",
        role=ProviderRole.RETRIEVER,
        version="v1",
        text=(
            "A fact and the structured semantics of each video frame are listed "
            "below. Reply with the index of the single frame most relevant to the "
            "fact, as a bare integer.\n"
            "Fact: {fact}\n"
            "Fact triplets: {fact_triplets}\n"
            "Frames:\n{frame_lines}\n"
            "Most relevant frame index:"
        ),
    ),
    PromptTemplate(
        name="navigation",
        role=ProviderRole.NAVIGATOR,
        version="v1",
        text=(
            "The question below reasons about a fact event in a video. Decide where "
            "the evidence needed to answer it lies relative to that event, and reply "
            "with exactly one of: look ahead (evidence is earlier than the event), "
            "look behind (evidence is later than the event), look around (evidence "
            "surrounds the event).\n"
            "Question: {question}\n"
            "Question type: {question_type}\n"
            "Navigation:"
        ),
    ),
    PromptTemplate(
        name="verification",
        role=ProviderRole.PROVER,
        version="v1",
        text=(
            "Based only on the attached video frames, is the following statement "
            "true? Answer with exactly one word, True or False.\n"
            "Statement: {statement}\n"
            "Answer:"
        ),
    ),
    PromptTemplate(
        name="blind_probe",
        role=ProviderRole.PROVER,
        version="v1",
        text=(
            "Answer the multiple-choice question using the text alone; no video is "
            "provided. Reply with the number of the best option.\n"
            "Question: {question}\n"
            "Options:\n{option_lines}\n"
            "Best option number:"
        ),
    ),
    PromptTemplate(
        name="rewrite_distractors",
        role=ProviderRole.REWRITER,
        version="v1",
        text=(
            "Rewrite the wrong answer options of this {dataset_name} question so "
            "that the correct answer can no longer be guessed from text associations "
            "alone. Keep the question and the correct answer exactly as they are. "
            "Each new wrong option must stay plausible for the question, differ from "
            "the original wrong options, and stay inconsistent with the correct "
            "answer. Reply with one line per wrong option in the form "
            "'OPTION <index>: <new text>'.\n"
            "Question: {question}\n"
            "Correct answer (do not change): {ground_truth}\n"
            "Wrong options to rewrite:\n{distractor_lines}"
        ),
    ),
]

REGISTRY: dict[str, PromptTemplate] = {t.name: t for t in _TEMPLATES}


def get_template(name: str) -> PromptTemplate:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"no prompt template named '{name}'") from None
