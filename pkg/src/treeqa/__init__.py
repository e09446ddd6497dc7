"""Entailment-tree reasoning for multiple-choice video QA.

Answer options become declarative statements, statements are recursively
decomposed into sub-statement pairs, every statement is verified against a
grounded video moment, and the answer is read off the forest by backtracing
max(direct, proof) scores. All model inference sits behind pluggable
providers, so the whole pipeline runs offline against deterministic oracles.
"""

from .config import RunConfig, load_config
from .grounding import (
    CaptionedFrame,
    FactStatement,
    FrameRef,
    GroundedMoment,
    NavigationDirective,
    SemanticTriplet,
    ground_moment,
    resample_frames,
)
from .harness import EvalReport, build_hub, evaluate_task, run_eval
from .prompts import ProviderRole
from .providers import ProviderHub, ScriptedBackend
from .synth import OracleBackend, WorldSpec, generate_suite, generate_world
from .tasks import Dataset, QATask, load_dataset, save_dataset, validate_task
from .tree import (
    EntailmentForest,
    EntailmentNode,
    ScoreCard,
    Statement,
    backtrace,
    build_forest,
    proof_score,
    select_answer,
)

__version__ = "0.1.0"

__all__ = [
    "CaptionedFrame",
    "Dataset",
    "EntailmentForest",
    "EntailmentNode",
    "EvalReport",
    "FactStatement",
    "FrameRef",
    "GroundedMoment",
    "NavigationDirective",
    "OracleBackend",
    "ProviderHub",
    "ProviderRole",
    "QATask",
    "RunConfig",
    "ScoreCard",
    "ScriptedBackend",
    "SemanticTriplet",
    "Statement",
    "WorldSpec",
    "backtrace",
    "build_forest",
    "build_hub",
    "evaluate_task",
    "generate_suite",
    "generate_world",
    "ground_moment",
    "load_config",
    "load_dataset",
    "proof_score",
    "resample_frames",
    "run_eval",
    "save_dataset",
    "select_answer",
    "validate_task",
]
