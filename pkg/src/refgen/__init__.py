"""Scaffolded propose-evaluate-select generation of contrastive referring expressions."""

from .domain import (
    A3DS,
    AttributeSchema,
    ParseFailure,
    SceneState,
    Utterance,
    enumerate_states,
    literal_truth,
    parse_utterance,
    render_description,
    render_features,
)
from .engine import (
    GenerationResult,
    TruthMatrix,
    contrastivity,
    infomax_select,
    rsa_speaker,
    run_baseline,
    run_iterative,
    run_single_pass,
    select_most_contrastive,
)
from .games import ReferenceGame, feature_diff, sample_game

__all__ = [
    "A3DS",
    "AttributeSchema",
    "GenerationResult",
    "ParseFailure",
    "ReferenceGame",
    "SceneState",
    "TruthMatrix",
    "Utterance",
    "contrastivity",
    "enumerate_states",
    "feature_diff",
    "infomax_select",
    "literal_truth",
    "parse_utterance",
    "render_description",
    "render_features",
    "rsa_speaker",
    "run_baseline",
    "run_iterative",
    "run_single_pass",
    "sample_game",
    "select_most_contrastive",
]
