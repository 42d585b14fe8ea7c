"""Propose-evaluate-select engines and the symbolic selectors they share.

The engines never look at attribute structure themselves: they see rendered
state descriptions and utterance strings, and talk to a proposer and a
semantic evaluator through the two protocols below.
"""

from __future__ import annotations

import logging
import re
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Protocol, Sequence

import numpy as np

from .games import ReferenceGame
from .domain import A3DS, AttributeSchema, Utterance

logger = logging.getLogger(__name__)


class EmptyProposalError(ValueError):
    """A proposer response contained no usable utterance."""


class ProposerExhaustedError(RuntimeError):
    pass


class ExtractionError(ValueError):
    pass


class BackendError(RuntimeError):
    """A backend call failed; carries the iteration and stage it failed in."""

    def __init__(self, iteration: int, stage: str, cause: BaseException) -> None:
        super().__init__(f"iteration {iteration}, {stage}: {type(cause).__name__}: {cause}")
        self.iteration = iteration
        self.stage = stage
        self.cause = cause


class ProposerBackend(Protocol):
    def propose_initial(self, target_description: str, n: int, attempt: int = 0) -> list[Utterance]: ...

    def propose_extension(
        self, partial_utterance: str, target_description: str, n: int, attempt: int = 0
    ) -> list[Utterance]: ...


class SemanticBackend(Protocol):
    def evaluate(self, state_description: str, utterance: str) -> tuple[bool, str]: ...


class ChatBackend(Protocol):
    def chat(self, messages: list[dict[str, str]]) -> str: ...


@dataclass
class TruthMatrix:
    """Rows are states (target first), columns are utterances."""

    states: list[str]
    utterances: list[str]
    cells: list[list[bool]]

    def __post_init__(self) -> None:
        if any(len(row) != len(self.utterances) for row in self.cells) or len(self.cells) != len(self.states):
            raise ValueError("truth matrix is not rectangular")

    @property
    def n_distractors(self) -> int:
        return len(self.states) - 1

    def column(self, j: int) -> list[bool]:
        return [row[j] for row in self.cells]

    @property
    def target_true(self) -> list[bool]:
        return list(self.cells[0])

    def contrastivities(self) -> list[Fraction]:
        return [contrastivity(self.column(j), self.n_distractors) for j in range(len(self.utterances))]


def contrastivity(truth_column: Sequence[bool], n_distractors: int) -> Fraction:
    """1 minus the fraction of distractors the utterance is true of.

    ``truth_column[0]`` is the target row and does not enter the value.
    """
    if n_distractors < 1:
        raise ValueError("contrastivity needs at least one distractor")
    if len(truth_column) != n_distractors + 1:
        raise ValueError(f"expected {n_distractors + 1} truth values, got {len(truth_column)}")
    return 1 - Fraction(sum(bool(t) for t in truth_column[1:]), n_distractors)


def select_most_contrastive(C: Sequence[Fraction], target_true: Sequence[bool]) -> list[int]:
    if not C or len(C) != len(target_true):
        raise ValueError("contrastivity and target-truth vectors must be aligned and non-empty")
    pool = [i for i, t in enumerate(target_true) if t] or list(range(len(C)))
    best = max(C[i] for i in pool)
    return [i for i in pool if C[i] == best]


@dataclass(frozen=True)
class Selection:
    index: int
    contrastivity: Fraction
    target_false: bool


def infomax_select(T: TruthMatrix) -> Selection:
    """Greedy argmax of contrastivity over target-true columns, lowest index on ties."""
    if not T.utterances:
        raise ValueError("nothing to select from")
    C = T.contrastivities()
    idx = select_most_contrastive(C, T.target_true)[0]
    return Selection(idx, C[idx], not T.target_true[idx])


def rsa_speaker(T: TruthMatrix, alpha: float = 1.0, cost: Sequence[float] | None = None) -> np.ndarray:
    """Pragmatic speaker distribution over utterances for the target (row 0)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    cells = np.asarray(T.cells, dtype=float)
    n_utt = cells.shape[1]
    cost_arr = np.zeros(n_utt) if cost is None else np.asarray(cost, dtype=float)
    if cost_arr.shape != (n_utt,):
        raise ValueError("cost must have one entry per utterance")
    if not cells[0].any():
        raise ValueError("no utterance is true of the target")
    extension = cells.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        listener = np.where(extension > 0, cells[0] / extension, 0.0)
        logits = alpha * (np.log(listener) - cost_arr)
    logits[cells[0] == 0] = -np.inf
    logits -= logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()


@dataclass
class IterationTrace:
    candidates: list[str]
    truth: TruthMatrix
    contrastivity: list[Fraction]
    survivors: list[int]

    def to_json(self) -> dict:
        return {
            "candidates": self.candidates,
            "truth": self.truth.cells,
            "contrastivity": [str(c) for c in self.contrastivity],
            "survivors": self.survivors,
        }


@dataclass
class GenerationResult:
    final_utterance: Utterance
    final_contrastivity: Fraction | None
    iterations_used: int
    trace: list[IterationTrace] = field(default_factory=list)
    transcripts: list[Any] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    calls: dict[str, int] = field(default_factory=dict)

    def to_json(self, trace: bool = False) -> dict:
        doc = {
            "utterance": self.final_utterance.text,
            "contrastivity": None if self.final_contrastivity is None else str(self.final_contrastivity),
            "iterations_used": self.iterations_used,
            "warnings": self.warnings,
            "calls": self.calls,
        }
        if trace:
            doc["trace"] = [t.to_json() for t in self.trace]
            doc["transcripts"] = [t if isinstance(t, (str, dict)) else asdict(t) for t in self.transcripts]
        return doc


def normalize_text(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower()).rstrip(".!?;, ")


class _Run:
    """Per-game mutable state: truth memo, transcripts, call counts."""

    def __init__(self, game: ReferenceGame, proposer, evaluator, schema: AttributeSchema) -> None:
        self.states = game.descriptions(schema)
        self.target = self.states[0]
        self.proposer = proposer
        self.evaluator = evaluator
        self.memo: dict[tuple[str, str], bool] = {}
        self.transcripts: list[Any] = []
        self.warnings: list[str] = []
        self.calls = {"propose": 0, "evaluate": 0, "evaluate_cached": 0}

    def propose(self, iteration: int, fn, *args) -> list[Utterance]:
        for attempt in range(2):
            self.calls["propose"] += 1
            try:
                out = fn(*args, attempt=attempt)
            except EmptyProposalError:
                out = []
            except Exception as exc:
                raise BackendError(iteration, "propose", exc) from exc
            usable = [u for u in out if u.text.strip()]
            if usable:
                return usable
            logger.info("iteration %d: proposer returned nothing usable (attempt %d)", iteration, attempt + 1)
        raise ProposerExhaustedError(f"iteration {iteration}: proposer returned no usable utterance twice")

    def truth(self, state: str, utterance: str, iteration: int) -> bool:
        key = (state, normalize_text(utterance))
        if key in self.memo:
            self.calls["evaluate_cached"] += 1
            return self.memo[key]
        self.calls["evaluate"] += 1
        try:
            verdict, transcript = self.evaluator.evaluate(state, utterance)
        except Exception as exc:
            raise BackendError(iteration, "evaluate", exc) from exc
        if transcript:
            self.transcripts.append(transcript)
        self.memo[key] = bool(verdict)
        return bool(verdict)

    def evaluate(self, candidates: list[Utterance], iteration: int) -> TruthMatrix:
        texts = [u.text for u in candidates]
        cells = [[self.truth(s, t, iteration) for t in texts] for s in self.states]
        return TruthMatrix(list(self.states), texts, cells)

    def result(self, candidates: list[Utterance], selection: Selection, iterations: int, trace) -> GenerationResult:
        if selection.target_false:
            self.warnings.append("no candidate was judged true of the target")
        return GenerationResult(
            final_utterance=candidates[selection.index],
            final_contrastivity=selection.contrastivity,
            iterations_used=iterations,
            trace=trace,
            transcripts=self.transcripts,
            warnings=self.warnings,
            calls=dict(self.calls),
        )


def dedupe(utterances: Sequence[Utterance]) -> list[Utterance]:
    seen: set[str] = set()
    out = []
    for u in utterances:
        key = normalize_text(u.text)
        if key and key not in seen:
            seen.add(key)
            out.append(u)
    return out


def run_iterative(
    game: ReferenceGame,
    proposer: ProposerBackend,
    evaluator: SemanticBackend,
    n_samples: int,
    max_iterations: int = 5,
    schema: AttributeSchema = A3DS,
) -> GenerationResult:
    if n_samples < 1 or max_iterations < 1:
        raise ValueError("n_samples and max_iterations must be at least 1")
    run = _Run(game, proposer, evaluator, schema)
    trace: list[IterationTrace] = []
    candidates = dedupe(run.propose(1, proposer.propose_initial, run.target, n_samples))
    for iteration in range(1, max_iterations + 1):
        T = run.evaluate(candidates, iteration)
        C = T.contrastivities()
        survivors = select_most_contrastive(C, T.target_true)
        trace.append(IterationTrace([u.text for u in candidates], T, C, survivors))
        witness = any(c == 1 and t for c, t in zip(C, T.target_true))
        if witness:
            return run.result(candidates, infomax_select(T), iteration, trace)
        if iteration == max_iterations:
            run.warnings.append(f"no fully contrastive utterance after {max_iterations} iterations")
            return run.result(candidates, infomax_select(T), iteration, trace)
        extended: list[Utterance] = []
        for i in survivors:
            extended.extend(
                run.propose(iteration + 1, proposer.propose_extension, candidates[i].text, run.target, n_samples)
            )
        candidates = dedupe(extended)
    raise AssertionError("unreachable")


def run_single_pass(
    game: ReferenceGame,
    proposer: ProposerBackend,
    evaluator: SemanticBackend,
    n_samples: int = 10,
    schema: AttributeSchema = A3DS,
) -> GenerationResult:
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    run = _Run(game, proposer, evaluator, schema)
    candidates = dedupe(run.propose(1, proposer.propose_initial, run.target, n_samples))
    T = run.evaluate(candidates, 1)
    C = T.contrastivities()
    selection = infomax_select(T)
    trace = [IterationTrace([u.text for u in candidates], T, C, select_most_contrastive(C, T.target_true))]
    return run.result(candidates, selection, 1, trace)


_UTTERANCE_MARKER = re.compile(r"Utterance:", re.IGNORECASE)
_QUOTED = re.compile(r"[\"“]([^\"”]+)[\"”]")


def extract_baseline_utterance(response: str) -> str:
    if not response or not response.strip():
        raise ExtractionError("empty baseline response")
    markers = list(_UTTERANCE_MARKER.finditer(response))
    if markers:
        tail = response[markers[-1].end() :]
        quoted = _QUOTED.search(tail)
        if quoted and quoted.group(1).strip():
            return quoted.group(1).strip()
        line = tail.strip().splitlines()[0].strip() if tail.strip() else ""
        if line:
            return line
    lines = [ln.strip() for ln in response.splitlines() if ln.strip()]
    return lines[-1]


def run_baseline(
    game: ReferenceGame,
    chat_backend: ChatBackend,
    schema: AttributeSchema = A3DS,
) -> GenerationResult:
    from .prompts import baseline_prompt

    descriptions = game.descriptions(schema)
    prompt = baseline_prompt(descriptions[0], descriptions[1:])
    try:
        response = chat_backend.chat([{"role": "user", "content": prompt}])
    except Exception as exc:
        raise BackendError(1, "baseline", exc) from exc
    text = extract_baseline_utterance(response)
    return GenerationResult(
        final_utterance=Utterance(text),
        final_contrastivity=None,
        iterations_used=1,
        transcripts=[{"prompt": prompt, "response": response}],
        calls={"chat": 1},
    )

