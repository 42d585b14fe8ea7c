"""Experiment grid runner, independent ground-truth scoring and JSONL records."""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Literal

from .domain import A3DS, AttributeSchema, ParseFailure, literal_truth, parse_utterance
from .engine import GenerationResult, contrastivity, run_baseline, run_iterative, run_single_pass
from .games import ReferenceGame, derive_seed, sample_game
from .llm import ChatClient, LlmConfig, LlmEvaluator, LlmProposer
from .oracle import OracleConfig, OracleEvaluator, OracleProposer

logger = logging.getLogger(__name__)

Engine = Literal["iterative", "single_pass", "baseline"]
ENGINES = ("iterative", "single_pass", "baseline")


@dataclass
class ExperimentConfig:
    engine: Engine = "iterative"
    n_distractors: int = 4
    n_samples: int = 4
    n_games: int = 100
    max_iterations: int = 5
    backend: Literal["oracle", "llm"] = "oracle"
    oracle: OracleConfig = field(default_factory=OracleConfig)
    llm: LlmConfig | None = None
    seed: int = 0
    output: str | None = None
    jobs: int = 1
    trace: bool = False

    def __post_init__(self) -> None:
        if isinstance(self.oracle, dict):
            self.oracle = OracleConfig(**self.oracle)
        if isinstance(self.llm, dict):
            self.llm = LlmConfig(**self.llm)
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.backend not in ("oracle", "llm"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.engine == "baseline" and self.backend != "llm":
            raise ValueError("the baseline needs a chat model; use --backend llm")
        if self.n_distractors < 1 or self.n_games < 1 or self.max_iterations < 1 or self.jobs < 1:
            raise ValueError("n_distractors, n_games, max_iterations and jobs must be positive")
        if self.engine != "baseline" and self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.backend == "llm" and self.llm is None:
            self.llm = LlmConfig()

    @property
    def cell(self) -> str:
        samples = "-" if self.engine == "baseline" else self.n_samples
        return f"{self.engine}/d{self.n_distractors}/n{samples}/{self.backend}"

    def snapshot(self) -> dict:
        doc = asdict(self)
        doc.pop("output")
        doc.pop("jobs")
        return doc


@dataclass
class RunRecord:
    game_id: str
    game_seed: int
    cell: str
    engine: str
    n_distractors: int
    n_samples: int
    max_iterations: int
    config: dict
    utterance: str | None = None
    gt_contrastivity: float = 0.0
    gt_true_distractors: int | None = None
    gt_target_true: bool = False
    gt_parse_failure: bool = False
    model_contrastivity: float | None = None
    iterations_used: int = 0
    iteration_max_gt: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    calls: dict = field(default_factory=dict)
    wall_ms: float = 0.0
    error: str | None = None
    trace: dict | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        doc = json.loads(line)
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in known})

    def deterministic(self) -> dict:
        """Everything except wall-clock timing and cache settings."""
        doc = json.loads(self.to_json())
        doc.pop("wall_ms")
        llm = doc["config"].get("llm") or {}
        llm.pop("cache", None)
        llm.pop("cache_file", None)
        return doc


@dataclass(frozen=True)
class GroundTruth:
    contrastivity: Fraction
    target_true: bool
    true_distractors: int | None
    parse_failure: bool


def ground_truth_contrastivity(
    utterance_text: str, game: ReferenceGame, schema: AttributeSchema = A3DS
) -> GroundTruth:
    """Score an utterance symbolically; never touches the backend that produced it."""
    features = parse_utterance(utterance_text, schema)
    if isinstance(features, ParseFailure):
        return GroundTruth(Fraction(0), False, None, True)
    column = [literal_truth(features, s) for s in game.states]
    return GroundTruth(
        contrastivity(column, len(game.distractors)),
        column[0],
        sum(column[1:]),
        False,
    )


def game_seeds(master_seed: int, n_distractors: int, n_games: int) -> list[int]:
    return [derive_seed("game", master_seed, n_distractors, i) for i in range(n_games)]


def make_games(
    master_seed: int, n_distractors: int, n_games: int, schema: AttributeSchema = A3DS
) -> list[ReferenceGame]:
    return [
        sample_game(schema, n_distractors, seed, game_id=f"d{n_distractors}-{i:04d}-{seed:016x}")
        for i, seed in enumerate(game_seeds(master_seed, n_distractors, n_games))
    ]


@dataclass
class Backends:
    proposer: object | None
    evaluator: object | None
    chat: object | None
    client: ChatClient | None = None


def build_backends(config: ExperimentConfig, schema: AttributeSchema = A3DS, http_client=None) -> Backends:
    if config.backend == "oracle":
        return Backends(OracleProposer(config.oracle, schema), OracleEvaluator(config.oracle, schema), None)
    client = ChatClient(config.llm, http_client=http_client)
    mode = "single_pass" if config.engine == "single_pass" else "iterative"
    return Backends(LlmProposer(client, mode), LlmEvaluator(client), client, client)


def _per_game_backends(config: ExperimentConfig, game: ReferenceGame, shared: Backends, schema: AttributeSchema) -> Backends:
    if config.backend != "oracle":
        return shared
    # Noise is keyed on the game seed so that engines compared on shared
    # games see the same evaluator errors.
    oc = OracleConfig(
        seed=derive_seed("oracle", config.oracle.seed, game.seed),
        eval_error_rate=config.oracle.eval_error_rate,
        proposer_mode=config.oracle.proposer_mode,
        proposer_omission_rate=config.oracle.proposer_omission_rate,
    )
    return Backends(OracleProposer(oc, schema), OracleEvaluator(oc, schema), None)


def run_game(
    config: ExperimentConfig, game: ReferenceGame, backends: Backends, schema: AttributeSchema = A3DS
) -> RunRecord:
    record = RunRecord(
        game_id=game.id,
        game_seed=game.seed,
        cell=config.cell,
        engine=config.engine,
        n_distractors=config.n_distractors,
        n_samples=config.n_samples,
        max_iterations=config.max_iterations,
        config=config.snapshot(),
    )
    b = _per_game_backends(config, game, backends, schema)
    start = time.perf_counter()
    try:
        if config.engine == "iterative":
            result = run_iterative(game, b.proposer, b.evaluator, config.n_samples, config.max_iterations, schema)
        elif config.engine == "single_pass":
            result = run_single_pass(game, b.proposer, b.evaluator, config.n_samples, schema)
        else:
            result = run_baseline(game, b.chat, schema)
    except Exception as exc:  # recorded per game; the run continues
        logger.warning("game %s failed: %s", game.id, exc)
        record.error = f"{type(exc).__name__}: {exc}"
        record.wall_ms = (time.perf_counter() - start) * 1000
        return record
    record.wall_ms = (time.perf_counter() - start) * 1000
    _fill(record, result, game, schema, config.trace)
    return record


def _fill(record: RunRecord, result: GenerationResult, game: ReferenceGame, schema: AttributeSchema, trace: bool) -> None:
    gt = ground_truth_contrastivity(result.final_utterance.text, game, schema)
    record.utterance = result.final_utterance.text
    record.gt_contrastivity = float(gt.contrastivity)
    record.gt_true_distractors = gt.true_distractors
    record.gt_target_true = gt.target_true
    record.gt_parse_failure = gt.parse_failure
    if result.final_contrastivity is not None:
        record.model_contrastivity = float(result.final_contrastivity)
    record.iterations_used = result.iterations_used
    per_iter = []
    for it in result.trace:
        scores = [ground_truth_contrastivity(c, game, schema) for c in it.candidates]
        per_iter.append(max((float(s.contrastivity) for s in scores if s.target_true), default=0.0))
    if not result.trace:
        per_iter = [record.gt_contrastivity if gt.target_true else 0.0]
    record.iteration_max_gt = per_iter
    record.warnings = list(result.warnings)
    record.calls = dict(result.calls)
    if trace:
        record.trace = result.to_json(trace=True)


def load_records(path: str | Path) -> list[RunRecord]:
    path = Path(path)
    if not path.exists():
        return []
    with path.open(encoding="utf-8") as fh:
        return [RunRecord.from_json(line) for line in fh if line.strip()]


def run_experiment(
    config: ExperimentConfig,
    schema: AttributeSchema = A3DS,
    http_client=None,
    progress: bool = False,
) -> list[RunRecord]:
    """Run one grid cell. Appends to ``config.output`` when set and skips
    games of the same cell already recorded there."""
    games = make_games(config.seed, config.n_distractors, config.n_games, schema)
    out = Path(config.output) if config.output else None
    done: dict[str, RunRecord] = {}
    if out is not None:
        for r in load_records(out):
            if r.cell == config.cell:
                done.setdefault(r.game_id, r)
    todo = [g for g in games if g.id not in done]
    backends = build_backends(config, schema, http_client)
    lock = threading.Lock()
    fresh: dict[str, RunRecord] = {}

    def work(game: ReferenceGame) -> None:
        record = run_game(config, game, backends, schema)
        with lock:
            fresh[game.id] = record
            if out is not None:
                out.parent.mkdir(parents=True, exist_ok=True)
                with out.open("a", encoding="utf-8") as fh:
                    fh.write(record.to_json() + "\n")

    iterator = todo
    if progress:
        from tqdm import tqdm

        iterator = tqdm(todo, desc=config.cell, unit="game")
    try:
        if config.jobs == 1:
            for g in iterator:
                work(g)
        else:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                list(pool.map(work, iterator))
    finally:
        if backends.client is not None:
            backends.client.close()
    merged = {**done, **fresh}
    return [merged[g.id] for g in games]
