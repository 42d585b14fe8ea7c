"""Deterministic symbolic proposer and evaluator over the A3DS grammar.

Randomness is drawn from generators keyed by the inputs of each call, so
results do not depend on call order or on concurrent use.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from itertools import combinations
from typing import Literal

from .domain import (
    A3DS,
    AttributeSchema,
    ParseFailure,
    Utterance,
    literal_truth,
    parse_description,
    parse_utterance,
    render_features,
)
from .engine import normalize_text

ProposerMode = Literal["single_feature", "subsets_le2", "full_random"]
PROPOSER_MODES = ("single_feature", "subsets_le2", "full_random")


@dataclass(frozen=True)
class OracleConfig:
    seed: int = 0
    eval_error_rate: float = 0.0
    proposer_mode: ProposerMode = "single_feature"
    proposer_omission_rate: float = 0.0

    def __post_init__(self) -> None:
        for name in ("eval_error_rate", "proposer_omission_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.proposer_mode not in PROPOSER_MODES:
            raise ValueError(f"unknown proposer mode {self.proposer_mode!r}")


def _keyed_rng(*parts: object) -> random.Random:
    digest = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode(), digest_size=16).digest()
    return random.Random(int.from_bytes(digest, "big"))


def _unit(*parts: object) -> float:
    digest = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2**64


class OracleProposer:
    def __init__(self, config: OracleConfig = OracleConfig(), schema: AttributeSchema = A3DS) -> None:
        self.config = config
        self.schema = schema

    def _target(self, description: str) -> dict[str, str]:
        return parse_description(description, self.schema).as_dict()

    def _pool(self, rng: random.Random) -> list[str]:
        names = list(self.schema.names)
        rate = self.config.proposer_omission_rate
        kept = [n for n in names if rng.random() >= rate]
        return kept or [rng.choice(names)]

    def _subsets(self, names: list[str]) -> list[tuple[str, ...]]:
        mode = self.config.proposer_mode
        if mode == "single_feature":
            return [(n,) for n in names]
        top = 2 if mode == "subsets_le2" else len(names)
        return [c for k in range(1, top + 1) for c in combinations(names, k)]

    def propose_initial(self, target_description: str, n: int, attempt: int = 0) -> list[Utterance]:
        if n < 1:
            raise ValueError("n must be at least 1")
        target = self._target(target_description)
        rng = _keyed_rng("initial", self.config.seed, target_description, n, attempt)
        names = self._pool(rng)
        subsets = self._subsets(names)
        if self.config.proposer_mode == "single_feature":
            chosen = rng.sample(subsets, min(n, len(subsets)))
        else:
            # Draw a size first so small and large sub-descriptions are equally likely.
            by_size: dict[int, list[tuple[str, ...]]] = {}
            for s in subsets:
                by_size.setdefault(len(s), []).append(s)
            chosen = []
            while len(chosen) < n and any(by_size.values()):
                size = rng.choice([k for k, v in by_size.items() if v])
                pick = by_size[size].pop(rng.randrange(len(by_size[size])))
                chosen.append(pick)
        return [self._utterance({a: target[a] for a in subset}) for subset in chosen]

    def propose_extension(
        self, partial_utterance: str, target_description: str, n: int, attempt: int = 0
    ) -> list[Utterance]:
        if n < 1:
            raise ValueError("n must be at least 1")
        target = self._target(target_description)
        partial = parse_utterance(partial_utterance, self.schema)
        if isinstance(partial, ParseFailure):
            raise ValueError(f"cannot parse partial utterance {partial_utterance!r}: {partial.reason}")
        # A partial that is false of the target (possible under evaluator noise)
        # is repeated as is, like a literal-minded model would.
        unused = [a for a in self.schema.names if a not in partial]
        if not unused:
            return [Utterance(partial_utterance, partial)]
        rng = _keyed_rng("extend", self.config.seed, normalize_text(partial_utterance), target_description, n, attempt)
        chosen = rng.sample(unused, min(n, len(unused)))
        return [self._utterance({**partial, a: target[a]}) for a in chosen]

    def _utterance(self, features: dict[str, str]) -> Utterance:
        ordered = {a: features[a] for a in self.schema.names if a in features}
        return Utterance(render_features(ordered, self.schema), ordered)


class OracleEvaluator:
    def __init__(self, config: OracleConfig = OracleConfig(), schema: AttributeSchema = A3DS) -> None:
        self.config = config
        self.schema = schema

    def evaluate(self, state_description: str, utterance: str) -> tuple[bool, dict]:
        state = parse_description(state_description, self.schema)
        features = parse_utterance(utterance, self.schema)
        if isinstance(features, ParseFailure):
            return False, {"utterance": utterance, "warning": f"parse failure: {features.reason}"}
        truth = literal_truth(features, state)
        flipped = _unit("flip", self.config.seed, state_description, normalize_text(utterance)) < self.config.eval_error_rate
        verdict = truth != flipped
        return verdict, {"utterance": utterance, "features": features, "truth": truth, "flipped": flipped}
