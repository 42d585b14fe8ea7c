"""Reference game construction: one target plus distinct near-miss distractors."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping

from .domain import A3DS, AttributeSchema, SceneState, render_description

MAX_DIFF = 2
REJECTION_CAP = 1000


class CapacityError(RuntimeError):
    """Not enough distinct distractors within the allowed distance."""


@dataclass(frozen=True)
class ReferenceGame:
    id: str
    seed: int
    target: SceneState
    distractors: tuple[SceneState, ...]

    @property
    def states(self) -> tuple[SceneState, ...]:
        return (self.target, *self.distractors)

    def descriptions(self, schema: AttributeSchema = A3DS) -> list[str]:
        return [render_description(s, schema) for s in self.states]

    def to_json(self, schema: AttributeSchema = A3DS) -> dict:
        return {
            "id": self.id,
            "seed": self.seed,
            "target": render_description(self.target, schema),
            "distractors": [render_description(d, schema) for d in self.distractors],
            "target_assignment": self.target.as_dict(),
            "distractor_assignments": [d.as_dict() for d in self.distractors],
        }

    def dumps(self, schema: AttributeSchema = A3DS) -> str:
        return json.dumps(self.to_json(schema), sort_keys=True)

    @classmethod
    def from_json(cls, doc: Mapping, schema: AttributeSchema = A3DS) -> "ReferenceGame":
        return cls(
            id=doc["id"],
            seed=int(doc["seed"]),
            target=SceneState.from_dict(doc["target_assignment"], schema),
            distractors=tuple(SceneState.from_dict(d, schema) for d in doc["distractor_assignments"]),
        )


def feature_diff(a: SceneState, b: SceneState) -> int:
    if [k for k, _ in a.items] != [k for k, _ in b.items]:
        raise ValueError("states come from different schemas")
    return sum(va != vb for (_, va), (_, vb) in zip(a.items, b.items))


def neighbourhood_size(schema: AttributeSchema, max_diff: int = MAX_DIFF) -> int:
    """Number of states at distance 1..max_diff from any fixed state."""
    sizes = [len(a.values) - 1 for a in schema.attributes]
    total = 0
    for d in range(1, max_diff + 1):
        for combo in combinations(sizes, d):
            prod = 1
            for s in combo:
                prod *= s
            total += prod
    return total


def derive_seed(*parts: object) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def sample_game(
    schema: AttributeSchema,
    n_distractors: int,
    seed: int,
    game_id: str | None = None,
) -> ReferenceGame:
    if n_distractors < 1:
        raise ValueError("n_distractors must be at least 1")
    capacity = neighbourhood_size(schema)
    if n_distractors > capacity:
        raise CapacityError(
            f"{n_distractors} distractors requested but only {capacity} states lie within distance {MAX_DIFF}"
        )
    rng = random.Random(seed)
    target = {a.name: rng.choice(a.values) for a in schema.attributes}
    mutable = [a for a in schema.attributes if len(a.values) > 1]
    target_state = SceneState.from_dict(target, schema)
    seen = {target_state}
    distractors: list[SceneState] = []
    for _ in range(n_distractors):
        for _attempt in range(REJECTION_CAP):
            d = rng.choice((1, 2)) if len(mutable) > 1 else 1
            changed = dict(target)
            for attr in rng.sample(mutable, d):
                changed[attr.name] = rng.choice([v for v in attr.values if v != target[attr.name]])
            state = SceneState.from_dict(changed, schema)
            if state not in seen:
                seen.add(state)
                distractors.append(state)
                break
        else:
            raise CapacityError(f"no new distractor found after {REJECTION_CAP} draws")
    if game_id is None:
        game_id = f"game-{seed:016x}"
    return ReferenceGame(game_id, seed, target_state, tuple(distractors))
