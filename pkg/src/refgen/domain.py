"""A3DS attribute space, canonical rendering and exact symbolic semantics.

States are total attribute assignments; utterances are parsed into partial
assignments (feature sets) and are literally true of a state iff the feature
set is a subset of the state's assignment.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

COLORS = ("red", "orange", "yellow", "green", "blue", "purple", "pink")
SHAPES = ("block", "ball", "pill", "cylinder")
SIZES = ("small", "medium", "big")
POSITIONS = ("left corner", "middle", "right corner")

DEFAULT_TEMPLATE = (
    "The floor is {floor_color}, the wall is {wall_color}, "
    "the {object_color} {size} {shape} is in the {position}."
)

# Tokens that may sit between an ambiguous lexeme and the noun that resolves it.
_LOOKBACK_FILLER = frozenset(
    "is are was were be been being a an the of in colored coloured color colour "
    "painted all entirely also".split()
)
_LOOKAHEAD_FILLER = frozenset("colored coloured painted".split())
_NEGATORS = frozenset("not no never isnt arent wasnt werent doesnt nor neither".split())
_LOOKBACK_WINDOW = 4


@dataclass(frozen=True)
class Attribute:
    name: str
    values: tuple[str, ...]
    # Nouns naming the carrier of the attribute; "@other" expands to the
    # lexicon of attribute "other".
    anchors: tuple[str, ...] = ()


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[Attribute, ...]
    template: str | None = None
    aliases: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate attribute names in schema: {names}")
        for attr in self.attributes:
            if not attr.values:
                raise ValueError(f"attribute {attr.name!r} has an empty lexicon")
            if len(set(attr.values)) != len(attr.values):
                raise ValueError(f"attribute {attr.name!r} has duplicate lexemes")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def attribute(self, name: str) -> Attribute:
        for attr in self.attributes:
            if attr.name == name:
                return attr
        raise KeyError(name)

    def values(self, name: str) -> tuple[str, ...]:
        return self.attribute(name).values

    @property
    def n_states(self) -> int:
        n = 1
        for attr in self.attributes:
            n *= len(attr.values)
        return n

    def to_json(self) -> dict:
        doc: dict = {
            "attributes": [
                {"name": a.name, "values": list(a.values), "anchors": list(a.anchors)}
                for a in self.attributes
            ]
        }
        if self.template is not None:
            doc["template"] = self.template
        if self.aliases:
            doc["aliases"] = dict(self.aliases)
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "AttributeSchema":
        attrs = tuple(
            Attribute(
                name=a["name"],
                values=tuple(a["values"]),
                anchors=tuple(a.get("anchors", ())),
            )
            for a in doc["attributes"]
        )
        return cls(attrs, template=doc.get("template"), aliases=dict(doc.get("aliases", {})))

    @classmethod
    def load(cls, path: str | Path) -> "AttributeSchema":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


A3DS = AttributeSchema(
    attributes=(
        Attribute("floor_color", COLORS, anchors=("floor",)),
        Attribute("wall_color", COLORS, anchors=("wall",)),
        Attribute("object_color", COLORS, anchors=("object", "@shape")),
        Attribute("shape", SHAPES),
        Attribute("size", SIZES),
        Attribute("position", POSITIONS),
    ),
    template=DEFAULT_TEMPLATE,
)


@dataclass(frozen=True)
class SceneState:
    """A total assignment, stored as (attribute, value) pairs in schema order."""

    items: tuple[tuple[str, str], ...]

    def __getitem__(self, name: str) -> str:
        for key, value in self.items:
            if key == name:
                return value
        raise KeyError(name)

    def as_dict(self) -> dict[str, str]:
        return dict(self.items)

    @classmethod
    def from_dict(cls, assignment: Mapping[str, str], schema: AttributeSchema = A3DS) -> "SceneState":
        missing = [n for n in schema.names if n not in assignment]
        extra = [k for k in assignment if k not in schema.names]
        if missing or extra:
            raise ValueError(f"invalid assignment: missing={missing} extra={extra}")
        for name in schema.names:
            if assignment[name] not in schema.values(name):
                raise ValueError(f"{assignment[name]!r} is not a value of {name!r}")
        return cls(tuple((n, assignment[n]) for n in schema.names))


FeatureSet = dict  # partial map attribute name -> lexeme


@dataclass(frozen=True)
class ParseFailure:
    reason: str

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True)
class Utterance:
    text: str
    parsed: dict[str, str] | ParseFailure | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("utterance text must be non-empty")


def enumerate_states(schema: AttributeSchema = A3DS) -> Iterator[SceneState]:
    for combo in itertools.product(*(a.values for a in schema.attributes)):
        yield SceneState(tuple(zip(schema.names, combo)))


def literal_truth(features: Mapping[str, str], state: SceneState) -> bool:
    assignment = state.as_dict()
    return all(assignment.get(k) == v for k, v in features.items())


def _article(word: str) -> str:
    return "an" if word[:1] in "aeiou" else "a"


def _object_clause(f: Mapping[str, str]) -> str | None:
    color, size, shape, pos = (f.get(k) for k in ("object_color", "size", "shape", "position"))
    if not any((color, size, shape, pos)):
        return None
    if pos is not None:
        np_words = [w for w in (color, size, shape or "object") if w]
        return f"the {' '.join(np_words)} is in the {pos}"
    if shape is not None:
        np_words = [w for w in (color, size, shape) if w]
        return f"the object is {_article(np_words[0])} {' '.join(np_words)}"
    return "the object is " + " and ".join(w for w in (color, size) if w)


_OBJECT_ATTRS = ("object_color", "size", "shape", "position")


def render_features(features: Mapping[str, str], schema: AttributeSchema = A3DS) -> str:
    """Render a (partial) feature set as one sentence in canonical attribute order.

    A full A3DS assignment renders identically to the scene template.
    """
    if not features:
        raise ValueError("cannot render an empty feature set")
    clauses: list[str] = []
    object_done = False
    names = set(schema.names)
    object_style = set(_OBJECT_ATTRS) <= names
    for name in schema.names:
        if name not in features:
            continue
        if object_style and name in _OBJECT_ATTRS:
            if not object_done:
                clause = _object_clause(features)
                if clause:
                    clauses.append(clause)
                object_done = True
        elif name in ("floor_color", "wall_color"):
            clauses.append(f"the {name.split('_')[0]} is {features[name]}")
        else:
            clauses.append(f"the {name.replace('_', ' ')} is {features[name]}")
    text = clauses[0] if len(clauses) == 1 else (
        " and ".join(clauses) if len(clauses) == 2 else ", ".join(clauses)
    )
    return text[0].upper() + text[1:] + "."


def render_description(state: SceneState, schema: AttributeSchema = A3DS) -> str:
    if schema.template is not None:
        return schema.template.format(**state.as_dict())
    return render_features(state.as_dict(), schema)


def _tokenize(text: str) -> list[str]:
    text = text.lower().replace("'", "").replace("’", "")
    return re.findall(r"[a-z0-9]+", text)


class _Lexicon:
    """Precomputed lookup tables for one schema."""

    def __init__(self, schema: AttributeSchema) -> None:
        self.schema = schema
        # surface n-gram -> (lexeme, attributes carrying it)
        self.entries: dict[tuple[str, ...], tuple[str, tuple[str, ...]]] = {}
        owners: dict[str, list[str]] = {}
        for attr in schema.attributes:
            for value in attr.values:
                owners.setdefault(value, []).append(attr.name)
        for value, attrs in owners.items():
            self.entries[tuple(_tokenize(value))] = (value, tuple(attrs))
        for alias, value in schema.aliases.items():
            if value not in owners:
                raise ValueError(f"alias {alias!r} targets unknown lexeme {value!r}")
            self.entries[tuple(_tokenize(alias))] = (value, tuple(owners[value]))
        self.max_len = max(len(k) for k in self.entries)
        # anchor token -> attributes it resolves to
        self.anchors: dict[str, set[str]] = {}
        for attr in schema.attributes:
            for anchor in attr.anchors:
                if anchor.startswith("@"):
                    lexemes = set(schema.values(anchor[1:]))
                    surfaces = list(lexemes) + [a for a, v in schema.aliases.items() if v in lexemes]
                    words = [w for s in surfaces for w in _tokenize(s)]
                else:
                    words = _tokenize(anchor)
                for w in words:
                    self.anchors.setdefault(w, set()).add(attr.name)
                    self.anchors.setdefault(w + "s", set()).add(attr.name)

    def mentions(self, tokens: list[str]) -> list[tuple[int, int, str, tuple[str, ...]]]:
        out = []
        i = 0
        while i < len(tokens):
            for n in range(min(self.max_len, len(tokens) - i), 0, -1):
                hit = self.entries.get(tuple(tokens[i : i + n]))
                if hit is not None:
                    out.append((i, i + n, hit[0], hit[1]))
                    i += n
                    break
            else:
                i += 1
        return out


_LEXICON_CACHE: dict[int, _Lexicon] = {}


def _lexicon(schema: AttributeSchema) -> _Lexicon:
    lex = _LEXICON_CACHE.get(id(schema))
    if lex is None or lex.schema is not schema:
        lex = _Lexicon(schema)
        _LEXICON_CACHE[id(schema)] = lex
    return lex


def _resolve(
    tokens: list[str],
    start: int,
    end: int,
    candidates: tuple[str, ...],
    spans: dict[int, tuple[str, ...]],
    lex: _Lexicon,
) -> str | None:
    # Forward: "purple floor", "red small block".
    j = end
    while j < len(tokens):
        tok = tokens[j]
        hits = lex.anchors.get(tok, set()) & set(candidates)
        if hits:
            return next(iter(hits)) if len(hits) == 1 else None
        owners = spans.get(j)
        if tok in _LOOKAHEAD_FILLER or tok in ("a", "an"):
            j += 1
        elif owners is not None and len(owners) == 1 and owners[0] not in candidates:
            j += 1  # an unambiguous modifier such as a size word
        else:
            break
    # Backward: "the floor is purple", "the block is red".
    j = start - 1
    while j >= 0 and start - j <= _LOOKBACK_WINDOW:
        tok = tokens[j]
        hits = lex.anchors.get(tok, set()) & set(candidates)
        if hits:
            return next(iter(hits)) if len(hits) == 1 else None
        if tok in lex.anchors or (tok not in _LOOKBACK_FILLER and tok not in _NEGATORS):
            break
        j -= 1
    return None


def parse_utterance(text: str, schema: AttributeSchema = A3DS) -> dict[str, str] | ParseFailure:
    """Extract attribute-value mentions from free text.

    Lexemes unique to one attribute are taken at face value; lexemes shared
    between attributes (the colour words) are attributed via a neighbouring
    anchor noun. Unresolvable mentions are ignored. Two different values for
    one attribute, or a negated mention, yield a ``ParseFailure``.
    """
    lex = _lexicon(schema)
    tokens = _tokenize(text)
    mentions = lex.mentions(tokens)
    spans: dict[int, tuple[str, ...]] = {}
    for start, end, _, attrs in mentions:
        for k in range(start, end):
            spans[k] = attrs
    features: dict[str, str] = {}
    for start, end, value, attrs in mentions:
        if len(attrs) == 1:
            attr = attrs[0]
        else:
            attr = _resolve(tokens, start, end, attrs, spans, lex)
            if attr is None:
                continue
        if any(t in _NEGATORS for t in tokens[max(0, start - 3) : start]):
            return ParseFailure(f"negated mention of {value!r}")
        prior = features.get(attr)
        if prior is not None and prior != value:
            return ParseFailure(f"conflicting values for {attr}: {prior!r} vs {value!r}")
        features[attr] = value
    return features


def parse_description(text: str, schema: AttributeSchema = A3DS) -> SceneState:
    """Parse a full state description; raises ValueError if it is not total."""
    parsed = parse_utterance(text, schema)
    if isinstance(parsed, ParseFailure):
        raise ValueError(f"cannot parse state description {text!r}: {parsed.reason}")
    return SceneState.from_dict(parsed, schema)


def feature_count(features: Mapping[str, str] | ParseFailure) -> int:
    return 0 if isinstance(features, ParseFailure) else len(features)


def states_from(assignments: Sequence[Mapping[str, str]], schema: AttributeSchema = A3DS) -> list[SceneState]:
    return [SceneState.from_dict(a, schema) for a in assignments]
