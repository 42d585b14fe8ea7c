"""A small OpenAI-compatible chat-completions server that answers the
package's own prompts symbolically.

It exists to exercise the HTTP client, record mode and replay mode without a
real model. Responses are deterministic functions of the request.
"""

from __future__ import annotations

import hashlib
import re
import threading
import time

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import prompts
from .domain import A3DS, parse_description, render_features
from .oracle import OracleConfig, OracleEvaluator, OracleProposer


class ChatMessage(BaseModel):
    role: str
    content: str


class ChatRequest(BaseModel):
    model: str
    messages: list[ChatMessage]
    temperature: float = 1.0
    max_tokens: int | None = None


class Choice(BaseModel):
    index: int = 0
    message: ChatMessage
    finish_reason: str = "stop"


class ChatResponse(BaseModel):
    id: str
    object: str = "chat.completion"
    created: int
    model: str
    choices: list[Choice]


def _pattern(template: str) -> re.Pattern:
    """Regex matching a prompt template with its placeholders captured."""
    parts = re.split(r"\{(\w+)\}", template)
    out = []
    for i, part in enumerate(parts):
        out.append(f"(?P<{part}>.*?)" if i % 2 else re.escape(part))
    return re.compile("".join(out) + r"\Z", re.S)


_PATTERNS = {name: _pattern(t) for name, t in prompts.TEMPLATES.items()}

# Order in which the symbolic baseline considers attributes.
_PREFERENCE = ("object_color", "shape", "size", "floor_color", "wall_color", "position")


def _seed(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def _bullets(utterances) -> str:
    return "\n".join(f"- {u.text}" for u in utterances)


def incremental_description(target: str, distractors: list[str]) -> str:
    """Dale and Reiter's incremental algorithm over the fixed preference order."""
    t = parse_description(target).as_dict()
    remaining = [parse_description(d) for d in distractors]
    chosen: dict[str, str] = {}
    for attr in _PREFERENCE:
        if not remaining:
            break
        ruled_out = [d for d in remaining if d[attr] != t[attr]]
        if ruled_out:
            chosen[attr] = t[attr]
            remaining = [d for d in remaining if d[attr] == t[attr]]
    if not chosen:
        chosen = {_PREFERENCE[0]: t[_PREFERENCE[0]]}
    return render_features({a: chosen[a] for a in A3DS.names if a in chosen})


class SymbolicResponder:
    def __init__(self, seed: int = 0, eval_error_rate: float = 0.0) -> None:
        self.seed = seed
        self.eval_error_rate = eval_error_rate

    def respond(self, messages: list[dict[str, str]]) -> str:
        first = messages[0]["content"]
        last = messages[-1]["content"]
        seed = _seed(f"{self.seed}:{first}")
        for name, pattern in _PATTERNS.items():
            m = pattern.match(first)
            if m:
                break
        else:
            return "I am not sure what you are asking."
        g = m.groupdict()
        if name == "semantic_eval":
            verdict, info = OracleEvaluator(OracleConfig(seed=seed, eval_error_rate=self.eval_error_rate)).evaluate(
                g["state"], g["utterance"]
            )
            answer = "yes" if verdict else "no"
            if last == prompts.YES_NO_REMINDER:
                return answer
            return f"The statement mentions {info.get('features', {})}.\nComparing with the sentence.\n\n{answer}"
        if name == "baseline":
            distractors = [ln[2:] for ln in g["distractor_list"].splitlines() if ln.startswith("- ")]
            text = incremental_description(g["target_state"], distractors).rstrip(".")
            return f"I compare the target with each distractor.\nUtterance: \"{text}\"."
        n = int(g["num_samples"])
        if name == "propose_extension":
            proposer = OracleProposer(OracleConfig(seed=seed))
            return _bullets(proposer.propose_extension(g["partial_description"], g["full_description"], n))
        mode = "single_feature" if name == "propose_initial" else "subsets_le2"
        proposer = OracleProposer(OracleConfig(seed=seed, proposer_mode=mode))
        return _bullets(proposer.propose_initial(g["target_state"], n))


def create_app(seed: int = 0, eval_error_rate: float = 0.0, fail_first: int = 0, fail_status: int = 429) -> FastAPI:
    """Build the app. ``fail_first`` makes the first k requests fail with ``fail_status``."""
    app = FastAPI(title="refgen fake chat completions")
    responder = SymbolicResponder(seed, eval_error_rate)
    state = {"requests": 0}
    lock = threading.Lock()
    app.state.counter = state

    def complete(req: ChatRequest) -> ChatResponse:
        with lock:
            state["requests"] += 1
            n = state["requests"]
        if n <= fail_first:
            raise HTTPException(status_code=fail_status, detail="injected failure")
        text = responder.respond([m.model_dump() for m in req.messages])
        return ChatResponse(
            id=f"fake-{n}",
            created=int(time.time()),
            model=req.model,
            choices=[Choice(message=ChatMessage(role="assistant", content=text))],
        )

    app.post("/chat/completions", response_model=ChatResponse)(complete)
    app.post("/v1/chat/completions", response_model=ChatResponse)(complete)
    return app

