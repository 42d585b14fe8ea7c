"""OpenAI-compatible chat client with a record/replay cache, and the
LLM-backed proposer and semantic evaluator built on it."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal

import httpx

from . import prompts
from .domain import Utterance
from .engine import EmptyProposalError

logger = logging.getLogger(__name__)

API_KEY_ENV = "LLM_API_KEY"
CacheMode = Literal["off", "record", "replay"]


class CacheMissError(LookupError):
    pass


class AmbiguousAnswerError(ValueError):
    pass


class MissingApiKeyError(RuntimeError):
    pass


class LlmRequestError(RuntimeError):
    pass


@dataclass
class LlmConfig:
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.1
    max_tokens: int = 512
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4
    cache: CacheMode = "off"
    cache_file: str | None = None
    backoff: float = 1.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.cache not in ("off", "record", "replay"):
            raise ValueError(f"unknown cache mode {self.cache!r}")
        if self.cache != "off" and not self.cache_file:
            raise ValueError(f"cache mode {self.cache!r} needs a cache file")
        if self.cache == "replay" and not Path(self.cache_file).exists():
            raise FileNotFoundError(f"replay cache {self.cache_file} does not exist")


@dataclass
class Transcript:
    messages: list[dict[str, str]]
    response: str
    parsed: object = None
    timestamp: str = ""
    key: str = ""


def request_body(config: LlmConfig, messages: list[dict[str, str]]) -> dict:
    return {
        "model": config.model,
        "messages": messages,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }


def cache_key(body: dict) -> str:
    return hashlib.sha256(json.dumps(body, sort_keys=True, ensure_ascii=False).encode()).hexdigest()


class TranscriptCache:
    """Append-only JSONL store of transcripts keyed by request hash."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, Transcript] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        t = Transcript(**json.loads(line))
                        self._entries.setdefault(t.key, t)

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> Transcript | None:
        return self._entries.get(key)

    def put(self, t: Transcript) -> None:
        with self._lock:
            if t.key in self._entries:
                return
            self._entries[t.key] = t
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(asdict(t), ensure_ascii=False) + "\n")


_RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


class ChatClient:
    """``POST {endpoint}/chat/completions`` with retries, backpressure and caching.

    In record mode the cache is read-through: a hit is served without a
    request, so a recorded run replays identically.
    """

    def __init__(self, config: LlmConfig, http_client: httpx.Client | None = None) -> None:
        self.config = config
        self.cache = TranscriptCache(config.cache_file) if config.cache != "off" else None
        self._http = http_client
        self._owns_http = http_client is None
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self.network_calls = 0

    def _client(self) -> httpx.Client:
        if self._http is None:
            self._http = httpx.Client(timeout=self.config.timeout)
        return self._http

    def close(self) -> None:
        if self._http is not None and self._owns_http:
            self._http.close()

    def chat(self, messages: list[dict[str, str]]) -> str:
        return self.chat_complete(messages).response

    def chat_complete(self, messages: list[dict[str, str]]) -> Transcript:
        if not messages:
            raise ValueError("messages must be non-empty")
        body = request_body(self.config, messages)
        key = cache_key(body)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit
            if self.config.cache == "replay":
                raise CacheMissError(f"no cached response for request {key[:12]}")
        text = self._post(body)
        t = Transcript(
            messages=messages,
            response=text,
            timestamp=datetime.now(timezone.utc).isoformat(),
            key=key,
        )
        if self.cache is not None:
            self.cache.put(t)
        return t

    def _post(self, body: dict) -> str:
        api_key = os.environ.get(API_KEY_ENV, "")
        if not api_key:
            raise MissingApiKeyError(f"environment variable {API_KEY_ENV} is not set")
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {api_key}"}
        last: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff * 2 ** (attempt - 1))
            with self._slots:
                self.network_calls += 1
                try:
                    resp = self._client().post(url, json=body, headers=headers, timeout=self.config.timeout)
                except httpx.TransportError as exc:
                    last = exc
                    logger.warning("chat request failed (%s), attempt %d", exc, attempt + 1)
                    continue
            if resp.status_code in _RETRYABLE_STATUS:
                last = LlmRequestError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                logger.warning("chat request got HTTP %d, attempt %d", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise LlmRequestError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"] or ""
            except (KeyError, IndexError, ValueError) as exc:
                raise LlmRequestError(f"malformed chat completion response: {exc}") from exc
        raise LlmRequestError(f"giving up after {self.config.max_retries + 1} attempts: {last}")


_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def parse_bullet_list(text: str, n: int) -> list[str]:
    """Items of a bullet list; plain non-empty lines if nothing is bulleted."""
    if n < 1:
        raise ValueError("n must be at least 1")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    bulleted = [ln for ln in lines if _BULLET.match(ln)]
    source = bulleted or lines
    items = [_BULLET.sub("", ln, count=1).strip() for ln in source]
    items = [it for it in items if it]
    if not items:
        raise EmptyProposalError("no sentences found in proposer response")
    return items[:n]


_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def parse_yes_no(text: str) -> bool:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines:
        last = re.sub(r"[^\w\s]", "", lines[-1].lower()).strip()
        if last in ("yes", "no"):
            return last == "yes"
    found = {m.group(1).lower() for m in _YES_NO.finditer(text)}
    if len(found) == 1:
        return found.pop() == "yes"
    raise AmbiguousAnswerError(f"cannot extract yes/no from answer: {text[-200:]!r}")


class LlmProposer:
    """Proposer backed by the chat model.

    ``mode="iterative"`` uses the single-detail initial prompt,
    ``mode="single_pass"`` the unrestricted reduced-description prompt.
    """

    def __init__(self, client: ChatClient, mode: Literal["iterative", "single_pass"] = "iterative") -> None:
        if mode not in ("iterative", "single_pass"):
            raise ValueError(f"unknown proposer mode {mode!r}")
        self.client = client
        self.mode = mode

    def _ask(self, prompt: str, n: int, attempt: int) -> list[Utterance]:
        messages = [{"role": "user", "content": prompt}]
        if attempt:
            messages.append({"role": "user", "content": prompts.BULLET_REMINDER})
        t = self.client.chat_complete(messages)
        items = parse_bullet_list(t.response, n)
        return [Utterance(text) for text in items]

    def propose_initial(self, target_description: str, n: int, attempt: int = 0) -> list[Utterance]:
        if self.mode == "iterative":
            prompt = prompts.propose_initial_prompt(target_description, n)
        else:
            prompt = prompts.propose_single_pass_prompt(target_description, n)
        return self._ask(prompt, n, attempt)

    def propose_extension(
        self, partial_utterance: str, target_description: str, n: int, attempt: int = 0
    ) -> list[Utterance]:
        if not partial_utterance.strip():
            raise ValueError("partial utterance must be non-empty")
        prompt = prompts.propose_extension_prompt(partial_utterance, target_description, n)
        return self._ask(prompt, n, attempt)


class LlmEvaluator:
    def __init__(self, client: ChatClient) -> None:
        self.client = client

    def evaluate(self, state_description: str, utterance: str) -> tuple[bool, dict]:
        if not state_description.strip() or not utterance.strip():
            raise ValueError("state and utterance must be non-empty")
        messages = [{"role": "user", "content": prompts.semantic_eval_prompt(state_description, utterance)}]
        t = self.client.chat_complete(messages)
        try:
            verdict = parse_yes_no(t.response)
        except AmbiguousAnswerError:
            messages = messages + [
                {"role": "assistant", "content": t.response},
                {"role": "user", "content": prompts.YES_NO_REMINDER},
            ]
            t = self.client.chat_complete(messages)
            verdict = parse_yes_no(t.response)
        return verdict, {"state": state_description, "utterance": utterance, "response": t.response, "verdict": verdict}
