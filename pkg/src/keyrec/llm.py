"""LLM clients, response parsing and re-ranking."""
from __future__ import annotations

import abc
import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

from .prompts import PromptBundle, candidate_ids_in_prompt

logger = logging.getLogger(__name__)

ENV_ENDPOINT = "KEYREC_LLM_ENDPOINT"
ENV_API_KEY = "KEYREC_LLM_API_KEY"
ENV_MODEL = "KEYREC_LLM_MODEL"


class TransportError(RuntimeError):
    """A call to the LLM backend failed and may be retried."""


class RerankError(RuntimeError):
    def __init__(self, message: str, fingerprint: str):
        super().__init__(f"{message} (prompt {fingerprint[:12]})")
        self.fingerprint = fingerprint


class LLMClient(abc.ABC):
    @abc.abstractmethod
    def complete(self, prompt: str) -> str:
        """Return the model's text response to ``prompt``."""


class IdentityClient(LLMClient):
    """Echoes the candidates in prompt order."""

    def complete(self, prompt):
        return json.dumps(candidate_ids_in_prompt(prompt))


class ReverseClient(LLMClient):
    def complete(self, prompt):
        return json.dumps(candidate_ids_in_prompt(prompt)[::-1])


class CallableClient(LLMClient):
    def __init__(self, fn: Callable[[str], str]):
        self.fn = fn

    def complete(self, prompt):
        return self.fn(prompt)


ScriptStep = Union[str, BaseException, Callable[[str], str]]


class ScriptedClient(LLMClient):
    """Replays a transcript of responses.

    Each step is a response string, an exception to raise, or a callable
    applied to the prompt. Prompts are recorded in ``prompts``.
    """

    def __init__(self, steps: Iterable[ScriptStep]):
        self.steps = list(steps)
        self.prompts: list[str] = []
        self._lock = threading.Lock()

    def complete(self, prompt):
        with self._lock:
            self.prompts.append(prompt)
            if not self.steps:
                raise TransportError("script exhausted")
            step = self.steps.pop(0)
        if isinstance(step, BaseException):
            raise step
        if callable(step):
            return step(prompt)
        return step


class HttpClient(LLMClient):
    """POSTs ``{"prompt": ..., "model": ...}`` and reads ``{"text": ...}``.

    Endpoint, model and API key fall back to the ``KEYREC_LLM_*``
    environment variables.
    """

    def __init__(self, endpoint: Optional[str] = None, model: Optional[str] = None,
                 api_key: Optional[str] = None, timeout: float = 60.0):
        self.endpoint = endpoint or os.environ.get(ENV_ENDPOINT)
        if not self.endpoint:
            raise ValueError(f"no LLM endpoint configured (set {ENV_ENDPOINT})")
        self.model = model or os.environ.get(ENV_MODEL)
        self.api_key = api_key or os.environ.get(ENV_API_KEY)
        self.timeout = timeout

    def complete(self, prompt):
        body = {"prompt": prompt}
        if self.model:
            body["model"] = self.model
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.endpoint, data=json.dumps(body).encode("utf-8"),
                                     headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            if exc.code >= 500 or exc.code == 429:
                raise TransportError(f"HTTP {exc.code} from {self.endpoint}") from exc
            raise
        except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
            raise TransportError(f"cannot reach {self.endpoint}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise TransportError(f"non-JSON response from {self.endpoint}") from exc
        if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
            raise TransportError(f"response from {self.endpoint} lacks a text field")
        return payload["text"]


def make_client(spec: Union[str, Mapping, None]) -> LLMClient:
    """Client from a config entry such as ``{"type": "http", "endpoint": ...}``."""
    if spec is None:
        spec = {"type": "identity"}
    if isinstance(spec, str):
        spec = {"type": spec}
    spec = dict(spec)
    kind = spec.pop("type", "identity")
    if kind == "identity":
        return IdentityClient()
    if kind == "reverse":
        return ReverseClient()
    if kind == "scripted":
        return ScriptedClient(spec.get("responses", []))
    if kind == "http":
        return HttpClient(**spec)
    raise ValueError(f"unknown LLM client type {kind!r}")


@dataclass
class RankedList:
    item_ids: list[str]
    provenance: dict[str, str]
    raw_response: Optional[str] = None

    @property
    def repaired_count(self) -> int:
        return sum(1 for tag in self.provenance.values() if tag == "repaired")

    def __iter__(self):
        return iter(self.item_ids)

    def __len__(self):
        return len(self.item_ids)


_NUMBERING = re.compile(r"^\s*(?:\(?\d+[.):\]]|[-*•])\s*")
_STRIP = " \t\"'`[](){}<>,;."


def _json_tokens(text: str) -> Optional[list[str]]:
    start, stop = text.find("["), text.rfind("]")
    while start >= 0 and stop > start:
        try:
            value = json.loads(text[start:stop + 1])
        except json.JSONDecodeError:
            start = text.find("[", start + 1)
            continue
        if isinstance(value, list) and all(isinstance(v, (str, int)) for v in value):
            return [str(v) for v in value]
        return None
    return None


def _line_tokens(text: str, known: set[str]) -> list[str]:
    tokens = []
    for line in text.splitlines():
        line = _NUMBERING.sub("", line)
        for piece in line.split(","):
            piece = _NUMBERING.sub("", piece).strip(_STRIP)
            if not piece:
                continue
            if piece in known:
                tokens.append(piece)
                continue
            # "r2 - Pizza Place", "r2: cheap" and similar annotations
            head = re.split(r"\s+|:\s", piece, maxsplit=1)[0].strip(_STRIP)
            if head in known:
                tokens.append(head)
    return tokens


def parse_response(text: str, candidate_ids: Sequence[str]) -> RankedList:
    """Extract a full ranking of ``candidate_ids`` from an LLM response.

    Accepts a JSON array or numbered / comma-separated lines. Unknown ids are
    dropped, duplicates keep their first position, and candidates the model
    left out are appended in their original order tagged ``repaired``.
    """
    known = set(candidate_ids)
    tokens = _json_tokens(text or "")
    if tokens is None:
        tokens = _line_tokens(text or "", known)
    ranked, provenance = [], {}
    for tok in tokens:
        if tok in known and tok not in provenance:
            ranked.append(tok)
            provenance[tok] = "llm"
    for item in candidate_ids:
        if item not in provenance:
            ranked.append(item)
            provenance[item] = "repaired"
    return RankedList(ranked, provenance, text)


@dataclass
class RetryPolicy:
    attempts: int = 3
    backoff: float = 0.5
    factor: float = 2.0
    sleep: Callable[[float], None] = time.sleep

    def __post_init__(self):
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")


RETRYABLE = (TransportError, TimeoutError, ConnectionError)


class AuditLog:
    """Thread-safe in-memory log of LLM exchanges, written as JSONL."""

    def __init__(self):
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        with self._lock:
            self.records.append(record)

    def write(self, path) -> None:
        with self._lock, open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def audit_record(bundle: PromptBundle, ranked: RankedList) -> dict:
    return {
        "fingerprint": bundle.config_fingerprint,
        "prompt": bundle.text,
        "raw_response": ranked.raw_response,
        "parsed": ranked.item_ids,
        "repaired_count": ranked.repaired_count,
    }


def rerank(client: LLMClient, bundle: PromptBundle, retry: Optional[RetryPolicy] = None,
           audit: Optional[AuditLog] = None) -> RankedList:
    """Send the prompt, retrying transport failures, and parse the answer."""
    retry = retry or RetryPolicy()
    delay = retry.backoff
    for attempt in range(1, retry.attempts + 1):
        try:
            raw = client.complete(bundle.text)
            break
        except RETRYABLE as exc:
            if attempt == retry.attempts:
                raise RerankError(f"LLM call failed after {attempt} attempts: {exc}",
                                  bundle.config_fingerprint) from exc
            logger.info("LLM call failed (attempt %d/%d): %s", attempt, retry.attempts, exc)
            retry.sleep(delay)
            delay *= retry.factor
    ranked = parse_response(raw, bundle.candidate_ids)
    if audit is not None:
        audit.append(audit_record(bundle, ranked))
    return ranked
