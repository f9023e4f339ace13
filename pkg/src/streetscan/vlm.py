"""Model-backend client: attribute extraction and the reasoning decision stage.

Prompts are loaded from canonical files packaged with the library and are
hash-pinned by tests; the extraction prompt goes out byte-identical with
the image attached, the decision prompt embeds the attribute JSON in
canonical key order.

Backends are pluggable: an HTTP chat-endpoint client for live runs and a
recorded (fixture) backend that replays canned responses byte-for-byte,
which makes the whole pipeline reproducible in tests. Every request is
addressed by a content hash, and the same hash keys the response cache, so
a cache hit never touches the network.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Protocol

import requests

from .attributes import AttributeVector
from .decision import OccupancyLabel
from .errors import FixtureMissError, InputError, TransportError

__all__ = [
    "Backend",
    "BackendConfig",
    "CachedBackend",
    "ChatRequest",
    "ExtractionResult",
    "ExtractionStatus",
    "HttpBackend",
    "RecordedBackend",
    "build_decision_request",
    "build_vision_request",
    "decide_two_stage",
    "extract_attributes",
    "load_prompt",
    "request_key",
]

_RETRY_ATTEMPTS = 3
_RETRY_BASE_DELAY_S = 1.0


def load_prompt(name: str) -> str:
    """Read a canonical prompt file shipped with the package."""
    return resources.files("streetscan.prompts").joinpath(name).read_text("utf-8")


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str = ""
    model_name: str = "recorded"
    api_key_env_var: str = "STREETSCAN_API_KEY"
    max_tokens_vision: int = 200
    max_tokens_decision: int = 5
    request_timeout_s: float = 60.0
    max_concurrent_requests: int = 4
    cache_dir: Optional[Path] = None
    fixture_path: Optional[Path] = None

    # sampling temperature is part of the protocol contract, not a knob
    temperature: float = field(default=0.0, init=False)


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple
    max_tokens: int
    temperature: float = 0.0

    def payload(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "messages": list(self.messages),
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


def _hash_data_urls(obj: Any) -> Any:
    """Replace base64 data URLs with a digest so request keys stay small."""
    if isinstance(obj, dict):
        return {k: _hash_data_urls(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_hash_data_urls(v) for v in obj]
    if isinstance(obj, str) and obj.startswith("data:") and ";base64," in obj:
        prefix, payload = obj.split(";base64,", 1)
        digest = hashlib.sha256(base64.b64decode(payload)).hexdigest()
        return f"{prefix};sha256,{digest}"
    return obj


def request_key(request: ChatRequest) -> str:
    """Stable hex key for a request; embedded images count by content hash."""
    canonical = json.dumps(
        _hash_data_urls(request.payload()), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


class HttpBackend:
    """Chat endpoint accepting role-based messages with embedded images.

    Network failures are retried with bounded exponential backoff (at most
    three attempts); anything else surfaces as TransportError. Responses
    are returned as raw text, exactly as the endpoint produced them.
    """

    def __init__(self, cfg: BackendConfig, session: Optional[requests.Session] = None):
        if not cfg.endpoint_url:
            raise InputError("HttpBackend requires endpoint_url")
        self.cfg = cfg
        self.session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env_var, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, request: ChatRequest) -> str:
        last_error: Exception | None = None
        for attempt in range(_RETRY_ATTEMPTS):
            if attempt:
                time.sleep(_RETRY_BASE_DELAY_S * 2 ** (attempt - 1))
            try:
                resp = self.session.post(
                    self.cfg.endpoint_url,
                    json=request.payload(),
                    headers=self._headers(),
                    timeout=self.cfg.request_timeout_s,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500:
                last_error = TransportError(f"server error {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise TransportError(f"endpoint returned {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed endpoint response: {exc}") from exc
        raise TransportError(f"request failed after {_RETRY_ATTEMPTS} attempts: {last_error}")


class RecordedBackend:
    """Deterministic test double replaying a request-hash -> response map."""

    def __init__(self, fixture_path: str | Path):
        with open(fixture_path, encoding="utf-8") as fh:
            fixture = json.load(fh)
        if not isinstance(fixture, dict):
            raise InputError(f"fixture {fixture_path} must be a JSON object")
        self.responses: dict[str, str] = dict(fixture)

    def complete(self, request: ChatRequest) -> str:
        key = request_key(request)
        try:
            return self.responses[key]
        except KeyError:
            raise FixtureMissError(f"no recorded response for request {key}") from None


class CachedBackend:
    """Write-through response cache: one JSON file per request hash.

    Writes go through a temp file + atomic rename, so concurrent readers
    only ever see complete entries and concurrent writers of the same key
    settle on one of the identical payloads.
    """

    def __init__(self, inner: Backend, cache_dir: str | Path):
        self.inner = inner
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def complete(self, request: ChatRequest) -> str:
        key = request_key(request)
        path = self._path(key)
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)["raw_text"]
        raw = self.inner.complete(request)
        entry = {"request_sha256": key, "model": request.model, "raw_text": raw}
        fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, sort_keys=True)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        return raw


class ExtractionStatus(Enum):
    OK = "Ok"
    PARSE_FAILURE = "ParseFailure"
    TRANSPORT_ERROR = "TransportError"


@dataclass(frozen=True)
class ExtractionResult:
    raw_text: str
    parsed: Optional[AttributeVector]
    status: ExtractionStatus

    def __post_init__(self) -> None:
        if (self.parsed is not None) != (self.status is ExtractionStatus.OK):
            raise ValueError("parsed must be present exactly when status is Ok")


def build_vision_request(image_bytes: bytes, cfg: BackendConfig) -> ChatRequest:
    """System + user(image, extraction prompt) messages; max_tokens 200."""
    data_url = "data:image/jpeg;base64," + base64.b64encode(image_bytes).decode("ascii")
    messages = (
        {"role": "system", "content": load_prompt("system.txt")},
        {
            "role": "user",
            "content": [
                {"type": "text", "text": load_prompt("vision_user.txt")},
                {"type": "image_url", "image_url": {"url": data_url}},
            ],
        },
    )
    return ChatRequest(cfg.model_name, messages, cfg.max_tokens_vision)


def build_decision_request(attrs: AttributeVector, cfg: BackendConfig) -> ChatRequest:
    """Text-only few-shot decision request; max_tokens 5."""
    template = load_prompt("decision_user.txt")
    prompt = template.replace("{...JSON from vision model...}", attrs.to_json(indent=2))
    messages = (
        {"role": "system", "content": load_prompt("system.txt")},
        {"role": "user", "content": prompt},
    )
    return ChatRequest(cfg.model_name, messages, cfg.max_tokens_decision)


def first_json_object(text: str) -> Optional[dict]:
    """First balanced JSON object in ``text``, tolerating prose around it."""
    decoder = json.JSONDecoder()
    start = text.find("{")
    while start != -1:
        try:
            obj, _ = decoder.raw_decode(text, start)
        except ValueError:
            start = text.find("{", start + 1)
            continue
        if isinstance(obj, dict):
            return obj
        start = text.find("{", start + 1)
    return None


def extract_attributes(
    image_bytes: bytes, backend: Backend, cfg: BackendConfig
) -> ExtractionResult:
    """Run the vision extraction call and parse the closed nine-key schema.

    Malformed responses become ParseFailure (no retry: structure is
    enforced by instruction only); transport failures, already retried by
    the HTTP backend, become TransportError.
    """
    request = build_vision_request(image_bytes, cfg)
    try:
        raw = backend.complete(request)
    except TransportError as exc:
        return ExtractionResult(str(exc), None, ExtractionStatus.TRANSPORT_ERROR)
    obj = first_json_object(raw)
    if obj is None:
        return ExtractionResult(raw, None, ExtractionStatus.PARSE_FAILURE)
    try:
        attrs = AttributeVector.from_mapping(obj)
    except ValueError:
        return ExtractionResult(raw, None, ExtractionStatus.PARSE_FAILURE)
    return ExtractionResult(raw, attrs, ExtractionStatus.OK)


def _parse_decision_token(raw: str) -> OccupancyLabel:
    token = " ".join(raw.split()).strip().strip(".!'\"`").casefold()
    if token == "occupied":
        return OccupancyLabel.OCCUPIED
    if token == "not occupied":
        return OccupancyLabel.NOT_OCCUPIED
    return OccupancyLabel.UNCERTAIN


def decide_two_stage(
    attrs: AttributeVector, backend: Backend, cfg: BackendConfig
) -> OccupancyLabel:
    """Few-shot reasoning decision over an attribute vector.

    The response is matched case-insensitively against the two expected
    tokens; anything else maps to Uncertain. Transport errors propagate.
    """
    raw = backend.complete(build_decision_request(attrs, cfg))
    return _parse_decision_token(raw)
