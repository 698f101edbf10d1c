"""Chat-completion access: one live transport, two offline stand-ins.

All training-time model access goes through complete(), which takes a
ChatRequest and a backend.  LiveBackend speaks the OpenAI-compatible
chat-completions protocol over HTTP; ReplayBackend serves recorded responses
keyed by a content hash of the request (and can record them when chained in
front of another backend); MockBackend answers from scripted rules.  Tests
and acceptance runs use only the offline backends, so the full suite runs
without any network access.

parse_split and parse_leaf turn raw completions into validated split
proposals and leaf targets; they reject anything that does not fit the
schema instead of guessing.
"""

from __future__ import annotations

import json
import math
import os
import re
import threading
import time
from dataclasses import dataclass
from typing import Callable

import requests

from .canon import canonical_json, canonical_json_pretty, content_hash
from .dataset import KIND_CATEGORICAL, KIND_NUMERIC, Schema, Target
from .distill import NodeContext, PromptBundle, ToolSchema
from .errors import (
    CacheMiss,
    EmptyCategorySet,
    GatewayError,
    MalformedResponse,
    MissingToolCall,
    NoNumberFound,
    NoScriptMatch,
    NonFiniteThreshold,
    OperatorKindMismatch,
    TransportError,
    UnknownFeature,
    UnrecognizedClass,
)
from .trees import CategoryMembership, NumericThreshold, SplitPredicate

API_KEY_ENV = "FORESTLLM_API_KEY"

TOOL_CALL = "tool_call"
TEXT = "text"

_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")


@dataclass(frozen=True)
class ChatRequest:
    """One completion request, fully determined by its fields.

    seed_tag never reaches the wire; it only salts the replay cache key so
    that intentionally repeated prompts (for example the same node content in
    two different trees) can keep distinct recordings.
    """

    model_id: str
    temperature: float
    messages: tuple[tuple[str, str], ...]
    tool_schema: ToolSchema | None = None
    seed_tag: int = 0

    def __post_init__(self) -> None:
        if not self.model_id:
            raise GatewayError("model_id must be non-empty")
        if not (math.isfinite(self.temperature) and self.temperature >= 0.0):
            raise GatewayError("temperature must be finite and non-negative")
        for role, _ in self.messages:
            if role not in ("system", "user"):
                raise GatewayError(f"unsupported message role {role!r}")


@dataclass(frozen=True)
class ChatResponse:
    """A decoded completion: either a tool call or plain text, plus the raw body."""

    kind: str
    arguments: dict | None = None
    content: str | None = None
    raw: str = ""


@dataclass(frozen=True)
class ParsedSplit:
    predicate: SplitPredicate
    reasoning: str


def tool_response(arguments: dict) -> ChatResponse:
    return ChatResponse(kind=TOOL_CALL, arguments=dict(arguments))


def text_response(content: str) -> ChatResponse:
    return ChatResponse(kind=TEXT, content=content)


def request_body(req: ChatRequest) -> dict:
    """The JSON body this request posts to a chat-completions endpoint."""
    body: dict = {
        "model": req.model_id,
        "temperature": req.temperature,
        "messages": [
            {"role": role, "content": content} for role, content in req.messages
        ],
    }
    if req.tool_schema is not None:
        body["tools"] = [req.tool_schema.to_wire()]
        body["tool_choice"] = {
            "type": "function",
            "function": {"name": req.tool_schema.name},
        }
    return body


def request_key(req: ChatRequest) -> str:
    """Content hash identifying a request in the replay store."""
    return content_hash(
        {
            "model_id": req.model_id,
            "temperature": req.temperature,
            "messages": [[role, content] for role, content in req.messages],
            "tool_schema": None
            if req.tool_schema is None
            else req.tool_schema.to_wire(),
            "seed_tag": req.seed_tag,
        }
    )


def decode_response_body(body: dict, tool_schema: ToolSchema | None, raw: str) -> ChatResponse:
    """Decode a chat-completions response body into a ChatResponse.

    Tool-call arguments may arrive as a JSON string or an already-parsed
    object; argument names must stay within the advertised tool signature.
    """
    try:
        message = body["choices"][0]["message"]
    except (KeyError, IndexError, TypeError):
        raise MalformedResponse("response body has no choices[0].message") from None

    tool_calls = message.get("tool_calls") or []
    if tool_calls:
        call = tool_calls[0]
        try:
            function = call["function"]
            name = function["name"]
            arguments = function["arguments"]
        except (KeyError, TypeError):
            raise MalformedResponse("tool call lacks a function name/arguments") from None
        if isinstance(arguments, str):
            try:
                arguments = json.loads(arguments)
            except json.JSONDecodeError as exc:
                raise MalformedResponse(f"tool arguments are not JSON: {exc}") from None
        if not isinstance(arguments, dict):
            raise MalformedResponse("tool arguments must decode to an object")
        if tool_schema is not None:
            if name != tool_schema.name:
                raise MalformedResponse(
                    f"tool call names {name!r}, expected {tool_schema.name!r}"
                )
            unknown = set(arguments) - set(tool_schema.argument_names)
            if unknown:
                raise MalformedResponse(f"unknown tool arguments {sorted(unknown)}")
        return ChatResponse(kind=TOOL_CALL, arguments=arguments, raw=raw)

    content = message.get("content")
    if isinstance(content, str):
        return ChatResponse(kind=TEXT, content=content, raw=raw)
    raise MalformedResponse("response message has neither tool calls nor text content")


def encode_response_body(resp: ChatResponse, req: ChatRequest) -> dict:
    """Build a chat-completions response body for a synthesized response."""
    if resp.kind == TOOL_CALL:
        name = req.tool_schema.name if req.tool_schema is not None else "tool"
        message = {
            "role": "assistant",
            "content": None,
            "tool_calls": [
                {
                    "id": "call_0",
                    "type": "function",
                    "function": {
                        "name": name,
                        "arguments": canonical_json(resp.arguments or {}),
                    },
                }
            ],
        }
        finish = "tool_calls"
    else:
        message = {"role": "assistant", "content": resp.content or ""}
        finish = "stop"
    return {"choices": [{"index": 0, "message": message, "finish_reason": finish}]}


@dataclass
class ScriptRule:
    """One scripted answer: matches requests by kind and substring.

    kind is "split" (tool requests), "leaf" (plain-text requests), or "any".
    contains must appear in the concatenated message text; the empty string
    matches everything.  times limits how often the rule may fire (None means
    unlimited).  respond is either a fixed ChatResponse or a callable that
    builds one from the request.
    """

    respond: ChatResponse | Callable[[ChatRequest], ChatResponse]
    kind: str = "any"
    contains: str = ""
    times: int | None = None

    def matches(self, req: ChatRequest) -> bool:
        if self.times is not None and self.times <= 0:
            return False
        if self.kind == "split" and req.tool_schema is None:
            return False
        if self.kind == "leaf" and req.tool_schema is not None:
            return False
        if self.contains:
            text = "\n".join(content for _, content in req.messages)
            if self.contains not in text:
                return False
        return True


class MockBackend:
    """Scripted backend: first matching rule answers, top of the list first."""

    kind = "mock"

    def __init__(self, rules: list[ScriptRule] | tuple[ScriptRule, ...]):
        self.rules = list(rules)
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str) -> "MockBackend":
        """Load rules from a JSON list; see ScriptRule for the matching fields.

        Each entry carries either "tool": {...arguments...} for a tool-call
        answer or "text": "..." for a plain-text answer.
        """
        with open(path, encoding="utf-8") as handle:
            entries = json.load(handle)
        if not isinstance(entries, list):
            raise GatewayError(f"{path}: script file must hold a JSON list")
        rules = []
        for i, entry in enumerate(entries):
            if "tool" in entry:
                respond = tool_response(entry["tool"])
            elif "text" in entry:
                respond = text_response(entry["text"])
            else:
                raise GatewayError(f"{path}: rule {i} has neither 'tool' nor 'text'")
            rules.append(
                ScriptRule(
                    respond=respond,
                    kind=entry.get("kind", "any"),
                    contains=entry.get("contains", ""),
                    times=entry.get("times"),
                )
            )
        return cls(rules)

    def complete(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            for rule in self.rules:
                if rule.matches(req):
                    if rule.times is not None:
                        rule.times -= 1
                    resp = rule.respond(req) if callable(rule.respond) else rule.respond
                    if not resp.raw:
                        body = encode_response_body(resp, req)
                        resp = ChatResponse(
                            kind=resp.kind,
                            arguments=resp.arguments,
                            content=resp.content,
                            raw=canonical_json(body),
                        )
                    return resp
        head = req.messages[-1][1][:120] if req.messages else ""
        wants = "tool call" if req.tool_schema is not None else "text"
        raise NoScriptMatch(f"no rule matches a {wants} request starting {head!r}")


class ReplayBackend:
    """Serves recorded responses by request hash; records when given a source.

    Fixture files live one per request under fixture_dir, named by the
    request key, each holding the verbatim request and response bodies.
    Writes are atomic (temp file then rename) so a crashed run never leaves a
    half-written fixture.
    """

    kind = "replay"

    def __init__(self, fixture_dir: str, record_from=None):
        self.fixture_dir = fixture_dir
        self.record_from = record_from

    def _path(self, key: str) -> str:
        return os.path.join(self.fixture_dir, f"{key}.json")

    def complete(self, req: ChatRequest) -> ChatResponse:
        key = request_key(req)
        path = self._path(key)
        if os.path.exists(path):
            with open(path, encoding="utf-8") as handle:
                stored = json.load(handle)
            body = stored["response"]
            return decode_response_body(body, req.tool_schema, canonical_json(body))
        if self.record_from is None:
            head = req.messages[-1][1][:120] if req.messages else ""
            raise CacheMiss(f"no recorded response {key} for request starting {head!r}")
        resp = self.record_from.complete(req)
        if resp.raw:
            try:
                body = json.loads(resp.raw)
            except json.JSONDecodeError:
                body = encode_response_body(resp, req)
        else:
            body = encode_response_body(resp, req)
        os.makedirs(self.fixture_dir, exist_ok=True)
        payload = {
            "request": request_body(req),
            "seed_tag": req.seed_tag,
            "response": body,
        }
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as handle:
            handle.write(canonical_json_pretty(payload))
        os.replace(tmp, path)
        return resp


class LiveBackend:
    """OpenAI-compatible HTTP transport with bounded retries and concurrency.

    Credentials come from the FORESTLLM_API_KEY environment variable unless
    passed explicitly.  Transport failures, 429s, and 5xx responses retry up
    to max_retries times with exponential backoff; anything else fails fast.
    """

    kind = "live"

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_in_flight: int = 4,
        max_retries: int = 3,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not self.api_key:
            raise TransportError(f"no API key: set {API_KEY_ENV} or pass api_key")
        self.timeout = timeout
        self.max_retries = max_retries
        self.sleeper = sleeper
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def complete(self, req: ChatRequest) -> ChatResponse:
        url = f"{self.base_url}/chat/completions"
        headers = {
            "Authorization": f"Bearer {self.api_key}",
            "Content-Type": "application/json",
        }
        body = request_body(req)
        last_error = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleeper(0.5 * 2 ** (attempt - 1))
            try:
                with self._slots:
                    reply = requests.post(
                        url, json=body, headers=headers, timeout=self.timeout
                    )
            except requests.RequestException as exc:
                last_error = f"transport failure: {exc}"
                continue
            if reply.status_code == 429 or reply.status_code >= 500:
                last_error = f"HTTP {reply.status_code}: {reply.text[:200]}"
                continue
            if reply.status_code != 200:
                raise TransportError(f"HTTP {reply.status_code}: {reply.text[:200]}")
            try:
                parsed = reply.json()
            except ValueError as exc:
                raise MalformedResponse(f"response body is not JSON: {exc}") from None
            return decode_response_body(parsed, req.tool_schema, reply.text)
        raise TransportError(
            f"gave up after {self.max_retries + 1} attempts; last error: {last_error}"
        )


def complete(req: ChatRequest, backend) -> ChatResponse:
    """Run one completion against whichever backend is in play."""
    return backend.complete(req)


def parse_split(resp: ChatResponse, ctx: NodeContext, schema: Schema) -> ParsedSplit:
    """Validate a split tool call into a predicate that fits the schema.

    The proposed feature must be in the node's allowed set; '<=' needs a
    finite threshold on a numeric feature; 'in' needs a non-empty set of
    trimmed categories on a categorical feature.
    """
    if resp.kind != TOOL_CALL:
        raise MissingToolCall("split response arrived as plain text")
    args = resp.arguments or {}

    feature_name = args.get("feature")
    allowed_names = {schema.features[i].name: i for i in ctx.allowed_features}
    if not isinstance(feature_name, str) or feature_name not in allowed_names:
        raise UnknownFeature(
            f"feature {feature_name!r} is not among allowed features "
            f"{sorted(allowed_names)}"
        )
    index = allowed_names[feature_name]
    kind = schema.kind_of(index)
    operator = args.get("operator")
    reasoning = str(args.get("reasoning") or "")

    if operator == "<=":
        if kind != KIND_NUMERIC:
            raise OperatorKindMismatch(
                f"operator '<=' needs a numeric feature, {feature_name!r} is {kind}"
            )
        threshold = args.get("threshold")
        if isinstance(threshold, str):
            try:
                threshold = float(threshold)
            except ValueError:
                raise NonFiniteThreshold(f"threshold {threshold!r} is not a number") from None
        if isinstance(threshold, bool) or not isinstance(threshold, (int, float)):
            raise NonFiniteThreshold(f"threshold {threshold!r} is not a number")
        threshold = float(threshold)
        if not math.isfinite(threshold):
            raise NonFiniteThreshold(f"threshold {threshold!r} is not finite")
        return ParsedSplit(NumericThreshold(index, threshold), reasoning)

    if operator == "in":
        if kind != KIND_CATEGORICAL:
            raise OperatorKindMismatch(
                f"operator 'in' needs a categorical feature, {feature_name!r} is {kind}"
            )
        raw = args.get("categories")
        if not isinstance(raw, (list, tuple)):
            raise EmptyCategorySet(f"categories {raw!r} is not a list")
        trimmed = [str(item).strip() for item in raw]
        categories = frozenset(item for item in trimmed if item)
        if not categories:
            raise EmptyCategorySet("no usable categories after trimming")
        return ParsedSplit(CategoryMembership(index, categories), reasoning)

    raise OperatorKindMismatch(f"unknown operator {operator!r}")


def parse_leaf(resp: ChatResponse, schema: Schema) -> Target:
    """Extract a leaf target from a plain-text completion.

    Classification tries a case-insensitive exact match of the trimmed final
    line first, then falls back to a unique case-insensitive substring match
    over the whole reply.  Regression takes the first finite decimal number.
    """
    if resp.kind != TEXT:
        raise MalformedResponse("leaf response must be plain text, got a tool call")
    content = (resp.content or "").strip()

    if schema.is_classification:
        final_line = content.splitlines()[-1].strip() if content else ""
        for label in schema.classes:
            if final_line.lower() == label.lower():
                return label
        lowered = content.lower()
        matches = [label for label in schema.classes if label.lower() in lowered]
        if len(matches) == 1:
            return matches[0]
        detail = "matches no class" if not matches else f"matches {matches} ambiguously"
        raise UnrecognizedClass(f"reply {content[:80]!r} {detail}")

    for token in _NUMBER_RE.finditer(content):
        value = float(token.group())
        if math.isfinite(value):
            return value
    raise NoNumberFound(f"reply {content[:80]!r} contains no finite number")


class Gateway:
    """A backend plus call-site policy: model id, temperatures, seed tag, counters.

    One Gateway is created per tree during training so per-tree call and
    retry counts land in model provenance without any shared mutable state
    between concurrently training trees.
    """

    def __init__(
        self,
        backend,
        model_id: str,
        construction_temperature: float = 0.5,
        leaf_temperature: float = 0.0,
        seed_tag: int = 0,
    ):
        self.backend = backend
        self.model_id = model_id
        self.construction_temperature = construction_temperature
        self.leaf_temperature = leaf_temperature
        self.seed_tag = seed_tag
        self.calls = 0
        self.retries = 0

    def _ask(self, bundle: PromptBundle, temperature: float) -> ChatResponse:
        req = ChatRequest(
            model_id=self.model_id,
            temperature=temperature,
            messages=(("system", bundle.system_text), ("user", bundle.user_text)),
            tool_schema=bundle.tool_schema,
            seed_tag=self.seed_tag,
        )
        self.calls += 1
        return complete(req, self.backend)

    def ask_split(self, bundle: PromptBundle) -> ChatResponse:
        return self._ask(bundle, self.construction_temperature)

    def ask_leaf(self, bundle: PromptBundle) -> ChatResponse:
        return self._ask(bundle, self.leaf_temperature)

    def note_retry(self) -> None:
        self.retries += 1
