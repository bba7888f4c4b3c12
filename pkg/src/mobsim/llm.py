"""Chat-completion adapters, prompt templates and response validation.

All network I/O in the package goes through :func:`post_json`. Adapters take a
``transport`` callable so tests can swap in a counting sentinel.
"""

from __future__ import annotations

import json
import logging
import os
import re
import string
import threading
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

logger = logging.getLogger(__name__)

Transport = Callable[[str, Dict[str, str], Dict[str, Any], float], Dict[str, Any]]


class LlmError(Exception):
    """Base for failures a caller maps onto its fallback path."""


class LlmTransportError(LlmError):
    pass


class LlmValidationError(LlmError):
    pass


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class LlmConfig:
    endpoint_url: str = "http://localhost:8000/v1/chat/completions"
    model_name: str = "gpt-4o-mini"
    temperature: float = 0.7
    timeout: float = 30.0
    max_retries: int = 2
    api_key_env: str = "LLM_API_KEY"

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("llm.max_retries must be >= 0")
        if not self.timeout > 0:
            raise ValueError("llm.timeout must be > 0")
        if self.temperature < 0:
            raise ValueError("llm.temperature must be >= 0")

    @classmethod
    def from_config(cls, cfg: Mapping) -> "LlmConfig":
        known = {k: cfg[k] for k in cls.__dataclass_fields__ if k in cfg}
        return cls(**known)


# --- response contracts -------------------------------------------------------

ACTIVITY_LIST = "activity_list"

SCHEMAS: Dict[str, Union[Dict[str, type], str]] = {
    "next_activity": {"activity": str, "category": str, "duration_minutes": int},
    "destination": {"poi_id": str},
    "activity_list": ACTIVITY_LIST,
}


def validate(obj: Any, schema: Union[str, Dict[str, type]]) -> Any:
    """Check ``obj`` against a contract; raises LlmValidationError naming the problem."""
    if isinstance(schema, str) and schema in SCHEMAS:
        schema = SCHEMAS[schema]
    if schema == ACTIVITY_LIST:
        if not isinstance(obj, dict) or not obj:
            raise LlmValidationError("expected a nonempty object of activity -> [categories]")
        for key, value in obj.items():
            if not isinstance(value, list) or not value or not all(isinstance(v, str) for v in value):
                raise LlmValidationError(f"activity {key!r}: expected a nonempty array of strings")
        return obj
    if not isinstance(obj, dict):
        raise LlmValidationError("expected a JSON object")
    for name, typ in schema.items():
        if name not in obj:
            raise LlmValidationError(f"missing field {name!r}")
        value = obj[name]
        # bool is an int subclass; reject it for integer fields
        if not isinstance(value, typ) or (typ is int and isinstance(value, bool)):
            raise LlmValidationError(f"field {name!r} must be {typ.__name__}, got {type(value).__name__}")
    return obj


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def extract_json(text: str) -> Any:
    """First JSON object in a reply, inside a markdown fence or bare."""
    decoder = json.JSONDecoder()
    chunks = [m.group(1) for m in _FENCE.finditer(text)] + [text]
    for chunk in chunks:
        for i, ch in enumerate(chunk):
            if ch != "{":
                continue
            try:
                obj, _ = decoder.raw_decode(chunk, i)
            except json.JSONDecodeError:
                continue
            return obj
    raise LlmValidationError("no JSON object found in reply")


# --- prompt templates ---------------------------------------------------------


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str

    @property
    def slots(self) -> List[str]:
        found = []
        for m in string.Template.pattern.finditer(self.text):
            slot = m.group("named") or m.group("braced")
            if slot and slot not in found:
                found.append(slot)
        return found

    def render(self, **values: Any) -> str:
        missing = [s for s in self.slots if s not in values]
        if missing:
            raise PromptError(f"template {self.name!r}: unfilled slot(s) {missing}")
        return string.Template(self.text).substitute({k: str(v) for k, v in values.items()})


TEMPLATES: Dict[str, PromptTemplate] = {
    t.name: t
    for t in (
        PromptTemplate(
            "persona_gen",
            "Agent $agent_id: age $age_bucket, $gender, $employment, occupation $occupation.\n"
            "Big Five traits (0-1): openness $openness, conscientiousness $conscientiousness, "
            "extraversion $extraversion, agreeableness $agreeableness, neuroticism $neuroticism.\n"
            "Home POI: $home. Workplace or school POI: $workplace.",
        ),
        PromptTemplate(
            "activity_list",
            "$persona\n\n"
            "List the daily activities this person is likely to do and, for each, the place "
            "categories where it could happen. Use only these categories: $categories.\n"
            'Reply with one JSON object mapping activity name to an array of categories, e.g. '
            '{"meal": ["Cafe", "Restaurant"]}.',
        ),
        PromptTemplate(
            "next_activity",
            "$persona\n\n"
            "Possible activities and their place categories:\n$activity_list\n\n"
            "Today so far:\n$routine\n\n"
            "Recent history:\n$history\n\n"
            "The time is now $clock. What does this person do next and for how long?\n"
            'Reply with JSON: {"activity": <activity>, "category": <category from that activity\'s list>, '
            '"duration_minutes": <integer between 5 and 960>}.',
        ),
        PromptTemplate(
            "destination",
            "$persona\n\n"
            "Activity: $activity. Place category: $category. Search radius: $radius_km km.\n\n"
            "Past visits of this kind:\n$history\n\n"
            "Candidate places (id | name | distance km):\n$candidates\n\n"
            "Pick one place that suits this person, varying choices the way a real person would.\n"
            'Reply with JSON: {"poi_id": <id from the candidate list>}.',
        ),
        PromptTemplate(
            "summary",
            "Summarize this $level of activities for agent $agent_id in one or two sentences:\n$events",
        ),
    )
}


def render(name: str, **values: Any) -> str:
    return TEMPLATES[name].render(**values)


# --- transport and adapters ---------------------------------------------------


def post_json(url: str, headers: Dict[str, str], body: Dict[str, Any], timeout: float) -> Dict[str, Any]:
    import httpx

    try:
        response = httpx.post(url, headers=headers, json=body, timeout=timeout)
        response.raise_for_status()
        return response.json()
    except (httpx.HTTPError, ValueError) as exc:
        raise LlmTransportError(f"{type(exc).__name__}: {exc}") from exc


SYSTEM_PROMPT = (
    "You simulate the daily mobility decisions of one person. Answer with a single JSON object and nothing else."
)

CORRECTION = "Your previous reply was rejected: {reason}. Reply again with only a corrected JSON object."


class LlmAdapter:
    """Shared completion loop: extract, validate, retry with a correction note."""

    max_retries: int = 0

    def _chat(self, messages: List[Dict[str, str]], purpose: Optional[str]) -> str:
        raise NotImplementedError

    def complete(
        self,
        prompt: str,
        schema: Union[str, Dict[str, type]],
        purpose: Optional[str] = None,
        check: Optional[Callable[[Any], None]] = None,
        max_retries: Optional[int] = None,
    ) -> Any:
        """Send ``prompt`` and return the first reply object that passes ``schema`` and ``check``.

        ``check`` may raise LlmValidationError for content-level problems (an
        id outside the candidate list, say); those are retried like schema
        failures. Raises LlmTransportError or LlmValidationError once the
        retries are spent.
        """
        if not prompt.strip():
            raise PromptError("empty prompt")
        if purpose is None and isinstance(schema, str):
            purpose = schema
        retries = self.max_retries if max_retries is None else max_retries
        messages = [{"role": "system", "content": SYSTEM_PROMPT}, {"role": "user", "content": prompt}]
        last_error: LlmError = LlmValidationError("no attempt made")
        self.last_retry_count = 0
        for attempt in range(retries + 1):
            self.last_retry_count = attempt
            try:
                reply = self._chat(messages, purpose)
            except LlmTransportError as exc:
                logger.warning("llm transport failure (attempt %d): %s", attempt + 1, exc)
                last_error = exc
                continue
            try:
                obj = validate(extract_json(reply), schema)
                if check is not None:
                    check(obj)
                return obj
            except LlmValidationError as exc:
                logger.info("llm reply rejected (attempt %d): %s", attempt + 1, exc)
                last_error = exc
                messages = messages + [
                    {"role": "assistant", "content": reply},
                    {"role": "user", "content": CORRECTION.format(reason=exc)},
                ]
        raise last_error


class ChatCompletionAdapter(LlmAdapter):
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint."""

    def __init__(self, config: LlmConfig, transport: Optional[Transport] = None):
        self.config = config
        self.max_retries = config.max_retries
        self.transport = transport or post_json

    def _chat(self, messages, purpose):
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {"model": self.config.model_name, "messages": messages, "temperature": self.config.temperature}
        data = self.transport(self.config.endpoint_url, headers, body, self.config.timeout)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise LlmTransportError("malformed chat-completion response") from None


class ScriptedMock(LlmAdapter):
    """Offline adapter replaying canned replies in order.

    ``script`` is a list of replies, or a mapping from purpose (template name)
    to such a list, with an optional ``"default"`` list. Replies may be strings,
    JSON-able objects, or exception instances (raised as transport failures).
    The last reply of a list repeats once the list is exhausted.
    """

    def __init__(self, script: Union[Sequence[Any], Mapping[str, Sequence[Any]]], max_retries: int = 1):
        if isinstance(script, Mapping):
            self._queues = {k: list(v) for k, v in script.items()}
        else:
            self._queues = {"default": list(script)}
        self._cursor: Dict[str, int] = {k: 0 for k in self._queues}
        self.max_retries = max_retries
        self.prompts: List[str] = []
        self.transcripts: List[List[Dict[str, str]]] = []
        self.calls = 0
        self._lock = threading.Lock()

    def _chat(self, messages, purpose):
        with self._lock:
            self.calls += 1
            self.prompts.append(messages[1]["content"])
            self.transcripts.append(list(messages))
            key = purpose if purpose in self._queues else "default"
            queue = self._queues.get(key)
            if not queue:
                raise LlmTransportError(f"scripted mock has no replies for {purpose!r}")
            i = self._cursor[key]
            reply = queue[min(i, len(queue) - 1)]
            self._cursor[key] = i + 1
        if isinstance(reply, BaseException):
            raise LlmTransportError(str(reply)) from reply
        if isinstance(reply, str):
            return reply
        return json.dumps(reply)


def scripted_mock(script, max_retries: int = 1) -> ScriptedMock:
    return ScriptedMock(script, max_retries=max_retries)


def make_adapter(cfg: Mapping, transport: Optional[Transport] = None) -> LlmAdapter:
    """Adapter from an ``llm`` config section; ``mock_script`` selects the offline mock."""
    if cfg.get("mock_script") is not None:
        return ScriptedMock(cfg["mock_script"], max_retries=int(cfg.get("max_retries", 1)))
    return ChatCompletionAdapter(LlmConfig.from_config(cfg), transport=transport)
