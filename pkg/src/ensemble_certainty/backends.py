"""Classifier backends and response handling.

A backend turns one rendered prompt into raw completion text. Everything
after that (parsing the answer object, discarding labels outside the
candidate pool, mapping failures to abstentions) happens here and is shared
by all backends, so a scripted mock exercises the same path as a real model.
"""

from __future__ import annotations

import ast
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Any, Callable, Mapping, Protocol, Sequence, Union, runtime_checkable

import httpx

from .domain import (
    Abstain,
    AbstainReason,
    Answer,
    ClassifierOutput,
    ClassLabel,
    Multi,
    ParameterSet,
    Single,
    TaskKind,
    VariantSet,
    is_valid_label,
)

log = logging.getLogger(__name__)

DEFAULT_TEMPLATES = {
    TaskKind.ENDPOINT: "endpoint_v1",
    TaskKind.PARAMETER: "parameter_v1",
}
REPHRASE_TEMPLATE = "rephrase_v1"

_TERMINATOR_TAIL = re.compile(r"(?:\s*<\|[^|<>]*\|>)+\s*$")


class ParseError(ValueError):
    pass


class BackendError(RuntimeError):
    pass


@dataclass(frozen=True)
class PromptSpec:
    question: str
    candidates: tuple[ClassLabel, ...]
    task_kind: TaskKind = TaskKind.ENDPOINT
    template_id: str | None = None

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("prompt needs at least one candidate")
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        if self.template_id is None:
            object.__setattr__(self, "template_id", DEFAULT_TEMPLATES[self.task_kind])


@runtime_checkable
class ClassifierBackend(Protocol):
    identity: str
    task_kinds: frozenset[TaskKind]

    def respond(self, spec: PromptSpec, messages: list[dict[str, str]]) -> str:
        """Raw completion for a rendered prompt; raise BackendError on failure."""
        ...


# -- templates ---------------------------------------------------------------


@lru_cache(maxsize=None)
def load_template(template_id: str, directory: str | None = None) -> tuple[Template, Template]:
    """(system, user) templates. The file separates them with a ``---`` line."""
    if directory is not None:
        with open(os.path.join(directory, f"{template_id}.txt"), encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = resources.files(__package__).joinpath("templates", f"{template_id}.txt").read_text("utf-8")
    system, sep, user = text.partition("\n---\n")
    if not sep:
        system, user = "", text
    return Template(system.strip()), Template(user.strip())


def render_messages(spec: PromptSpec, template_dir: str | None = None) -> list[dict[str, str]]:
    system, user = load_template(spec.template_id, template_dir)
    fields = {
        "question": spec.question,
        "candidates": "\n".join(f"- {c}" for c in spec.candidates),
        "task": spec.task_kind.value,
    }
    messages = []
    sys_text = system.safe_substitute(fields)
    if sys_text:
        messages.append({"role": "system", "content": sys_text})
    messages.append({"role": "user", "content": user.safe_substitute(fields)})
    return messages


def render_response(label: ClassLabel | Sequence[ClassLabel], reason: str, task_kind: TaskKind) -> str:
    """Well-formed JSON response, as a detector model is asked to produce."""
    if task_kind is TaskKind.ENDPOINT:
        return json.dumps({"endpoint": label, "reason": reason})
    return json.dumps({"parameters": list(label), "reason": reason})


# -- parsing -----------------------------------------------------------------


def _balanced_spans(text: str):
    """Yield substrings that start at '{' and end at the matching '}'."""
    for start, ch in enumerate(text):
        if ch != "{":
            continue
        depth = 0
        quote = None
        escaped = False
        for i in range(start, len(text)):
            c = text[i]
            if quote:
                if escaped:
                    escaped = False
                elif c == "\\":
                    escaped = True
                elif c == quote:
                    quote = None
            elif c in "'\"":
                quote = c
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    yield text[start : i + 1]
                    break


def _reject_duplicates(pairs):
    keys = [k for k, _ in pairs]
    if len(keys) != len(set(keys)):
        raise ParseError(f"duplicate keys in response object: {keys}")
    return dict(pairs)


def _parse_object(chunk: str) -> dict | None:
    try:
        obj = json.loads(chunk, object_pairs_hook=_reject_duplicates)
        return obj if isinstance(obj, dict) else None
    except json.JSONDecodeError:
        pass
    try:
        node = ast.parse(chunk, mode="eval").body
    except SyntaxError:
        return None
    if not isinstance(node, ast.Dict):
        return None
    keys = []
    for k in node.keys:
        if not isinstance(k, ast.Constant):
            return None
        keys.append(k.value)
    if len(keys) != len(set(keys)):
        raise ParseError(f"duplicate keys in response object: {keys}")
    try:
        return ast.literal_eval(node)
    except (ValueError, SyntaxError):
        return None


def first_object(raw: str) -> dict:
    """First dict literal (JSON or Python syntax) embedded in ``raw``."""
    for chunk in _balanced_spans(raw):
        obj = _parse_object(chunk)
        if obj is not None:
            return obj
    raise ParseError("no object found in response")


def strip_terminators(text: str) -> str:
    return _TERMINATOR_TAIL.sub("", text).strip()


def _reason(obj: Mapping[str, Any]) -> str:
    reason = obj.get("reason", "")
    if not isinstance(reason, str):
        raise ParseError("reason must be a string")
    return strip_terminators(reason)


def parse_endpoint_response(raw: str) -> tuple[ClassLabel, str]:
    obj = first_object(raw)
    endpoint = obj.get("endpoint")
    if not isinstance(endpoint, str) or not is_valid_label(endpoint):
        raise ParseError("missing or invalid 'endpoint'")
    return strip_terminators(endpoint), _reason(obj)


def parse_parameter_response(raw: str) -> tuple[ParameterSet, str]:
    obj = first_object(raw)
    if "parameters" in obj and "params" in obj:
        raise ParseError("both 'parameters' and 'params' present")
    params = obj.get("parameters", obj.get("params"))
    if not isinstance(params, list) or not all(isinstance(p, str) and is_valid_label(p) for p in params):
        raise ParseError("missing or invalid 'parameters' list")
    try:
        return ParameterSet.of(params), _reason(obj)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def filter_candidates(answer: Answer, candidates: Sequence[ClassLabel]) -> Answer:
    """Discard anything outside the candidate pool (exact string match)."""
    pool = set(candidates)
    if isinstance(answer, Single):
        return answer if answer.label in pool else Abstain(AbstainReason.NOT_IN_CANDIDATES)
    if isinstance(answer, Multi):
        kept = [p for p in answer.params if p in pool]
        if len(kept) == len(answer.params):
            return answer
        if not kept:
            return Abstain(AbstainReason.NOT_IN_CANDIDATES)
        return Multi(ParameterSet.of(kept))
    return answer


def classify(
    backend: ClassifierBackend,
    spec: PromptSpec,
    variant_index: int = 0,
    template_dir: str | None = None,
) -> ClassifierOutput:
    messages = render_messages(spec, template_dir)
    try:
        raw = backend.respond(spec, messages)
    except BackendError as exc:
        log.warning("backend %s failed on variant %d: %s", backend.identity, variant_index, exc)
        return ClassifierOutput(variant_index, Abstain(AbstainReason.BACKEND_ERROR), "", "")
    try:
        if spec.task_kind is TaskKind.ENDPOINT:
            label, reason = parse_endpoint_response(raw)
            answer: Answer = Single(label)
        else:
            params, reason = parse_parameter_response(raw)
            answer = Multi(params)
    except ParseError:
        return ClassifierOutput(variant_index, Abstain(AbstainReason.PARSE_FAILURE), "", raw)
    return ClassifierOutput(variant_index, filter_candidates(answer, spec.candidates), reason, raw)


def ensemble_classify(
    backend: ClassifierBackend,
    vs: VariantSet,
    parallelism: int = 4,
    template_id: str | None = None,
    template_dir: str | None = None,
) -> list[ClassifierOutput]:
    """Pose every variant to ``backend``; outputs come back in variant order."""
    if vs.task_kind not in backend.task_kinds:
        raise ValueError(f"backend {backend.identity} does not support {vs.task_kind.value} tasks")
    specs = [PromptSpec(q, vs.candidates, vs.task_kind, template_id) for q in vs.variants]
    if parallelism <= 1 or len(specs) <= 1:
        return [classify(backend, s, j, template_dir) for j, s in enumerate(specs)]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(classify, backend, s, j, template_dir) for j, s in enumerate(specs)]
        return [f.result() for f in futures]


# -- concrete backends -------------------------------------------------------


Script = Union[Mapping[str, Any], Sequence[Any], Callable[[PromptSpec], str]]


class ScriptedBackend:
    """Deterministic stand-in that replays canned responses.

    ``responses`` is either a mapping from question text to raw response, a
    sequence consumed in call order (cycled), or a callable. An exception
    instance in place of a response is raised (BackendError for transport
    simulation). ``free_text`` feeds :meth:`generate`.
    """

    def __init__(
        self,
        responses: Script,
        default: str | None = None,
        free_text: Sequence[str] | str | None = None,
        identity: str = "mock",
        task_kinds: frozenset[TaskKind] = frozenset(TaskKind),
    ):
        self.responses = responses
        self.default = default
        self.free_text = [free_text] if isinstance(free_text, str) else list(free_text or [])
        self.identity = identity
        self.task_kinds = task_kinds
        self.calls: list[PromptSpec] = []
        self._lock = threading.Lock()
        self._cursor = 0
        self._text_cursor = 0

    def respond(self, spec: PromptSpec, messages: list[dict[str, str]]) -> str:
        with self._lock:
            self.calls.append(spec)
            if callable(self.responses):
                out = self.responses(spec)
            elif isinstance(self.responses, Mapping):
                out = self.responses.get(spec.question, self.default)
            else:
                out = self.responses[self._cursor % len(self.responses)] if self.responses else self.default
                self._cursor += 1
        if out is None:
            raise BackendError(f"no scripted response for {spec.question!r}")
        if isinstance(out, BaseException):
            raise out
        return out

    def generate(self, prompt: str) -> str:
        with self._lock:
            if not self.free_text:
                raise BackendError("no scripted free-text response")
            out = self.free_text[self._text_cursor % len(self.free_text)]
            self._text_cursor += 1
        return out


class OpenAICompatBackend:
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint.

    Always sends ``temperature: 0``. Transport errors, 429 and 5xx responses
    are retried with exponential backoff, then surface as BackendError.
    """

    task_kinds = frozenset(TaskKind)

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60.0,
        retries: int = 2,
        backoff: float = 0.5,
        max_tokens: int | None = 512,
        transport: httpx.BaseTransport | None = None,
    ):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.retries = retries
        self.backoff = backoff
        self.max_tokens = max_tokens
        self.identity = f"openai-compat:{model}@{base_url}"
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def chat(self, messages: list[dict[str, str]]) -> str:
        payload: dict[str, Any] = {"model": self.model, "messages": messages, "temperature": 0}
        if self.max_tokens is not None:
            payload["max_tokens"] = self.max_tokens
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.url, json=payload)
            except httpx.TransportError as exc:
                last = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = BackendError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return str(resp.json()["choices"][0]["message"]["content"] or "")
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"malformed completion payload: {exc}") from exc
        raise BackendError(f"gave up after {self.retries + 1} attempts: {last}")

    def respond(self, spec: PromptSpec, messages: list[dict[str, str]]) -> str:
        return self.chat(messages)

    def generate(self, prompt: str) -> str:
        return self.chat([{"role": "user", "content": prompt}])
