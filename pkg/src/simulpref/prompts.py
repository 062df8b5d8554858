"""Prompt rendering and the optional annotation endpoint client.

The client speaks a chat-completions-style JSON protocol and is entirely
optional: nothing else in the package imports it, and the test suite runs it
only against a local mock server. The endpoint credential is read from the
SIMULPREF_API_KEY environment variable unless passed explicitly.
"""

from __future__ import annotations

import os
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import requests

from .corpus import ParallelExample
from .errors import ProtocolError, TransportError, ValidationError

API_KEY_ENV = "SIMULPREF_API_KEY"

# Blocks every bundled preference template must carry, one per preference
# aspect the annotator is asked to respect (latency is the policy's job).
PREFERENCE_BLOCKS = ("Quality:", "Monotonicity:", "Key points:", "Simplicity:")


@dataclass(frozen=True)
class PromptTemplate:
    text: str

    def placeholders(self) -> set[str]:
        names = set()
        for _, name, _, _ in string.Formatter().parse(self.text):
            if name is not None:
                if not name.isidentifier():
                    raise ValidationError(f"malformed placeholder {name!r} in template")
                names.add(name)
        return names

    def render(self, **values: str) -> str:
        missing = self.placeholders() - set(values)
        if missing:
            raise ValidationError(
                f"template placeholder(s) not provided: {', '.join(sorted(missing))}"
            )
        return self.text.format(**values)


def load_bundled_template(name: str = "zh_en_preference_prompt.txt") -> PromptTemplate:
    text = resources.files("simulpref").joinpath("data", name).read_text(encoding="utf-8")
    return PromptTemplate(text)


def render_preference_prompt(template: PromptTemplate, example: ParallelExample) -> str:
    return template.render(source=example.source.text(), reference=example.target.text())


@dataclass(frozen=True)
class AnnotationRequest:
    prompt: str
    model: str
    endpoint: str
    timeout: float = 30.0


@dataclass(frozen=True)
class AnnotationResponse:
    text: str
    status: int
    attempts: int
    index: int = 0


@dataclass
class AnnotationClient:
    """Retrying chat-completions client with bounded concurrency."""

    endpoint: str
    model: str
    max_attempts: int = 3
    backoff: float = 0.5
    timeout: float = 30.0
    max_workers: int = 4
    api_key: str | None = None
    session: requests.Session = field(default_factory=requests.Session)

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValidationError("max_attempts must be >= 1")
        if self.max_workers < 1:
            raise ValidationError("max_workers must be >= 1")

    def _headers(self) -> dict[str, str]:
        key = self.api_key if self.api_key is not None else os.environ.get(API_KEY_ENV)
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def annotate(self, prompt: str, index: int = 0) -> AnnotationResponse:
        request = AnnotationRequest(prompt, self.model, self.endpoint, self.timeout)
        return annotate_via_endpoint(
            request,
            session=self.session,
            max_attempts=self.max_attempts,
            backoff=self.backoff,
            headers=self._headers(),
            index=index,
        )

    def annotate_all(self, prompts: Sequence[str]) -> list[AnnotationResponse]:
        """Annotate a batch; output order follows input order regardless of
        completion order."""
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            futures = [pool.submit(self.annotate, p, i) for i, p in enumerate(prompts)]
            return [f.result() for f in futures]


def annotate_via_endpoint(
    request: AnnotationRequest,
    session: requests.Session | None = None,
    max_attempts: int = 3,
    backoff: float = 0.5,
    headers: dict[str, str] | None = None,
    index: int = 0,
) -> AnnotationResponse:
    """POST the prompt, retrying transient failures with exponential backoff.

    Server errors (5xx) and connection failures count as transient; client
    errors and unusable payloads are protocol errors and are not retried.
    """
    session = session or requests.Session()
    body = {
        "model": request.model,
        "messages": [{"role": "user", "content": request.prompt}],
    }
    last_error: Exception | None = None
    for attempt in range(1, max_attempts + 1):
        try:
            resp = session.post(
                request.endpoint, json=body, headers=headers or {}, timeout=request.timeout
            )
        except requests.RequestException as e:
            last_error = e
            if attempt < max_attempts:
                time.sleep(backoff * 2 ** (attempt - 1))
            continue
        if resp.status_code >= 500:
            last_error = TransportError(f"server returned {resp.status_code}")
            if attempt < max_attempts:
                time.sleep(backoff * 2 ** (attempt - 1))
            continue
        if resp.status_code != 200:
            raise ProtocolError(f"endpoint rejected the request: {resp.status_code}")
        try:
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise ProtocolError("endpoint returned an unusable completion payload") from e
        if not isinstance(text, str):
            raise ProtocolError("completion content is not a string")
        return AnnotationResponse(text=text, status=resp.status_code, attempts=attempt, index=index)
    raise TransportError(
        f"annotation failed after {max_attempts} attempts: {last_error}"
    ) from last_error
