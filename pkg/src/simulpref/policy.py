"""Confidence-gated read/write decoding.

run_session drives any agent through the incremental loop: read one source
word up front, then repeatedly ask the agent for its next token and a write
confidence. Confidence at or above the threshold writes the token; below it
the session reads the next block of source words and asks again. Once the
source is exhausted every remaining decision is a forced write, so a
terminating agent ends the session by emitting the stop signal (next_token
None) and a non-terminating one runs into the length cap.

run_wait_k ignores confidences entirely and follows the fixed schedule
g(t) = min(k + t - 1, source_len).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .corpus import Sentence
from .errors import SessionError, ValidationError
from .latency import Read, ReadWriteTrace, Write


@dataclass(frozen=True)
class AgentStep:
    """One agent decision: the greedy next token (None to stop) and the
    confidence that writing now is safe."""

    next_token: str | None
    confidence: float
    distribution: dict[str, float] | None = None

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")
        if self.next_token is not None and self.next_token == "":
            raise ValidationError("next_token must be a non-empty string or None")


class Agent(Protocol):
    def step(self, source_prefix: Sentence, target_prefix: Sentence) -> AgentStep:
        """Decide on the next token given the visible prefixes."""
        ...


@dataclass(frozen=True)
class PolicyConfig:
    read_length: int = 1
    threshold: float = 0.5
    max_target_len: int = 64

    def __post_init__(self):
        if self.read_length < 1:
            raise ValidationError("read_length must be at least 1")
        if not (0.0 <= self.threshold <= 1.0):
            raise ValidationError("threshold must lie in [0, 1]")
        if self.max_target_len < 1:
            raise ValidationError("max_target_len must be at least 1")


@dataclass(frozen=True)
class SessionResult:
    hypothesis: Sentence
    trace: ReadWriteTrace
    truncated: bool


def _agent_step(agent: Agent, source_prefix: Sentence, target_prefix: Sentence) -> AgentStep:
    try:
        step = agent.step(source_prefix, target_prefix)
    except Exception as e:  # agent code is caller-supplied
        raise SessionError(f"agent failed at target position {len(target_prefix) + 1}") from e
    if not isinstance(step, AgentStep):
        raise SessionError(f"agent returned {type(step).__name__}, expected AgentStep")
    return step


def run_session(
    agent: Agent,
    source: Sentence,
    cfg: PolicyConfig = PolicyConfig(),
    ref_len: int | None = None,
) -> SessionResult:
    """Run the confidence-gated loop over one source sentence.

    ref_len feeds the trace for latency evaluation and defaults to the
    hypothesis length when no reference is known.
    """
    if len(source) == 0:
        raise ValidationError("cannot run a session on an empty source")
    events: list[Read | Write] = [Read(1)]
    read = 1
    hyp: list[str] = []
    truncated = False
    while True:
        prefix = Sentence(source.tokens[:read], source.language_tag)
        target = Sentence(tuple(hyp), "")
        step = _agent_step(agent, prefix, target)
        exhausted = read >= len(source)
        if exhausted or step.confidence >= cfg.threshold:
            if step.next_token is None:
                break
            if len(hyp) >= cfg.max_target_len:
                truncated = True
                break
            events.append(Write(step.next_token))
            hyp.append(step.next_token)
        else:
            events.append(Read(min(cfg.read_length, len(source) - read)))
            read = min(len(source), read + cfg.read_length)
    trace = ReadWriteTrace(
        events=tuple(events),
        source_len=len(source),
        ref_len=ref_len if ref_len is not None else max(1, len(hyp)),
    )
    return SessionResult(Sentence(tuple(hyp), ""), trace, truncated)


def run_wait_k(
    agent: Agent,
    source: Sentence,
    k: int,
    ratio: float = 1.0,
    max_target_len: int = 256,
    ref_len: int | None = None,
) -> SessionResult:
    """Fixed-schedule decoding: read k words, then alternate write/read.

    The delay of word t is min(k + floor((t-1)/ratio), source_len); the
    default ratio of 1 is the classic one-read-per-write schedule. Agent
    confidences are ignored.
    """
    if len(source) == 0:
        raise ValidationError("cannot run a session on an empty source")
    if k < 1:
        raise ValidationError("k must be at least 1")
    if ratio <= 0:
        raise ValidationError("ratio must be positive")
    events: list[Read | Write] = []
    read = 0
    hyp: list[str] = []
    truncated = False
    t = 1
    while True:
        needed = min(k + math.floor((t - 1) / ratio), len(source))
        if needed > read:
            events.append(Read(needed - read))
            read = needed
        prefix = Sentence(source.tokens[:read], source.language_tag)
        step = _agent_step(agent, prefix, Sentence(tuple(hyp), ""))
        if step.next_token is None:
            break
        if len(hyp) >= max_target_len:
            truncated = True
            break
        events.append(Write(step.next_token))
        hyp.append(step.next_token)
        t += 1
    trace = ReadWriteTrace(
        events=tuple(events),
        source_len=len(source),
        ref_len=ref_len if ref_len is not None else max(1, len(hyp)),
    )
    return SessionResult(Sentence(tuple(hyp), ""), trace, truncated)


@dataclass
class ScriptedAgent:
    """Replays a confidence script indexed by query and tokens by position.

    Each call consumes the next scripted confidence (1.0 once the script is
    spent). The token returned for target position t is tokens[t-1], or the
    stop signal when the token script is spent.
    """

    confidences: Sequence[float]
    tokens: Sequence[str]
    queries_seen: int = field(default=0, init=False)

    def step(self, source_prefix: Sentence, target_prefix: Sentence) -> AgentStep:
        if self.queries_seen < len(self.confidences):
            conf = float(self.confidences[self.queries_seen])
        else:
            conf = 1.0
        self.queries_seen += 1
        pos = len(target_prefix)
        token = self.tokens[pos] if pos < len(self.tokens) else None
        return AgentStep(next_token=token, confidence=conf)

    def reset(self) -> None:
        self.queries_seen = 0


class CopyAgent:
    """Writes each visible source word once, then stops.

    A stand-in for a perfect one-to-one translator: useful for exercising
    fixed schedules where hyp_len equals source_len.
    """

    def step(self, source_prefix: Sentence, target_prefix: Sentence) -> AgentStep:
        pos = len(target_prefix)
        if pos < len(source_prefix):
            return AgentStep(next_token=source_prefix.tokens[pos], confidence=1.0)
        return AgentStep(next_token=None, confidence=1.0)
