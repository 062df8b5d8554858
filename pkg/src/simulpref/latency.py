"""Read/write traces and latency metrics for simultaneous decoding.

A trace is the event log of one session: READ events carrying a source word
count and WRITE events carrying one emitted target word. The delay vector
g(t) gives, for each written word t, how many source words had been read
before it; every latency metric here is a function of g and the sentence
lengths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class Read:
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValidationError("READ count must be at least 1")


@dataclass(frozen=True)
class Write:
    token: str

    def __post_init__(self):
        if not isinstance(self.token, str) or self.token == "":
            raise ValidationError("WRITE token must be a non-empty string")


TraceEvent = Union[Read, Write]


@dataclass(frozen=True)
class ReadWriteTrace:
    """Event log of one session plus the sentence lengths metrics need.

    Reads may total less than source_len when the session stopped early;
    they can never exceed it. At least one READ precedes the first WRITE.
    """

    events: tuple[TraceEvent, ...]
    source_len: int
    ref_len: int

    def __post_init__(self):
        if self.source_len < 1:
            raise ValidationError("source_len must be at least 1")
        if self.ref_len < 1:
            raise ValidationError("ref_len must be at least 1")
        read_total = 0
        seen_read = False
        for ev in self.events:
            if isinstance(ev, Read):
                read_total += ev.count
                seen_read = True
            elif isinstance(ev, Write):
                if not seen_read:
                    raise ValidationError("WRITE before any READ")
            else:
                raise ValidationError(f"unknown trace event {ev!r}")
        if read_total > self.source_len:
            raise ValidationError(
                f"trace reads {read_total} words but source_len is {self.source_len}"
            )

    @property
    def hyp_len(self) -> int:
        return sum(1 for ev in self.events if isinstance(ev, Write))

    def hypothesis_tokens(self) -> tuple[str, ...]:
        return tuple(ev.token for ev in self.events if isinstance(ev, Write))


@dataclass(frozen=True)
class DelayVector:
    """g(t) for t = 1..hyp_len, non-decreasing, each within 1..source_len."""

    delays: tuple[int, ...]
    source_len: int

    def __post_init__(self):
        if len(self.delays) == 0:
            raise ValidationError("delay vector must cover at least one written word")
        prev = 1
        for g in self.delays:
            if not (1 <= g <= self.source_len):
                raise ValidationError(f"delay {g} outside 1..{self.source_len}")
            if g < prev:
                raise ValidationError("delays must be non-decreasing")
            prev = g

    def __len__(self) -> int:
        return len(self.delays)


def delays_from_trace(trace: ReadWriteTrace) -> DelayVector:
    """Cumulative source words read before each WRITE."""
    if trace.hyp_len < 1:
        raise ValidationError("trace has no WRITE events")
    delays = []
    read = 0
    for ev in trace.events:
        if isinstance(ev, Read):
            read += ev.count
        else:
            delays.append(read)
    return DelayVector(tuple(delays), trace.source_len)


def _as_delays(g: Union[DelayVector, Sequence[int]], source_len: int | None) -> tuple[Sequence[int], int]:
    if isinstance(g, DelayVector):
        return g.delays, g.source_len
    if source_len is None:
        raise ValidationError("source_len is required with a plain delay sequence")
    return g, source_len


def average_lagging(
    g: Union[DelayVector, Sequence[int]],
    source_len: int | None = None,
    ref_len: int | None = None,
) -> float:
    """Mean lag behind an ideal diagonal, cut off where the source runs out.

    The diagonal slope uses ref_len/source_len; the sum stops at the first
    position whose delay covers the full source, or at the last written word
    if none does.
    """
    delays, source_len = _as_delays(g, source_len)
    if ref_len is None:
        raise ValidationError("ref_len is required")
    if ref_len < 1:
        raise ValidationError("ref_len must be at least 1")
    gamma = ref_len / source_len
    tau = len(delays)
    for t, d in enumerate(delays, start=1):
        if d == source_len:
            tau = t
            break
    total = 0.0
    for t in range(1, tau + 1):
        total += delays[t - 1] - (t - 1) / gamma
    return total / tau


def length_adaptive_average_lagging(
    g: Union[DelayVector, Sequence[int]],
    source_len: int | None = None,
    ref_len: int | None = None,
) -> float:
    """Average lagging with the diagonal slope adapted to over-long output.

    Identical to average_lagging except the slope numerator is
    max(ref_len, hyp_len), which keeps over-generation from producing
    deceptively low lag.
    """
    delays, source_len = _as_delays(g, source_len)
    if ref_len is None:
        raise ValidationError("ref_len is required")
    if ref_len < 1:
        raise ValidationError("ref_len must be at least 1")
    gamma = max(ref_len, len(delays)) / source_len
    tau = len(delays)
    for t, d in enumerate(delays, start=1):
        if d == source_len:
            tau = t
            break
    total = 0.0
    for t in range(1, tau + 1):
        total += delays[t - 1] - (t - 1) / gamma
    return total / tau


def average_proportion(
    g: Union[DelayVector, Sequence[int]],
    source_len: int | None = None,
) -> float:
    """Mean read fraction over written words: sum g(t) / (source_len * hyp_len)."""
    delays, source_len = _as_delays(g, source_len)
    if len(delays) == 0:
        raise ValidationError("delay vector is empty")
    return sum(delays) / (source_len * len(delays))


def differentiable_average_lagging(
    g: Union[DelayVector, Sequence[int]],
    source_len: int | None = None,
    ref_len: int | None = None,
) -> float:
    """Minimum-gap smoothed lag, averaged over every written word.

    Delays are first pushed through g'(t) = max(g(t), g'(t-1) + 1/gamma)
    with g'(0) = 0, which charges at least one diagonal step per word, then
    averaged against the diagonal over all positions (no cutoff).
    """
    delays, source_len = _as_delays(g, source_len)
    if ref_len is None:
        raise ValidationError("ref_len is required")
    if ref_len < 1:
        raise ValidationError("ref_len must be at least 1")
    gamma = ref_len / source_len
    smoothed = []
    prev = 0.0
    for d in delays:
        cur = max(float(d), prev + 1.0 / gamma)
        smoothed.append(cur)
        prev = cur
    total = 0.0
    for t, s in enumerate(smoothed, start=1):
        total += s - (t - 1) / gamma
    return total / len(smoothed)


def worst_case_al_bound(
    prefix_source_len: int,
    prefix_target_len: int,
    full_source_len: int,
    full_target_len: int,
    target_budget: int,
) -> tuple[float, float]:
    """Worst-case lag of a prefix pair and its linear bound in |y|.

    Returns (al_worst, bound) where al_worst assumes every word of the
    target prefix was written only after the whole source prefix was read,
    and the bound is -C1*|y| + C2 with C1 = |X|/(2N), C2 = C1 + |X| for a
    target-length budget N. al_worst <= bound holds whenever
    |y| <= |Y| <= N and |x| <= |X|.
    """
    if min(prefix_source_len, prefix_target_len, full_source_len, full_target_len) < 1:
        raise ValidationError("lengths must be at least 1")
    if target_budget < full_target_len:
        raise ValidationError("target budget must cover the full target length")
    if prefix_source_len > full_source_len or prefix_target_len > full_target_len:
        raise ValidationError("prefix longer than the full sentence")
    al_worst = prefix_source_len - (full_source_len / (2 * full_target_len)) * (
        prefix_target_len - 1
    )
    # -C1*|y| + C2 regrouped as |X| - C1*(|y|-1): same value, but this shape
    # keeps al_worst <= bound exact in floating point on the |x| = |X| boundary
    c1 = full_source_len / (2 * target_budget)
    bound = full_source_len - c1 * (prefix_target_len - 1)
    return al_worst, bound


# ---------------------------------------------------------------------------
# Trace JSONL


def trace_to_record(trace: ReadWriteTrace, truncated: bool = False) -> dict:
    events = []
    for ev in trace.events:
        if isinstance(ev, Read):
            events.append(["R", ev.count])
        else:
            events.append(["W", ev.token])
    return {
        "source_len": trace.source_len,
        "ref_len": trace.ref_len,
        "events": events,
        "truncated": truncated,
    }


def trace_from_record(record: dict, *, path: str | None = None, lineno: int | None = None) -> ReadWriteTrace:
    for key in ("source_len", "ref_len", "events"):
        if key not in record:
            raise ParseError(f"trace record missing {key!r}", path=path, line=lineno)
    events: list[TraceEvent] = []
    for item in record["events"]:
        if not (isinstance(item, list) and len(item) == 2):
            raise ParseError(f"malformed trace event {item!r}", path=path, line=lineno)
        kind, payload = item
        if kind == "R":
            if not isinstance(payload, int):
                raise ParseError(f"READ count must be an integer, got {payload!r}", path=path, line=lineno)
            events.append(Read(payload))
        elif kind == "W":
            if not isinstance(payload, str):
                raise ParseError(f"WRITE token must be a string, got {payload!r}", path=path, line=lineno)
            events.append(Write(payload))
        else:
            raise ParseError(f"unknown trace event kind {kind!r}", path=path, line=lineno)
    try:
        return ReadWriteTrace(
            events=tuple(events),
            source_len=record["source_len"],
            ref_len=record["ref_len"],
        )
    except ValidationError as e:
        raise ParseError(str(e), path=path, line=lineno) from e


def write_trace_jsonl(traces: Iterable[tuple[ReadWriteTrace, bool]], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for trace, truncated in traces:
            fh.write(json.dumps(trace_to_record(trace, truncated), ensure_ascii=False) + "\n")


def read_trace_jsonl(path: str | Path) -> list[ReadWriteTrace]:
    path = Path(path)
    traces = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if raw.strip() == "":
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON ({e.msg})", path=str(path), line=lineno) from e
            traces.append(trace_from_record(record, path=str(path), lineno=lineno))
    return traces
