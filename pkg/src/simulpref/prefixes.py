"""Prefix pair extraction from word alignments.

A target prefix is translatable from a source prefix once every target token
in it is aligned within that source prefix and the next target token is not.
For each source prefix length L this yields at most one maximal target prefix
length T; the map L -> T drives both supervised prefix training and the
construction of prefix-level preference triples.

Effective alignment positions follow two conventions: a token linked to
several source words takes the largest linked index (it is only safe to emit
once all its sources are read), and an unaligned token inherits the largest
effective index among the tokens before it (0 if there is none), so it
becomes writable as soon as its left context is.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import AlignmentMap, PreferenceExample, Sentence
from .errors import ValidationError


@dataclass(frozen=True)
class PrefixPair:
    """A source prefix length with its maximal translatable target length."""

    source_prefix_len: int
    target_prefix_len: int

    def __post_init__(self):
        if self.source_prefix_len < 1:
            raise ValidationError("source prefix length must be at least 1")
        if self.target_prefix_len < 0:
            raise ValidationError("target prefix length must be non-negative")


def effective_alignment_positions(alignment: AlignmentMap) -> list[int]:
    """Effective source position per target token, 1-based, 0 if floating.

    Position t gets max(linked source indices); unaligned tokens copy the
    running maximum of earlier effective positions.
    """
    by_target: dict[int, int] = {}
    for t, s in alignment.links:
        by_target[t] = max(s, by_target.get(t, 0))
    positions = []
    running = 0
    for t in range(1, alignment.target_len + 1):
        if t in by_target:
            positions.append(by_target[t])
            running = max(running, by_target[t])
        else:
            positions.append(running)
    return positions


def extract_prefix_pairs(alignment: AlignmentMap) -> list[PrefixPair]:
    """All (L, T) prefix pairs induced by an alignment, ascending in L.

    T is the longest target prefix whose effective positions all fall within
    the first L source words. Pairs with T = 0 are dropped; (|X|, |Y|) is
    always present since effective positions never exceed |X|.
    """
    positions = effective_alignment_positions(alignment)
    prefix_max = []
    running = 0
    for p in positions:
        running = max(running, p)
        prefix_max.append(running)
    pairs = []
    for L in range(1, alignment.source_len + 1):
        T = 0
        for m in prefix_max:
            if m <= L:
                T += 1
            else:
                break
        if T >= 1:
            pairs.append(PrefixPair(L, T))
    return pairs


def prefix_table(alignment: AlignmentMap) -> dict[int, int]:
    """extract_prefix_pairs as a lookup L -> T."""
    return {p.source_prefix_len: p.target_prefix_len for p in extract_prefix_pairs(alignment)}


def build_prefix_preference_dataset(
    example: PreferenceExample,
    alignment_preferred: AlignmentMap,
    alignment_rejected: AlignmentMap,
) -> list[PreferenceExample]:
    """Prefix-level preference triples shared by both translations.

    Both alignments are projected to their prefix tables and intersected on
    the source prefix length; each shared length yields a triple of the
    source prefix with the two target prefixes. Triples whose target sides
    agree token-wise are dropped. The full-sentence triple always survives
    because the two complete translations are distinct by construction.
    """
    if example.rejected is None:
        raise ValidationError("preference dataset needs a rejected translation")
    src_len = len(example.source)
    if alignment_preferred.source_len != src_len or alignment_rejected.source_len != src_len:
        raise ValidationError("alignment source length does not match the example")
    if alignment_preferred.target_len != len(example.preferred):
        raise ValidationError("preferred-side alignment target length mismatch")
    if alignment_rejected.target_len != len(example.rejected):
        raise ValidationError("rejected-side alignment target length mismatch")

    table_w = prefix_table(alignment_preferred)
    table_l = prefix_table(alignment_rejected)
    out = []
    for L in sorted(set(table_w) & set(table_l)):
        w_prefix = example.preferred.tokens[: table_w[L]]
        l_prefix = example.rejected.tokens[: table_l[L]]
        if w_prefix == l_prefix:
            continue
        out.append(
            PreferenceExample(
                source=Sentence(example.source.tokens[:L], example.source.language_tag),
                preferred=Sentence(w_prefix, example.preferred.language_tag),
                rejected=Sentence(l_prefix, example.rejected.language_tag),
            )
        )
    return out
