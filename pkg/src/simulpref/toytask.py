"""Synthetic preference corpus for exercising the trainers end to end.

The task is a deterministic token mapping with two controlled defects. Source
sentences mix content words (s0..s11 by default) with filler words (f0..f3).
The preferred translation maps the content words in source order and drops the
filler; the dispreferred one translates everything, filler included, and then
swaps adjacent pairs at a configurable rate, so it is longer and less
monotone. Gold word links are tracked through the swaps, which gives the
order and length metrics something exact to chew on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import AlignmentMap, PreferenceExample, Sentence
from .errors import ValidationError


@dataclass(frozen=True)
class SyntheticTaskSpec:
    content_vocab: int = 12
    filler_vocab: int = 4
    min_len: int = 6
    max_len: int = 12
    filler_rate: float = 0.3
    swap_rate: float = 0.5

    def __post_init__(self):
        if self.content_vocab < 1:
            raise ValidationError("need at least one content word")
        if self.filler_vocab < 0:
            raise ValidationError("filler_vocab must be >= 0")
        if not 1 <= self.min_len <= self.max_len:
            raise ValidationError("need 1 <= min_len <= max_len")
        if not 0.0 <= self.filler_rate < 1.0:
            raise ValidationError("filler_rate must be in [0, 1)")
        if not 0.0 <= self.swap_rate <= 1.0:
            raise ValidationError("swap_rate must be in [0, 1]")

    def source_vocab(self) -> tuple[str, ...]:
        content = tuple(f"s{i}" for i in range(self.content_vocab))
        filler = tuple(f"f{i}" for i in range(self.filler_vocab))
        return content + filler

    def target_vocab(self) -> tuple[str, ...]:
        content = tuple(f"t{i}" for i in range(self.content_vocab))
        filler = tuple(f"u{i}" for i in range(self.filler_vocab))
        return content + filler


def _map_token(tok: str) -> str:
    if tok.startswith("s"):
        return "t" + tok[1:]
    if tok.startswith("f"):
        return "u" + tok[1:]
    raise ValidationError(f"not a synthetic source token: {tok!r}")


def _invert_token(tok: str) -> str | None:
    if tok.startswith("t"):
        return "s" + tok[1:]
    if tok.startswith("u"):
        return "f" + tok[1:]
    return None


@dataclass(frozen=True)
class SyntheticCorpus:
    spec: SyntheticTaskSpec
    examples: tuple[PreferenceExample, ...]
    alignments_preferred: tuple[AlignmentMap, ...]
    alignments_rejected: tuple[AlignmentMap, ...]

    def __len__(self) -> int:
        return len(self.examples)


def generate_synthetic_corpus(
    spec: SyntheticTaskSpec, n_examples: int, seed: int = 0
) -> SyntheticCorpus:
    """Sample a corpus of (source, preferred, rejected) triples with gold links.

    Examples whose two sides come out identical (possible when both defect
    rates are zero) are dropped, so the returned corpus can be smaller than
    n_examples — empty in the degenerate no-filler no-swap configuration.
    """
    if n_examples < 0:
        raise ValidationError("n_examples must be >= 0")
    rng = np.random.default_rng(seed)
    examples: list[PreferenceExample] = []
    aligns_w: list[AlignmentMap] = []
    aligns_l: list[AlignmentMap] = []
    for _ in range(n_examples):
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        is_filler = rng.random(length) < spec.filler_rate
        if spec.filler_vocab == 0:
            is_filler[:] = False
        if is_filler.all():  # keep at least one content word to translate
            is_filler[int(rng.integers(length))] = False
        src_tokens = []
        for filler in is_filler:
            if filler:
                src_tokens.append(f"f{int(rng.integers(spec.filler_vocab))}")
            else:
                src_tokens.append(f"s{int(rng.integers(spec.content_vocab))}")

        # Preferred side: content words in order, filler dropped.
        w_tokens, w_links = [], []
        for pos, tok in enumerate(src_tokens, start=1):
            if not tok.startswith("f"):
                w_tokens.append(_map_token(tok))
                w_links.append((len(w_tokens), pos))

        # Rejected side: everything translated, then adjacent swaps with the
        # original source position carried along.
        l_tokens = [_map_token(t) for t in src_tokens]
        origins = list(range(1, length + 1))
        i = 0
        while i < len(l_tokens) - 1:
            if rng.random() < spec.swap_rate:
                l_tokens[i], l_tokens[i + 1] = l_tokens[i + 1], l_tokens[i]
                origins[i], origins[i + 1] = origins[i + 1], origins[i]
                i += 2
            else:
                i += 1
        l_links = [(j + 1, origins[j]) for j in range(len(l_tokens))]

        if w_tokens == l_tokens:
            continue
        source = Sentence(tuple(src_tokens))
        examples.append(
            PreferenceExample(
                source=source,
                preferred=Sentence(tuple(w_tokens)),
                rejected=Sentence(tuple(l_tokens)),
            )
        )
        aligns_w.append(AlignmentMap(frozenset(w_links), len(w_tokens), length))
        aligns_l.append(AlignmentMap(frozenset(l_links), len(l_tokens), length))
    return SyntheticCorpus(spec, tuple(examples), tuple(aligns_w), tuple(aligns_l))


def hypothesis_source_positions(hypothesis: Sentence, source: Sentence) -> list[int]:
    """Source positions for a model hypothesis, via the inverse token map.

    Each hypothesis token is matched to the leftmost not-yet-used occurrence
    of its pre-image in the source; tokens with no remaining match are
    skipped. Positions are 1-based, suitable for the order metrics.
    """
    used = [False] * len(source)
    positions: list[int] = []
    for tok in hypothesis.tokens:
        src_tok = _invert_token(tok)
        if src_tok is None:
            continue
        for i, cand in enumerate(source.tokens):
            if not used[i] and cand == src_tok:
                used[i] = True
                positions.append(i + 1)
                break
    return positions
