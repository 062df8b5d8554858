"""Preference-facing metrics: monotonicity, verbosity, structural simplicity.

The monotonicity score counts order inversions among the source positions a
translation's words align to; the verbosity score is a plain length ratio;
structural simplicity is the depth of a dependency tree. A multiset unigram
F1 rounds things out for translation-quality smoke checks at toy scale.
"""

from __future__ import annotations

from collections import Counter
from typing import NamedTuple, Sequence

from .corpus import AlignmentMap, DependencyTree, Sentence
from .errors import ValidationError


def aligned_source_positions(alignment: AlignmentMap) -> list[int]:
    """Source position per aligned target token, in target order.

    Tokens linked to several source words contribute the smallest linked
    index; unaligned tokens are dropped.
    """
    by_target: dict[int, int] = {}
    for t, s in alignment.links:
        cur = by_target.get(t)
        by_target[t] = s if cur is None else min(cur, s)
    return [by_target[t] for t in range(1, alignment.target_len + 1) if t in by_target]


def _merge_count(seq: list[int]) -> tuple[list[int], int]:
    n = len(seq)
    if n <= 1:
        return seq, 0
    mid = n // 2
    left, a = _merge_count(seq[:mid])
    right, b = _merge_count(seq[mid:])
    merged = []
    inv = a + b
    i = j = 0
    while i < len(left) and j < len(right):
        # Ties are not inversions, so equal keys drain the left run first.
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            merged.append(right[j])
            inv += len(left) - i
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged, inv


def inversion_count(positions: Sequence[int]) -> int:
    """Number of pairs i < j with positions[i] > positions[j], in O(n log n)."""
    return _merge_count(list(positions))[1]


class InversionRate(NamedTuple):
    value: float
    defined: bool


def normalized_inversion_rate(positions: Sequence[int]) -> InversionRate:
    """Inversions as a percentage of all pairs.

    Sequences shorter than two have no pairs; they come back as
    (0.0, defined=False) so report writers can render a zero while callers
    that care can tell the degenerate case apart.
    """
    n = len(positions)
    if n < 2:
        return InversionRate(0.0, False)
    inv = inversion_count(positions)
    return InversionRate(2.0 * inv / (n * (n - 1)) * 100.0, True)


def sentence_length_ratio(hypothesis: Sentence | Sequence[str], source: Sentence | Sequence[str]) -> float:
    """Hypothesis length over source length, in word tokens."""
    hyp_len = len(hypothesis)
    src_len = len(source)
    if src_len == 0:
        raise ValidationError("source sentence is empty")
    return hyp_len / src_len


def dependency_depth(tree: DependencyTree) -> int:
    """Maximum number of nodes on any root-to-leaf path; a bare root is 1."""
    children = tree.children()
    root = children[0][0]
    best = 0
    stack = [(root, 1)]
    while stack:
        node, depth = stack.pop()
        best = max(best, depth)
        for child in children.get(node, ()):
            stack.append((child, depth + 1))
    return best


def token_f1(hypothesis: Sentence | Sequence[str], reference: Sentence | Sequence[str]) -> float:
    """Harmonic mean of multiset unigram precision and recall."""
    hyp = list(hypothesis.tokens) if isinstance(hypothesis, Sentence) else list(hypothesis)
    ref = list(reference.tokens) if isinstance(reference, Sentence) else list(reference)
    if len(hyp) == 0 or len(ref) == 0:
        raise ValidationError("token_f1 needs non-empty hypothesis and reference")
    overlap = sum((Counter(hyp) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(hyp)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)
