from __future__ import annotations

import numpy as np
import pytest

from simulpref.corpus import AlignmentMap, DependencyTree, Sentence
from simulpref.errors import ValidationError
from simulpref.metrics import (
    aligned_source_positions,
    dependency_depth,
    inversion_count,
    normalized_inversion_rate,
    sentence_length_ratio,
    token_f1,
)


def brute_force_inversions(seq) -> int:
    n = len(seq)
    return sum(1 for i in range(n) for j in range(i + 1, n) if seq[i] > seq[j])


class TestInversionCount:
    def test_hand_cases(self):
        assert inversion_count([]) == 0
        assert inversion_count([4]) == 0
        assert inversion_count([1, 2, 3]) == 0
        assert inversion_count([3, 2, 1]) == 3
        assert inversion_count([2, 1, 3]) == 1
        assert inversion_count([1, 1, 1]) == 0  # ties are not inversions

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(13)
        for _ in range(400):
            n = int(rng.integers(0, 30))
            seq = rng.integers(0, 8, n).tolist()  # many ties
            assert inversion_count(seq) == brute_force_inversions(seq)

    def test_matches_brute_force_on_permutations(self):
        rng = np.random.default_rng(14)
        for _ in range(300):
            n = int(rng.integers(2, 51))
            seq = rng.permutation(n).tolist()
            assert inversion_count(seq) == brute_force_inversions(seq)


class TestNormalizedInversionRate:
    def test_sorted_is_zero(self):
        assert normalized_inversion_rate([1, 2, 3, 4]).value == 0.0

    def test_reversed_is_hundred(self):
        assert normalized_inversion_rate([4, 3, 2, 1]).value == 100.0

    def test_worked_example(self):
        # One inversion among three positions: 2/(3*2)*100.
        nir = normalized_inversion_rate([1, 3, 2])
        assert nir.value == pytest.approx(100.0 / 3.0)
        assert nir.defined

    def test_short_sequences_flagged(self):
        for seq in ([], [5]):
            nir = normalized_inversion_rate(seq)
            assert nir.value == 0.0
            assert not nir.defined

    def test_reverse_complement_without_ties(self):
        rng = np.random.default_rng(15)
        for _ in range(200):
            n = int(rng.integers(2, 40))
            seq = rng.permutation(n).tolist()
            fwd = normalized_inversion_rate(seq).value
            bwd = normalized_inversion_rate(seq[::-1]).value
            assert fwd + bwd == pytest.approx(100.0)


class TestAlignedSourcePositions:
    def test_min_link_and_unaligned_drop(self):
        amap = AlignmentMap(
            frozenset({(1, 4), (1, 2), (3, 1)}), target_len=3, source_len=4
        )
        assert aligned_source_positions(amap) == [2, 1]

    def test_fully_unaligned_is_empty(self):
        amap = AlignmentMap(frozenset(), target_len=3, source_len=4)
        assert aligned_source_positions(amap) == []


class TestSentenceLengthRatio:
    def test_plain_ratio(self):
        assert sentence_length_ratio(Sentence.from_text("a b c"), Sentence.from_text("x y")) == 1.5

    def test_accepts_sequences(self):
        assert sentence_length_ratio(["a"], ["x", "y", "z", "w"]) == 0.25

    def test_empty_source_rejected(self):
        with pytest.raises(ValidationError):
            sentence_length_ratio(["a"], [])


class TestDependencyDepth:
    def test_chain_of_four(self):
        assert dependency_depth(DependencyTree((0, 1, 2, 3))) == 4

    def test_flat_tree(self):
        assert dependency_depth(DependencyTree((0, 1, 1, 1, 1))) == 2

    def test_bare_root(self):
        assert dependency_depth(DependencyTree((0,))) == 1

    def test_branching(self):
        # root 1 -> {2 -> 4, 3}; longest path has 3 nodes.
        assert dependency_depth(DependencyTree((0, 1, 1, 2))) == 3


class TestTokenF1:
    def test_identical_is_one(self):
        assert token_f1(["a", "b"], ["a", "b"]) == 1.0

    def test_disjoint_is_zero(self):
        assert token_f1(["a"], ["b"]) == 0.0

    def test_half_overlap(self):
        assert token_f1(["a", "b"], ["a", "c"]) == pytest.approx(0.5)

    def test_multiset_counting(self):
        # "a a" vs "a": overlap 1, P=0.5, R=1 -> F1 = 2/3.
        assert token_f1(["a", "a"], ["a"]) == pytest.approx(2 / 3)

    def test_order_insensitive(self):
        assert token_f1(["x", "y", "z"], ["z", "y", "x"]) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            token_f1([], ["a"])
