from __future__ import annotations

import numpy as np
import pytest

from simulpref.corpus import AlignmentMap, PreferenceExample, Sentence
from simulpref.errors import ValidationError
from simulpref.prefixes import (
    PrefixPair,
    build_prefix_preference_dataset,
    effective_alignment_positions,
    extract_prefix_pairs,
)


def amap(links, tlen, slen):
    return AlignmentMap(frozenset(links), target_len=tlen, source_len=slen)


def brute_force_pairs(alignment: AlignmentMap) -> set[tuple[int, int]]:
    """Oracle: test the translatability condition directly for every (L, T).

    A pair qualifies when every effective position among the first T target
    tokens is within L and the position of token T+1 (infinity past the end)
    is beyond L.
    """
    eff = effective_alignment_positions(alignment)
    out = set()
    for L in range(1, alignment.source_len + 1):
        for T in range(1, alignment.target_len + 1):
            ok = all(eff[t] <= L for t in range(T))
            nxt = eff[T] if T < alignment.target_len else float("inf")
            if ok and nxt > L:
                out.add((L, T))
    return out


class TestEffectivePositions:
    def test_multi_link_takes_max(self):
        a = amap({(1, 1), (1, 3)}, tlen=1, slen=3)
        assert effective_alignment_positions(a) == [3]

    def test_unaligned_inherits_running_max(self):
        a = amap({(1, 2), (3, 1)}, tlen=4, slen=3)
        assert effective_alignment_positions(a) == [2, 2, 1, 2]

    def test_leading_unaligned_is_zero(self):
        a = amap({(2, 2)}, tlen=2, slen=2)
        assert effective_alignment_positions(a) == [0, 2]


class TestExtractPrefixPairs:
    def test_three_source_two_target(self):
        a = amap({(1, 1), (2, 3)}, tlen=2, slen=3)
        assert extract_prefix_pairs(a) == [PrefixPair(1, 1), PrefixPair(2, 1), PrefixPair(3, 2)]

    def test_first_token_needs_second_source_word(self):
        a = amap({(1, 2)}, tlen=1, slen=2)
        assert extract_prefix_pairs(a) == [PrefixPair(2, 1)]

    def test_full_pair_always_present(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            slen = int(rng.integers(1, 7))
            tlen = int(rng.integers(1, 7))
            links = {
                (int(rng.integers(1, tlen + 1)), int(rng.integers(1, slen + 1)))
                for _ in range(int(rng.integers(0, slen * tlen + 1)))
            }
            pairs = extract_prefix_pairs(amap(links, tlen, slen))
            assert PrefixPair(slen, tlen) in pairs

    def test_monotone_growth(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            slen = int(rng.integers(1, 7))
            tlen = int(rng.integers(1, 7))
            links = {
                (int(rng.integers(1, tlen + 1)), int(rng.integers(1, slen + 1)))
                for _ in range(int(rng.integers(0, 8)))
            }
            pairs = extract_prefix_pairs(amap(links, tlen, slen))
            by_l = [(p.source_prefix_len, p.target_prefix_len) for p in pairs]
            assert by_l == sorted(by_l)
            ts = [t for _, t in by_l]
            assert all(a <= b for a, b in zip(ts, ts[1:]))

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            slen = int(rng.integers(1, 7))
            tlen = int(rng.integers(1, 7))
            links = {
                (int(rng.integers(1, tlen + 1)), int(rng.integers(1, slen + 1)))
                for _ in range(int(rng.integers(0, slen * tlen + 1)))
            }
            a = amap(links, tlen, slen)
            got = {(p.source_prefix_len, p.target_prefix_len) for p in extract_prefix_pairs(a)}
            assert got == brute_force_pairs(a)


class TestBuildPreferenceDataset:
    def test_intersection_and_identity_drop(self):
        example = PreferenceExample(
            Sentence.from_text("s1 s2 s3"),
            Sentence.from_text("a b"),
            Sentence.from_text("a c b"),
        )
        align_w = amap({(1, 1), (2, 3)}, tlen=2, slen=3)
        align_l = amap({(1, 1), (2, 2), (3, 3)}, tlen=3, slen=3)
        triples = build_prefix_preference_dataset(example, align_w, align_l)
        # L=1 gives ("a",) vs ("a",): identical, dropped. L=2 gives ("a",)
        # vs ("a","c"); L=3 the full pair.
        assert len(triples) == 2
        assert triples[0].source.tokens == ("s1", "s2")
        assert triples[0].preferred.tokens == ("a",)
        assert triples[0].rejected.tokens == ("a", "c")
        assert triples[1].source.tokens == ("s1", "s2", "s3")
        assert triples[1].preferred.tokens == ("a", "b")
        assert triples[1].rejected.tokens == ("a", "c", "b")

    def test_full_triple_always_survives(self):
        rng = np.random.default_rng(3)
        vocab = [f"w{i}" for i in range(6)]
        for _ in range(100):
            slen = int(rng.integers(1, 6))
            wlen = int(rng.integers(1, 6))
            llen = int(rng.integers(1, 6))
            w = [vocab[int(i)] for i in rng.integers(0, 6, wlen)]
            l = [vocab[int(i)] for i in rng.integers(0, 6, llen)]
            if w == l:
                l = l + ["extra"]
                llen += 1
            example = PreferenceExample(
                Sentence(tuple(f"s{i}" for i in range(slen))),
                Sentence(tuple(w)),
                Sentence(tuple(l)),
            )
            links_w = {
                (int(rng.integers(1, wlen + 1)), int(rng.integers(1, slen + 1)))
                for _ in range(int(rng.integers(0, 6)))
            }
            links_l = {
                (int(rng.integers(1, llen + 1)), int(rng.integers(1, slen + 1)))
                for _ in range(int(rng.integers(0, 6)))
            }
            triples = build_prefix_preference_dataset(
                example, amap(links_w, wlen, slen), amap(links_l, llen, slen)
            )
            full = [t for t in triples if len(t.source) == slen]
            assert len(full) == 1
            assert full[0].preferred.tokens == tuple(w)
            assert full[0].rejected.tokens == tuple(l)

    def test_requires_rejected_side(self):
        example = PreferenceExample(Sentence.from_text("s"), Sentence.from_text("t"))
        a = amap(set(), 1, 1)
        with pytest.raises(ValidationError):
            build_prefix_preference_dataset(example, a, a)

    def test_length_mismatch_rejected(self):
        example = PreferenceExample(
            Sentence.from_text("s1 s2"),
            Sentence.from_text("a"),
            Sentence.from_text("b"),
        )
        good_w = amap(set(), 1, 2)
        bad_l = amap(set(), 2, 2)
        with pytest.raises(ValidationError):
            build_prefix_preference_dataset(example, good_w, bad_l)
