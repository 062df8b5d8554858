"""Corpus containers and file formats.

Three inputs are understood:

* JSONL parallel/preference corpora with string fields ``src``,
  ``tgt_preferred`` and optionally ``tgt_rejected``, whitespace tokenized.
* Pharaoh word alignments, one line per sentence pair, each link written
  ``i-j`` with 0-based source index ``i`` and target index ``j``.
* CoNLL-U dependency annotations, of which only the ID and HEAD columns are
  consumed.

All indices on the parsed containers are 1-based; 0 marks the root in
dependency heads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class Sentence:
    """An immutable whitespace-tokenized sentence."""

    tokens: tuple[str, ...]
    language_tag: str = ""

    def __post_init__(self):
        for tok in self.tokens:
            if not isinstance(tok, str) or tok == "":
                raise ValidationError("sentence tokens must be non-empty strings")
            if any(ch.isspace() for ch in tok):
                raise ValidationError(f"token {tok!r} contains whitespace")

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)

    @classmethod
    def from_text(cls, text: str, language_tag: str = "") -> "Sentence":
        return cls(tuple(text.split()), language_tag)


@dataclass(frozen=True)
class ParallelExample:
    """A source sentence with one reference translation."""

    source: Sentence
    target: Sentence

    def __post_init__(self):
        if len(self.source) == 0:
            raise ValidationError("source sentence must be non-empty")
        if len(self.target) == 0:
            raise ValidationError("target sentence must be non-empty")


@dataclass(frozen=True)
class PreferenceExample:
    """A source with a preferred translation and, optionally, a rejected one.

    When both sides are present they must differ token-wise; a pair that
    agrees carries no preference signal and is rejected at construction.
    """

    source: Sentence
    preferred: Sentence
    rejected: Sentence | None = None

    def __post_init__(self):
        if len(self.source) == 0:
            raise ValidationError("source sentence must be non-empty")
        if len(self.preferred) == 0:
            raise ValidationError("preferred translation must be non-empty")
        if self.rejected is not None:
            if len(self.rejected) == 0:
                raise ValidationError("rejected translation must be non-empty when present")
            if self.rejected.tokens == self.preferred.tokens:
                raise ValidationError("preferred and rejected translations are identical")

    def as_parallel(self) -> ParallelExample:
        return ParallelExample(self.source, self.preferred)


@dataclass(frozen=True)
class AlignmentMap:
    """Word alignment links as (target_index, source_index) pairs, 1-based."""

    links: frozenset[tuple[int, int]]
    target_len: int
    source_len: int

    def __post_init__(self):
        if self.target_len < 1 or self.source_len < 1:
            raise ValidationError("alignment sides must be non-empty")
        for t, s in self.links:
            if not (1 <= t <= self.target_len):
                raise ValidationError(f"target index {t} out of range 1..{self.target_len}")
            if not (1 <= s <= self.source_len):
                raise ValidationError(f"source index {s} out of range 1..{self.source_len}")

    def source_indices(self, target_index: int) -> tuple[int, ...]:
        """Sorted source indices linked to one 1-based target position."""
        return tuple(sorted(s for t, s in self.links if t == target_index))


@dataclass(frozen=True)
class DependencyTree:
    """Heads per token, 1-based, with 0 marking the single root."""

    heads: tuple[int, ...]

    def __post_init__(self):
        n = len(self.heads)
        if n == 0:
            raise ValidationError("dependency tree must have at least one token")
        roots = [i for i, h in enumerate(self.heads) if h == 0]
        if len(roots) != 1:
            raise ValidationError(f"expected exactly one root, found {len(roots)}")
        for i, h in enumerate(self.heads):
            if not (0 <= h <= n):
                raise ValidationError(f"head {h} of token {i + 1} out of range 0..{n}")
            if h == i + 1:
                raise ValidationError(f"token {i + 1} is its own head")
        # Every node must reach the root; a cycle would loop longer than n steps.
        for i in range(n):
            node, steps = i + 1, 0
            while node != 0:
                node = self.heads[node - 1]
                steps += 1
                if steps > n:
                    raise ValidationError(f"cycle detected at token {i + 1}")

    def __len__(self) -> int:
        return len(self.heads)

    def children(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for i, h in enumerate(self.heads):
            out.setdefault(h, []).append(i + 1)
        return out


# ---------------------------------------------------------------------------
# JSONL corpus


def _require_text_field(record: dict, key: str, path: str | None, line: int) -> str:
    value = record.get(key)
    if not isinstance(value, str):
        raise ParseError(f"field {key!r} must be a string", path=path, line=line)
    if value.split() == []:
        raise ParseError(f"field {key!r} is empty", path=path, line=line)
    return value


def parse_jsonl_corpus(path: str | Path) -> list[PreferenceExample]:
    """Read a JSONL preference corpus, preserving line order.

    Each line is an object with ``src`` and ``tgt_preferred`` strings and an
    optional ``tgt_rejected``. Records without a rejected side are still
    usable for supervised prefix training; ops that need both sides skip or
    reject them explicitly.
    """
    path = Path(path)
    examples = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if raw.strip() == "":
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON ({e.msg})", path=str(path), line=lineno) from e
            if not isinstance(record, dict):
                raise ParseError("line is not a JSON object", path=str(path), line=lineno)
            src = _require_text_field(record, "src", str(path), lineno)
            pref = _require_text_field(record, "tgt_preferred", str(path), lineno)
            rej_text = record.get("tgt_rejected")
            rejected = None
            if rej_text is not None:
                rej_text = _require_text_field(record, "tgt_rejected", str(path), lineno)
                rejected = Sentence.from_text(rej_text)
            try:
                examples.append(
                    PreferenceExample(
                        source=Sentence.from_text(src),
                        preferred=Sentence.from_text(pref),
                        rejected=rejected,
                    )
                )
            except ValidationError as e:
                raise ParseError(str(e), path=str(path), line=lineno) from e
    return examples


def write_jsonl_corpus(examples: Iterable[PreferenceExample], path: str | Path) -> None:
    """Serialize examples one JSON object per line, keys in a fixed order."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for ex in examples:
            record: dict[str, str] = {"src": ex.source.text(), "tgt_preferred": ex.preferred.text()}
            if ex.rejected is not None:
                record["tgt_rejected"] = ex.rejected.text()
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Pharaoh alignments


def parse_pharaoh_alignment(
    line: str,
    source_len: int,
    target_len: int,
    *,
    path: str | None = None,
    lineno: int | None = None,
) -> AlignmentMap:
    """Parse one Pharaoh line (``i-j`` pairs, 0-based source-target).

    Out-of-range indices and duplicate links are errors; an empty line means
    a fully unaligned sentence pair.
    """
    seen: set[tuple[int, int]] = set()
    for item in line.split():
        parts = item.split("-")
        if len(parts) != 2:
            raise ParseError(f"malformed link {item!r}", path=path, line=lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer link {item!r}", path=path, line=lineno) from None
        if not (0 <= i < source_len):
            raise ParseError(
                f"source index {i} out of range 0..{source_len - 1}", path=path, line=lineno
            )
        if not (0 <= j < target_len):
            raise ParseError(
                f"target index {j} out of range 0..{target_len - 1}", path=path, line=lineno
            )
        link = (j + 1, i + 1)
        if link in seen:
            raise ParseError(f"duplicate link {item!r}", path=path, line=lineno)
        seen.add(link)
    return AlignmentMap(links=frozenset(seen), target_len=target_len, source_len=source_len)


def parse_pharaoh_file(
    path: str | Path, sentence_lens: list[tuple[int, int]]
) -> list[AlignmentMap]:
    """Parse a Pharaoh file given (source_len, target_len) per line."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if len(lines) != len(sentence_lens):
        raise ParseError(
            f"{len(lines)} alignment lines for {len(sentence_lens)} sentence pairs",
            path=str(path),
        )
    out = []
    for lineno, (line, (slen, tlen)) in enumerate(zip(lines, sentence_lens), start=1):
        out.append(parse_pharaoh_alignment(line, slen, tlen, path=str(path), lineno=lineno))
    return out


# ---------------------------------------------------------------------------
# CoNLL-U


def _conllu_blocks(lines: Iterable[str]) -> Iterator[tuple[int, list[tuple[int, str]]]]:
    block: list[tuple[int, str]] = []
    start = 1
    for lineno, line in enumerate(lines, start=1):
        if line.strip() == "":
            if block:
                yield start, block
                block = []
        else:
            if not block:
                start = lineno
            block.append((lineno, line))
    if block:
        yield start, block


def parse_conllu_trees(path: str | Path) -> list[DependencyTree]:
    """Extract one dependency tree per sentence from a CoNLL-U file.

    Only the ID and HEAD columns are read. Comment lines, multiword-token
    ranges (``1-2``) and empty nodes (``1.1``) are skipped.
    """
    path = Path(path)
    trees = []
    lines = path.read_text(encoding="utf-8").splitlines()
    for _, block in _conllu_blocks(lines):
        heads: list[int] = []
        expected_id = 1
        for lineno, line in block:
            if line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < 8:
                raise ParseError(
                    f"expected at least 8 tab-separated columns, got {len(cols)}",
                    path=str(path),
                    line=lineno,
                )
            token_id = cols[0]
            if "-" in token_id or "." in token_id:
                continue
            try:
                tid = int(token_id)
            except ValueError:
                raise ParseError(f"bad token id {token_id!r}", path=str(path), line=lineno) from None
            if tid != expected_id:
                raise ParseError(
                    f"token id {tid} out of sequence (expected {expected_id})",
                    path=str(path),
                    line=lineno,
                )
            expected_id += 1
            head_col = cols[6]
            try:
                head = int(head_col)
            except ValueError:
                raise ParseError(f"bad head {head_col!r}", path=str(path), line=lineno) from None
            heads.append(head)
        if not heads:
            continue
        try:
            trees.append(DependencyTree(tuple(heads)))
        except ValidationError as e:
            raise ParseError(str(e), path=str(path)) from e
    return trees
