"""Dictionaries for words, POS tags, parse labels, and the BIOES alphabet.

Words are lowercased and unknown words map to a reserved UNK entry. POS
tags and parse labels share one embedding table downstream, so the tag set
exposes a combined index space (POS first, labels after). The BIOES output
alphabet is derived from the parse labels in index order: for label ``a``
at index ``i`` the tags ``B-a, I-a, E-a, S-a`` occupy indices ``4i..4i+3``
and ``O`` sits last. The decoder relies on this layout.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import GreedyParseError
from .treebank import ParseTree

PADDING_WORD = "PADDING"
UNKNOWN_WORD = "UNK"

BIOES_PREFIXES = ("B", "I", "E", "S")
OUTSIDE_TAG = "O"


class VocabError(GreedyParseError):
    pass


class EmptyCorpus(VocabError):
    pass


class UnknownLabel(VocabError):
    pass


class UnknownPosTag(VocabError):
    pass


class DimensionMismatch(VocabError):
    def __init__(self, expected: int, found: int, line: int | None = None):
        self.expected = expected
        self.found = found
        where = f" at line {line}" if line is not None else ""
        super().__init__(f"expected {expected} embedding values, found {found}{where}")


class MalformedLine(VocabError):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        super().__init__(f"malformed embedding line {line}" + (f": {detail}" if detail else ""))


def bioes_alphabet(labels_in_order: Iterable[str]) -> dict[str, int]:
    """Build the BIOES tag index: 4 prefixed tags per label, then O."""
    tags: dict[str, int] = {}
    for label in labels_in_order:
        for prefix in BIOES_PREFIXES:
            tags[f"{prefix}-{label}"] = len(tags)
    tags[OUTSIDE_TAG] = len(tags)
    return tags


@dataclass
class TagSet:
    """Frozen dictionaries shared by training and inference.

    ``words`` reserves index 0 for PADDING and 1 for UNK. ``root_label``
    is the most frequent training root, used when the parser has to attach
    leftovers under a synthetic root.
    """

    words: dict[str, int]
    pos_tags: dict[str, int]
    parse_labels: dict[str, int]
    root_label: str = "S"
    bioes_tags: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.bioes_tags:
            self.bioes_tags = bioes_alphabet(self.parse_labels)

    @property
    def n_words(self) -> int:
        return len(self.words)

    @property
    def n_pos(self) -> int:
        return len(self.pos_tags)

    @property
    def n_labels(self) -> int:
        return len(self.parse_labels)

    @property
    def n_tags(self) -> int:
        """Size of the combined tag embedding space (POS then labels)."""
        return self.n_pos + self.n_labels

    @property
    def n_bioes(self) -> int:
        return len(self.bioes_tags)

    def word_index(self, word: str) -> int:
        return self.words.get(word.lower(), self.words[UNKNOWN_WORD])

    def pos_tag_index(self, pos: str) -> int:
        try:
            return self.pos_tags[pos]
        except KeyError:
            raise UnknownPosTag(f"POS tag {pos!r} not in tag set") from None

    def label_tag_index(self, label: str) -> int:
        """Index of a parse label in the combined tag embedding space."""
        try:
            return self.n_pos + self.parse_labels[label]
        except KeyError:
            raise UnknownLabel(f"parse label {label!r} not in tag set") from None

    def labels_in_order(self) -> list[str]:
        return list(self.parse_labels)

    def bioes_names(self) -> list[str]:
        return list(self.bioes_tags)


def build_tagset(trees: list[ParseTree], min_word_count: int = 1) -> TagSet:
    """Derive all dictionaries from preprocessed training trees.

    Words are lowercased; those seen fewer than ``min_word_count`` times
    are dropped (lookups fall back to UNK). Entries are sorted so the same
    corpus always yields byte-identical dictionaries.
    """
    if not trees:
        raise EmptyCorpus("cannot build a tag set from zero trees")
    word_counts: Counter = Counter()
    pos: set[str] = set()
    labels: set[str] = set()
    roots: Counter = Counter()
    for tree in trees:
        for leaf in tree.leaves():
            word_counts[leaf.word.lower()] += 1
            pos.add(leaf.label)
        for node in tree.internal_nodes():
            labels.add(node.label)
        if not tree.is_leaf:
            roots[tree.label] += 1
    words = {PADDING_WORD: 0, UNKNOWN_WORD: 1}
    for word in sorted(w for w, c in word_counts.items() if c >= min_word_count):
        words[word] = len(words)
    pos_tags = {p: i for i, p in enumerate(sorted(pos))}
    parse_labels = {l: i for i, l in enumerate(sorted(labels))}
    if roots:
        best = max(roots.values())
        root_label = min(l for l, c in roots.items() if c == best)
    else:
        root_label = "S"
    return TagSet(words, pos_tags, parse_labels, root_label)


# ---------------------------------------------------------------------------
# serialization

_SECTIONS = ("WORDS", "POS", "LABELS", "ROOT")


def save_tagset(tagset: TagSet, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("[WORDS]\n")
        for token, index in tagset.words.items():
            handle.write(f"{token}\t{index}\n")
        handle.write("[POS]\n")
        for token, index in tagset.pos_tags.items():
            handle.write(f"{token}\t{index}\n")
        handle.write("[LABELS]\n")
        for token, index in tagset.parse_labels.items():
            handle.write(f"{token}\t{index}\n")
        handle.write("[ROOT]\n")
        handle.write(f"{tagset.root_label}\n")


def load_tagset(path) -> TagSet:
    sections: dict[str, list[str]] = {name: [] for name in _SECTIONS}
    current: str | None = None
    with open(path, "r", encoding="utf-8") as handle:
        for raw in handle:
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                if current not in sections:
                    raise VocabError(f"unknown tag set section {current!r}")
                continue
            if current is None:
                raise VocabError("tag set file does not start with a section header")
            sections[current].append(line)

    def as_dict(lines: list[str], section: str) -> dict[str, int]:
        out: dict[str, int] = {}
        for line in lines:
            token, _, index = line.partition("\t")
            if not index:
                raise VocabError(f"missing index in [{section}] entry {line!r}")
            out[token] = int(index)
        if list(out.values()) != list(range(len(out))):
            raise VocabError(f"[{section}] indices are not dense and ordered")
        return out

    root = sections["ROOT"][0] if sections["ROOT"] else "S"
    return TagSet(
        as_dict(sections["WORDS"], "WORDS"),
        as_dict(sections["POS"], "POS"),
        as_dict(sections["LABELS"], "LABELS"),
        root,
    )


# ---------------------------------------------------------------------------
# pretrained embeddings


@dataclass
class EmbeddingReport:
    """What happened while matching an embedding file against a tag set."""

    loaded: int = 0
    skipped: int = 0
    missing: int = 0


def load_pretrained_embeddings(
    path,
    tagset: TagSet,
    dim: int,
    rng: np.random.Generator | None = None,
    dtype=np.float64,
) -> tuple[np.ndarray, EmbeddingReport]:
    """Build a (dim, n_words) matrix from a text embedding file.

    Each line holds ``word v1 .. vdim``. Rows are matched by lowercased
    word; dictionary words without a row (always including PADDING and
    UNK) are drawn uniformly from [-0.1, 0.1]. File words outside the
    dictionary are skipped and counted.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    table = rng.uniform(-0.1, 0.1, size=(dim, tagset.n_words)).astype(dtype)
    matched: set[int] = set()
    report = EmbeddingReport()
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 2:
                raise MalformedLine(lineno, "expected a word followed by values")
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DimensionMismatch(dim, len(values), lineno)
            try:
                column = np.array([float(v) for v in values], dtype=dtype)
            except ValueError as exc:
                raise MalformedLine(lineno, str(exc)) from None
            index = tagset.words.get(word.lower())
            if index is None:
                report.skipped += 1
                continue
            table[:, index] = column
            matched.add(index)
    report.loaded = len(matched)
    report.missing = tagset.n_words - len(matched)
    return table, report
