"""Bracketed treebank I/O, normalization, and gold chunk-sequence extraction.

Trees are stored as S-expressions, one balanced expression per logical
record: ``(S (NP (DT a) (NN dog)) (VP (VBZ barks)))``. Leaves are written
``(POS word)``.

Normalization does three things before training:

* functional label suffixes (``NP-SBJ`` -> ``NP``) and trace subtrees are
  removed, and ``PRT`` is renamed to ``ADVP``;
* unary chains of internal nodes are collapsed into a single node whose
  label joins the chain with ``'|'`` (``(S (VP ...))`` -> ``S|VP``), so the
  bottom-up parser never has to stack two nodes over the same span;
* collapsed labels that are rare in the training split fall back to the
  topmost label of the chain.

``expand_merged_labels`` is the inverse applied to parser output, and
``extract_gold_sequences`` replays the bottom-up merge order of a gold tree
to produce the per-iteration BIOES tag sequences used for training.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import GreedyParseError

TRACE_POS = "-NONE-"
MERGE_SEPARATOR = "|"


class TreebankError(GreedyParseError):
    """Base class for malformed treebank input."""


class UnbalancedBrackets(TreebankError):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        msg = f"unbalanced brackets at line {line}"
        super().__init__(msg + (f": {detail}" if detail else ""))


class EmptyLabel(TreebankError):
    def __init__(self, line: int):
        self.line = line
        super().__init__(f"node without a label at line {line}")


class MalformedTree(TreebankError):
    pass


class NonContiguousChildren(TreebankError):
    pass


@dataclass
class ParseTree:
    """Ordered labeled tree over a token sequence.

    Internal nodes have at least one child and ``word is None``. Leaves
    carry the token in ``word`` and their POS tag in ``label``. ``span``
    is the inclusive (start, end) token range covered by the node; it is
    derived from the leaf order and excluded from equality.
    """

    label: str
    children: list["ParseTree"] = field(default_factory=list)
    word: str | None = None
    span: tuple[int, int] = field(default=(0, 0), compare=False)

    @property
    def is_leaf(self) -> bool:
        return self.word is not None

    @property
    def pos(self) -> str:
        """POS tag of a leaf (alias for ``label``)."""
        return self.label

    def leaves(self) -> list["ParseTree"]:
        if self.is_leaf:
            return [self]
        out: list[ParseTree] = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def internal_nodes(self) -> list["ParseTree"]:
        """All non-leaf nodes in pre-order (root first)."""
        if self.is_leaf:
            return []
        out = [self]
        for child in self.children:
            out.extend(child.internal_nodes())
        return out

    def words(self) -> list[str]:
        return [leaf.word for leaf in self.leaves()]  # type: ignore[misc]

    def pos_tags(self) -> list[str]:
        return [leaf.label for leaf in self.leaves()]

    def copy(self) -> "ParseTree":
        if self.is_leaf:
            return ParseTree(self.label, [], self.word, self.span)
        return ParseTree(self.label, [c.copy() for c in self.children], None, self.span)

    def __str__(self) -> str:
        if self.is_leaf:
            return f"({self.label} {self.word})"
        inner = " ".join(str(c) for c in self.children)
        return f"({self.label} {inner})"


@dataclass
class GoldSequence:
    """One iteration of the bottom-up replay of a gold tree.

    ``nodes`` are the live constituents at that iteration (leaves or
    already-built subtrees of the gold tree), ``targets`` the BIOES tags
    marking which runs of constituents merge into new nodes.
    """

    nodes: list[ParseTree]
    targets: list[str]
    iteration: int

    def __len__(self) -> int:
        return len(self.nodes)


# ---------------------------------------------------------------------------
# reading and writing


def _tokenize(text: str):
    """Yield ('(' | ')' | atom, line_number) pairs."""
    line = 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            i += 1
        elif ch.isspace():
            i += 1
        elif ch in "()":
            yield ch, line
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            yield text[i:j], line
            i = j


def parse_trees(text: str) -> list[ParseTree]:
    """Parse every balanced bracketed expression in ``text``."""
    tokens = list(_tokenize(text))
    trees: list[ParseTree] = []
    i = 0
    while i < len(tokens):
        tok, line = tokens[i]
        if tok != "(":
            raise UnbalancedBrackets(line, f"expected '(' but found {tok!r}")
        tree, i = _parse_node(tokens, i)
        assign_spans(tree)
        trees.append(tree)
    return trees


def _parse_node(tokens, i: int) -> tuple[ParseTree, int]:
    open_line = tokens[i][1]
    i += 1  # consume '('
    if i >= len(tokens):
        raise UnbalancedBrackets(open_line, "unexpected end of input")
    label, line = tokens[i]
    if label in "()":
        raise EmptyLabel(line)
    i += 1
    children: list[ParseTree] = []
    word: str | None = None
    while True:
        if i >= len(tokens):
            raise UnbalancedBrackets(open_line, "unexpected end of input")
        tok, line = tokens[i]
        if tok == ")":
            i += 1
            break
        if tok == "(":
            if word is not None:
                raise MalformedTree(
                    f"line {line}: node {label!r} mixes a word with subtrees"
                )
            child, i = _parse_node(tokens, i)
            children.append(child)
        else:
            if children or word is not None:
                raise MalformedTree(
                    f"line {line}: node {label!r} mixes a word with subtrees"
                )
            word = tok
            i += 1
    if word is not None:
        return ParseTree(label, [], word), i
    if not children:
        raise MalformedTree(f"line {open_line}: node {label!r} is empty")
    return ParseTree(label, children), i


def assign_spans(tree: ParseTree, start: int = 0) -> int:
    """Assign inclusive token spans left to right; returns next token index."""
    if tree.is_leaf:
        tree.span = (start, start)
        return start + 1
    pos = start
    for child in tree.children:
        pos = assign_spans(child, pos)
    tree.span = (start, pos - 1)
    return pos


def read_trees(path) -> list[ParseTree]:
    """Read all trees from a bracketed treebank file."""
    with open(path, "r", encoding="utf-8") as handle:
        return parse_trees(handle.read())


def write_trees(trees: Iterable[ParseTree], path) -> None:
    """Write trees one per line in bracketed form."""
    with open(path, "w", encoding="utf-8") as handle:
        for tree in trees:
            handle.write(str(tree))
            handle.write("\n")


# ---------------------------------------------------------------------------
# preprocessing


def strip_functional(label: str) -> str:
    """Drop everything after the first '-' or '=' (keeping the head label).

    Punctuation-class labels that begin with '-' (like -LRB-) are left whole.
    """
    if label.startswith("-"):
        return label
    cut = len(label)
    for sep in "-=":
        found = label.find(sep)
        if found != -1:
            cut = min(cut, found)
    return label[:cut]


def remove_traces(tree: ParseTree) -> ParseTree | None:
    """Delete trace leaves and any internal node left childless."""
    if tree.is_leaf:
        if tree.label == TRACE_POS:
            return None
        return ParseTree(tree.label, [], tree.word)
    kept = [c for c in (remove_traces(child) for child in tree.children) if c is not None]
    if not kept:
        return None
    return ParseTree(tree.label, kept)


def _normalize_labels(tree: ParseTree) -> ParseTree:
    if tree.is_leaf:
        return ParseTree(tree.label, [], tree.word)
    label = strip_functional(tree.label)
    if label == "PRT":
        label = "ADVP"
    return ParseTree(label, [_normalize_labels(c) for c in tree.children])


def merge_unary_chains(tree: ParseTree) -> ParseTree:
    """Collapse every chain of single-internal-child nodes into one node.

    The merged label joins the chain top-down with '|': (A (B (C x y)))
    becomes (A|B|C x y). Nodes whose single child is a leaf are left alone.
    """
    if tree.is_leaf:
        return ParseTree(tree.label, [], tree.word)
    labels = [tree.label]
    node = tree
    while len(node.children) == 1 and not node.children[0].is_leaf:
        node = node.children[0]
        labels.append(node.label)
    children = [merge_unary_chains(c) for c in node.children]
    return ParseTree(MERGE_SEPARATOR.join(labels), children)


def _apply_merge_threshold(
    tree: ParseTree, label_stats: Mapping[str, int], threshold: int
) -> ParseTree:
    if tree.is_leaf:
        return tree
    label = tree.label
    if MERGE_SEPARATOR in label and label_stats.get(label, 0) < threshold:
        label = label.split(MERGE_SEPARATOR)[0]
    return ParseTree(label, [_apply_merge_threshold(c, label_stats, threshold) for c in tree.children])


def merged_label_counts(trees: Iterable[ParseTree]) -> Counter:
    """Count '|'-joined labels produced by normalizing + merging ``trees``.

    Run this over the training split only; the counts feed the threshold
    applied by :func:`preprocess` on every split.
    """
    counts: Counter = Counter()
    for tree in trees:
        pruned = remove_traces(tree)
        if pruned is None:
            continue
        merged = merge_unary_chains(_normalize_labels(pruned))
        for node in merged.internal_nodes():
            if MERGE_SEPARATOR in node.label:
                counts[node.label] += 1
    return counts


def preprocess(
    tree: ParseTree, label_stats: Mapping[str, int], merge_threshold: int = 30
) -> ParseTree:
    """Normalize one tree: traces out, suffixes stripped, unary chains merged.

    ``label_stats`` holds counts of merged labels over the training split
    (see :func:`merged_label_counts`); merged labels seen fewer than
    ``merge_threshold`` times keep only the topmost label of their chain.
    """
    pruned = remove_traces(tree)
    if pruned is None:
        raise MalformedTree("tree contains only trace elements")
    merged = merge_unary_chains(_normalize_labels(pruned))
    out = _apply_merge_threshold(merged, label_stats, merge_threshold)
    assign_spans(out)
    return out


def preprocess_corpus(
    train_trees: list[ParseTree],
    merge_threshold: int = 30,
) -> tuple[list[ParseTree], Counter]:
    """Preprocess a training split and return (trees, kept merged-label counts)."""
    stats = merged_label_counts(train_trees)
    processed = [preprocess(t, stats, merge_threshold) for t in train_trees]
    kept = Counter({k: v for k, v in stats.items() if v >= merge_threshold})
    return processed, kept


def expand_merged_labels(tree: ParseTree) -> ParseTree:
    """Replace every '|'-joined node by its original unary chain."""
    expanded = _expand(tree)
    assign_spans(expanded)
    return expanded


def _expand(tree: ParseTree) -> ParseTree:
    if tree.is_leaf:
        return ParseTree(tree.label, [], tree.word)
    children = [_expand(c) for c in tree.children]
    parts = tree.label.split(MERGE_SEPARATOR)
    node = ParseTree(parts[-1], children)
    for label in reversed(parts[:-1]):
        node = ParseTree(label, [node])
    return node


# ---------------------------------------------------------------------------
# gold sequence extraction


def extract_gold_sequences(tree: ParseTree) -> list[GoldSequence]:
    """Replay the bottom-up merge order of ``tree``.

    Starting from the leaves, each iteration emits every node whose
    children are all available as a BIOES chunk over the current
    constituent sequence (``O`` elsewhere), then replaces those chunks by
    their parent node. A single preterminal yields no sequences.
    """
    internal = tree.internal_nodes()
    if not internal:
        return []
    assign_spans(tree)
    available = {id(leaf) for leaf in tree.leaves()}
    live: list[ParseTree] = list(tree.leaves())
    pending = list(internal)
    sequences: list[GoldSequence] = []
    iteration = 0
    while pending:
        ready = [n for n in pending if all(id(c) in available for c in n.children)]
        if not ready:
            raise NonContiguousChildren(
                "no tree node became available; malformed child structure"
            )
        index_of = {id(c): i for i, c in enumerate(live)}
        targets = ["O"] * len(live)
        start_of = {}
        covered = set()
        for node in ready:
            idxs = [index_of[id(c)] for c in node.children]
            lo, hi = idxs[0], idxs[-1]
            if idxs != list(range(lo, hi + 1)):
                raise NonContiguousChildren(
                    f"children of {node.label!r} are not adjacent in the sequence"
                )
            if lo == hi:
                targets[lo] = f"S-{node.label}"
            else:
                targets[lo] = f"B-{node.label}"
                targets[hi] = f"E-{node.label}"
                for m in range(lo + 1, hi):
                    targets[m] = f"I-{node.label}"
            start_of[lo] = node
            covered.update(range(lo, hi + 1))
        sequences.append(GoldSequence(list(live), targets, iteration))
        new_live: list[ParseTree] = []
        for i, item in enumerate(live):
            if i in start_of:
                new_live.append(start_of[i])
            elif i not in covered:
                new_live.append(item)
        for node in ready:
            available.add(id(node))
            pending.remove(node)
        live = new_live
        iteration += 1
    return sequences
