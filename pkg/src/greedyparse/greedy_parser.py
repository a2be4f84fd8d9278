"""Greedy bottom-up inference.

Starting from the word leaves, each iteration scores the live constituent
sequence, decodes a coherent BIOES path, turns every decoded chunk into a
new node (composing its children into a fresh representation), and repeats
on the shrunken sequence until a single constituent spans the sentence.

Two guards keep the loop from spinning: a decoded single-position chunk
that would give a constituent the label it already has is dropped, and an
iteration that creates no node (or an iteration budget of twice the
sentence length) ends the loop, attaching whatever is left under a
synthetic root labeled with the most frequent training root.

The scorer is pluggable: by default the model's window tagger is used, and
scores from several models can be averaged elementwise (model voting); a
``scorer`` callback replaces the network entirely, which is how gold-tape
oracles drive round-trip checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .composer import NodeRepr, compose, make_leaf
from .decoder import TagLattice, chunks_to_tags, tags_to_chunks, viterbi
from .errors import GreedyParseError
from .nncore import ModelParams
from .tagger import score_sequence
from .treebank import ParseTree, assign_spans, expand_merged_labels
from .vocab import TagSet


class ParserError(GreedyParseError):
    pass


class IncompleteCoverage(ParserError):
    pass


@dataclass
class Constituent:
    """A live item in the greedy loop.

    Leaves have ``children is None`` and carry the word; nodes keep their
    merged children so the final tree can be read off the ancestry.
    ``reprs`` holds one representation per voting model.
    """

    span: tuple[int, int]
    label: str
    reprs: list[NodeRepr] = field(default_factory=list)
    children: list["Constituent"] | None = None
    word: str | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None


Scorer = Callable[[list[Constituent]], np.ndarray]


def average_scores(tables: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise mean of score tables, invariant to model order.

    Per-cell contributions are sorted before summing, so permuting the
    models cannot change the result even at the bit level.
    """
    stack = np.stack([np.asarray(t, dtype=np.float64) for t in tables])
    stack = np.sort(stack, axis=0)
    return stack.sum(axis=0) / len(tables)


def assemble_tree(root: Constituent) -> ParseTree:
    """Convert a constituent ancestry into a ParseTree."""

    def build(c: Constituent) -> ParseTree:
        if c.children is None:
            return ParseTree(c.label, [], c.word)
        return ParseTree(c.label, [build(ch) for ch in c.children])

    tree = build(root)
    assign_spans(tree)
    return tree


def greedy_parse_multi(
    words: Sequence[str],
    pos: Sequence[str],
    models: Sequence[ModelParams],
    tagset: TagSet,
    scorer: Scorer | None = None,
) -> ParseTree:
    """Run the greedy loop with one or more models and expand merged labels."""
    n = len(words)
    if n == 0:
        raise ParserError("cannot parse an empty sentence")
    if len(pos) != n:
        raise ParserError(f"{n} words but {len(pos)} POS tags")
    live = [
        Constituent(
            span=(i, i),
            label=pos[i],
            reprs=[make_leaf(words[i], pos[i], m, tagset) for m in models],
            word=words[i],
        )
        for i in range(n)
    ]
    bioes_names = tagset.bioes_names()
    for _ in range(2 * n):
        if len(live) == 1 and not live[0].is_leaf:
            break
        if scorer is not None:
            table = np.asarray(scorer(live), dtype=np.float64)
        else:
            table = average_scores(
                [score_sequence([c.reprs[m] for c in live], models[m]).scores
                 for m in range(len(models))]
            )
        path, _ = viterbi(TagLattice(table, tagset.n_labels))
        tags = [bioes_names[i] for i in path]
        chunks = [
            (start, end, label)
            for start, end, label in tags_to_chunks(tags)
            # a node may not immediately receive the label it already has
            if not (start == end and not live[start].is_leaf and live[start].label == label)
        ]
        if not chunks:
            break
        live = _merge_chunks(live, chunks, models, tagset)
    if len(live) == 1 and not live[0].is_leaf:
        root = live[0]
    else:
        root = Constituent(
            span=(0, n - 1),
            label=tagset.root_label,
            children=live,
        )
    if root.span != (0, n - 1):
        raise IncompleteCoverage(f"root spans {root.span}, sentence has {n} tokens")
    return expand_merged_labels(assemble_tree(root))


def _merge_chunks(
    live: list[Constituent],
    chunks: list[tuple[int, int, str]],
    models: Sequence[ModelParams],
    tagset: TagSet,
) -> list[Constituent]:
    start_of = {start: (end, label) for start, end, label in chunks}
    covered = {i for start, end, _ in chunks for i in range(start, end + 1)}
    merged: list[Constituent] = []
    for i, item in enumerate(live):
        if i in start_of:
            end, label = start_of[i]
            children = live[i : end + 1]
            tag_index = tagset.label_tag_index(label)
            merged.append(
                Constituent(
                    span=(children[0].span[0], children[-1].span[1]),
                    label=label,
                    reprs=[
                        compose([c.reprs[m] for c in children], tag_index, models[m])
                        for m in range(len(models))
                    ],
                    children=children,
                )
            )
        elif i not in covered:
            merged.append(item)
    return merged


def parse(
    words: Sequence[str],
    pos: Sequence[str],
    params: ModelParams,
    tagset: TagSet,
    scorer: Scorer | None = None,
) -> ParseTree:
    """Parse one pre-tagged sentence with a single model."""
    return greedy_parse_multi(words, pos, [params], tagset, scorer)


def gold_oracle_scorer(gold_tree: ParseTree, tagset: TagSet) -> Scorer:
    """Scorer that awards +1 to the gold tag at every position, 0 elsewhere.

    The gold tags are recomputed against the current live sequence each
    iteration: every gold node whose children are all live becomes a
    chunk. Driving the parser with this scorer replays the tree exactly,
    which makes it the reference oracle for round-trip tests.
    """
    assign_spans(gold_tree)
    gold_nodes = gold_tree.internal_nodes()

    def scorer(live: list[Constituent]) -> np.ndarray:
        index_by_span = {c.span: i for i, c in enumerate(live)}
        chunks: list[tuple[int, int, str]] = []
        for node in gold_nodes:
            at = index_by_span.get(node.span)
            if at is not None and not live[at].is_leaf and live[at].label == node.label:
                continue  # already built
            positions: list[int] = []
            realized = True
            for child in node.children:
                i = index_by_span.get(child.span)
                if i is None:
                    realized = False
                    break
                item = live[i]
                if child.is_leaf:
                    if not item.is_leaf:
                        realized = False
                        break
                elif item.is_leaf or item.label != child.label:
                    realized = False
                    break
                positions.append(i)
            if not realized:
                continue
            lo, hi = positions[0], positions[-1]
            if positions == list(range(lo, hi + 1)):
                chunks.append((lo, hi, node.label))
        tags = chunks_to_tags(chunks, len(live))
        scores = np.zeros((len(live), tagset.n_bioes))
        for i, tag in enumerate(tags):
            scores[i, tagset.bioes_tags[tag]] = 1.0
        return scores

    return scorer
