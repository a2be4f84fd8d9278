"""Model voting, labeled-bracket scoring, and phrase nearest neighbors.

Voting runs the greedy loop with every model in lockstep: each model
composes and scores with its own parameters, the score tables are averaged
elementwise, and one shared Viterbi path drives node creation in all
models simultaneously.

Scoring follows the Evalb convention: brackets are (label, start, end)
triples over internal nodes after merged labels are expanded, preterminals
excluded, the root included, and no punctuation deletion. Precision is
matched/predicted, recall matched/gold, per sentence pair and summed over
the corpus.
"""

from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .composer import compose_tree
from .errors import GreedyParseError
from .greedy_parser import Scorer, greedy_parse_multi
from .nncore import ModelParams
from .treebank import ParseTree, expand_merged_labels
from .vocab import TagSet


class EvalError(GreedyParseError):
    pass


class TagsetMismatch(EvalError):
    pass


class LengthMismatch(EvalError):
    def __init__(self, index: int, detail: str = ""):
        self.index = index
        super().__init__(
            f"sentence {index}: gold and predicted tokens differ"
            + (f" ({detail})" if detail else "")
        )


class EmptyCorpusDump(EvalError):
    pass


def vote_parse(
    words: Sequence[str],
    pos: Sequence[str],
    models: Sequence[ModelParams],
    tagset: TagSet,
    scorer: Scorer | None = None,
) -> ParseTree:
    """Parse with the averaged scores of several models (a single one is fine)."""
    if len(models) == 0:
        raise EvalError("voting needs at least one model")
    for i, model in enumerate(models):
        if (
            model.word_table.shape[1] != tagset.n_words
            or model.tag_table.shape[1] != tagset.n_tags
            or model.n_bioes != tagset.n_bioes
        ):
            raise TagsetMismatch(
                f"model {i} was trained against a different tag set "
                f"(words {model.word_table.shape[1]}/{tagset.n_words}, "
                f"tags {model.tag_table.shape[1]}/{tagset.n_tags}, "
                f"outputs {model.n_bioes}/{tagset.n_bioes})"
            )
    return greedy_parse_multi(words, pos, models, tagset, scorer)


# ---------------------------------------------------------------------------
# Evalb-style scoring


def brackets(tree: ParseTree) -> Counter:
    """Multiset of (label, start, end) for internal nodes, merged labels expanded."""
    expanded = expand_merged_labels(tree)
    out: Counter = Counter()
    for node in expanded.internal_nodes():
        out[(node.label, node.span[0], node.span[1])] += 1
    return out


def _prf(matched: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    precision = matched / n_pred if n_pred else 0.0
    recall = matched / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass
class EvalReport:
    """Corpus-level bracket scores, with a <=40-token subset and per-length rows."""

    matched: int = 0
    n_pred: int = 0
    n_gold: int = 0
    matched_le40: int = 0
    n_pred_le40: int = 0
    n_gold_le40: int = 0
    n_sentences: int = 0
    by_length: dict[int, list[int]] = field(default_factory=dict)  # len -> [count, matched, pred, gold]

    @property
    def precision(self) -> float:
        return _prf(self.matched, self.n_pred, self.n_gold)[0]

    @property
    def recall(self) -> float:
        return _prf(self.matched, self.n_pred, self.n_gold)[1]

    @property
    def f1(self) -> float:
        return _prf(self.matched, self.n_pred, self.n_gold)[2]

    def full_scores(self) -> tuple[float, float, float]:
        return _prf(self.matched, self.n_pred, self.n_gold)

    def le40_scores(self) -> tuple[float, float, float]:
        return _prf(self.matched_le40, self.n_pred_le40, self.n_gold_le40)

    def per_length_rows(self) -> list[tuple[int, int, float]]:
        """(sentence length, sentence count, f1) rows, by increasing length."""
        rows = []
        for length in sorted(self.by_length):
            count, matched, pred, gold = self.by_length[length]
            rows.append((length, count, _prf(matched, pred, gold)[2]))
        return rows


def evalb_f1(gold: Sequence[ParseTree], pred: Sequence[ParseTree]) -> EvalReport:
    """Labeled bracketing scores over aligned gold/predicted tree lists."""
    if len(gold) != len(pred):
        raise EvalError(f"{len(gold)} gold trees vs {len(pred)} predictions")
    report = EvalReport()
    for i, (g, p) in enumerate(zip(gold, pred)):
        g_words = g.words()
        p_words = p.words()
        if g_words != p_words:
            raise LengthMismatch(i, f"{len(g_words)} vs {len(p_words)} tokens")
        g_brackets = brackets(g)
        p_brackets = brackets(p)
        matched = sum((g_brackets & p_brackets).values())
        n_gold = sum(g_brackets.values())
        n_pred = sum(p_brackets.values())
        length = len(g_words)
        report.matched += matched
        report.n_gold += n_gold
        report.n_pred += n_pred
        report.n_sentences += 1
        if length <= 40:
            report.matched_le40 += matched
            report.n_gold_le40 += n_gold
            report.n_pred_le40 += n_pred
        bucket = report.by_length.setdefault(length, [0, 0, 0, 0])
        bucket[0] += 1
        bucket[1] += matched
        bucket[2] += n_pred
        bucket[3] += n_gold
    return report


def format_report(report: EvalReport) -> str:
    """Text block with the <=40-token subset and the full corpus."""
    lines = [
        f"sentences: {report.n_sentences}",
        "          R       P       F1",
    ]
    for name, (precision, recall, f1) in (
        ("<= 40", report.le40_scores()),
        ("full ", report.full_scores()),
    ):
        lines.append(
            f"{name}   {100 * recall:6.2f}  {100 * precision:6.2f}  {100 * f1:6.2f}"
        )
    return "\n".join(lines)


def per_length_csv(report: EvalReport) -> str:
    """CSV 'length,count,f1' (percent), one row per observed sentence length."""
    lines = ["length,count,f1"]
    for length, count, f1 in report.per_length_rows():
        lines.append(f"{length},{count},{100 * f1:.2f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# phrase nearest neighbors


def nearest_phrases(
    query_text: str,
    query_vec: np.ndarray,
    records: Iterable[tuple[str, np.ndarray]],
    k: int = 5,
) -> list[tuple[str, float]]:
    """The k phrases closest to the query vector in Euclidean distance.

    Records whose text equals the query are skipped, so a phrase taken
    from the dump does not trivially return itself. Fewer than k records
    simply returns them all, sorted by distance.
    """
    heap: list[tuple[float, str]] = []
    seen = 0
    query_vec = np.asarray(query_vec, dtype=np.float64)
    for text, vec in records:
        seen += 1
        if text == query_text:
            continue
        dist = float(np.linalg.norm(vec - query_vec))
        # negative distance: heapq keeps the k smallest distances
        entry = (-dist, text)
        if len(heap) < k:
            heapq.heappush(heap, entry)
        elif entry > heap[0]:
            heapq.heapreplace(heap, entry)
    if seen == 0:
        raise EmptyCorpusDump("phrase dump contains no records")
    return sorted(((text, -neg) for neg, text in heap), key=lambda r: (r[1], r[0]))


def phrase_records(
    trees: Iterable[ParseTree], params: ModelParams, tagset: TagSet
) -> Iterable[tuple[str, np.ndarray]]:
    """In-memory equivalent of a phrase dump: (bracketed text, vector) pairs."""
    for tree in trees:
        root = compose_tree(tree, params, tagset, training=False)
        stack = [(tree, root)]
        while stack:
            subtree, node = stack.pop()
            if node.is_leaf:
                continue
            yield str(subtree), node.vec
            stack.extend(zip(subtree.children, node.children))
