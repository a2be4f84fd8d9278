"""Deterministic synthetic treebank for tests, benchmarks, and demos.

A small hand-written PCFG over 7 phrase labels and ~30 words. It is built
to exercise the whole pipeline:

* ``S -> VP`` produces unary chains that the preprocessing must merge;
* ``NP -> PRP`` and ``ADVP -> RB`` give single-leaf chunks (S- tags);
* ``VP -> VB NP PP`` vs ``NP -> NP PP`` creates genuine attachment
  ambiguity, so the corpus is learnable but not trivially separable;
* coordination and SBAR recursion yield nodes of arity 1 through 4.

Trees come out raw (spans assigned, no normalization applied), so callers
run the standard preprocessing on them.
"""

from __future__ import annotations

import numpy as np

from .treebank import ParseTree, assign_spans

LEXICON: dict[str, tuple[str, ...]] = {
    "DT": ("the", "a", "every"),
    "NN": ("dog", "cat", "man", "woman", "park", "telescope", "idea", "fish"),
    "VB": ("sees", "likes", "finds", "walks", "eats"),
    "IN": ("in", "on", "with", "near"),
    "JJ": ("big", "small", "old", "happy"),
    "RB": ("quickly", "quietly", "very"),
    "CC": ("and",),
    "PRP": ("he", "she"),
    ".": (".",),
}

# (weight, right-hand side, recursive) per nonterminal; recursive rules are
# disabled once the depth budget is spent
RULES: dict[str, list[tuple[float, tuple[str, ...], bool]]] = {
    "S": [
        (0.62, ("NP", "VP", "."), False),
        (0.18, ("NP", "VP"), False),
        (0.20, ("VP",), False),
    ],
    "NP": [
        (0.40, ("DT", "NN"), False),
        (0.15, ("DT", "JJ", "NN"), False),
        (0.10, ("DT", "ADJP", "NN"), False),
        (0.15, ("PRP",), False),
        (0.12, ("NP", "PP"), True),
        (0.08, ("NP", "CC", "NP"), True),
    ],
    "VP": [
        (0.38, ("VB", "NP"), False),
        (0.10, ("VB",), False),
        (0.17, ("VB", "NP", "PP"), False),
        (0.15, ("ADVP", "VB", "NP"), False),
        (0.10, ("VP", "CC", "VP"), True),
        (0.10, ("VB", "SBAR"), True),
    ],
    "PP": [(1.0, ("IN", "NP"), False)],
    "ADVP": [(0.7, ("RB",), False), (0.3, ("RB", "RB"), False)],
    "ADJP": [(0.6, ("JJ",), False), (0.4, ("RB", "JJ"), False)],
    "SBAR": [(1.0, ("IN", "S"), False)],
}

PHRASE_LABELS = tuple(sorted(RULES))


def _expand(symbol: str, depth: int, budget: int, rng: np.random.Generator) -> ParseTree:
    if symbol in LEXICON:
        words = LEXICON[symbol]
        return ParseTree(symbol, [], words[int(rng.integers(len(words)))])
    options = RULES[symbol]
    if depth >= budget:
        options = [o for o in options if not o[2]]
    weights = np.array([w for w, _, _ in options])
    pick = int(rng.choice(len(options), p=weights / weights.sum()))
    _, rhs, _ = options[pick]
    return ParseTree(symbol, [_expand(s, depth + 1, budget, rng) for s in rhs])


def generate_tree(
    rng: np.random.Generator, max_len: int = 16, depth_budget: int = 4
) -> ParseTree:
    """Sample one sentence tree, resampling until it fits ``max_len`` tokens."""
    while True:
        tree = _expand("S", 0, depth_budget, rng)
        if len(tree.leaves()) <= max_len:
            assign_spans(tree)
            return tree


def generate_corpus(
    n_trees: int,
    seed: int = 0,
    rng: np.random.Generator | None = None,
    max_len: int = 16,
) -> list[ParseTree]:
    """A list of raw trees; fixed seed gives a byte-stable corpus."""
    if rng is None:
        rng = np.random.default_rng(seed)
    return [generate_tree(rng, max_len=max_len) for _ in range(n_trees)]
