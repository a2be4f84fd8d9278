"""Shared test utilities: independent oracles and gradient-check plumbing.

The decoder oracle here enumerates every valid BIOES path explicitly and
computes max/log-sum-exp/marginals directly over the enumeration, so it
shares no code with the recursions it checks.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from greedyparse.nncore import GradAccumulator, ModelParams
from greedyparse.treebank import ParseTree, parse_trees
from greedyparse.vocab import TagSet, build_tagset


# ---------------------------------------------------------------------------
# BIOES path enumeration (decoder oracle)
#
# Index layout: label i owns 4i..4i+3 for B,I,E,S; O is index 4L.


def _prefix(index: int, n_labels: int) -> str:
    return "O" if index == 4 * n_labels else "BIES"[index % 4]


@lru_cache(maxsize=None)
def enumerate_valid_paths(length: int, n_labels: int) -> np.ndarray:
    """All valid tag-index sequences as an array of shape (n_paths, length)."""
    width = 4 * n_labels + 1
    starts = [i for i in range(width) if _prefix(i, n_labels) in "BSO"]
    paths = np.array(starts, dtype=np.int64).reshape(-1, 1)
    for _ in range(1, length):
        blocks = []
        last = paths[:, -1]
        last_prefix = np.array([_prefix(i, n_labels) for i in last])
        for tag in range(width):
            prefix = _prefix(tag, n_labels)
            if prefix in "BSO":
                allowed = np.isin(last_prefix, list("ESO"))
            else:  # I or E continues an open chunk of the same label
                allowed = np.isin(last_prefix, list("BI")) & (last // 4 == tag // 4)
            if allowed.any():
                blocks.append(
                    np.hstack(
                        [paths[allowed], np.full((int(allowed.sum()), 1), tag, dtype=np.int64)]
                    )
                )
        paths = np.vstack(blocks)
    ends = np.array([_prefix(i, n_labels) in "ESO" for i in paths[:, -1]])
    return paths[ends]


def brute_force_lattice(scores: np.ndarray, n_labels: int):
    """(best_path, best_score, log_z, marginals) by explicit enumeration."""
    scores = np.asarray(scores, dtype=np.float64)
    length = scores.shape[0]
    paths = enumerate_valid_paths(length, n_labels)
    totals = scores[np.arange(length)[None, :], paths].sum(axis=1)
    best = int(np.argmax(totals))
    m = totals.max()
    log_z = m + np.log(np.exp(totals - m).sum())
    weights = np.exp(totals - log_z)
    marg = np.zeros_like(scores)
    for t in range(length):
        np.add.at(marg[t], paths[:, t], weights)
    return list(paths[best]), float(totals[best]), float(log_z), marg


# ---------------------------------------------------------------------------
# parameter flattening for finite-difference checks


def pack_params(params: ModelParams) -> np.ndarray:
    return np.concatenate([t.ravel() for _, t in params.named_tensors()])


def unpack_params(params: ModelParams, flat: np.ndarray) -> None:
    offset = 0
    for _, tensor in params.named_tensors():
        n = tensor.size
        tensor.flat[:] = flat[offset : offset + n]
        offset += n
    assert offset == flat.size


def grads_as_vector(grads: GradAccumulator, params: ModelParams) -> np.ndarray:
    """Dense gradient vector aligned with :func:`pack_params`."""
    pieces = []
    for name, tensor in params.named_tensors():
        dense = np.zeros_like(tensor)
        if name == "word_table":
            for index, col in grads.word_cols.items():
                dense[:, index] += col
        elif name == "tag_table":
            for index, col in grads.tag_cols.items():
                dense[:, index] += col
        elif name == "m1" and grads.m1 is not None:
            dense += grads.m1
        elif name == "m2" and grads.m2 is not None:
            dense += grads.m2
        elif name == "pad" and grads.pad is not None:
            dense += grads.pad
        elif name.startswith("compose_"):
            k = int(name.split("_")[1])
            if k in grads.compose:
                dense += grads.compose[k]
        pieces.append(dense.ravel())
    return np.concatenate(pieces)


# ---------------------------------------------------------------------------
# tiny fixtures

LOOK_AROUND_STRING = (
    "(S (VP (VP (VB Look) (PRT (RP around))) (CC and) "
    "(VP (VB choose) (NP (PRP$ your) (JJ own) (NN ground)))) (. .))"
)

TINY_TREES = [
    "(S (NP (DT a) (NN dog)) (VP (VB sees) (NP (DT the) (NN cat))))",
    "(S (NP (PRP he)) (VP (VB walks)) (. .))",
    "(S (VP (VB eats) (NP (DT a) (JJ big) (NN fish))))",
]


def tiny_corpus() -> list[ParseTree]:
    return [parse_trees(s)[0] for s in TINY_TREES]


def tiny_tagset() -> TagSet:
    return build_tagset(tiny_corpus())


def look_around_tree() -> ParseTree:
    return parse_trees(LOOK_AROUND_STRING)[0]
