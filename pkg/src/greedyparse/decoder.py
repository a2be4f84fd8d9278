"""Constrained BIOES lattice: Viterbi, log-partition, and marginals.

The lattice couples per-position tag scores with the validity graph of
BIOES sequences. Transitions carry no learned score; the graph exists only
to keep predictions coherent:

* a sequence may start with ``B-a``, ``S-a`` or ``O``;
* ``B-a`` and ``I-a`` may be followed by ``I-a`` or ``E-a`` (same label);
* ``E-a``, ``S-a`` and ``O`` may be followed by any ``B-*``, ``S-*`` or ``O``;
* a sequence may end with ``E-a``, ``S-a`` or ``O``.

Tag indices follow the layout of :mod:`greedyparse.vocab`: label ``a`` at
label-index ``i`` owns indices ``4i+0..4i+3`` for ``B,I,E,S`` and ``O`` is
the last index. An all-``O`` path is always valid, so every lattice admits
at least one path.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import GreedyParseError
from .vocab import OUTSIDE_TAG

_NEG_INF = -np.inf


class DecoderError(GreedyParseError):
    pass


class InvalidGoldPath(DecoderError):
    pass


def split_tag(tag: str) -> tuple[str, str | None]:
    """Split 'B-NP' into ('B', 'NP'); 'O' becomes ('O', None)."""
    if tag == OUTSIDE_TAG:
        return OUTSIDE_TAG, None
    prefix, sep, label = tag.partition("-")
    if not sep or prefix not in ("B", "I", "E", "S") or not label:
        raise ValueError(f"not a BIOES tag: {tag!r}")
    return prefix, label


def constrain_path_validity(tags: Sequence[str]) -> bool:
    """True iff the tag strings form a coherent BIOES sequence."""
    if len(tags) == 0:
        return False
    prev_prefix: str | None = None
    prev_label: str | None = None
    for tag in tags:
        try:
            prefix, label = split_tag(tag)
        except ValueError:
            return False
        if prev_prefix is None or prev_prefix in ("E", "S", "O"):
            if prefix in ("I", "E"):
                return False
        else:  # an open chunk: B or I
            if prefix not in ("I", "E") or label != prev_label:
                return False
        prev_prefix, prev_label = prefix, label
    return prev_prefix in ("E", "S", "O")


def tags_to_chunks(tags: Sequence[str]) -> list[tuple[int, int, str]]:
    """Decode a valid BIOES sequence into (start, end, label) chunks."""
    if not constrain_path_validity(tags):
        raise InvalidGoldPath(f"invalid BIOES sequence: {list(tags)}")
    chunks: list[tuple[int, int, str]] = []
    start = -1
    for i, tag in enumerate(tags):
        prefix, label = split_tag(tag)
        if prefix == "B":
            start = i
        elif prefix == "E":
            chunks.append((start, i, label))  # type: ignore[arg-type]
        elif prefix == "S":
            chunks.append((i, i, label))  # type: ignore[arg-type]
    return chunks


def chunks_to_tags(chunks: Sequence[tuple[int, int, str]], length: int) -> list[str]:
    """Inverse of :func:`tags_to_chunks`; positions outside chunks get O."""
    tags = [OUTSIDE_TAG] * length
    for start, end, label in chunks:
        if start == end:
            tags[start] = f"S-{label}"
        else:
            tags[start] = f"B-{label}"
            tags[end] = f"E-{label}"
            for i in range(start + 1, end):
                tags[i] = f"I-{label}"
    return tags


class TagLattice:
    """Per-position BIOES scores plus the validity-constraint graph."""

    def __init__(self, scores: np.ndarray, n_labels: int):
        scores = np.asarray(scores, dtype=np.float64)
        if scores.ndim != 2:
            raise DecoderError(f"scores must be 2-dimensional, got shape {scores.shape}")
        if scores.shape[1] != 4 * n_labels + 1:
            raise DecoderError(
                f"{scores.shape[1]} score columns do not fit {n_labels} labels "
                f"(expected {4 * n_labels + 1})"
            )
        if scores.shape[0] < 1:
            raise DecoderError("lattice needs at least one position")
        if not np.isfinite(scores).all():
            raise DecoderError("lattice scores must be finite")
        self.scores = scores
        self.n_labels = n_labels
        self.length = scores.shape[0]
        base = 4 * np.arange(n_labels)
        self.b_idx = base
        self.i_idx = base + 1
        self.e_idx = base + 2
        self.s_idx = base + 3
        self.o_idx = 4 * n_labels
        # index-sorted candidate sets, so first-max argmax breaks ties
        # toward the lowest tag index
        self.start_idx = np.sort(np.concatenate([self.b_idx, self.s_idx, [self.o_idx]]))
        self.end_idx = np.sort(np.concatenate([self.e_idx, self.s_idx, [self.o_idx]]))

    def path_is_valid(self, path: Sequence[int]) -> bool:
        if len(path) != self.length:
            return False
        names = tag_index_names(self.n_labels)
        try:
            tags = [names[i] for i in path]
        except IndexError:
            return False
        return constrain_path_validity(tags)

    def path_score(self, path: Sequence[int]) -> float:
        return float(self.scores[np.arange(self.length), np.asarray(path)].sum())


def tag_index_names(n_labels: int) -> list[str]:
    """Placeholder tag names for index-level work on anonymous lattices."""
    names: list[str] = []
    for i in range(n_labels):
        for prefix in ("B", "I", "E", "S"):
            names.append(f"{prefix}-L{i}")
    names.append(OUTSIDE_TAG)
    return names


def viterbi(lattice: TagLattice) -> tuple[list[int], float]:
    """Best valid path and its score (sum of per-position node scores).

    Ties are broken toward the lowest tag index at every backpointer, so
    decoding is deterministic.
    """
    scores = lattice.scores
    n, width = scores.shape
    dp = np.full(width, _NEG_INF)
    dp[lattice.start_idx] = scores[0, lattice.start_idx]
    backptr = np.zeros((n, width), dtype=np.int64)
    for t in range(1, n):
        boundary_vals = dp[lattice.end_idx]
        j = int(np.argmax(boundary_vals))
        boundary_best = boundary_vals[j]
        boundary_arg = lattice.end_idx[j]
        b_vals = dp[lattice.b_idx]
        i_vals = dp[lattice.i_idx]
        chain_best = np.maximum(b_vals, i_vals)
        chain_arg = np.where(b_vals >= i_vals, lattice.b_idx, lattice.i_idx)
        nxt = np.full(width, _NEG_INF)
        nxt[lattice.b_idx] = boundary_best
        nxt[lattice.s_idx] = boundary_best
        nxt[lattice.o_idx] = boundary_best
        backptr[t, lattice.b_idx] = boundary_arg
        backptr[t, lattice.s_idx] = boundary_arg
        backptr[t, lattice.o_idx] = boundary_arg
        nxt[lattice.i_idx] = chain_best
        nxt[lattice.e_idx] = chain_best
        backptr[t, lattice.i_idx] = chain_arg
        backptr[t, lattice.e_idx] = chain_arg
        dp = nxt + scores[t]
    final_vals = dp[lattice.end_idx]
    j = int(np.argmax(final_vals))
    best_score = float(final_vals[j])
    tag = int(lattice.end_idx[j])
    path = [tag]
    for t in range(n - 1, 0, -1):
        tag = int(backptr[t, tag])
        path.append(tag)
    path.reverse()
    return path, best_score


def _forward(lattice: TagLattice) -> np.ndarray:
    """Log-space forward table; row t includes the score at position t."""
    scores = lattice.scores
    n, width = scores.shape
    fwd = np.full((n, width), _NEG_INF)
    fwd[0, lattice.start_idx] = scores[0, lattice.start_idx]
    for t in range(1, n):
        prev = fwd[t - 1]
        boundary = np.logaddexp.reduce(prev[lattice.end_idx])
        chain = np.logaddexp(prev[lattice.b_idx], prev[lattice.i_idx])
        row = np.full(width, _NEG_INF)
        row[lattice.b_idx] = boundary
        row[lattice.s_idx] = boundary
        row[lattice.o_idx] = boundary
        row[lattice.i_idx] = chain
        row[lattice.e_idx] = chain
        fwd[t] = row + scores[t]
    return fwd


def _backward(lattice: TagLattice) -> np.ndarray:
    """Log-space backward table; row t excludes the score at position t."""
    scores = lattice.scores
    n, width = scores.shape
    bwd = np.full((n, width), _NEG_INF)
    bwd[n - 1, lattice.end_idx] = 0.0
    for t in range(n - 2, -1, -1):
        nxt = bwd[t + 1] + scores[t + 1]
        boundary = np.logaddexp.reduce(
            np.concatenate([nxt[lattice.b_idx], nxt[lattice.s_idx], [nxt[lattice.o_idx]]])
        )
        chain = np.logaddexp(nxt[lattice.i_idx], nxt[lattice.e_idx])
        row = np.full(width, _NEG_INF)
        row[lattice.e_idx] = boundary
        row[lattice.s_idx] = boundary
        row[lattice.o_idx] = boundary
        row[lattice.b_idx] = chain
        row[lattice.i_idx] = chain
        bwd[t] = row
    return bwd


def log_partition(lattice: TagLattice) -> float:
    """log sum over all valid paths of exp(path score)."""
    fwd = _forward(lattice)
    return float(np.logaddexp.reduce(fwd[-1, lattice.end_idx]))


def marginals(lattice: TagLattice) -> tuple[np.ndarray, float]:
    """Posterior probability of each tag at each position, and log Z.

    Rows sum to 1; tags the constraint graph excludes at a position get
    exactly 0.
    """
    fwd = _forward(lattice)
    bwd = _backward(lattice)
    log_z = float(np.logaddexp.reduce(fwd[-1, lattice.end_idx]))
    log_marg = fwd + bwd - log_z
    return np.exp(log_marg), log_z


def sequence_nll_grad(
    lattice: TagLattice, gold: Sequence[int]
) -> tuple[float, np.ndarray]:
    """Negative log-likelihood of ``gold`` and its gradient w.r.t. scores.

    nll = log Z - score(gold); grad[t, k] = P(tag k at t) - 1{gold[t] = k}.
    """
    gold = list(gold)
    if not lattice.path_is_valid(gold):
        raise InvalidGoldPath(f"gold path {gold} violates the BIOES constraints")
    probs, log_z = marginals(lattice)
    gold_score = lattice.path_score(gold)
    grad = probs.copy()
    grad[np.arange(lattice.length), gold] -= 1.0
    return log_z - gold_score, grad
