"""Sliding-window two-layer scorer over constituent representations.

Each position n is scored from a window of K constituent slots centered on
n, where a slot is the concatenation of the constituent's vector and its
tag embedding. Slots that fall outside the sequence are filled with the
learned padding vector. Scores are raw (unnormalized):

    s(u_n) = M2 @ tanh(M1 @ u_n)

Dropout on the inputs happens upstream when the node representations are
built, so scoring itself has no train/eval split.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .composer import NodeRepr
from .nncore import GradAccumulator, MissingForwardCache, ModelParams, ShapeMismatch


class ScoreTable:
    """Raw BIOES scores for one constituent sequence, plus backward cache."""

    def __init__(self, scores, inputs, windows, hidden, pad_hits):
        self.scores = scores        # (N, n_bioes)
        self._inputs = inputs       # (N, D+T) constituent slots
        self._windows = windows     # (N, K*(D+T))
        self._hidden = hidden       # (N, H) post-tanh activations
        self._pad_hits = pad_hits   # [(position, slot)] window cells that used padding

    @property
    def length(self) -> int:
        return self.scores.shape[0]


def score_sequence(nodes: Sequence[NodeRepr], params: ModelParams) -> ScoreTable:
    """Score every constituent of the sequence against all BIOES tags."""
    n = len(nodes)
    if n == 0:
        raise ShapeMismatch("cannot score an empty constituent sequence")
    d_in = params.dim_input
    k = params.window
    half = (k - 1) // 2
    inputs = np.stack([node.input_vec for node in nodes])
    if inputs.shape[1] != d_in:
        raise ShapeMismatch(
            f"constituent slots have size {inputs.shape[1]}, model expects {d_in}"
        )
    windows = np.empty((n, k * d_in), dtype=params.dtype)
    pad_hits: list[tuple[int, int]] = []
    for pos in range(n):
        for slot in range(k):
            src = pos - half + slot
            dest = slice(slot * d_in, (slot + 1) * d_in)
            if 0 <= src < n:
                windows[pos, dest] = inputs[src]
            else:
                windows[pos, dest] = params.pad
                pad_hits.append((pos, slot))
    hidden = np.tanh(windows @ params.m1.T)
    scores = hidden @ params.m2.T
    return ScoreTable(scores, inputs, windows, hidden, pad_hits)


def tagger_backward(
    table: ScoreTable,
    grad_scores: np.ndarray,
    params: ModelParams,
    grads: GradAccumulator,
) -> tuple[np.ndarray, np.ndarray]:
    """Backpropagate score gradients through the tagger.

    Accumulates into M1, M2 and the padding vector, and returns
    (d_vecs, d_tag_vecs): per-constituent gradients w.r.t. the node vector
    and the (gated) tag embedding, summed over every window that contained
    the constituent. The caller routes those into the composer or the
    lookup tables.
    """
    if table._hidden is None:
        raise MissingForwardCache("score table was created without a cache")
    if grad_scores.shape != table.scores.shape:
        raise ShapeMismatch(
            f"grad shape {grad_scores.shape} does not match scores {table.scores.shape}"
        )
    n = table.length
    d_in = params.dim_input
    k = params.window
    half = (k - 1) // 2
    hidden = table._hidden
    grads.add_m2(grad_scores.T @ hidden)
    d_hidden = grad_scores @ params.m2
    d_pre = d_hidden * (1.0 - hidden * hidden)
    grads.add_m1(d_pre.T @ table._windows)
    d_windows = d_pre @ params.m1
    d_inputs = np.zeros_like(table._inputs)
    d_pad = np.zeros_like(params.pad)
    for pos in range(n):
        row = d_windows[pos]
        lo = max(0, pos - half)
        hi = min(n - 1, pos + half)
        for src in range(lo, hi + 1):
            slot = src - (pos - half)
            d_inputs[src] += row[slot * d_in : (slot + 1) * d_in]
    for pos, slot in table._pad_hits:
        d_pad += d_windows[pos, slot * d_in : (slot + 1) * d_in]
    if table._pad_hits:
        grads.add_pad(d_pad)
    d = params.dim_word
    return d_inputs[:, :d], d_inputs[:, d:]
