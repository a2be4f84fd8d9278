"""Joint training of the composition and tagging networks.

The training unit is one gold sequence: a single iteration of the
bottom-up replay of one tree. A step composes the sequence's sub-trees
(fresh dropout masks), runs the window tagger, measures the sequence
negative log-likelihood against all valid BIOES paths, backpropagates
through both networks down to the lookup tables, and applies plain SGD
with the learning rate divided by each layer's input size.

Training is teacher-forced: only gold sequences are visited, never the
parser's own mistakes. After each epoch the development set is parsed and
scored; the parameters with the best dev F1 are kept, and training stops
when the budget runs out or F1 has not improved for ``patience`` epochs.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .composer import compose_backward, compose_tree
from .decoder import TagLattice, sequence_nll_grad
from .ensemble_eval import evalb_f1
from .errors import GreedyParseError
from .greedy_parser import parse
from .nncore import GradAccumulator, ModelParams, init_params
from .tagger import score_sequence, tagger_backward
from .treebank import GoldSequence, ParseTree, extract_gold_sequences
from .vocab import TagSet


class EmptyTrainingSet(GreedyParseError):
    pass


@dataclass
class TrainConfig:
    """Hyperparameters; the defaults follow the reference setup."""

    dim_word: int = 200
    dim_tag: int = 20
    hidden: int = 500
    window: int = 7
    max_arity: int = 7
    learning_rate: float = 0.15
    p_drop: float = 0.25
    merge_threshold: int = 30
    min_word_count: int = 1
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0
    precision: str = "float64"

    def validate(self) -> None:
        if min(self.dim_word, self.dim_tag, self.hidden, self.window, self.max_arity) < 1:
            raise ValueError("all dimensions must be >= 1")
        if not 0.0 <= self.p_drop < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {self.p_drop}")


@dataclass
class EpochStats:
    epoch: int
    train_nll: float  # nan for the pre-training evaluation row
    dev_f1: float


def step_gradients(
    seq: GoldSequence,
    params: ModelParams,
    tagset: TagSet,
    rng: np.random.Generator | None = None,
    training: bool = True,
) -> tuple[float, GradAccumulator]:
    """Loss and accumulated gradients for one gold sequence, no update."""
    nodes = [compose_tree(item, params, tagset, training, rng) for item in seq.nodes]
    table = score_sequence(nodes, params)
    lattice = TagLattice(table.scores, tagset.n_labels)
    gold = [tagset.bioes_tags[t] for t in seq.targets]
    nll, d_scores = sequence_nll_grad(lattice, gold)
    grads = GradAccumulator(params)
    d_vecs, d_tag_vecs = tagger_backward(
        table, d_scores.astype(params.dtype), params, grads
    )
    for node, d_vec, d_tag in zip(nodes, d_vecs, d_tag_vecs):
        compose_backward(node, d_vec, d_tag, params, grads)
    return nll, grads


def train_step(
    seq: GoldSequence,
    params: ModelParams,
    tagset: TagSet,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> float:
    """One stochastic update; returns the pre-update loss."""
    nll, grads = step_gradients(seq, params, tagset, rng, training=True)
    grads.apply(cfg.learning_rate)
    return nll


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochStats]
    best_epoch: int
    best_f1: float
    checkpoints: list[int] = field(default_factory=list)


def _dev_f1(params: ModelParams, dev: list[ParseTree], tagset: TagSet) -> float:
    predictions = [parse(t.words(), t.pos_tags(), params, tagset) for t in dev]
    return evalb_f1(dev, predictions).f1


def train(
    train_trees: list[ParseTree],
    dev_trees: list[ParseTree],
    tagset: TagSet,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    word_init: np.ndarray | None = None,
    checkpoint=None,
) -> TrainResult:
    """Train until convergence on the dev set or the epoch budget.

    Both splits must already be preprocessed with the tag set derived from
    the training split. ``checkpoint(params, epoch)``, when given, is
    called for every epoch that improves dev F1. Two runs with the same
    seed produce identical histories and parameters.
    """
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    sequences = [seq for tree in train_trees for seq in extract_gold_sequences(tree)]
    if not sequences:
        raise EmptyTrainingSet("no gold sequences; is the training split empty?")
    params = init_params(
        tagset,
        cfg.dim_word,
        cfg.dim_tag,
        cfg.hidden,
        cfg.window,
        cfg.max_arity,
        rng,
        p_drop=cfg.p_drop,
        precision=cfg.precision,
        word_init=word_init,
    )
    history: list[EpochStats] = []
    best_f1 = _dev_f1(params, dev_trees, tagset) if dev_trees else 0.0
    history.append(EpochStats(0, float("nan"), best_f1))
    best_params = copy.deepcopy(params)
    best_epoch = 0
    checkpoints: list[int] = []
    since_best = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(sequences))
        total = 0.0
        for index in order:
            total += train_step(sequences[index], params, tagset, cfg, rng)
        train_nll = total / len(sequences)
        dev_f1 = _dev_f1(params, dev_trees, tagset) if dev_trees else 0.0
        history.append(EpochStats(epoch, train_nll, dev_f1))
        if dev_f1 > best_f1:
            best_f1 = dev_f1
            best_epoch = epoch
            best_params = copy.deepcopy(params)
            since_best = 0
            checkpoints.append(epoch)
            if checkpoint is not None:
                checkpoint(params, epoch)
        else:
            since_best += 1
            if dev_trees and since_best >= cfg.patience:
                break
    if not dev_trees:
        # nothing to select on: keep the final parameters
        best_params = params
        best_epoch = len(history) - 1
    return TrainResult(best_params, history, best_epoch, best_f1, checkpoints)


def write_history(history: list[EpochStats], path) -> None:
    """CSV with one 'epoch,train_nll,dev_f1' row per epoch."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("epoch,train_nll,dev_f1\n")
        for row in history:
            nll = "" if np.isnan(row.train_nll) else f"{row.train_nll:.6f}"
            handle.write(f"{row.epoch},{nll},{100 * row.dev_f1:.2f}\n")
