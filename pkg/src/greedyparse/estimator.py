"""Scikit-learn style front door for the whole pipeline.

``GreedyTreeParser`` is a regular estimator: hyperparameters are plain
``__init__`` attributes (so ``get_params``/``set_params``/``clone`` work),
``fit`` takes gold trees, learned state lands in trailing-underscore
attributes, and ``predict`` maps POS-tagged sentences to trees.

Input is flexible where it is cheap to be: trees may be given as
:class:`~greedyparse.treebank.ParseTree` objects or bracketed strings, and
sentences as ``[(word, pos), ...]`` pairs or a single ``"word/POS ..."``
string.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .ensemble_eval import evalb_f1
from .greedy_parser import parse
from .trainer import TrainConfig, train, write_history
from .treebank import ParseTree, parse_trees, preprocess, merged_label_counts
from .vocab import build_tagset, load_pretrained_embeddings


def _as_tree(obj) -> ParseTree:
    if isinstance(obj, ParseTree):
        return obj
    if isinstance(obj, str):
        trees = parse_trees(obj)
        if len(trees) != 1:
            raise ValueError(f"expected one bracketed tree, found {len(trees)}")
        return trees[0]
    raise TypeError(f"cannot interpret {type(obj).__name__} as a parse tree")


def _as_sentence(obj) -> tuple[list[str], list[str]]:
    if isinstance(obj, str):
        pairs = []
        for token in obj.split():
            word, sep, pos = token.rpartition("/")
            if not sep or not word or not pos:
                raise ValueError(f"token {token!r} is not of the form word/POS")
            pairs.append((word, pos))
    else:
        pairs = list(obj)
    if not pairs:
        raise ValueError("cannot parse an empty sentence")
    words, pos = zip(*pairs)
    return list(words), list(pos)


class GreedyTreeParser(BaseEstimator):
    """Greedy constituency parser with learned phrase composition.

    Parameters mirror :class:`~greedyparse.trainer.TrainConfig`;
    ``validation_fraction`` carves a development split out of the training
    trees for model selection and early stopping.

    Attributes (after ``fit``): ``tagset_``, ``model_``, ``history_``,
    ``best_f1_``, ``n_epochs_``.
    """

    def __init__(
        self,
        dim_word: int = 200,
        dim_tag: int = 20,
        hidden: int = 500,
        window: int = 7,
        max_arity: int = 7,
        learning_rate: float = 0.15,
        dropout: float = 0.25,
        merge_threshold: int = 30,
        min_word_count: int = 1,
        max_epochs: int = 30,
        patience: int = 5,
        validation_fraction: float = 0.1,
        random_state: int = 0,
        precision: str = "float64",
        embeddings_path: str | None = None,
    ):
        self.dim_word = dim_word
        self.dim_tag = dim_tag
        self.hidden = hidden
        self.window = window
        self.max_arity = max_arity
        self.learning_rate = learning_rate
        self.dropout = dropout
        self.merge_threshold = merge_threshold
        self.min_word_count = min_word_count
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.precision = precision
        self.embeddings_path = embeddings_path

    def _config(self) -> TrainConfig:
        return TrainConfig(
            dim_word=self.dim_word,
            dim_tag=self.dim_tag,
            hidden=self.hidden,
            window=self.window,
            max_arity=self.max_arity,
            learning_rate=self.learning_rate,
            p_drop=self.dropout,
            merge_threshold=self.merge_threshold,
            min_word_count=self.min_word_count,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.random_state,
            precision=self.precision,
        )

    def fit(self, X, y=None):
        """Fit on gold trees (ParseTree objects or bracketed strings)."""
        cfg = self._config()
        cfg.validate()
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        trees = [_as_tree(t) for t in X]
        if not trees:
            raise ValueError("fit needs at least one tree")
        rng = np.random.default_rng(self.random_state)
        order = rng.permutation(len(trees))
        n_dev = int(round(self.validation_fraction * len(trees)))
        if self.validation_fraction > 0 and len(trees) > 1:
            n_dev = max(n_dev, 1)
        dev_raw = [trees[i] for i in order[:n_dev]]
        train_raw = [trees[i] for i in order[n_dev:]]
        stats = merged_label_counts(train_raw)
        train_trees = [preprocess(t, stats, self.merge_threshold) for t in train_raw]
        dev_trees = [preprocess(t, stats, self.merge_threshold) for t in dev_raw]
        tagset = build_tagset(train_trees, self.min_word_count)
        word_init = None
        if self.embeddings_path is not None:
            word_init, _ = load_pretrained_embeddings(
                self.embeddings_path, tagset, self.dim_word, rng
            )
        result = train(train_trees, dev_trees, tagset, cfg, rng, word_init=word_init)
        self.tagset_ = tagset
        self.model_ = result.params
        self.history_ = result.history
        self.best_f1_ = result.best_f1
        self.n_epochs_ = len(result.history) - 1
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this GreedyTreeParser instance is not fitted yet; call fit first"
            )

    def predict(self, X) -> list[ParseTree]:
        """Parse POS-tagged sentences into trees."""
        self._check_fitted()
        out = []
        for sentence in X:
            words, pos = _as_sentence(sentence)
            out.append(parse(words, pos, self.model_, self.tagset_))
        return out

    def score(self, X, y=None) -> float:
        """Labeled-bracket F1.

        With ``y`` given, ``X`` are sentences and ``y`` the gold trees;
        with ``y`` omitted, ``X`` are gold trees and the sentences are
        taken from their leaves.
        """
        self._check_fitted()
        if y is None:
            gold = [_as_tree(t) for t in X]
            sentences = [list(zip(t.words(), t.pos_tags())) for t in gold]
        else:
            gold = [_as_tree(t) for t in y]
            sentences = list(X)
        predictions = self.predict(sentences)
        return evalb_f1(gold, predictions).f1

    def save_history(self, path) -> None:
        self._check_fitted()
        write_history(self.history_, path)
