"""Greedy bottom-up constituency parsing with compositional phrase vectors.

The parser builds a tree iteratively: a sliding-window neural tagger
scores BIOES-prefixed labels over the current constituent sequence, a
constrained Viterbi pass keeps the tag sequence coherent, each decoded
chunk is composed into a new node vector, and the loop repeats on the
shrunken sequence until one constituent spans the sentence. Tagger and
composition networks are trained jointly from gold trees.

High-level entry points:

* :class:`greedyparse.estimator.GreedyTreeParser` - sklearn-style fit/predict
* :mod:`greedyparse.cli` - the ``greedyparse`` command-line pipeline

The building blocks (treebank handling, dictionaries, the numeric kernel,
the decoder, training, voting and evaluation) are importable individually.
"""

__version__ = "0.1.0"

from .treebank import (
    GoldSequence,
    ParseTree,
    expand_merged_labels,
    extract_gold_sequences,
    parse_trees,
    preprocess,
    preprocess_corpus,
    read_trees,
    write_trees,
)
from .vocab import TagSet, build_tagset, load_pretrained_embeddings, load_tagset, save_tagset
from .nncore import ModelParams, init_params, load_model, save_model
from .decoder import TagLattice, constrain_path_validity, log_partition, viterbi
from .greedy_parser import gold_oracle_scorer, parse
from .ensemble_eval import evalb_f1, vote_parse
from .trainer import TrainConfig, train, train_step
from .estimator import GreedyTreeParser

__all__ = [
    "__version__",
    "GoldSequence",
    "ParseTree",
    "expand_merged_labels",
    "extract_gold_sequences",
    "parse_trees",
    "preprocess",
    "preprocess_corpus",
    "read_trees",
    "write_trees",
    "TagSet",
    "build_tagset",
    "load_pretrained_embeddings",
    "load_tagset",
    "save_tagset",
    "ModelParams",
    "init_params",
    "load_model",
    "save_model",
    "TagLattice",
    "constrain_path_validity",
    "log_partition",
    "viterbi",
    "gold_oracle_scorer",
    "parse",
    "evalb_f1",
    "vote_parse",
    "TrainConfig",
    "train",
    "train_step",
    "GreedyTreeParser",
]
