"""Compositional node representations.

Every constituent, leaf or internal, is summarized by a vector of the word
embedding dimension, so composition modules consume leaves and sub-trees
interchangeably. An arity-k module concatenates each child's vector with
its tag embedding and applies one tanh layer:

    vec = tanh(M_k @ [child_1 vec, child_1 tag, ..., child_k vec, child_k tag])

During training a fresh dropout mask is applied to the output of every
lookup (word vectors and tag vectors); at inference the lookups are scaled
by the keep probability instead. Composition outputs are never dropped.

Forward state needed by the backward pass (inputs, masks) is cached on the
nodes themselves; node objects act as the per-sentence arena, so inference
never mutates the shared lookup tables.
"""

from __future__ import annotations

import struct
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import GreedyParseError
from .nncore import MissingForwardCache, ModelParams, GradAccumulator
from .treebank import ParseTree
from .vocab import TagSet


class ComposerError(GreedyParseError):
    pass


class EmptyChildList(ComposerError):
    pass


class NodeRepr:
    """A composed constituent: vector, tag embedding, and backward cache.

    ``gate`` fields hold the dropout mask (training) or the scalar keep
    probability (inference); the backward pass multiplies gradients by the
    same gate the forward pass used.
    """

    __slots__ = (
        "vec",
        "tag_index",
        "tag_vec",
        "tag_gate",
        "children",
        "z",
        "word_index",
        "word_gate",
    )

    def __init__(self, vec, tag_index, tag_vec, tag_gate, children=None, z=None,
                 word_index=None, word_gate=None):
        self.vec = vec
        self.tag_index = tag_index
        self.tag_vec = tag_vec
        self.tag_gate = tag_gate
        self.children = children
        self.z = z
        self.word_index = word_index
        self.word_gate = word_gate

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def arity(self) -> int:
        return 0 if self.children is None else len(self.children)

    @property
    def input_vec(self) -> np.ndarray:
        """Concatenated (vec, tag_vec) slot as seen by the window tagger."""
        return np.concatenate([self.vec, self.tag_vec])


def _gated_lookup(table, index, params, training, rng):
    raw = table[:, index]
    if training:
        if params.p_drop == 0.0:
            gate = np.ones_like(raw)
        else:
            if rng is None:
                raise ComposerError("training with dropout requires a random generator")
            gate = (rng.random(raw.shape) >= params.p_drop).astype(raw.dtype)
    else:
        gate = raw.dtype.type(1.0 - params.p_drop)
    return raw * gate, gate


def make_leaf(
    word: str,
    pos: str,
    params: ModelParams,
    tagset: TagSet,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> NodeRepr:
    """Leaf representation: gated word vector plus gated POS tag vector."""
    word_index = tagset.word_index(word)
    tag_index = tagset.pos_tag_index(pos)
    vec, word_gate = _gated_lookup(params.word_table, word_index, params, training, rng)
    tag_vec, tag_gate = _gated_lookup(params.tag_table, tag_index, params, training, rng)
    return NodeRepr(vec, tag_index, tag_vec, tag_gate,
                    word_index=word_index, word_gate=word_gate)


def compose(
    children: Sequence[NodeRepr],
    tag_index: int,
    params: ModelParams,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> NodeRepr:
    """Compose child representations into a new node carrying ``tag_index``.

    Arities above the largest trained module are handled by folding the
    leftmost ``max_arity`` children into a temporary node (tagged like the
    parent) and composing the remainder with it, recursively.
    """
    if len(children) == 0:
        raise EmptyChildList("cannot compose zero children")
    k = len(children)
    if k > params.max_arity:
        head = compose(children[: params.max_arity], tag_index, params, training, rng)
        return compose([head, *children[params.max_arity :]], tag_index, params, training, rng)
    z = np.concatenate([c.input_vec for c in children])
    vec = np.tanh(params.compose[k] @ z)
    tag_vec, tag_gate = _gated_lookup(params.tag_table, tag_index, params, training, rng)
    return NodeRepr(vec, tag_index, tag_vec, tag_gate, children=list(children), z=z)


def compose_tree(
    tree: ParseTree,
    params: ModelParams,
    tagset: TagSet,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> NodeRepr:
    """Bottom-up pass over a whole (sub-)tree, leaves included."""
    if tree.is_leaf:
        return make_leaf(tree.word, tree.label, params, tagset, training, rng)
    children = [compose_tree(c, params, tagset, training, rng) for c in tree.children]
    return compose(children, tagset.label_tag_index(tree.label), params, training, rng)


def compose_backward(
    node: NodeRepr,
    d_vec: np.ndarray,
    d_tag_vec: np.ndarray | None,
    params: ModelParams,
    grads: GradAccumulator,
) -> None:
    """Accumulate gradients through a composed node into ``grads``.

    ``d_vec`` is the gradient w.r.t. the node's vector, ``d_tag_vec`` the
    gradient w.r.t. its (gated) tag embedding as consumed upstream.
    Recurses into children; untouched table columns receive nothing.
    """
    if d_tag_vec is not None:
        grads.add_tag_col(node.tag_index, d_tag_vec * node.tag_gate)
    if node.is_leaf:
        if node.word_gate is None:
            raise MissingForwardCache("leaf has no forward cache")
        grads.add_word_col(node.word_index, d_vec * node.word_gate)
        return
    if node.z is None:
        raise MissingForwardCache("node has no cached composition input")
    k = len(node.children)
    d_pre = d_vec * (1.0 - node.vec * node.vec)
    grads.add_compose(k, np.outer(d_pre, node.z))
    d_z = params.compose[k].T @ d_pre
    d = params.dim_word
    t = params.dim_tag
    step = d + t
    for i, child in enumerate(node.children):
        lo = i * step
        compose_backward(child, d_z[lo : lo + d], d_z[lo + d : lo + step], params, grads)


# ---------------------------------------------------------------------------
# phrase-vector dumps (nearest-neighbor support)
#
# record: u32 byte length of the bracketed phrase, utf-8 phrase text,
#         D little-endian float32 values


def dump_phrase_vectors(
    trees: Iterable[ParseTree],
    params: ModelParams,
    tagset: TagSet,
    fileobj,
) -> int:
    """Write one record per internal node of every tree; returns the count."""
    written = 0
    for tree in trees:
        root = compose_tree(tree, params, tagset, training=False)
        stack = [(tree, root)]
        while stack:
            subtree, node = stack.pop()
            if node.is_leaf:
                continue
            text = str(subtree).encode("utf-8")
            fileobj.write(struct.pack("<I", len(text)))
            fileobj.write(text)
            fileobj.write(node.vec.astype("<f4").tobytes())
            written += 1
            for child_tree, child_node in zip(subtree.children, node.children):
                stack.append((child_tree, child_node))
    return written


def read_phrase_dump(fileobj, dim: int) -> Iterator[tuple[str, np.ndarray]]:
    """Yield (bracketed phrase, vector) records written by the dumper."""
    vec_bytes = 4 * dim
    while True:
        header = fileobj.read(4)
        if not header:
            return
        if len(header) < 4:
            raise ComposerError("truncated phrase dump header")
        (text_len,) = struct.unpack("<I", header)
        text = fileobj.read(text_len)
        raw = fileobj.read(vec_bytes)
        if len(text) < text_len or len(raw) < vec_bytes:
            raise ComposerError("truncated phrase dump record")
        yield text.decode("utf-8"), np.frombuffer(raw, dtype="<f4").astype(np.float64)
