"""Window construction, scoring, and the tagger backward pass."""

import numpy as np
import pytest

from greedyparse.composer import compose_backward, compose_tree, make_leaf
from greedyparse.nncore import GradAccumulator, ShapeMismatch, grad_check, init_params
from greedyparse.tagger import score_sequence, tagger_backward
from greedyparse.treebank import parse_trees
from greedyparse.vocab import build_tagset

from helpers import grads_as_vector, pack_params, unpack_params


def setup(window=3, seed=0):
    trees = parse_trees(
        "(S (NP (DT a) (NN dog)) (VP (VB sees) (NP (DT the) (NN cat))) (. .))"
    )
    tagset = build_tagset(trees)
    params = init_params(tagset, dim_word=4, dim_tag=4, hidden=6, window=window,
                         max_arity=3, rng=np.random.default_rng(seed))
    return trees, tagset, params


def leaf_nodes(words_pos, params, tagset, training=False, rng=None):
    return [make_leaf(w, p, params, tagset, training, rng) for w, p in words_pos]


class TestForward:
    def test_single_item_window_is_padding_heavy(self):
        trees, tagset, params = setup(window=5)
        nodes = leaf_nodes([("dog", "NN")], params, tagset)
        table = score_sequence(nodes, params)
        d_in = params.dim_input
        window = table._windows[0]
        np.testing.assert_array_equal(window[: 2 * d_in], np.tile(params.pad, 2))
        np.testing.assert_array_equal(window[2 * d_in : 3 * d_in], nodes[0].input_vec)
        np.testing.assert_array_equal(window[3 * d_in :], np.tile(params.pad, 2))

    def test_zero_output_layer_zero_scores(self):
        trees, tagset, params = setup()
        params.m2[:] = 0.0
        nodes = leaf_nodes([("a", "DT"), ("dog", "NN")], params, tagset)
        table = score_sequence(nodes, params)
        np.testing.assert_array_equal(table.scores, 0.0)
        assert table.scores.shape == (2, tagset.n_bioes)

    def test_eval_determinism(self):
        trees, tagset, params = setup()
        nodes = leaf_nodes([("a", "DT"), ("dog", "NN"), (".", ".")], params, tagset)
        a = score_sequence(nodes, params).scores
        b = score_sequence(nodes, params).scores
        np.testing.assert_array_equal(a, b)

    def test_prepending_changes_only_overlapping_windows(self):
        trees, tagset, params = setup(window=3)
        base = leaf_nodes(
            [("a", "DT"), ("dog", "NN"), ("sees", "VB"), ("the", "DT"), ("cat", "NN")],
            params, tagset,
        )
        extended = leaf_nodes([(".", ".")], params, tagset) + base
        short = score_sequence(base, params).scores
        long = score_sequence(extended, params).scores
        # position i of the base sequence is position i+1 after prepending;
        # windows not containing the new first item are unchanged
        np.testing.assert_allclose(long[2:], short[1:], atol=1e-12)
        assert not np.allclose(long[1], short[0])

    def test_empty_sequence_rejected(self):
        trees, tagset, params = setup()
        with pytest.raises(ShapeMismatch):
            score_sequence([], params)


class TestBackward:
    def test_zero_grad_scores(self):
        trees, tagset, params = setup()
        nodes = leaf_nodes([("a", "DT"), ("dog", "NN")], params, tagset)
        table = score_sequence(nodes, params)
        grads = GradAccumulator(params)
        d_vecs, d_tags = tagger_backward(
            table, np.zeros_like(table.scores), params, grads
        )
        assert not d_vecs.any() and not d_tags.any()
        assert not grads.m1.any() and not grads.m2.any()

    def test_padding_gradient_only_when_boundary_touched(self):
        trees, tagset, params = setup(window=1)
        nodes = leaf_nodes([("a", "DT"), ("dog", "NN")], params, tagset)
        table = score_sequence(nodes, params)
        grads = GradAccumulator(params)
        tagger_backward(table, np.ones_like(table.scores), params, grads)
        assert grads.pad is None  # window of 1 never reads the padding
        trees, tagset, params = setup(window=3)
        nodes = leaf_nodes([("a", "DT"), ("dog", "NN")], params, tagset)
        table = score_sequence(nodes, params)
        grads = GradAccumulator(params)
        tagger_backward(table, np.ones_like(table.scores), params, grads)
        assert grads.pad is not None and grads.pad.any()

    def test_constituent_collects_from_overlapping_windows(self):
        # with K=3 and N=5, middle constituents appear in 3 windows; check
        # the input gradient against finite differences of the summed score
        trees, tagset, params = setup(window=3)
        pairs = [("a", "DT"), ("dog", "NN"), ("sees", "VB"), ("the", "DT"), ("cat", "NN")]
        nodes = leaf_nodes(pairs, params, tagset)
        table = score_sequence(nodes, params)
        grads = GradAccumulator(params)
        d_vecs, d_tags = tagger_backward(
            table, np.ones_like(table.scores), params, grads
        )
        base_inputs = np.stack([n.input_vec for n in nodes])

        def total_score(flat):
            inputs = flat.reshape(base_inputs.shape)
            moved = leaf_nodes(pairs, params, tagset)
            for node, row in zip(moved, inputs):
                node.vec = row[: params.dim_word].copy()
                node.tag_vec = row[params.dim_word :].copy()
            return float(score_sequence(moved, params).scores.sum())

        analytic = np.concatenate([d_vecs, d_tags], axis=1).ravel()
        err = grad_check(total_score, base_inputs.ravel(), analytic)
        assert err < 1e-6

    def test_finite_differences_parameters(self):
        trees, tagset, params = setup(window=3)
        pairs = [("a", "DT"), ("dog", "NN"), ("sees", "VB")]
        weights = np.random.default_rng(9).normal(size=(3, tagset.n_bioes))

        def loss_at(flat):
            unpack_params(params, flat)
            nodes = leaf_nodes(pairs, params, tagset, training=True)
            table = score_sequence(nodes, params)
            return float((weights * table.scores).sum())

        x0 = pack_params(params)
        nodes = leaf_nodes(pairs, params, tagset, training=True)
        table = score_sequence(nodes, params)
        grads = GradAccumulator(params)
        d_vecs, d_tags = tagger_backward(table, weights, params, grads)
        for node, d_vec, d_tag in zip(nodes, d_vecs, d_tags):
            compose_backward(node, d_vec, d_tag, params, grads)
        analytic = grads_as_vector(grads, params)
        err = grad_check(loss_at, x0, analytic)
        unpack_params(params, x0)
        assert err < 1e-4

    def test_internal_nodes_feed_the_tagger_too(self):
        # mixed sequence: one composed sub-tree among leaves
        trees, tagset, params = setup(window=3)
        subtree = parse_trees("(NP (DT the) (NN cat))")[0]
        nodes = leaf_nodes([("sees", "VB")], params, tagset)
        nodes.append(compose_tree(subtree, params, tagset))
        table = score_sequence(nodes, params)
        assert table.scores.shape == (2, tagset.n_bioes)
        assert np.isfinite(table.scores).all()
