import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treebeam.beam import (
    Beam,
    batched_beam_search,
    beam_search,
    beam_search_table,
    expand,
    retrieve_topm,
    select_topk,
)
from treebeam.pseudo import optimal_z_star  # noqa: F401  (shared fixture module import)
from treebeam.rng import substream
from treebeam.scorer import LinearScorerParams, ProbabilityModel, ScoreCounter, init_params, sigmoid
from treebeam.toy import fit_optest
from treebeam.tree import build_random_tree, build_tree


def exhaustive_leaf_ranking(tree, leaf_probs):
    """Oracle: rank all leaves by (probability desc, node id asc)."""
    leaves = tree.level_nodes(tree.height)
    order = np.lexsort((leaves, -leaf_probs))
    return leaves[order]


class TestExpandSelect:
    def test_expand_root(self):
        t = build_tree(4, 2)
        beam = Beam(level=0, nodes=np.array([0]), probs=np.array([1.0]))
        assert list(expand(t, beam)) == [1, 2]

    def test_expand_full_level(self):
        t = build_tree(4, 2)
        beam = Beam(level=1, nodes=np.array([1, 2]), probs=np.array([0.9, 0.8]))
        assert list(expand(t, beam)) == [3, 4, 5, 6]

    def test_expand_uneven_children(self):
        t = build_tree(5, 2)  # level-2 node 3 has two children, 4/5/6 have one
        beam = Beam(level=2, nodes=np.array([3, 4]), probs=np.array([1.0, 1.0]))
        assert list(expand(t, beam)) == [7, 8, 9]

    def test_expand_at_leaf_level_fails(self):
        t = build_tree(4, 2)
        beam = Beam(level=2, nodes=np.array([3]), probs=np.array([1.0]))
        with pytest.raises(ValueError):
            expand(t, beam)

    def test_select_topk_example(self):
        beam = select_topk(np.array([3, 4, 5]), np.array([0.9, 0.2, 0.6]), k=2, level=2)
        assert list(beam.nodes) == [3, 5]
        assert list(beam.probs) == [0.9, 0.6]

    def test_select_topk_ties_prefer_low_ids(self):
        beam = select_topk(np.array([9, 4, 7]), np.array([0.5, 0.5, 0.5]), k=2, level=1)
        assert list(beam.nodes) == [4, 7]

    def test_select_topk_keeps_all_when_short(self):
        beam = select_topk(np.array([1, 2, 3]), np.array([0.1, 0.3, 0.2]), k=10, level=1)
        assert list(beam.nodes) == [2, 3, 1]

    def test_select_topk_rejects_bad_k(self):
        with pytest.raises(ValueError):
            select_topk(np.array([1]), np.array([0.5]), k=0, level=1)


class TestBeamSearchTable:
    # 7-node tree with probabilities chosen so the greedy path is misled:
    # level-1 node 1 outscores node 2, but the best leaf hangs under node 2.
    TABLE = np.array([1.0, 0.9, 0.8, 0.1, 0.7, 0.95, 0.2])

    def test_greedy_misses_global_best_leaf(self):
        t = build_tree(4, 2)
        beam = beam_search_table(t, self.TABLE, k=1)
        assert list(beam.nodes) == [4]
        assert beam.probs[0] == pytest.approx(0.7)
        assert list(retrieve_topm(t, beam, 1)) == [1]

    def test_wider_beam_recovers(self):
        t = build_tree(4, 2)
        beam = beam_search_table(t, self.TABLE, k=2)
        assert list(beam.nodes) == [5, 4]

    def test_k_equal_m_retrieves_all_beam_targets(self):
        t = build_tree(4, 2)
        beam = beam_search_table(t, self.TABLE, k=4)
        assert list(beam.nodes) == [5, 4, 6, 3]
        assert list(retrieve_topm(t, beam, 4)) == [2, 1, 3, 0]

    def test_retrieve_topm_bounds(self):
        t = build_tree(4, 2)
        beam = beam_search_table(t, self.TABLE, k=2)
        with pytest.raises(ValueError):
            retrieve_topm(t, beam, 0)
        with pytest.raises(ValueError):
            retrieve_topm(t, beam, 3)

    def test_tie_at_mth_position_takes_lower_node_id(self):
        t = build_tree(4, 2)
        table = np.array([1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5])
        beam = beam_search_table(t, table, k=3)
        assert list(beam.nodes) == [3, 4, 5]
        assert list(retrieve_topm(t, beam, 2)) == [0, 1]


class TestBeamSearchScorer:
    def test_direct_matches_table_of_sigmoids(self):
        t = build_random_tree(17, 2, seed=3)
        rng = substream(5, "p")
        params = init_params(t, 4, rng, scale=1.0)
        x = rng.standard_normal(4)
        scores = params.weights @ x + params.biases
        table = sigmoid(scores)
        got = beam_search(t, params, ProbabilityModel.DIRECT, x, k=5)
        want = beam_search_table(t, table, k=5)
        assert np.array_equal(got.nodes, want.nodes)
        assert np.allclose(got.probs, want.probs)

    def test_hierarchical_accumulates_path_products(self):
        t = build_tree(4, 2)
        biases = np.array([0.0, 0.3, -0.2, 0.5, -0.5, 1.0, -1.0])
        params = LinearScorerParams(np.zeros((7, 1)), biases, 1)
        x = np.zeros(1)
        beam = beam_search(t, params, ProbabilityModel.HIERARCHICAL, x, k=4)
        want = {n: sigmoid(biases[t.parent[n]]) * sigmoid(biases[n]) for n in range(3, 7)}
        for node, prob in zip(beam.nodes, beam.probs):
            assert prob == pytest.approx(want[int(node)], rel=1e-12)
        assert list(beam.nodes) == sorted(want, key=lambda n: (-want[n], n))

    def test_batched_matches_single(self):
        t = build_random_tree(29, 3, seed=11)
        rng = substream(6, "p")
        params = init_params(t, 5, rng, scale=0.7)
        X = rng.standard_normal((8, 5))
        batch = batched_beam_search(t, params, ProbabilityModel.DIRECT, X, k=4)
        for i in range(8):
            single = beam_search(t, params, ProbabilityModel.DIRECT, X[i], k=4)
            assert np.array_equal(batch[i].nodes, single.nodes)
            assert np.allclose(batch[i].probs, single.probs)

    def test_scored_nodes_within_level_budget(self):
        t = build_random_tree(64, 2, seed=1)
        rng = substream(7, "p")
        params = init_params(t, 3, rng)
        counter = ScoreCounter()
        beam_search(t, params, ProbabilityModel.DIRECT, rng.standard_normal(3), k=5, counter=counter)
        assert counter.count <= t.height * t.arity * 5


class TestOracleEquivalence:
    @settings(max_examples=25, deadline=None)
    @given(
        m_targets=st.integers(min_value=2, max_value=64),
        b=st.integers(min_value=2, max_value=3),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    def test_no_pruning_equals_exhaustive_ranking(self, m_targets, b, seed):
        t = build_random_tree(m_targets, b, seed)
        rng = substream(seed, "oracle")
        params = init_params(t, 3, rng, scale=1.0)
        x = rng.standard_normal(3)
        leaf_probs = sigmoid(params.weights[t.leaf_base :] @ x + params.biases[t.leaf_base :])
        oracle = exhaustive_leaf_ranking(t, leaf_probs)
        beam = beam_search(t, params, ProbabilityModel.DIRECT, x, k=m_targets)
        assert np.array_equal(beam.nodes, oracle)

    @settings(max_examples=25, deadline=None)
    @given(
        m_targets=st.integers(min_value=2, max_value=48),
        b=st.integers(min_value=2, max_value=3),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    def test_max_aggregated_tables_make_beam_search_exact(self, m_targets, b, seed):
        # A table holding, per node, the max target probability in its subtree
        # makes any-width beam search return an exact top-m set.
        t = build_random_tree(m_targets, b, seed)
        eta = substream(seed, "eta").random(m_targets)
        table = fit_optest(t, eta=eta)
        for k in {1, 3, m_targets}:
            if k > m_targets:
                continue
            beam = beam_search_table(t, table, k=k)
            for m in {1, min(3, k), k}:
                got = set(retrieve_topm(t, beam, m).tolist())
                top_eta = np.sort(eta)[::-1]
                got_eta = np.sort(eta[list(got)])[::-1]
                assert np.allclose(got_eta, top_eta[:m], atol=0)

    def test_greedy_path_nests_in_wider_beams_for_max_aggregated_tables(self):
        # When every node's probability is the max over its subtree, the greedy
        # chain tracks the globally best leaf, which no wider beam can drop.
        rng = substream(12, "nest")
        for _ in range(20):
            m_targets = int(rng.integers(8, 50))
            t = build_random_tree(m_targets, 2, int(rng.integers(1e9)))
            table = fit_optest(t, eta=rng.random(m_targets))
            greedy = beam_search_table(t, table, k=1)
            wide = beam_search_table(t, table, k=10)
            assert greedy.nodes[0] in set(wide.nodes.tolist())

    def test_greedy_path_can_escape_wider_beams_for_general_tables(self):
        # Without the max structure the containment fails: here the greedy
        # descent commits to the 0.9 branch whose leaves are all weaker than
        # the other branch's leaves, so the k=2 leaf beam drops the greedy leaf.
        t = build_tree(4, 2)
        table = np.array([1.0, 0.9, 0.8, 0.3, 0.2, 0.5, 0.4])
        greedy = beam_search_table(t, table, k=1)
        wide = beam_search_table(t, table, k=2)
        assert greedy.nodes[0] == 3
        assert set(wide.nodes.tolist()) == {5, 6}
