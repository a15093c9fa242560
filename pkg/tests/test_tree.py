import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treebeam.tree import build_random_tree, build_tree, tree_from_json


class TestShape:
    def test_complete_binary_four_targets(self):
        t = build_tree(4, 2)
        assert t.n_nodes == 7
        assert t.height == 2
        assert list(t.level_nodes(2)) == [3, 4, 5, 6]

    def test_single_target_degenerates_to_root_with_one_leaf(self):
        t = build_tree(1, 2)
        assert t.height == 1
        assert t.n_nodes == 2
        assert list(t.children(0)) == [1]
        assert t.target_of_leaf(1) == 0

    def test_five_targets_fills_left_to_right(self):
        # 5 leaves under 4 level-2 parents: the leftmost parent takes 2.
        t = build_tree(5, 2)
        assert t.height == 3
        assert [t.level_size(h) for h in range(4)] == [1, 2, 4, 5]
        assert list(t.child_count[3:7]) == [2, 1, 1, 1]
        assert all(t.child_count[n] >= 1 for n in range(t.leaf_base))

    def test_internal_levels_are_complete(self):
        t = build_tree(20, 3)
        for h in range(t.height):
            assert t.level_size(h) == 3**h

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            build_tree(0, 2)
        with pytest.raises(ValueError):
            build_tree(4, 1)
        with pytest.raises(ValueError):
            build_random_tree(3, 2, seed=1).children(99)


class TestNavigation:
    def test_path_excludes_root(self):
        t = build_tree(4, 2)
        assert t.path_to_root(6) == [2, 6]
        assert t.path_to_root(0) == []

    def test_path_length_equals_level(self):
        t = build_tree(8, 2)
        leaf = t.leaf_of_target(5)
        assert len(t.path_to_root(leaf)) == 3

    def test_subtree_leaves(self):
        t = build_tree(4, 2)
        assert list(t.subtree_leaves(1)) == [3, 4]
        assert list(t.subtree_leaves(0)) == [3, 4, 5, 6]
        assert list(t.subtree_leaves(5)) == [5]

    def test_ancestor_at_level(self):
        t = build_tree(4, 2)
        assert t.ancestor_at_level(6, 1) == 2
        assert t.ancestor_at_level(6, 2) == 6
        assert t.ancestor_at_level(t.leaf_of_target(0), 0) == 0
        with pytest.raises(ValueError):
            t.ancestor_at_level(1, 2)


@settings(max_examples=40, deadline=None)
@given(
    m=st.integers(min_value=1, max_value=90),
    b=st.integers(min_value=2, max_value=4),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_structural_invariants(m, b, seed):
    t = build_random_tree(m, b, seed)
    # bijection roundtrip
    for j in range(m):
        assert t.target_of_leaf(t.leaf_of_target(j)) == j
    # parent/children consistency and level placement
    for n in range(t.n_nodes):
        for c in t.children(n):
            assert t.parent[c] == n
            assert t.level_of(int(c)) == t.level_of(n) + 1
    assert t.level_size(t.height) == m
    assert b**t.height >= m
    assert t.height == 1 or b ** (t.height - 1) < m
    # per-level subtree partition of the leaves
    for h in range(t.height + 1):
        union = np.concatenate([t.subtree_leaves(int(n)) for n in t.level_nodes(h)])
        assert sorted(union) == list(t.level_nodes(t.height))
    # ancestors recover the node
    for n in t.level_nodes(min(2, t.height)):
        for leaf in t.subtree_leaves(int(n)):
            assert t.ancestor_at_level(int(leaf), t.level_of(int(n))) == n
    # path length equals level
    for n in (0, t.n_nodes - 1):
        assert len(t.path_to_root(n)) == t.level_of(n)


class TestSerialization:
    def test_same_seed_byte_identical(self):
        a = build_random_tree(37, 3, seed=99).to_json()
        b = build_random_tree(37, 3, seed=99).to_json()
        assert a == b

    def test_roundtrip_preserves_structure(self):
        t = build_random_tree(23, 2, seed=5)
        t2 = tree_from_json(t.to_json())
        assert t.to_json() == t2.to_json()
        assert np.array_equal(t.parent, t2.parent)
        assert np.array_equal(t.leaf_to_target, t2.leaf_to_target)

    def test_json_carries_only_shape_free_fields(self):
        doc = json.loads(build_random_tree(6, 2, seed=1).to_json())
        assert set(doc) == {"arity", "height", "num_targets", "leaf_to_target", "seed"}

    def test_different_seed_changes_assignment(self):
        a = build_random_tree(37, 3, seed=1)
        b = build_random_tree(37, 3, seed=2)
        assert not np.array_equal(a.leaf_to_target, b.leaf_to_target)
