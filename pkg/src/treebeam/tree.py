"""B-ary label trees: shape, navigation, and the leaf-to-target bijection.

A tree over ``M`` targets has the root at level 0 and all ``M`` leaves at
level ``H = max(1, ceil(log_b M))``.  Every level above the leaves is a
complete b-ary layer (level ``h`` holds ``b**h`` nodes); when ``M`` is not a
power of ``b`` the leaves are packed left-to-right under the last internal
level, so its nodes carry between 1 and ``b`` children.  Node ids are
breadth-first integers starting at 0, which makes children of any node a
contiguous id range and every subtree's leaf set a contiguous slice of the
leaf level.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ROOT = 0


@dataclass(frozen=True)
class Tree:
    """Immutable b-ary hierarchy with a bijection between leaves and targets.

    ``leaf_to_target`` is indexed by leaf position (node id minus the first
    leaf id); ``target_to_leaf`` maps a target id to its leaf node id.
    ``leaf_lo``/``leaf_hi`` give, per node, the half-open range of leaf
    positions spanned by its subtree.
    """

    arity: int
    height: int
    num_targets: int
    seed: int | None
    parent: np.ndarray
    child_start: np.ndarray
    child_count: np.ndarray
    level_offsets: np.ndarray
    leaf_to_target: np.ndarray
    target_to_leaf: np.ndarray
    leaf_lo: np.ndarray = field(repr=False)
    leaf_hi: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return int(self.level_offsets[-1])

    @property
    def leaf_base(self) -> int:
        """Node id of the first leaf."""
        return int(self.level_offsets[self.height])

    def level_of(self, n: int | np.ndarray) -> int | np.ndarray:
        self._check_node(n)
        lev = np.searchsorted(self.level_offsets, n, side="right") - 1
        return int(lev) if np.isscalar(n) or np.ndim(n) == 0 else lev

    def level_nodes(self, h: int) -> np.ndarray:
        """All node ids at level ``h``, ascending."""
        if not 0 <= h <= self.height:
            raise ValueError(f"level {h} outside [0, {self.height}]")
        return np.arange(self.level_offsets[h], self.level_offsets[h + 1], dtype=np.int64)

    def level_size(self, h: int) -> int:
        if not 0 <= h <= self.height:
            raise ValueError(f"level {h} outside [0, {self.height}]")
        return int(self.level_offsets[h + 1] - self.level_offsets[h])

    def is_leaf(self, n: int) -> bool:
        self._check_node(n)
        return n >= self.leaf_base

    def children(self, n: int) -> np.ndarray:
        self._check_node(n)
        s = self.child_start[n]
        return np.arange(s, s + self.child_count[n], dtype=np.int64)

    def path_to_root(self, n: int) -> list[int]:
        """Ancestors of ``n`` from level 1 down to ``n`` itself, root excluded.

        The root carries no trainable decision, so paths start below it; the
        returned length equals ``level_of(n)``.
        """
        self._check_node(n)
        path: list[int] = []
        cur = int(n)
        while cur != ROOT:
            path.append(cur)
            cur = int(self.parent[cur])
        path.reverse()
        return path

    def subtree_leaves(self, n: int) -> np.ndarray:
        """Leaf node ids under ``n`` (the singleton ``{n}`` for a leaf)."""
        self._check_node(n)
        base = self.leaf_base
        return np.arange(base + self.leaf_lo[n], base + self.leaf_hi[n], dtype=np.int64)

    def ancestor_at_level(self, n: int, h: int) -> int:
        self._check_node(n)
        lev = self.level_of(n)
        if h > lev:
            raise ValueError(f"node {n} is at level {lev}, below requested level {h}")
        cur = int(n)
        for _ in range(lev - h):
            cur = int(self.parent[cur])
        return cur

    def target_of_leaf(self, n: int | np.ndarray) -> int | np.ndarray:
        base = self.leaf_base
        pos = np.asarray(n) - base
        if np.any(pos < 0) or np.any(pos >= self.num_targets):
            raise ValueError("not a leaf node id")
        out = self.leaf_to_target[pos]
        return int(out) if np.ndim(n) == 0 else out

    def leaf_of_target(self, j: int | np.ndarray) -> int | np.ndarray:
        j_arr = np.asarray(j)
        if np.any(j_arr < 0) or np.any(j_arr >= self.num_targets):
            raise ValueError(f"target id out of range [0, {self.num_targets})")
        out = self.target_to_leaf[j_arr]
        return int(out) if np.ndim(j) == 0 else out

    def to_json(self) -> str:
        """Canonical JSON form; shape is implied by (num_targets, arity)."""
        doc = {
            "arity": self.arity,
            "height": self.height,
            "num_targets": self.num_targets,
            "leaf_to_target": [int(t) for t in self.leaf_to_target],
            "seed": self.seed,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def _check_node(self, n) -> None:
        n_arr = np.asarray(n)
        if np.any(n_arr < 0) or np.any(n_arr >= self.n_nodes):
            raise ValueError(f"unknown node id {n} (tree has {self.n_nodes} nodes)")


def _height_for(num_targets: int, arity: int) -> int:
    h = 1
    while arity**h < num_targets:
        h += 1
    return h


def build_tree(num_targets: int, arity: int, leaf_to_target=None, seed: int | None = None) -> Tree:
    """Build the deterministic balanced shape with an explicit leaf bijection.

    ``leaf_to_target`` defaults to the identity; ``build_random_tree`` is the
    seeded-permutation entry point.
    """
    if arity < 2:
        raise ValueError(f"arity must be >= 2, got {arity}")
    if num_targets < 1:
        raise ValueError(f"num_targets must be >= 1, got {num_targets}")
    m, b = int(num_targets), int(arity)
    height = _height_for(m, b)
    sizes = [b**h for h in range(height)] + [m]
    level_offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n_nodes = int(level_offsets[-1])

    child_count = np.zeros(n_nodes, dtype=np.int64)
    for h in range(height - 1):
        child_count[level_offsets[h] : level_offsets[h + 1]] = b
    # Last internal level: every node one leaf, extras packed left-to-right.
    n_parents = sizes[height - 1]
    extras = m - n_parents
    counts = np.ones(n_parents, dtype=np.int64)
    if extras > 0:
        budget = extras - np.arange(n_parents, dtype=np.int64) * (b - 1)
        counts += np.clip(budget, 0, b - 1)
    child_count[level_offsets[height - 1] : level_offsets[height]] = counts

    child_start = np.full(n_nodes, n_nodes, dtype=np.int64)
    parent = np.full(n_nodes, -1, dtype=np.int64)
    for h in range(height):
        lo, hi = level_offsets[h], level_offsets[h + 1]
        starts = level_offsets[h + 1] + np.concatenate([[0], np.cumsum(child_count[lo:hi])[:-1]])
        child_start[lo:hi] = starts
        parent[level_offsets[h + 1] : level_offsets[h + 2]] = np.repeat(
            np.arange(lo, hi, dtype=np.int64), child_count[lo:hi]
        )

    leaf_lo = np.zeros(n_nodes, dtype=np.int64)
    leaf_hi = np.zeros(n_nodes, dtype=np.int64)
    leaf_lo[level_offsets[height] :] = np.arange(m)
    leaf_hi[level_offsets[height] :] = np.arange(m) + 1
    for h in range(height - 1, -1, -1):
        nodes = np.arange(level_offsets[h], level_offsets[h + 1])
        first = child_start[nodes]
        last = child_start[nodes] + child_count[nodes] - 1
        leaf_lo[nodes] = leaf_lo[first]
        leaf_hi[nodes] = leaf_hi[last]

    if leaf_to_target is None:
        l2t = np.arange(m, dtype=np.int64)
    else:
        l2t = np.asarray(leaf_to_target, dtype=np.int64)
        if l2t.shape != (m,) or not np.array_equal(np.sort(l2t), np.arange(m)):
            raise ValueError("leaf_to_target must be a permutation of range(num_targets)")
    t2l = np.empty(m, dtype=np.int64)
    t2l[l2t] = np.arange(m) + level_offsets[height]

    tree = Tree(
        arity=b,
        height=height,
        num_targets=m,
        seed=seed,
        parent=parent,
        child_start=child_start,
        child_count=child_count,
        level_offsets=level_offsets,
        leaf_to_target=l2t,
        target_to_leaf=t2l,
        leaf_lo=leaf_lo,
        leaf_hi=leaf_hi,
    )
    for arr in (parent, child_start, child_count, level_offsets, l2t, t2l, leaf_lo, leaf_hi):
        arr.setflags(write=False)
    return tree


def build_random_tree(num_targets: int, arity: int, seed: int) -> Tree:
    """Balanced shape with a seeded random assignment of targets to leaves."""
    if arity < 2:
        raise ValueError(f"arity must be >= 2, got {arity}")
    if num_targets < 1:
        raise ValueError(f"num_targets must be >= 1, got {num_targets}")
    perm = np.random.default_rng(int(seed)).permutation(num_targets).astype(np.int64)
    return build_tree(num_targets, arity, leaf_to_target=perm, seed=int(seed))


def tree_from_json(doc: str) -> Tree:
    data = json.loads(doc)
    tree = build_tree(
        data["num_targets"],
        data["arity"],
        leaf_to_target=np.asarray(data["leaf_to_target"], dtype=np.int64),
        seed=data.get("seed"),
    )
    if tree.height != data["height"]:
        raise ValueError(f"serialized height {data['height']} != reconstructed {tree.height}")
    return tree
