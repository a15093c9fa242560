"""Node label assignments: subtree membership, oracle-optimal, and estimated.

Three ways to label tree nodes for one instance:

* ground truth: a node is positive iff its subtree holds a relevant target
  (the upward closure of the relevant leaves);
* oracle optimal: a node copies the relevance of its subtree's
  highest-``eta`` leaf, so an ancestor of a relevant target can still be
  negative when an irrelevant sibling target is more probable;
* estimated optimal: the oracle rule with the unknown ``eta`` replaced by the
  scorer's probabilities, computed recursively from the leaves by following
  each node's most-probable child.

Labels are sparse: only positive nodes are materialized, everything else is 0.
The estimated assignment is computed only on the ancestor closure of the
relevant leaves, because a node whose subtree holds no relevant target can
never inherit a positive leaf.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scorer import LinearScorerParams, ProbabilityModel, ScoreCounter, score_pairs
from .tree import Tree

GROUND_TRUTH = "ground_truth"
OPTIMAL_ORACLE = "optimal_oracle"
ESTIMATED_OPTIMAL = "estimated_optimal"


@dataclass(frozen=True)
class NodeLabelAssignment:
    """Sparse binary node labels: ids absent from ``positive_nodes`` are 0."""

    kind: str
    positive_nodes: np.ndarray  # sorted node ids

    def label(self, n: int) -> int:
        i = np.searchsorted(self.positive_nodes, n)
        return int(i < len(self.positive_nodes) and self.positive_nodes[i] == n)

    def labels_of(self, nodes: np.ndarray) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=np.int64)
        if len(self.positive_nodes) == 0:
            return np.zeros(len(nodes), dtype=np.int64)
        idx = np.minimum(np.searchsorted(self.positive_nodes, nodes), len(self.positive_nodes) - 1)
        return (self.positive_nodes[idx] == nodes).astype(np.int64)


def _check_targets(tree: Tree, targets: np.ndarray) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size and (targets.min() < 0 or targets.max() >= tree.num_targets):
        raise ValueError(f"target ids must lie in [0, {tree.num_targets})")
    return targets


def closure_levels(tree: Tree, targets: np.ndarray) -> list[np.ndarray]:
    """Per level 0..H, the sorted ancestors (incl. leaves) of relevant leaves.

    Walks parent links upward from each relevant leaf: O(H * |targets|).
    """
    targets = _check_targets(tree, targets)
    levels: list[np.ndarray] = [np.array([], dtype=np.int64)] * (tree.height + 1)
    cur = np.sort(np.asarray(tree.leaf_of_target(targets), dtype=np.int64))
    levels[tree.height] = cur
    for h in range(tree.height - 1, -1, -1):
        if cur.size == 0:
            break
        cur = np.unique(tree.parent[cur])
        levels[h] = cur
    return levels


def batched_closure(tree: Tree, targets_list: list[np.ndarray]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Closure levels for a batch: per level, ``(row_ids, node_ids)`` sorted by key."""
    rows = np.concatenate(
        [np.full(len(t), i, dtype=np.int64) for i, t in enumerate(targets_list)]
        or [np.array([], dtype=np.int64)]
    )
    flat_targets = np.concatenate(
        [np.asarray(t, dtype=np.int64) for t in targets_list] or [np.array([], dtype=np.int64)]
    )
    _check_targets(tree, flat_targets)
    nodes = (
        np.asarray(tree.leaf_of_target(flat_targets), dtype=np.int64)
        if flat_targets.size
        else np.array([], dtype=np.int64)
    )
    n_nodes = tree.n_nodes
    levels: list[tuple[np.ndarray, np.ndarray]] = [None] * (tree.height + 1)  # type: ignore[list-item]
    key = rows * n_nodes + nodes
    order = np.argsort(key)
    rows, nodes = rows[order], nodes[order]
    levels[tree.height] = (rows, nodes)
    for h in range(tree.height - 1, -1, -1):
        key = np.unique(rows * n_nodes + tree.parent[nodes])
        rows, nodes = key // n_nodes, key % n_nodes
        levels[h] = (rows, nodes)
    return levels


def ground_truth_z(tree: Tree, relevant_targets) -> NodeLabelAssignment:
    """Positive exactly on ancestors (inclusive) of relevant leaves."""
    levels = closure_levels(tree, np.asarray(relevant_targets, dtype=np.int64))
    positives = np.sort(np.concatenate(levels)) if any(l.size for l in levels) else np.array([], dtype=np.int64)
    return NodeLabelAssignment(GROUND_TRUTH, positives)


def _segment_first_argmax(values: np.ndarray, seg_starts: np.ndarray, seg_counts: np.ndarray) -> np.ndarray:
    """Index (into ``values``) of the first maximum within each segment."""
    maxv = np.maximum.reduceat(values, seg_starts)
    is_max = values == np.repeat(maxv, seg_counts)
    pos = np.arange(len(values), dtype=np.int64)
    cand = np.where(is_max, pos, len(values))
    return np.minimum.reduceat(cand, seg_starts)


def optimal_z_star(tree: Tree, y: np.ndarray, eta: np.ndarray) -> NodeLabelAssignment:
    """Each node takes the relevance of its subtree's highest-``eta`` leaf.

    Ties in ``eta`` resolve to the lowest node id.  Oracle-only: requires the
    true per-target probabilities, so it appears in tests and synthetic
    evaluation, never in training.
    """
    y = np.asarray(y)
    eta = np.asarray(eta, dtype=np.float64)
    if y.shape != (tree.num_targets,) or eta.shape != (tree.num_targets,):
        raise ValueError(f"y and eta must both have length {tree.num_targets}")
    best = eta[tree.leaf_to_target]
    lab = np.asarray(y[tree.leaf_to_target], dtype=np.int64)
    positives = [tree.level_nodes(tree.height)[lab == 1]]
    for h in range(tree.height - 1, -1, -1):
        nodes = tree.level_nodes(h)
        counts = tree.child_count[nodes]
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        first = _segment_first_argmax(best, starts, counts)
        best = best[first]
        lab = lab[first]
        positives.append(nodes[lab == 1])
    return NodeLabelAssignment(OPTIMAL_ORACLE, np.sort(np.concatenate(positives)))


def batched_z_hat(
    tree: Tree,
    params: LinearScorerParams,
    model: ProbabilityModel,
    X: np.ndarray,
    targets_list: list[np.ndarray],
    counter: ScoreCounter | None = None,
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Estimated-optimal labels on the relevant closure of each batch row.

    Returns, per level 0..H, ``(row_ids, node_ids, labels)`` for closure nodes
    (everything outside the closure is 0).  Each internal closure node inherits
    the label of its highest-probability child; under both probability models
    that argmax equals the argmax of the raw child scores, because the
    score-to-probability map is strictly increasing and any accumulated parent
    factor is shared by all siblings.  Ties go to the lowest node id.
    """
    X = np.asarray(X, dtype=np.float64)
    closure = batched_closure(tree, targets_list)
    n_nodes = tree.n_nodes
    out: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = [None] * (tree.height + 1)  # type: ignore[list-item]
    rows_h, nodes_h = closure[tree.height]
    zhat = np.ones(len(nodes_h), dtype=np.int64)  # relevant leaves carry y = 1
    out[tree.height] = (rows_h, nodes_h, zhat)
    child_keys = rows_h * n_nodes + nodes_h
    child_vals = zhat
    for h in range(tree.height - 1, -1, -1):
        rows, nodes = closure[h]
        if len(nodes) == 0:
            out[h] = (rows, nodes, np.array([], dtype=np.int64))
            continue
        counts = tree.child_count[nodes]
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        flat_rows = np.repeat(rows, counts)
        within = np.arange(int(counts.sum()), dtype=np.int64) - np.repeat(starts, counts)
        flat_children = np.repeat(tree.child_start[nodes], counts) + within
        scores = score_pairs(params, X, flat_rows, flat_children, counter)
        first = _segment_first_argmax(scores, starts, counts)
        chosen_key = flat_rows[first] * n_nodes + flat_children[first]
        # A nonempty closure level implies a nonempty child level below it.
        idx = np.minimum(np.searchsorted(child_keys, chosen_key), len(child_keys) - 1)
        in_closure = child_keys[idx] == chosen_key
        zhat = np.where(in_closure, child_vals[idx], 0).astype(np.int64)
        out[h] = (rows, nodes, zhat)
        child_keys = rows * n_nodes + nodes
        child_vals = zhat
    return out


def estimate_z_hat(
    tree: Tree,
    relevant_targets,
    params: LinearScorerParams,
    model: ProbabilityModel,
    x: np.ndarray,
    counter: ScoreCounter | None = None,
) -> NodeLabelAssignment:
    """Single-instance estimated-optimal labels (see ``batched_z_hat``).

    With no relevant targets the closure is empty and the scorer is never
    queried.
    """
    targets = np.asarray(relevant_targets, dtype=np.int64)
    levels = batched_z_hat(tree, params, model, np.asarray(x, dtype=np.float64).reshape(1, -1), [targets], counter)
    positives = [nodes[z == 1] for _, nodes, z in levels if len(nodes)]
    merged = np.sort(np.concatenate(positives)) if positives else np.array([], dtype=np.int64)
    return NodeLabelAssignment(ESTIMATED_OPTIMAL, merged)
