"""Level-wise beam search over a label tree.

Each level expands the current beam to the union of its children and keeps the
``k`` candidates with the highest relevance probability, breaking ties by
ascending node id so runs are reproducible.  Probabilities come from one of
three interchangeable backends: a direct scorer (sigmoid of the node score), a
hierarchical scorer (conditional sigmoids accumulated along the search path in
log space), or a precomputed per-node probability table.

The engine is batched: a whole matrix of instances is searched level-by-level
with padded candidate matrices, and the single-instance entry points are the
batch-of-one case.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scorer import (
    LinearScorerParams,
    ProbabilityModel,
    ScoreCounter,
    log_sigmoid,
    score_pairs,
    sigmoid,
)
from .tree import ROOT, Tree


@dataclass
class Beam:
    """One level's retained nodes, ranked by (probability desc, node id asc)."""

    level: int
    nodes: np.ndarray
    probs: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)


class _DirectBackend:
    """Ranking value is the linear relevance probability sigmoid(score)."""

    def __init__(self, params: LinearScorerParams, X: np.ndarray):
        self.params = params
        self.X = X

    root_value = 1.0

    def candidate_values(self, rows, nodes, parent_vals, counter):
        return sigmoid(score_pairs(self.params, self.X, rows, nodes, counter))

    @staticmethod
    def to_prob(vals):
        return vals


class _HierarchicalBackend:
    """Ranking value is the accumulated log path-product of conditional sigmoids."""

    def __init__(self, params: LinearScorerParams, X: np.ndarray):
        self.params = params
        self.X = X

    root_value = 0.0

    def candidate_values(self, rows, nodes, parent_vals, counter):
        return parent_vals + log_sigmoid(score_pairs(self.params, self.X, rows, nodes, counter))

    @staticmethod
    def to_prob(vals):
        return np.exp(vals)


class _TableBackend:
    """Ranking value read straight from a per-node probability table."""

    def __init__(self, table: np.ndarray):
        self.table = table

    root_value = 1.0

    def candidate_values(self, rows, nodes, parent_vals, counter):
        return self.table[nodes]

    @staticmethod
    def to_prob(vals):
        return vals


def _scorer_backend(params, model: ProbabilityModel, X: np.ndarray):
    if model is ProbabilityModel.DIRECT:
        return _DirectBackend(params, X)
    if model is ProbabilityModel.HIERARCHICAL:
        return _HierarchicalBackend(params, X)
    raise ValueError(f"unknown probability model {model!r}")


def _flat_children(tree: Tree, nodes: np.ndarray):
    """Children of ``nodes`` concatenated in order, with per-parent repeat info."""
    counts = tree.child_count[nodes]
    total = int(counts.sum())
    starts = tree.child_start[nodes]
    within = np.arange(total, dtype=np.int64) - np.repeat(
        np.concatenate([[0], np.cumsum(counts)[:-1]]), counts
    )
    children = np.repeat(starts, counts) + within
    return children, counts


def _run_levels(tree: Tree, backend, n_rows: int, k: int, counter, collect: bool):
    """Shared batched engine.

    Beams are kept id-sorted between levels so that concatenated child ranges
    stay ascending within each row; a stable descending sort on values then
    realizes the (prob desc, id asc) selection rule.
    """
    if k < 1:
        raise ValueError(f"beam size k must be >= 1, got {k}")
    nodes = np.full((n_rows, 1), ROOT, dtype=np.int64)
    vals = np.full((n_rows, 1), backend.root_value, dtype=np.float64)
    valid = np.ones((n_rows, 1), dtype=bool)
    collected: list[tuple[np.ndarray, np.ndarray]] = []

    for _level in range(1, tree.height + 1):
        counts = np.where(valid, tree.child_count[nodes], 0)
        row_total = counts.sum(axis=1)
        flat_parent_idx = np.repeat(np.arange(nodes.size), counts.ravel())
        flat_rows = flat_parent_idx // nodes.shape[1]
        flat_children, _ = _flat_children(tree, nodes.ravel()[valid.ravel()])
        # counts of invalid entries are zeroed, so the two flat views align
        flat_parent_vals = np.repeat(vals.ravel(), counts.ravel())
        flat_vals = backend.candidate_values(flat_rows, flat_children, flat_parent_vals, counter)
        if collect:
            collected.append((flat_rows, flat_children))

        width = int(row_total.max())
        cand_nodes = np.full((n_rows, width), -1, dtype=np.int64)
        cand_vals = np.full((n_rows, width), -np.inf, dtype=np.float64)
        cand_valid = np.zeros((n_rows, width), dtype=bool)
        col = np.arange(len(flat_rows), dtype=np.int64) - np.repeat(
            np.concatenate([[0], np.cumsum(row_total)[:-1]]), row_total
        )
        cand_nodes[flat_rows, col] = flat_children
        cand_vals[flat_rows, col] = flat_vals
        cand_valid[flat_rows, col] = True

        order = np.argsort(-cand_vals, axis=1, kind="stable")
        take = min(k, width)
        order = order[:, :take]
        rows_idx = np.arange(n_rows)[:, None]
        sel_nodes = cand_nodes[rows_idx, order]
        sel_vals = cand_vals[rows_idx, order]
        sel_valid = cand_valid[rows_idx, order]

        ranked = (sel_nodes, sel_vals, sel_valid)
        # Re-sort ascending by id for the next expansion (invalid ids sink last).
        key = np.where(sel_valid, sel_nodes, np.iinfo(np.int64).max)
        id_order = np.argsort(key, axis=1, kind="stable")
        nodes = sel_nodes[rows_idx, id_order]
        vals = sel_vals[rows_idx, id_order]
        valid = sel_valid[rows_idx, id_order]

    return ranked, collected


def expand(tree: Tree, beam: Beam) -> np.ndarray:
    """Union of the children of all beam nodes, ascending by id."""
    if beam.level >= tree.height:
        raise ValueError("cannot expand a beam at the leaf level")
    parents = np.sort(np.asarray(beam.nodes, dtype=np.int64))
    children, _ = _flat_children(tree, parents)
    return children


def select_topk(nodes: np.ndarray, probs: np.ndarray, k: int, level: int) -> Beam:
    """Keep the ``k`` highest-probability candidates, ties to the lowest id.

    When fewer than ``k`` candidates exist they are all retained.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    nodes = np.asarray(nodes, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    order = np.lexsort((nodes, -probs))[: min(k, len(nodes))]
    return Beam(level=level, nodes=nodes[order], probs=probs[order])


def beam_search(
    tree: Tree,
    params: LinearScorerParams,
    model: ProbabilityModel,
    x: np.ndarray,
    k: int,
    counter: ScoreCounter | None = None,
) -> Beam:
    """Search one instance down to the leaf level; returns the final beam."""
    X = np.asarray(x, dtype=np.float64).reshape(1, -1)
    backend = _scorer_backend(params, model, X)
    (nodes, vals, valid), _ = _run_levels(tree, backend, 1, k, counter, collect=False)
    keep = valid[0]
    return Beam(level=tree.height, nodes=nodes[0][keep], probs=backend.to_prob(vals[0][keep]))


def beam_search_table(tree: Tree, node_probs: np.ndarray, k: int) -> Beam:
    """Search driven by a per-node probability table instead of a scorer."""
    table = np.asarray(node_probs, dtype=np.float64)
    if table.shape != (tree.n_nodes,):
        raise ValueError(f"probability table must have {tree.n_nodes} entries")
    backend = _TableBackend(table)
    (nodes, vals, valid), _ = _run_levels(tree, backend, 1, k, None, collect=False)
    keep = valid[0]
    return Beam(level=tree.height, nodes=nodes[0][keep], probs=vals[0][keep])


def batched_beam_search(
    tree: Tree,
    params: LinearScorerParams,
    model: ProbabilityModel,
    X: np.ndarray,
    k: int,
    counter: ScoreCounter | None = None,
) -> list[Beam]:
    """Final beams for every row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    backend = _scorer_backend(params, model, X)
    (nodes, vals, valid), _ = _run_levels(tree, backend, X.shape[0], k, counter, collect=False)
    probs = backend.to_prob(vals)
    return [
        Beam(level=tree.height, nodes=nodes[i][valid[i]], probs=probs[i][valid[i]])
        for i in range(X.shape[0])
    ]


def batched_beam_candidates(
    tree: Tree,
    params: LinearScorerParams,
    model: ProbabilityModel,
    X: np.ndarray,
    k: int,
    counter: ScoreCounter | None = None,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per level ``h = 1..H``, the expanded-but-unpruned candidate sets.

    Returns flat ``(row_ids, node_ids)`` pairs per level; within each row the
    node ids are ascending.  These are the nodes a beam-search-aware trainer
    puts gradients on.
    """
    X = np.asarray(X, dtype=np.float64)
    backend = _scorer_backend(params, model, X)
    _, collected = _run_levels(tree, backend, X.shape[0], k, counter, collect=True)
    return collected


def retrieve_topm(tree: Tree, beam: Beam, m: int) -> np.ndarray:
    """Targets of the top-``m`` beam entries, in ranked order."""
    if beam.level != tree.height:
        raise ValueError("retrieval requires a leaf-level beam")
    if m < 1 or m > len(beam.nodes):
        raise ValueError(f"m must be in [1, {len(beam.nodes)}], got {m}")
    return np.asarray(tree.target_of_leaf(beam.nodes[:m]), dtype=np.int64)
