"""Node-wise linear scorers and the two score-to-probability models.

A scorer assigns each tree node ``n`` the value ``w_n . x + b_n``.  Under the
direct model that score parameterizes the node's relevance probability through
a sigmoid; under the hierarchical model it parameterizes the conditional
probability of the node given its parent is relevant, and node relevance is
the product of sigmoids along the root path (accumulated in log space, since
deep paths underflow linear products).
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tree import ROOT, Tree


class ProbabilityModel(enum.Enum):
    DIRECT = "direct"
    HIERARCHICAL = "hierarchical"


class ScoreCounter:
    """Counts scorer evaluations; used to verify per-instance cost bounds."""

    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


def sigmoid(g):
    """Overflow-safe logistic function.

    Branches on sign: ``1/(1+exp(-g))`` for ``g >= 0``, else
    ``exp(g)/(1+exp(g))`` so the exponent argument is never positive.
    """
    g_arr = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g_arr)):
        raise ValueError("sigmoid requires finite input")
    out = np.empty_like(g_arr)
    pos = g_arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-g_arr[pos]))
    eg = np.exp(g_arr[~pos])
    out[~pos] = eg / (1.0 + eg)
    return float(out) if np.ndim(g) == 0 else out


def softplus(g):
    """``log(1 + exp(g))`` without overflow for large ``|g|``."""
    g_arr = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g_arr)):
        raise ValueError("softplus requires finite input")
    out = np.maximum(g_arr, 0.0) + np.log1p(np.exp(-np.abs(g_arr)))
    return float(out) if np.ndim(g) == 0 else out


def log_sigmoid(g):
    """``log(sigmoid(g))``, stable for large negative ``g``."""
    g_arr = np.asarray(g, dtype=np.float64)
    out = -softplus(-g_arr)
    return float(out) if np.ndim(g) == 0 else out


@dataclass
class LinearScorerParams:
    """Per-node weights/biases, node-id-indexed.

    Row 0 belongs to the root, which carries no trainable decision; it is kept
    only so arrays index directly by node id.  All values must stay finite.
    """

    weights: np.ndarray
    biases: np.ndarray
    feature_dim: int

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[1] != self.feature_dim:
            raise ValueError(f"weights must be (n_nodes, {self.feature_dim})")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValueError("biases must align with weights rows")

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "LinearScorerParams":
        return LinearScorerParams(self.weights.copy(), self.biases.copy(), self.feature_dim)


def init_params(tree: Tree, feature_dim: int, rng: np.random.Generator, scale: float = 0.01) -> LinearScorerParams:
    """Small symmetric N(0, scale^2) initialization to avoid dead saturation."""
    weights = rng.normal(0.0, scale, size=(tree.n_nodes, feature_dim))
    biases = rng.normal(0.0, scale, size=tree.n_nodes)
    weights[ROOT] = 0.0
    biases[ROOT] = 0.0
    return LinearScorerParams(weights, biases, feature_dim)


def score(params: LinearScorerParams, x: np.ndarray, n: int) -> float:
    """``w_n . x + b_n`` for a single node."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.feature_dim,):
        raise ValueError(f"feature vector must have length {params.feature_dim}")
    if not 0 <= n < params.n_nodes:
        raise ValueError(f"node {n} has no scorer entry")
    val = float(params.weights[n] @ x + params.biases[n])
    if not np.isfinite(val):
        raise ValueError(f"non-finite score at node {n}")
    return val


def score_pairs(
    params: LinearScorerParams,
    X: np.ndarray,
    row_ids: np.ndarray,
    node_ids: np.ndarray,
    counter: ScoreCounter | None = None,
) -> np.ndarray:
    """Scores for aligned (instance row, node) pairs; the batched workhorse."""
    if counter is not None:
        counter.add(len(node_ids))
    w = params.weights[node_ids]
    return np.einsum("ij,ij->i", w, X[row_ids]) + params.biases[node_ids]


def node_prob_direct(g: float) -> float:
    """Relevance probability of a node from its raw score, direct model."""
    return sigmoid(g)


def node_prob_hierarchical(params: LinearScorerParams, tree: Tree, x: np.ndarray, n: int) -> float:
    """Path product of conditional sigmoids, accumulated root-to-node in log space.

    The root has an empty path and probability exactly 1.
    """
    log_p = 0.0
    for node in tree.path_to_root(n):
        log_p += log_sigmoid(score(params, x, node))
    return float(np.exp(log_p))


def node_relevance_prob(
    params: LinearScorerParams,
    model: ProbabilityModel,
    tree: Tree,
    x: np.ndarray,
    n: int,
) -> float:
    """Unified ``p(z_n = 1 | x)`` accessor dispatching on the probability model."""
    if model is ProbabilityModel.DIRECT:
        return node_prob_direct(score(params, x, n))
    if model is ProbabilityModel.HIERARCHICAL:
        return node_prob_hierarchical(params, tree, x, n)
    raise ValueError(f"unknown probability model {model!r}")


def save_checkpoint(path: str | Path, params: LinearScorerParams, model: ProbabilityModel) -> None:
    doc = {
        "feature_dim": params.feature_dim,
        "model_tag": model.value,
        "weights": [[float(v) for v in row] for row in params.weights],
        "biases": [float(v) for v in params.biases],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))


def load_checkpoint(path: str | Path) -> tuple[LinearScorerParams, ProbabilityModel]:
    doc = json.loads(Path(path).read_text())
    params = LinearScorerParams(
        np.asarray(doc["weights"], dtype=np.float64),
        np.asarray(doc["biases"], dtype=np.float64),
        int(doc["feature_dim"]),
    )
    return params, ProbabilityModel(doc["model_tag"])
