"""Training regimes for node-wise scorers.

Five methods share one loss shape (binary cross entropy on selected nodes);
they differ in which nodes each instance trains and which binary label those
nodes get:

* ``plt``: children of subtree-positive nodes, labeled by subtree membership,
  under the hierarchical (parent-conditional) probability model;
* ``tdm``: subtree-positive nodes plus uniformly sampled per-level negatives,
  labeled by subtree membership, under the direct model;
* ``otm``: the nodes beam search expands under the current parameter snapshot,
  labeled by the estimated-optimal assignment computed from the same snapshot;
* ``otm-bs``: ablation of ``otm`` with the beam-expanded node sets replaced by
  the static positive/negative sets of ``tdm``;
* ``otm-optest``: ablation of ``otm`` with the estimated-optimal labels
  replaced by plain subtree membership.

Within one minibatch all node sets, labels, and gradients are evaluated at the
parameters from the start of the step; the optimizer writes only after that.
Updates are sparse Adam: moments and bias correction touch only parameters
that received gradient, while the step counter advances once per minibatch.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beam import batched_beam_candidates
from .errors import ConfigError, TrainingDiverged
from .pseudo import (
    GROUND_TRUTH,
    NodeLabelAssignment,
    batched_closure,
    batched_z_hat,
    estimate_z_hat,
    ground_truth_z,
)
from .rng import substream
from .scorer import (
    LinearScorerParams,
    ProbabilityModel,
    ScoreCounter,
    init_params,
    score_pairs,
    sigmoid,
    softplus,
)
from .tree import Tree

METHOD_PLT = "plt"
METHOD_TDM = "tdm"
METHOD_OTM = "otm"
METHOD_OTM_NO_BEAM = "otm-bs"
METHOD_OTM_NO_OPTEST = "otm-optest"
METHODS = (METHOD_PLT, METHOD_TDM, METHOD_OTM, METHOD_OTM_NO_BEAM, METHOD_OTM_NO_OPTEST)

_BEAM_METHODS = (METHOD_OTM, METHOD_OTM_NO_OPTEST)
_NEGATIVE_METHODS = (METHOD_TDM, METHOD_OTM_NO_BEAM)


@dataclass
class TrainConfig:
    method: str
    epochs: int
    batch_size: int
    learning_rate: float = 0.01
    beam_size_k: int = 50
    negatives_per_level: int = 3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.beam_size_k < 1:
            raise ConfigError("beam_size_k must be >= 1")
        if self.negatives_per_level < 0:
            raise ConfigError("negatives_per_level must be >= 0")
        if not 0 < self.adam_beta1 < 1 or not 0 < self.adam_beta2 < 1:
            raise ConfigError("adam betas must lie in (0, 1)")
        if self.adam_epsilon <= 0:
            raise ConfigError("adam_epsilon must be positive")

    @property
    def expected_model(self) -> ProbabilityModel:
        return ProbabilityModel.HIERARCHICAL if self.method == METHOD_PLT else ProbabilityModel.DIRECT

    def check_model(self, model: ProbabilityModel) -> None:
        if model is not self.expected_model:
            raise ConfigError(
                f"method {self.method!r} requires the {self.expected_model.value} model, got {model.value}"
            )


@dataclass
class AdamState:
    m_w: np.ndarray
    v_w: np.ndarray
    m_b: np.ndarray
    v_b: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, params: LinearScorerParams) -> "AdamState":
        return cls(
            m_w=np.zeros_like(params.weights),
            v_w=np.zeros_like(params.weights),
            m_b=np.zeros_like(params.biases),
            v_b=np.zeros_like(params.biases),
        )


@dataclass
class TrainingLog:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        lines = ["epoch,mean_loss,wall_seconds"]
        for i, (loss, secs) in enumerate(zip(self.epoch_losses, self.epoch_seconds)):
            lines.append(f"{i},{loss!r},{secs!r}")
        Path(path).write_text("\n".join(lines) + "\n")


def bce_loss(z: int, g: float):
    """Nonnegative binary cross entropy of a label against a raw score."""
    z_arr = np.asarray(z)
    return softplus((1 - 2 * z_arr) * np.asarray(g, dtype=np.float64))


def bce_grad(z: int, g: float):
    """d bce_loss / d g = sigmoid(g) - z; always in [-1, 1]."""
    return sigmoid(g) - np.asarray(z)


def subsample_plt(tree: Tree, z: NodeLabelAssignment) -> list[np.ndarray]:
    """Per level 1..H, the children of the positive nodes one level above."""
    if z.kind != GROUND_TRUTH:
        raise ValueError("hierarchical subsampling requires ground-truth node labels")
    out = []
    for h in range(1, tree.height + 1):
        lo, hi = tree.level_offsets[h - 1], tree.level_offsets[h]
        parents = z.positive_nodes[(z.positive_nodes >= lo) & (z.positive_nodes < hi)]
        counts = tree.child_count[parents]
        total = int(counts.sum())
        within = np.arange(total, dtype=np.int64) - np.repeat(
            np.concatenate([[0], np.cumsum(counts)[:-1]]), counts
        )
        out.append(np.repeat(tree.child_start[parents], counts) + within)
    return out


def _negatives_for_level(level_lo: int, level_size: int, positives: np.ndarray, count: int, keys: np.ndarray) -> np.ndarray:
    """Uniform sample without replacement from the level's non-positive nodes.

    Takes the ``count`` smallest of i.i.d. uniform keys with positives masked
    out, which is a uniform subset; clamps to however many are available.
    """
    keys = keys.copy()
    keys[positives - level_lo] = np.inf
    q = min(count, level_size)
    if q == 0:
        return np.array([], dtype=np.int64)
    if q < level_size:
        picked = np.argpartition(keys, q - 1)[:q]
    else:
        picked = np.arange(level_size)
    picked = picked[np.isfinite(keys[picked])]
    avail = level_size - len(positives)
    picked = picked[np.argsort(keys[picked])][: min(count, avail)]
    return np.sort(picked + level_lo).astype(np.int64)


def subsample_tdm(tree: Tree, z: NodeLabelAssignment, negatives_per_level: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Per level 1..H, positives plus uniformly drawn non-positive nodes."""
    if z.kind != GROUND_TRUTH:
        raise ValueError("static subsampling requires ground-truth node labels")
    if negatives_per_level < 0:
        raise ValueError("negatives_per_level must be >= 0")
    out = []
    for h in range(1, tree.height + 1):
        lo, hi = tree.level_offsets[h], tree.level_offsets[h + 1]
        positives = z.positive_nodes[(z.positive_nodes >= lo) & (z.positive_nodes < hi)]
        keys = rng.random(hi - lo)
        negatives = _negatives_for_level(lo, hi - lo, positives, negatives_per_level, keys)
        out.append(np.sort(np.concatenate([positives, negatives])))
    return out


def subsample_beam(
    tree: Tree,
    snapshot_params: LinearScorerParams,
    model: ProbabilityModel,
    x: np.ndarray,
    k: int,
    counter: ScoreCounter | None = None,
) -> list[np.ndarray]:
    """Per level 1..H, the candidate nodes beam search expands (before pruning)."""
    X = np.asarray(x, dtype=np.float64).reshape(1, -1)
    levels = batched_beam_candidates(tree, snapshot_params, model, X, k, counter)
    return [nodes for _rows, nodes in levels]


def instance_loss_nodes(
    method: str,
    tree: Tree,
    instance,
    snapshot_params: LinearScorerParams,
    model: ProbabilityModel,
    config: TrainConfig,
    rng: np.random.Generator,
    counter: ScoreCounter | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """The (node, label) training pairs one instance contributes, level order.

    Everything is evaluated against ``snapshot_params``; the caller owns the
    decision of when the snapshot advances.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    if (method == METHOD_PLT) != (model is ProbabilityModel.HIERARCHICAL):
        raise ConfigError(f"method {method!r} is incompatible with the {model.value} model")
    targets = instance.targets
    if method in _BEAM_METHODS:
        levels = subsample_beam(tree, snapshot_params, model, instance.x, config.beam_size_k, counter)
    elif method in _NEGATIVE_METHODS:
        levels = subsample_tdm(tree, ground_truth_z(tree, targets), config.negatives_per_level, rng)
    else:
        levels = subsample_plt(tree, ground_truth_z(tree, targets))

    if method in (METHOD_OTM, METHOD_OTM_NO_BEAM):
        assignment = estimate_z_hat(tree, targets, snapshot_params, model, instance.x, counter)
    else:
        assignment = ground_truth_z(tree, targets)
    nodes = np.concatenate(levels) if levels else np.array([], dtype=np.int64)
    return nodes, assignment.labels_of(nodes)


def adam_step(
    params: LinearScorerParams,
    state: AdamState,
    config: TrainConfig,
    node_ids: np.ndarray,
    grad_w: np.ndarray,
    grad_b: np.ndarray,
) -> tuple[LinearScorerParams, AdamState]:
    """Sparse Adam update over the touched nodes only (in place)."""
    if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
        raise TrainingDiverged("non-finite gradient")
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_epsilon
    state.step += 1
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    idx = np.asarray(node_ids, dtype=np.int64)
    state.m_w[idx] = b1 * state.m_w[idx] + (1.0 - b1) * grad_w
    state.v_w[idx] = b2 * state.v_w[idx] + (1.0 - b2) * (grad_w * grad_w)
    state.m_b[idx] = b1 * state.m_b[idx] + (1.0 - b1) * grad_b
    state.v_b[idx] = b2 * state.v_b[idx] + (1.0 - b2) * (grad_b * grad_b)
    params.weights[idx] -= config.learning_rate * (state.m_w[idx] / bc1) / (
        np.sqrt(state.v_w[idx] / bc2) + eps
    )
    params.biases[idx] -= config.learning_rate * (state.m_b[idx] / bc1) / (
        np.sqrt(state.v_b[idx] / bc2) + eps
    )
    return params, state


def _lookup_labels(n_nodes: int, level_pairs, rows: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Labels for (row, node) pairs from sparse per-level (rows, nodes, values)."""
    all_keys = []
    all_vals = []
    for lv_rows, lv_nodes, lv_vals in level_pairs:
        all_keys.append(lv_rows * n_nodes + lv_nodes)
        all_vals.append(lv_vals)
    keys = np.concatenate(all_keys)
    vals = np.concatenate(all_vals)
    order = np.argsort(keys)
    keys, vals = keys[order], vals[order]
    want = rows * n_nodes + nodes
    if len(keys) == 0:
        return np.zeros(len(want), dtype=np.int64)
    idx = np.minimum(np.searchsorted(keys, want), len(keys) - 1)
    return np.where(keys[idx] == want, vals[idx], 0).astype(np.int64)


def _closure_membership_pairs(closure) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    return [(rows, nodes, np.ones(len(nodes), dtype=np.int64)) for rows, nodes in closure]


def _batch_pairs(
    method: str,
    tree: Tree,
    params: LinearScorerParams,
    model: ProbabilityModel,
    X: np.ndarray,
    targets_list: list[np.ndarray],
    config: TrainConfig,
    neg_rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(local rows, nodes, labels) for one minibatch under the snapshot params."""
    n_rows = X.shape[0]
    n_nodes = tree.n_nodes

    if method in _BEAM_METHODS:
        levels = batched_beam_candidates(tree, params, model, X, config.beam_size_k)
        rows = np.concatenate([r for r, _ in levels])
        nodes = np.concatenate([n for _, n in levels])
    else:
        closure = batched_closure(tree, targets_list)
        if method == METHOD_PLT:
            rows_list, nodes_list = [], []
            for h in range(tree.height):
                p_rows, p_nodes = closure[h]
                counts = tree.child_count[p_nodes]
                total = int(counts.sum())
                within = np.arange(total, dtype=np.int64) - np.repeat(
                    np.concatenate([[0], np.cumsum(counts)[:-1]]), counts
                )
                rows_list.append(np.repeat(p_rows, counts))
                nodes_list.append(np.repeat(tree.child_start[p_nodes], counts) + within)
            rows = np.concatenate(rows_list)
            nodes = np.concatenate(nodes_list)
        else:
            rows_list, nodes_list = [], []
            for h in range(1, tree.height + 1):
                lo, hi = int(tree.level_offsets[h]), int(tree.level_offsets[h + 1])
                size = hi - lo
                p_rows, p_nodes = closure[h]
                rows_list.append(p_rows)
                nodes_list.append(p_nodes)
                keys = neg_rng.random((n_rows, size))
                keys[p_rows, p_nodes - lo] = np.inf
                q = min(config.negatives_per_level, size)
                if q == 0:
                    continue
                if q < size:
                    picked = np.argpartition(keys, q - 1, axis=1)[:, :q]
                else:
                    picked = np.broadcast_to(np.arange(size), (n_rows, size))
                picked_keys = np.take_along_axis(keys, picked, axis=1)
                neg_rows, neg_cols = np.nonzero(np.isfinite(picked_keys))
                # per-row availability below q only happens via masked (inf) keys
                rows_list.append(neg_rows.astype(np.int64))
                nodes_list.append(picked[neg_rows, neg_cols].astype(np.int64) + lo)
            rows = np.concatenate(rows_list)
            nodes = np.concatenate(nodes_list)

    if method in (METHOD_OTM, METHOD_OTM_NO_BEAM):
        zhat_levels = batched_z_hat(tree, params, model, X, targets_list)
        labels = _lookup_labels(n_nodes, zhat_levels, rows, nodes)
    else:
        closure = batched_closure(tree, targets_list)
        labels = _lookup_labels(n_nodes, _closure_membership_pairs(closure), rows, nodes)
    return rows, nodes, labels


def train(
    dataset,
    tree: Tree,
    model: ProbabilityModel,
    config: TrainConfig,
) -> tuple[LinearScorerParams, TrainingLog]:
    """Run the configured regime; returns final parameters and per-epoch loss.

    The reported loss is the epoch mean over instances of each instance's
    summed node losses, evaluated at the parameters in effect when the
    instance's minibatch was formed.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("training dataset is empty")
    config.check_model(model)
    d = len(dataset[0].x)
    X = np.stack([np.asarray(inst.x, dtype=np.float64) for inst in dataset])
    if X.shape[1] != d or any(len(inst.x) != d for inst in dataset):
        raise ValueError("inconsistent feature dimensions in dataset")
    targets_all = [np.asarray(inst.targets, dtype=np.int64) for inst in dataset]

    params = init_params(tree, d, substream(config.seed, "init"))
    state = AdamState.zeros(params)
    order_rng = substream(config.seed, "order")
    neg_rng = substream(config.seed, "negatives")
    log = TrainingLog()
    n = len(dataset)

    for _epoch in range(config.epochs):
        t0 = time.perf_counter()
        perm = order_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            rows_global = perm[start : start + config.batch_size]
            Xb = X[rows_global]
            targets_b = [targets_all[r] for r in rows_global]
            local_rows, nodes, labels = _batch_pairs(
                config.method, tree, params, model, Xb, targets_b, config, neg_rng
            )
            if len(nodes) == 0:
                continue
            scores = score_pairs(params, Xb, local_rows, nodes)
            probs = sigmoid(scores)
            grads = probs - labels
            epoch_loss += float(softplus((1 - 2 * labels) * scores).sum())
            uniq, inv = np.unique(nodes, return_inverse=True)
            gw = np.empty((len(uniq), d))
            for j in range(d):
                gw[:, j] = np.bincount(inv, weights=grads * Xb[local_rows, j], minlength=len(uniq))
            gb = np.bincount(inv, weights=grads, minlength=len(uniq))
            adam_step(params, state, config, uniq, gw, gb)
        log.epoch_losses.append(epoch_loss / n)
        log.epoch_seconds.append(time.perf_counter() - t0)
    return params, log
