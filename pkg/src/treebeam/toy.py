"""Feature-free benchmark for node-probability estimators.

Targets are independent Bernoulli draws with probabilities sampled uniformly
on [0, 1], so the true distribution is fully known and retrieval regret can be
measured exactly.  Three ways of building the per-node probability table are
compared, each available at a finite sample size or in closed form at the
infinite-sample limit (``sample_size=None``):

* direct: empirical frequency of subtree relevance per node; exactly
  ``1 - prod(1 - eta)`` over subtree leaves at the limit;
* hierarchical: empirical parent-conditional frequencies multiplied down the
  root path; the limit telescopes to the direct value (up to the root's own
  relevance, which is 1 for any realistic target count);
* optimal: per-instance pseudo targets copied from each node's
  highest-probability child, bottom-up; the limit equals the max of ``eta``
  over subtree leaves, which makes beam search exactly optimal.

Runs are independently seeded from (seed, run index), so any subset of the
(estimator, sample size, beam size) grid reproduces cell-identical numbers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beam import beam_search_table, retrieve_topm
from .metrics import regret_p_at_m
from .rng import substream
from .tree import ROOT, Tree, build_random_tree

DIREST = "direst"
HIEREST = "hierest"
OPTEST = "optest"
ESTIMATORS = (DIREST, HIEREST, OPTEST)


PRECISIONS = ("single", "double")


@dataclass(frozen=True)
class ToyConfig:
    num_targets: int
    arity: int
    estimator: str
    sample_size: int | None  # None = infinite-sample closed form
    beam_size_k: int
    m_values: tuple[int, ...]
    runs: int
    seed: int
    table_precision: str = "single"

    def __post_init__(self) -> None:
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.sample_size is not None and self.sample_size < 1:
            raise ValueError("sample_size must be >= 1 or None for the infinite limit")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.m_values:
            raise ValueError("at least one m value is required")
        if not all(1 <= m <= self.beam_size_k <= self.num_targets for m in self.m_values):
            raise ValueError("need 1 <= m <= k <= num_targets for every m")
        if self.table_precision not in PRECISIONS:
            raise ValueError(f"table_precision must be one of {PRECISIONS}")


@dataclass(frozen=True)
class ToyCell:
    """One grid cell of the toy benchmark."""

    estimator: str
    sample_size: int | None
    k: int
    m: int
    mean_regret: float
    std_err: float
    runs: int


def gen_toy(num_targets: int, seed: int) -> np.ndarray:
    """Per-target relevance probabilities, i.i.d. uniform on [0, 1]."""
    if num_targets < 1:
        raise ValueError("num_targets must be >= 1")
    return substream(seed, "eta").random(num_targets)


def sample_toy_dataset(eta: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent binary target vectors with coordinate means ``eta``."""
    if n < 1:
        raise ValueError("sample size must be >= 1")
    eta = np.asarray(eta, dtype=np.float64)
    return rng.random((n, len(eta))) < eta


def node_z_matrix(tree: Tree, y_rows: np.ndarray) -> np.ndarray:
    """Per-instance subtree-relevance indicators for every node, (n, n_nodes).

    Built bottom-up: a node is positive for an instance iff any child is.
    """
    y_rows = np.asarray(y_rows, dtype=bool)
    if y_rows.ndim != 2 or y_rows.shape[1] != tree.num_targets:
        raise ValueError(f"expected rows of length {tree.num_targets}")
    n = y_rows.shape[0]
    z = np.zeros((n, tree.n_nodes), dtype=bool)
    z[:, tree.leaf_base :] = y_rows[:, tree.leaf_to_target]
    off = tree.level_offsets
    for h in range(tree.height - 1, -1, -1):
        nodes = tree.level_nodes(h)
        starts_rel = tree.child_start[nodes] - off[h + 1]
        child_block = z[:, off[h + 1] : off[h + 2]]
        z[:, nodes] = np.logical_or.reduceat(child_block, starts_rel, axis=1)
    return z


def _require_one_of(data, eta) -> None:
    if (data is None) == (eta is None):
        raise ValueError("provide exactly one of data (finite sample) or eta (infinite limit)")


def _exact_direct(tree: Tree, eta: np.ndarray) -> np.ndarray:
    miss = np.ones(tree.n_nodes, dtype=np.float64)
    miss[tree.leaf_base :] = 1.0 - np.asarray(eta, dtype=np.float64)[tree.leaf_to_target]
    off = tree.level_offsets
    for h in range(tree.height - 1, -1, -1):
        nodes = tree.level_nodes(h)
        starts_rel = tree.child_start[nodes] - off[h + 1]
        miss[nodes] = np.multiply.reduceat(miss[off[h + 1] : off[h + 2]], starts_rel)
    return 1.0 - miss


def fit_direst(tree: Tree, data: np.ndarray | None = None, eta: np.ndarray | None = None) -> np.ndarray:
    """Empirical per-node relevance frequency, or its closed-form limit."""
    _require_one_of(data, eta)
    if eta is not None:
        return _exact_direct(tree, eta)
    return node_z_matrix(tree, data).mean(axis=0)


def fit_hierest(tree: Tree, data: np.ndarray | None = None, eta: np.ndarray | None = None) -> np.ndarray:
    """Parent-conditional frequencies multiplied down each root path.

    A conditional with a never-positive parent is defined as 0.  The root
    carries the empty product 1, matching the hierarchical model convention
    that the root needs no decision.
    """
    _require_one_of(data, eta)
    if eta is not None:
        p = _exact_direct(tree, eta)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(p[tree.parent] > 0, p / p[tree.parent], 0.0)
    else:
        counts = node_z_matrix(tree, data).sum(axis=0).astype(np.float64)
        # Subtree relevance is upward-closed, so the child/parent joint count
        # equals the child count.
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(counts[tree.parent] > 0, counts / counts[tree.parent], 0.0)
    table = np.empty(tree.n_nodes, dtype=np.float64)
    table[ROOT] = 1.0
    for h in range(1, tree.height + 1):
        nodes = tree.level_nodes(h)
        table[nodes] = table[tree.parent[nodes]] * cond[nodes]
    return table


def fit_optest(tree: Tree, data: np.ndarray | None = None, eta: np.ndarray | None = None) -> np.ndarray:
    """Greedy-descent estimator: each node's pseudo target copies its
    highest-probability child, bottom-up; the table holds the resulting
    per-node frequencies (or exactly the subtree max of ``eta`` at the limit).

    Argmax ties between children go to the lowest node id.
    """
    _require_one_of(data, eta)
    off = tree.level_offsets
    if eta is not None:
        table = np.empty(tree.n_nodes, dtype=np.float64)
        table[tree.leaf_base :] = np.asarray(eta, dtype=np.float64)[tree.leaf_to_target]
        for h in range(tree.height - 1, -1, -1):
            nodes = tree.level_nodes(h)
            starts_rel = tree.child_start[nodes] - off[h + 1]
            table[nodes] = np.maximum.reduceat(table[off[h + 1] : off[h + 2]], starts_rel)
        return table

    z = node_z_matrix(tree, data)
    zhat = np.zeros_like(z)
    zhat[:, tree.leaf_base :] = z[:, tree.leaf_base :]
    table = np.zeros(tree.n_nodes, dtype=np.float64)
    table[tree.leaf_base :] = z[:, tree.leaf_base :].mean(axis=0)
    for h in range(tree.height - 1, -1, -1):
        nodes = tree.level_nodes(h)
        counts = tree.child_count[nodes]
        starts_rel = tree.child_start[nodes] - off[h + 1]
        child_p = table[off[h + 1] : off[h + 2]]
        maxv = np.maximum.reduceat(child_p, starts_rel)
        is_max = child_p == np.repeat(maxv, counts)
        pos = np.arange(len(child_p), dtype=np.int64)
        first_rel = np.minimum.reduceat(np.where(is_max, pos, len(child_p)), starts_rel)
        chosen_cols = off[h + 1] + first_rel
        zhat[:, nodes] = zhat[:, chosen_cols]
        table[nodes] = zhat[:, nodes].mean(axis=0)
    return table


_FITTERS = {DIREST: fit_direst, HIEREST: fit_hierest, OPTEST: fit_optest}


def run_toy_grid(
    num_targets: int,
    arity: int,
    estimators,
    sample_sizes,
    beam_sizes,
    m_values,
    runs: int,
    seed: int,
    table_precision: str = "single",
) -> list[ToyCell]:
    """Evaluate an (estimator, sample size, beam size, m) grid over shared runs.

    Every run draws a fresh ``eta`` and a fresh random tree; all estimators and
    beam sizes within a run share them (and share the sampled dataset per
    sample size), so cross-estimator comparisons use common random numbers.
    Only pairs with ``m <= k`` are evaluated.

    ``table_precision`` controls the stored precision of the probability
    tables the beam search ranks on.  The default is single precision: with
    many targets the near-root relevance probabilities are so close to 1 that
    they collapse to exact ties, and how early that happens is part of the
    measured pruning behavior (double precision postpones the collapse and
    yields strictly lower regret at small beam sizes).
    """
    estimators = list(estimators)
    for est in estimators:
        if est not in ESTIMATORS:
            raise ValueError(f"unknown estimator {est!r}")
    if table_precision not in PRECISIONS:
        raise ValueError(f"table_precision must be one of {PRECISIONS}")
    beam_sizes = [int(k) for k in beam_sizes]
    m_values = [int(m) for m in m_values]
    if any(k < 1 or k > num_targets for k in beam_sizes):
        raise ValueError("beam sizes must satisfy 1 <= k <= num_targets")
    cells = [
        (est, n, k, m)
        for est in estimators
        for n in sample_sizes
        for k in beam_sizes
        for m in m_values
        if m <= k
    ]
    sums = {cell: (0.0, 0.0) for cell in cells}

    for r in range(runs):
        eta = substream(seed, "run", r, "eta").random(num_targets)
        tree_seed = int(substream(seed, "run", r, "tree").integers(0, 2**63 - 1))
        tree = build_random_tree(num_targets, arity, tree_seed)
        for n in sample_sizes:
            if n is None:
                tables = {est: _FITTERS[est](tree, eta=eta) for est in estimators}
            else:
                data = sample_toy_dataset(eta, int(n), substream(seed, "run", r, "data", int(n)))
                tables = {est: _FITTERS[est](tree, data=data) for est in estimators}
            if table_precision == "single":
                tables = {est: t.astype(np.float32).astype(np.float64) for est, t in tables.items()}
            for est in estimators:
                for k in beam_sizes:
                    beam = beam_search_table(tree, tables[est], k)
                    for m in m_values:
                        if m > k:
                            continue
                        reg = regret_p_at_m(eta, retrieve_topm(tree, beam, m), m)
                        s, s2 = sums[(est, n, k, m)]
                        sums[(est, n, k, m)] = (s + reg, s2 + reg * reg)

    out = []
    for (est, n, k, m) in cells:
        s, s2 = sums[(est, n, k, m)]
        mean = s / runs
        var = max(s2 / runs - mean * mean, 0.0)
        std_err = float(np.sqrt(var / runs)) if runs > 1 else 0.0
        out.append(ToyCell(est, n, k, m, float(mean), std_err, runs))
    return out


def run_toy_experiment(config: ToyConfig) -> list[ToyCell]:
    """Single-estimator view of the grid (one sample size, one beam size)."""
    return run_toy_grid(
        config.num_targets,
        config.arity,
        [config.estimator],
        [config.sample_size],
        [config.beam_size_k],
        list(config.m_values),
        config.runs,
        config.seed,
        table_precision=config.table_precision,
    )
