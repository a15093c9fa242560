"""Retrieval metrics and exact regret under known target probabilities.

Precision/recall/F are instance-wise: each is computed per instance and
averaged over the evaluation set.  Instances with no relevant target have a
well-defined precision (0) but an undefined recall, so they are skipped (and
counted) for recall and F.

Regret measures the shortfall of retrieved probability mass against the best
achievable top-``m`` mass.  It needs the true per-target probabilities, which
are known for synthetic data, so the measurement is exact rather than a
label-sample estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beam import batched_beam_search, retrieve_topm
from .errors import DataError
from .scorer import LinearScorerParams, ProbabilityModel
from .tree import Tree


def precision_at_m(retrieved, relevant, m: int) -> float:
    """Fraction of the ``m`` retrieved targets that are relevant."""
    retrieved = np.asarray(retrieved, dtype=np.int64)
    if len(retrieved) != m:
        raise ValueError(f"expected exactly m={m} retrieved targets, got {len(retrieved)}")
    relevant = set(int(j) for j in relevant)
    hits = sum(1 for j in retrieved if int(j) in relevant)
    return hits / m


def recall_at_m(retrieved, relevant, m: int) -> float | None:
    """Fraction of relevant targets retrieved; ``None`` marks a skipped instance."""
    retrieved = np.asarray(retrieved, dtype=np.int64)
    if len(retrieved) != m:
        raise ValueError(f"expected exactly m={m} retrieved targets, got {len(retrieved)}")
    relevant = set(int(j) for j in relevant)
    if not relevant:
        return None
    hits = sum(1 for j in retrieved if int(j) in relevant)
    return hits / len(relevant)


def f_measure_at_m(p: float, r: float) -> float:
    """Harmonic mean of precision and recall, 0 when both vanish."""
    if not 0.0 <= p <= 1.0 or not 0.0 <= r <= 1.0:
        raise ValueError("precision and recall must lie in [0, 1]")
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def regret_p_at_m(eta: np.ndarray, retrieved_topm, m: int) -> float:
    """Top-``m`` probability mass missed by the retrieved set, normalized by ``m``.

    Both sums run over identically sorted values, so retrieving an exact
    top-``m`` set yields exactly 0.0.  Ties in ``eta`` are harmless: any
    tie-consistent top-``m`` set attains the same maximal sum.
    """
    eta = np.asarray(eta, dtype=np.float64)
    retrieved = np.asarray(retrieved_topm, dtype=np.int64)
    M = len(eta)
    if m > M:
        raise ValueError(f"m={m} exceeds the number of targets {M}")
    if len(retrieved) != m:
        raise ValueError(f"expected exactly m={m} retrieved targets, got {len(retrieved)}")
    best = np.sort(np.partition(eta, M - m)[M - m :])
    got = np.sort(eta[retrieved])
    return float((best.sum() - got.sum()) / m)


@dataclass
class MetricsReport:
    """Instance-averaged precision / recall / F per retrieval size."""

    k: int
    m_values: list[int]
    precision: dict[int, float]
    recall: dict[int, float]
    f_measure: dict[int, float]
    n_instances: int
    n_skipped: int

    def rows(self) -> list[dict]:
        return [
            {
                "m": m,
                "precision": self.precision[m],
                "recall": self.recall[m],
                "f_measure": self.f_measure[m],
                "instances": self.n_instances,
                "skipped": self.n_skipped,
            }
            for m in self.m_values
        ]


@dataclass
class RegretReport:
    """Mean regret per (k, m) with its standard error over instances/runs."""

    k: int
    m_values: list[int]
    mean_regret: dict[int, float]
    std_err: dict[int, float]
    n_instances: int
    meta: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [
            {
                "k": self.k,
                "m": m,
                "mean_regret": self.mean_regret[m],
                "std_err": self.std_err[m],
                "instances": self.n_instances,
            }
            for m in self.m_values
        ]


def _check_m_values(m_values, k: int) -> list[int]:
    out = [int(m) for m in m_values]
    if not out:
        raise ValueError("at least one retrieval size m is required")
    if any(m < 1 or m > k for m in out):
        raise ValueError(f"retrieval sizes must satisfy 1 <= m <= k={k}")
    return out


def evaluate_metrics(
    tree: Tree,
    params: LinearScorerParams,
    model: ProbabilityModel,
    instances,
    k: int,
    m_values,
) -> MetricsReport:
    m_values = _check_m_values(m_values, k)
    if max(m_values) > min(k, tree.num_targets):
        raise ValueError("m exceeds the guaranteed beam size min(k, num_targets)")
    X = np.stack([inst.x for inst in instances])
    beams = batched_beam_search(tree, params, model, X, k)
    p_sum = {m: 0.0 for m in m_values}
    r_sum = {m: 0.0 for m in m_values}
    f_sum = {m: 0.0 for m in m_values}
    skipped = 0
    for inst, beam in zip(instances, beams):
        relevant = set(int(j) for j in inst.targets)
        if not relevant:
            skipped += 1
        for m in m_values:
            retrieved = retrieve_topm(tree, beam, m)
            p = precision_at_m(retrieved, relevant, m)
            p_sum[m] += p
            if relevant:
                r = recall_at_m(retrieved, relevant, m)
                r_sum[m] += r
                f_sum[m] += f_measure_at_m(p, r)
    n = len(instances)
    n_eff = n - skipped
    return MetricsReport(
        k=k,
        m_values=m_values,
        precision={m: p_sum[m] / n for m in m_values},
        recall={m: (r_sum[m] / n_eff if n_eff else 0.0) for m in m_values},
        f_measure={m: (f_sum[m] / n_eff if n_eff else 0.0) for m in m_values},
        n_instances=n,
        n_skipped=skipped,
    )


def estimated_regret(
    tree: Tree,
    params: LinearScorerParams,
    model: ProbabilityModel,
    instances,
    k: int,
    m_values,
    meta: dict | None = None,
) -> RegretReport:
    """Mean beam-search regret over a test set whose instances carry ``eta``."""
    m_values = _check_m_values(m_values, k)
    if max(m_values) > min(k, tree.num_targets):
        raise ValueError("m exceeds the guaranteed beam size min(k, num_targets)")
    if any(inst.eta is None for inst in instances):
        raise ValueError("regret evaluation requires per-instance eta vectors")
    X = np.stack([inst.x for inst in instances])
    beams = batched_beam_search(tree, params, model, X, k)
    per_m = {m: np.empty(len(instances)) for m in m_values}
    for i, (inst, beam) in enumerate(zip(instances, beams)):
        for m in m_values:
            retrieved = retrieve_topm(tree, beam, m)
            per_m[m][i] = regret_p_at_m(inst.eta, retrieved, m)
    n = len(instances)
    return RegretReport(
        k=k,
        m_values=m_values,
        mean_regret={m: float(per_m[m].mean()) for m in m_values},
        std_err={m: float(per_m[m].std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0 for m in m_values},
        n_instances=n,
        meta=meta or {},
    )


def level_distribution(dataset_targets, tree: Tree, h: int) -> np.ndarray:
    """Sorted, normalized per-node counts of instances relevant to level-``h`` nodes.

    For each node at level ``h`` counts how many instances have a relevant
    target in its subtree, sorts the counts descending and normalizes them to
    sum 1.  A level with no relevant instance at all is a data problem, not a
    statistic, and raises.
    """
    if not 1 <= h <= tree.height:
        raise ValueError(f"level must lie in [1, {tree.height}], got {h}")
    dataset_targets = list(dataset_targets)
    if not dataset_targets:
        raise DataError("empty dataset")
    level_lo = int(tree.level_offsets[h])
    level_n = tree.level_size(h)
    counts = np.zeros(level_n, dtype=np.int64)
    for i, targets in enumerate(dataset_targets):
        targets = np.asarray(targets, dtype=np.int64)
        if targets.size == 0:
            continue
        leaves = np.asarray(tree.leaf_of_target(targets), dtype=np.int64)
        anc = leaves
        for _ in range(tree.height - h):
            anc = tree.parent[anc]
        counts += np.bincount(np.unique(anc) - level_lo, minlength=level_n)
    total = counts.sum()
    if total == 0:
        raise DataError(f"no instance is relevant to any node at level {h}")
    return np.sort(counts)[::-1] / total
