"""Synthetic benchmark data with fully known target probabilities.

Features are isotropic Gaussian; each target is an independent Bernoulli draw
whose probability is a logistic function of a per-target random direction plus
a shared bias ``c`` that controls sparsity (more negative = fewer relevant
targets per instance).  Because the generating distribution is known, every
instance stores its true per-target probability vector, so retrieval regret
can be computed exactly without a label sample.

Gaussian variates come from numpy's PCG64 ``Generator.standard_normal``
(ziggurat method); reproducibility is per (seed, stream name), not
bit-exactness across numpy versions or languages.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .rng import substream
from .scorer import sigmoid

HEADER_KEYS = {"M", "d", "c", "seed", "split"}


@dataclass(frozen=True)
class SyntheticSpec:
    num_targets: int
    feature_dim: int
    bias_c: float
    n_train: int
    n_test: int
    seed: int

    def __post_init__(self) -> None:
        if self.num_targets < 1:
            raise ValueError("num_targets must be >= 1")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.n_train < 0 or self.n_test < 0:
            raise ValueError("split sizes must be >= 0")
        if not np.isfinite(self.bias_c):
            raise ValueError("bias_c must be finite")


@dataclass
class Instance:
    """One observation: features, relevant target ids, optional true probabilities."""

    x: np.ndarray
    targets: np.ndarray
    eta: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        if self.eta is not None:
            self.eta = np.asarray(self.eta, dtype=np.float64)


def eta_of(W: np.ndarray, c: float, x: np.ndarray) -> np.ndarray:
    """Per-target relevance probabilities sigmoid(W x + c) for one instance."""
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if W.ndim != 2 or x.shape != (W.shape[1],):
        raise ValueError(f"feature vector must have length {W.shape[1]}")
    return sigmoid(W @ x + c)


def _gen_split(W: np.ndarray, c: float, n: int, rng: np.random.Generator) -> list[Instance]:
    d = W.shape[1]
    X = rng.standard_normal((n, d))
    eta = sigmoid(X @ W.T + c)
    y = rng.random(eta.shape) < eta
    return [
        Instance(x=X[i], targets=np.flatnonzero(y[i]).astype(np.int64), eta=eta[i])
        for i in range(n)
    ]


def gen_synthetic(spec: SyntheticSpec) -> tuple[list[Instance], list[Instance], np.ndarray]:
    """Draw the target directions once, then independent train/test splits."""
    W = substream(spec.seed, "weights").standard_normal((spec.num_targets, spec.feature_dim))
    train = _gen_split(W, spec.bias_c, spec.n_train, substream(spec.seed, "split", "train"))
    test = _gen_split(W, spec.bias_c, spec.n_test, substream(spec.seed, "split", "test"))
    return train, test, W


def save_dataset(path: str | Path, instances: list[Instance], header: dict) -> None:
    """Line-delimited JSON: one header line, then one record per instance."""
    if set(header) != HEADER_KEYS:
        raise ValueError(f"header must carry exactly {sorted(HEADER_KEYS)}")
    with open(path, "w") as f:
        f.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for inst in instances:
            rec = {"x": [float(v) for v in inst.x], "targets": [int(t) for t in inst.targets]}
            if inst.eta is not None:
                rec["eta"] = [float(v) for v in inst.eta]
            f.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def load_dataset(path: str | Path) -> tuple[dict, list[Instance]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with open(path) as f:
        try:
            header = json.loads(f.readline())
        except json.JSONDecodeError as e:
            raise DataError(f"malformed dataset header in {path}: {e}") from e
        if not isinstance(header, dict) or not HEADER_KEYS <= set(header):
            raise DataError(f"dataset header must carry {sorted(HEADER_KEYS)}")
        instances = []
        for line_no, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"malformed record at {path}:{line_no}: {e}") from e
            x = np.asarray(rec["x"], dtype=np.float64)
            targets = np.asarray(rec.get("targets", []), dtype=np.int64)
            eta = rec.get("eta")
            if x.shape != (header["d"],):
                raise DataError(f"record at {path}:{line_no} has wrong feature length")
            if targets.size and (targets.min() < 0 or targets.max() >= header["M"]):
                raise DataError(f"record at {path}:{line_no} has out-of-range targets")
            if eta is not None and len(eta) != header["M"]:
                raise DataError(f"record at {path}:{line_no} has wrong eta length")
            instances.append(Instance(x=x, targets=targets, eta=None if eta is None else np.asarray(eta)))
    return header, instances
