"""Deterministic random-stream derivation.

All randomness in an experiment flows from one top-level integer seed.
Components draw from named sub-streams so that changing one component's
consumption pattern (e.g. how many negatives the trainer samples) never
perturbs any other component's stream.
"""
from __future__ import annotations

import hashlib

import numpy as np


def substream_seed(seed: int, *path: int | str) -> int:
    """Derive a child seed from ``seed`` and a path of names/indices.

    The derivation hashes the printable representation of the path, so it is
    stable across processes and platforms.
    """
    for part in path:
        if not isinstance(part, (int, str)):
            raise ValueError(f"stream path parts must be int or str, got {type(part)!r}")
    material = repr((int(seed),) + tuple(path)).encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:16], "little")


def substream(seed: int, *path: int | str) -> np.random.Generator:
    """A PCG64 generator seeded from ``substream_seed(seed, *path)``."""
    return np.random.default_rng(np.random.SeedSequence(substream_seed(seed, *path)))
