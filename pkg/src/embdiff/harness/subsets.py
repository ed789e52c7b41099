"""Label-balanced subset construction, nested data regimes, k-fold splits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, DataError


@dataclass
class DataRegime:
    sizes: list[int]
    subsets: dict[int, list[str]]

    def certificate(self) -> dict:
        """Nesting proof: every smaller subset is contained in the next larger."""
        checks = []
        for bigger, smaller in zip(self.sizes, self.sizes[1:]):
            ok = set(self.subsets[smaller]) <= set(self.subsets[bigger])
            checks.append({"outer": bigger, "inner": smaller, "nested": ok})
        return {"sizes": self.sizes, "checks": checks, "nested": all(c["nested"] for c in checks)}

    def verify(self) -> None:
        cert = self.certificate()
        if not cert["nested"]:
            broken = [c for c in cert["checks"] if not c["nested"]]
            raise DataError(f"regime nesting violated: {broken}")


def _labels_by_id(records) -> tuple[list[str], np.ndarray]:
    ids = [rec.id for rec in records]
    labels = np.stack([rec.labels for rec in records])
    return ids, labels


def balanced_subset(records, n: int, labelset, seed: int) -> list[str]:
    """n record ids with floor(n/|L|) positives guaranteed per label.

    Per label, floor(n/|L|) positive records are drawn without replacement;
    cross-label duplicates are removed (each copy still counts as a positive
    for all its labels) and the total is topped up by cycling over labels
    until n ids are collected or every positive pool runs dry.
    """
    ids, labels = _labels_by_id(records)
    n_labels = len(labelset)
    if n < 1:
        raise ContractError("subset size must be >= 1")
    per = n // n_labels
    need = math.ceil(n / n_labels)
    pools = []
    for li, name in enumerate(labelset):
        pool = [i for i in range(len(ids)) if labels[i, li] == 1]
        if len(pool) < need:
            raise DataError(
                f"label {name!r} has {len(pool)} positives, need at least {need}"
            )
        pools.append(pool)

    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    chosen_set: set[int] = set()

    def take(label_idx, count):
        remaining = [i for i in pools[label_idx] if i not in chosen_set]
        if not remaining or count < 1:
            return 0
        count = min(count, len(remaining))
        picked = rng.choice(len(remaining), size=count, replace=False)
        for p in sorted(picked):
            chosen.append(remaining[p])
            chosen_set.add(remaining[p])
        return count

    for li in range(n_labels):
        take(li, per)

    # top-up after cross-label dedup, one label at a time, round-robin
    stalled = 0
    li = 0
    while len(chosen) < n and stalled < n_labels:
        got = take(li, 1)
        stalled = 0 if got else stalled + 1
        li = (li + 1) % n_labels
    return [ids[i] for i in chosen[:n]]


def nest_regimes(records, sizes: list[int], labelset, seed: int) -> DataRegime:
    """Build the largest subset first; draw each smaller one from it."""
    if any(a <= b for a, b in zip(sizes, sizes[1:])):
        raise ContractError("sizes must be strictly decreasing")
    by_id = {rec.id: rec for rec in records}
    subsets: dict[int, list[str]] = {}
    current = list(records)
    for depth, size in enumerate(sizes):
        ids = balanced_subset(current, size, labelset, seed + depth)
        subsets[size] = ids
        current = [by_id[i] for i in ids]
    regime = DataRegime(sizes=list(sizes), subsets=subsets)
    regime.verify()
    return regime


def kfold(ids: list[str], k: int = 5, seed: int = 0) -> list[list[str]]:
    """Disjoint, exhaustive folds with sizes balanced to within one."""
    if len(ids) < k:
        raise ContractError(f"need at least {k} ids for {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    return [[ids[i] for i in part] for part in np.array_split(order, k)]
