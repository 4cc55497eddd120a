"""Seeded Gaussian-cluster classification data ("multi" stand-in)."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError

DEFAULT_OFFSET = 2.5
DEFAULT_STD = 1.0


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    k: int
    seed: int | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise InvalidArgumentError("features must be (n, d) with one label per row")
        if len(self.labels) == 0:
            raise InvalidArgumentError("dataset is empty")
        if self.labels.min() < 0 or self.labels.max() >= self.k:
            raise InvalidArgumentError(f"labels must lie in [0, {self.k})")
        if not np.all(np.isfinite(self.features)):
            raise InvalidArgumentError("features hold non-finite values")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> Dataset:
        return Dataset(self.features[idx], self.labels[idx], self.k, self.seed)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


def cluster_centers(k: int, offset: float = DEFAULT_OFFSET) -> np.ndarray:
    """One center per quadrant for k=4; otherwise k points on the same circle."""
    if k == 4:
        return np.array([[offset, offset], [-offset, offset],
                         [-offset, -offset], [offset, -offset]])
    angles = np.pi / 4 + 2 * np.pi * np.arange(k) / k
    radius = offset * np.sqrt(2.0)
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def generate_multi(n: int, k: int = 4, seed: int = 1, offset: float = DEFAULT_OFFSET,
                   std: float = DEFAULT_STD) -> Dataset:
    if k < 2:
        raise InvalidArgumentError("need at least two classes")
    if n < k:
        raise InvalidArgumentError(f"n={n} is smaller than k={k}")
    if not std > 0:
        raise InvalidArgumentError("cluster std must be positive")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % k)
    centers = cluster_centers(k, offset)
    features = centers[labels] + std * rng.standard_normal((n, 2))
    return Dataset(features, labels, k, seed)


def train_test_split(data: Dataset, test_fraction: float = 0.25, seed: int = 2):
    """Stratified split; each class contributes round(count * test_fraction) test rows."""
    if not 0 < test_fraction < 1:
        raise InvalidArgumentError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    test_idx = []
    for c in range(data.k):
        members = np.flatnonzero(data.labels == c)
        members = members[rng.permutation(len(members))]
        test_idx.append(members[:int(round(len(members) * test_fraction))])
    is_test = np.zeros(len(data), dtype=bool)
    is_test[np.concatenate(test_idx)] = True
    return data.subset(np.flatnonzero(~is_test)), data.subset(np.flatnonzero(is_test))


def write_csv(data: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{j}" for j in range(data.features.shape[1])] + ["label"])
        for row, label in zip(data.features, data.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def read_csv(path, k: int | None = None) -> Dataset:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "label":
            raise InvalidArgumentError(f"{path}: expected header x0,...,label")
        rows = [r for r in reader if r]
    if not rows:
        raise InvalidArgumentError(f"{path}: no samples")
    features = np.array([[float(v) for v in r[:-1]] for r in rows])
    labels = np.array([int(r[-1]) for r in rows])
    return Dataset(features, labels, k if k is not None else int(labels.max()) + 1)
