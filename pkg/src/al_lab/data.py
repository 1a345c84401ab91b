"""Datasets: synthetic blob generation, CSV load/save, normalization.

Ground-truth labels are deliberately awkward to reach. Reading them
requires an :class:`OracleToken`, which the experiment engine hands only
to the code playing the oracle (simulated labeling, the ground-truth
"oracle" strategy, test-set evaluation). Acquisition strategies receive a
context without a token and cannot peek at labels they have not paid for.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import CsvFormatError
from .validation import check_feature_matrix, check_index_array, check_label_vector

TRAIN_FRACTION = 0.8


class OracleToken:
    """Capability object required to read hidden ground-truth labels."""

    __slots__ = ()

    def __repr__(self) -> str:  # pragma: no cover
        return "OracleToken()"


@dataclass
class Dataset:
    """Feature matrix with hidden labels and a fixed train/test split.

    ``features`` is immutable (the underlying buffer is marked read-only).
    ``train_indices`` and ``test_indices`` partition the rows; the active
    learning pool lives entirely inside the train split. Labels are only
    reachable through :meth:`hidden_labels`.
    """

    features: np.ndarray
    class_count: int
    train_indices: np.ndarray
    test_indices: np.ndarray
    name: str = "dataset"
    meta: dict = field(default_factory=dict)

    def __init__(self, features, labels, class_count, train_indices, test_indices,
                 name="dataset", meta=None):
        features = check_feature_matrix(features, name="features")
        labels = check_label_vector(labels, n_classes=int(class_count), n_samples=len(features))
        if int(class_count) < 2:
            raise ValueError("class_count must be at least 2")
        n = len(features)
        train_indices = check_index_array(train_indices, n, "train_indices")
        test_indices = check_index_array(test_indices, n, "test_indices")
        if np.intersect1d(train_indices, test_indices).size:
            raise ValueError("train and test splits overlap")
        features = features.copy()
        features.flags.writeable = False
        self.features = features
        self._labels = labels.copy()
        self.class_count = int(class_count)
        self.train_indices = np.sort(train_indices)
        self.test_indices = np.sort(test_indices)
        self.name = str(name)
        self.meta = dict(meta or {})

    @property
    def n_samples(self) -> int:
        return len(self.features)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def labels(self):
        raise PermissionError(
            "ground-truth labels are oracle-gated; use hidden_labels(indices, token)"
        )

    def hidden_labels(self, indices, token: OracleToken) -> np.ndarray:
        """Reveal ground-truth labels for ``indices``. Requires a token."""
        if not isinstance(token, OracleToken):
            raise PermissionError("a valid OracleToken is required to read labels")
        idx = check_index_array(indices, self.n_samples, "indices")
        return self._labels[idx].copy()


def _class_centers(class_count: int, n_features: int) -> np.ndarray:
    """Unit-circumradius class centers.

    A regular simplex when it fits in the feature space, otherwise points
    evenly spaced on the unit circle of the first two dimensions.
    """
    if class_count <= n_features + 1:
        # Centered standard basis spans a regular simplex; rotate it into
        # (class_count - 1) coordinates via SVD and pad with zeros.
        centered = np.eye(class_count) - 1.0 / class_count
        _, _, vt = np.linalg.svd(centered)
        coords = centered @ vt[: class_count - 1].T
        coords /= np.linalg.norm(coords, axis=1, keepdims=True)
        centers = np.zeros((class_count, n_features))
        centers[:, : class_count - 1] = coords
        return centers
    angles = 2.0 * np.pi * np.arange(class_count) / class_count
    centers = np.zeros((class_count, n_features))
    centers[:, 0] = np.cos(angles)
    centers[:, 1] = np.sin(angles)
    return centers


def gen_blobs(class_count: int, per_class: int, n_features: int = 2,
              spread: float = 0.5, overlap: float = 0.5, seed: int = 0,
              name: str | None = None) -> Dataset:
    """Gaussian class clusters with controllable mixing.

    Centers sit on a simplex (or circle) scaled by ``4 * spread * (1 -
    overlap)``, so ``overlap=0`` gives well-separated classes at any
    spread and ``overlap=1`` collapses all centers onto the origin. Rows
    are emitted in seeded shuffled order and split 80/20 into train/test
    by position (first block trains), which keeps pool indices contiguous.
    """
    if class_count < 2:
        raise ValueError("class_count must be at least 2")
    if n_features < 2:
        raise ValueError("n_features must be at least 2")
    if per_class < 1:
        raise ValueError("per_class must be positive")
    if not (np.isfinite(spread) and spread > 0):
        raise ValueError("spread must be a positive real")
    if not (0.0 <= overlap <= 1.0):
        raise ValueError("overlap must lie in [0, 1]")

    rng = np.random.default_rng(seed)
    separation = 4.0 * spread * (1.0 - overlap)
    centers = _class_centers(class_count, n_features) * separation
    n = class_count * per_class
    labels = np.repeat(np.arange(class_count), per_class)
    features = centers[labels] + rng.normal(0.0, spread, size=(n, n_features))
    order = rng.permutation(n)
    features, labels = features[order], labels[order]

    n_train = int(n * TRAIN_FRACTION)
    meta = {
        "generator": {
            "kind": "blobs",
            "class_count": class_count,
            "per_class": per_class,
            "n_features": n_features,
            "spread": spread,
            "overlap": overlap,
            "seed": seed,
        }
    }
    return Dataset(
        features, labels, class_count,
        train_indices=np.arange(n_train),
        test_indices=np.arange(n_train, n),
        name=name or f"blobs-c{class_count}-n{n}-s{seed}",
        meta=meta,
    )


# ----------------------------------------------------------------------
# CSV interchange


def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".meta.json")


def save_csv(dataset: Dataset, path) -> Path:
    """Write ``f0,...,f{d-1},label`` rows plus a metadata sidecar JSON.

    Feature cells use the shortest decimal form that round-trips the
    float64 exactly, so save -> load -> save is byte-identical.
    """
    path = Path(path)
    d = dataset.n_features
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{j}" for j in range(d)] + ["label"])
        for row, label in zip(dataset.features, dataset._labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])

    sidecar = {
        "name": dataset.name,
        "class_count": dataset.class_count,
        "n_features": d,
        "n_samples": dataset.n_samples,
        "train_indices": dataset.train_indices.tolist(),
        "test_indices": dataset.test_indices.tolist(),
        "meta": dataset.meta,
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2), encoding="utf-8")
    return path


def load_csv(path) -> Dataset:
    """Load a dataset CSV (and its sidecar, when present).

    Labels must be 0-based contiguous integers. Without a sidecar the
    first 80% of rows form the train split and the remainder the test
    split; generated CSVs already store rows in seeded shuffled order, so
    the positional split is a random one.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "label":
            raise CsvFormatError(f"{path}: header must end with 'label'")
        d = len(header) - 1
        if header[:-1] != [f"f{j}" for j in range(d)]:
            raise CsvFormatError(f"{path}: feature columns must be named f0..f{d - 1}")
        features, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise CsvFormatError(
                    f"{path}: line {lineno}: expected {d + 1} cells, found {len(row)}"
                )
            try:
                features.append([float(v) for v in row[:-1]])
            except ValueError as exc:
                raise CsvFormatError(f"{path}: line {lineno}: non-numeric feature cell") from exc
            try:
                label = int(row[-1])
            except ValueError as exc:
                raise CsvFormatError(f"{path}: line {lineno}: non-integer label") from exc
            if label < 0:
                raise CsvFormatError(f"{path}: line {lineno}: negative label")
            labels.append(label)
    if not features:
        raise CsvFormatError(f"{path}: no data rows")

    labels_arr = np.asarray(labels, dtype=np.int64)
    observed = np.unique(labels_arr)
    if not np.array_equal(observed, np.arange(labels_arr.max() + 1)):
        raise CsvFormatError(
            f"{path}: labels must be 0-based contiguous; observed {observed.tolist()}"
        )
    class_count = int(labels_arr.max()) + 1

    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    sidecar_file = _sidecar_path(path)
    n = len(features)
    if sidecar_file.exists():
        sidecar = json.loads(sidecar_file.read_text(encoding="utf-8"))
        if int(sidecar["class_count"]) < class_count:
            raise CsvFormatError(
                f"{path}: sidecar class_count {sidecar['class_count']} below observed"
            )
        class_count = int(sidecar["class_count"])
        train_idx = sidecar["train_indices"]
        test_idx = sidecar["test_indices"]
        name = sidecar.get("name", path.stem)
        meta = dict(sidecar.get("meta", {}))
    else:
        n_train = int(n * TRAIN_FRACTION)
        train_idx = np.arange(n_train)
        test_idx = np.arange(n_train, n)
        name = path.stem
        meta = {}
    meta["source"] = {"path": str(path), "sha256": digest}
    return Dataset(np.asarray(features), labels_arr, class_count,
                   train_idx, test_idx, name=name, meta=meta)


def normalize(dataset: Dataset) -> Dataset:
    """Per-feature standardization fit on the train split only.

    Both splits are transformed with the train mean and std; features
    with zero train variance map to 0. The statistics are recorded in the
    returned dataset's metadata.
    """
    train = dataset.features[dataset.train_indices]
    if len(train) == 0:
        raise ValueError("cannot normalize: train split is empty")
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    nonconstant = std > 0.0
    shifted = dataset.features - mean
    transformed = np.where(nonconstant, shifted / np.where(nonconstant, std, 1.0), 0.0)
    meta = dict(dataset.meta)
    meta["normalization"] = {"mean": mean.tolist(), "std": std.tolist()}
    return Dataset(transformed, dataset._labels, dataset.class_count,
                   dataset.train_indices, dataset.test_indices,
                   name=dataset.name, meta=meta)
