"""Multi-view dataset handling: loading, validation, normalization, splits.

In memory every view keeps samples as columns (a view is d_v x n). On disk
the layout is the usual one-sample-per-row CSV; matrices are transposed on
load and again on write.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MANIFEST_NAME = "manifest.json"


class DatasetError(ValueError):
    """Raised for malformed dataset files or inconsistent dataset contents."""


@dataclass(frozen=True)
class ViewMatrix:
    """One feature view of the sample set, features in rows."""

    data: np.ndarray
    view_index: int

    @property
    def dim(self) -> int:
        return int(self.data.shape[0])

    @property
    def num_samples(self) -> int:
        return int(self.data.shape[1])


@dataclass(frozen=True)
class MultiViewDataset:
    """Feature views over one shared sample axis plus the known/novel split.

    ``labels`` holds a class id for every sample. Labels of unlabeled
    (novel-class) samples are kept for evaluation only; the solver never
    reads them. ``labeled_indices`` are exactly the samples whose class is
    in ``known_classes``; the rest form ``unlabeled_indices``.
    """

    views: tuple[ViewMatrix, ...]
    labels: np.ndarray
    num_classes: int
    known_classes: np.ndarray
    novel_classes: np.ndarray
    labeled_indices: np.ndarray
    unlabeled_indices: np.ndarray

    @property
    def num_views(self) -> int:
        return len(self.views)

    @property
    def num_samples(self) -> int:
        return int(self.labels.size)

    @property
    def num_labeled(self) -> int:
        return int(self.labeled_indices.size)

    @property
    def num_unlabeled(self) -> int:
        return int(self.unlabeled_indices.size)

    @property
    def num_known(self) -> int:
        return int(self.known_classes.size)

    @property
    def num_novel(self) -> int:
        return int(self.novel_classes.size)

    @property
    def view_dims(self) -> tuple[int, ...]:
        return tuple(v.dim for v in self.views)

    def class_rows(self) -> np.ndarray:
        """Map class id -> one-hot row index; known classes take the first
        rows (in ascending id order), novel classes the remaining ones."""
        rows = np.empty(self.num_classes, dtype=int)
        rows[self.known_classes] = np.arange(self.num_known)
        rows[self.novel_classes] = np.arange(self.num_known, self.num_classes)
        return rows


def make_dataset(
    view_arrays: Sequence[np.ndarray],
    labels: np.ndarray,
    num_classes: int,
    known_classes: Sequence[int] | None = None,
) -> MultiViewDataset:
    """Validate raw arrays and assemble a MultiViewDataset.

    ``known_classes`` defaults to the split_known_novel rule. Raises
    DatasetError on any inconsistency.
    """
    if len(view_arrays) == 0:
        raise DatasetError("dataset needs at least one view")
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise DatasetError("labels must be a non-empty 1-d array")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.floor(labels)):
            raise DatasetError("labels must be integers")
        labels = labels.astype(int)
    n = labels.size
    arrays = []
    for i, arr in enumerate(view_arrays):
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 2:
            raise DatasetError(f"view {i}: expected a 2-d matrix, got ndim={arr.ndim}")
        if arr.shape[1] != n:
            raise DatasetError(
                f"view {i}: has {arr.shape[1]} samples, labels have {n}"
            )
        if not np.all(np.isfinite(arr)):
            raise DatasetError(f"view {i}: contains non-finite values")
        arrays.append(arr)
    k = int(num_classes)
    if k < 2:
        raise DatasetError(f"num_classes must be >= 2, got {k}")
    if labels.min() < 0 or labels.max() >= k:
        raise DatasetError(f"labels must lie in [0, {k}), got range "
                           f"[{labels.min()}, {labels.max()}]")

    if known_classes is None:
        known, novel = split_known_novel(labels, k)
    else:
        known = np.unique(np.asarray(known_classes, dtype=int))
        if known.size == 0:
            raise DatasetError("known_classes must not be empty")
        if known.min() < 0 or known.max() >= k:
            raise DatasetError(f"known class ids must lie in [0, {k})")
        novel = np.setdiff1d(np.arange(k), known)
        if novel.size == 0:
            raise DatasetError("at least one class must remain novel")

    is_known = np.isin(labels, known)
    labeled = np.flatnonzero(is_known)
    unlabeled = np.flatnonzero(~is_known)
    views = tuple(ViewMatrix(data=a, view_index=i) for i, a in enumerate(arrays))
    return MultiViewDataset(
        views=views,
        labels=labels,
        num_classes=k,
        known_classes=known,
        novel_classes=novel,
        labeled_indices=labeled,
        unlabeled_indices=unlabeled,
    )


def split_known_novel(labels: np.ndarray, num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Default 1:1 class split: the numerically first floor(k/2) class ids
    are known, the rest novel (odd k puts the extra class on the novel side).
    """
    k = int(num_classes)
    if k < 2:
        raise DatasetError(f"cannot split {k} classes into known and novel")
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DatasetError(f"labels must lie in [0, {k})")
    half = k // 2
    return np.arange(half), np.arange(half, k)


def normalize_features(ds: MultiViewDataset, mode: str = "zscore") -> MultiViewDataset:
    """Return a copy of ``ds`` with per-view normalized features.

    zscore: each feature row centered and scaled to unit variance over all
    samples; zero-variance rows become all-zero. l2: each sample column
    scaled to unit norm; zero columns are left unchanged. none: identity.
    """
    if mode == "none":
        return ds
    arrays = []
    for view in ds.views:
        data = view.data
        if mode == "zscore":
            mean = data.mean(axis=1, keepdims=True)
            std = data.std(axis=1, keepdims=True)
            scale = np.where(std > 0, std, 1.0)
            arrays.append((data - mean) / scale)
        elif mode == "l2":
            norms = np.linalg.norm(data, axis=0, keepdims=True)
            scale = np.where(norms > 0, norms, 1.0)
            arrays.append(data / scale)
        else:
            raise DatasetError(f"unknown normalization mode: {mode!r}")
    return make_dataset(arrays, ds.labels, ds.num_classes, ds.known_classes)


def encode_onehot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Encode integer labels as a k x m matrix with exactly one 1 per column."""
    labels = np.asarray(labels, dtype=int)
    k = int(num_classes)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DatasetError(f"labels must lie in [0, {k})")
    out = np.zeros((k, labels.size))
    out[labels, np.arange(labels.size)] = 1.0
    return out


def decode_onehot(onehot: np.ndarray) -> np.ndarray:
    """Inverse of encode_onehot; rejects matrices that are not one-hot."""
    onehot = np.asarray(onehot)
    if onehot.ndim != 2:
        raise DatasetError("one-hot matrix must be 2-d")
    ok = np.all((onehot == 0) | (onehot == 1)) and np.all(onehot.sum(axis=0) == 1)
    if not ok:
        raise DatasetError("matrix is not one-hot (one 1 per column, rest 0)")
    return np.argmax(onehot, axis=0)


def unlabeled_subset(ds: MultiViewDataset) -> MultiViewDataset:
    """Restrict the dataset to its unlabeled samples (class split unchanged)."""
    cols = ds.unlabeled_indices
    arrays = [v.data[:, cols] for v in ds.views]
    return make_dataset(arrays, ds.labels[cols], ds.num_classes, ds.known_classes)


def load_dataset(path: str | Path, known_classes: Sequence[int] | None = None) -> MultiViewDataset:
    """Load a dataset from a manifest file (or a directory containing
    ``manifest.json``).

    The manifest lists per-view CSV paths (relative to the manifest) with
    their expected feature dimension, a labels CSV (one integer per line)
    and the total number of classes. The known/novel split is not stored;
    it is derived by split_known_novel unless ``known_classes`` overrides it.
    """
    path = Path(path)
    manifest_path = path / MANIFEST_NAME if path.is_dir() else path
    if not manifest_path.is_file():
        raise DatasetError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"manifest is not valid JSON: {exc}") from exc
    for key in ("views", "labels", "num_classes"):
        if key not in manifest:
            raise DatasetError(f"manifest is missing the {key!r} field")
    base = manifest_path.parent

    arrays = []
    for i, entry in enumerate(manifest["views"]):
        if "path" not in entry or "dim" not in entry:
            raise DatasetError(f"view {i}: manifest entry needs 'path' and 'dim'")
        view_path = base / entry["path"]
        arr = _read_csv_matrix(view_path, f"view {i}")
        if arr.shape[1] != int(entry["dim"]):
            raise DatasetError(
                f"view {i}: file has {arr.shape[1]} feature columns, "
                f"manifest declares {entry['dim']}"
            )
        arrays.append(arr.T)

    labels_path = base / manifest["labels"]
    raw = _read_csv_matrix(labels_path, "labels")
    if raw.shape[1] != 1:
        raise DatasetError("labels file must have one integer per line")
    labels = raw[:, 0]
    if not np.all(labels == np.floor(labels)):
        raise DatasetError("labels file contains non-integer values")
    return make_dataset(arrays, labels.astype(int), int(manifest["num_classes"]),
                        known_classes)


def _read_csv_matrix(path: Path, what: str) -> np.ndarray:
    if not path.is_file():
        raise DatasetError(f"{what}: file not found: {path}")
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise DatasetError(f"{what}: could not parse {path}: {exc}") from exc
    if not np.all(np.isfinite(arr)):
        raise DatasetError(f"{what}: contains non-finite values")
    return arr


def write_dataset(ds: MultiViewDataset, directory: str | Path) -> Path:
    """Write manifest + CSVs for ``ds``; returns the manifest path.

    Uses %.17g so a write/load round trip reproduces matrices bit for bit.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for view in ds.views:
        name = f"view_{view.view_index}.csv"
        np.savetxt(directory / name, view.data.T, fmt="%.17g", delimiter=",")
        entries.append({"path": name, "dim": view.dim})
    np.savetxt(directory / "labels.csv", ds.labels[:, None], fmt="%d")
    manifest = {
        "views": entries,
        "labels": "labels.csv",
        "num_classes": ds.num_classes,
    }
    manifest_path = directory / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for the synthetic multi-view blob generator.

    Per view, each class is an isotropic Gaussian blob around a
    class-specific mean drawn independently per view with norm
    ``separation`` (uniform random direction), so ``separation`` sets the
    center distance scale regardless of the view dimension. ``noise`` is
    the blob standard deviation, scalar or one value per view.
    """

    views: int = 2
    classes: int = 4
    per_class: int = 30
    dims: int | Sequence[int] = 8
    separation: float = 6.0
    noise: float | Sequence[float] = 1.0
    seed: int = 0


def generate_synthetic(spec: SyntheticSpec) -> MultiViewDataset:
    """Sample a dataset from ``spec``; deterministic under spec.seed."""
    if spec.views < 1 or spec.classes < 2 or spec.per_class < 1:
        raise DatasetError("synthetic spec needs views >= 1, classes >= 2, per_class >= 1")
    if spec.separation < 0:
        raise DatasetError("separation must be >= 0")
    dims = np.broadcast_to(np.asarray(spec.dims, dtype=int), (spec.views,))
    noise = np.broadcast_to(np.asarray(spec.noise, dtype=float), (spec.views,))
    if np.any(dims < 1) or np.any(noise < 0):
        raise DatasetError("dims must be >= 1 and noise >= 0")

    rng = np.random.default_rng(spec.seed)
    labels = np.repeat(np.arange(spec.classes), spec.per_class)
    n = labels.size
    arrays = []
    for v in range(spec.views):
        d = int(dims[v])
        dirs = rng.standard_normal((spec.classes, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        means = spec.separation * dirs
        data = means[labels].T + noise[v] * rng.standard_normal((d, n))
        arrays.append(data)
    return make_dataset(arrays, labels, spec.classes)
