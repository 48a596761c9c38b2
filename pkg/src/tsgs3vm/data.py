"""LIBSVM ingestion, semi-supervised splits, unlabeled k-fold CV and scaling."""
from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import InputError, ParseError, ShapeError, SplitError

# Accepted binary label alphabets, each listed as (negative, positive).
LABEL_ALPHABETS = ((-1.0, 1.0), (0.0, 1.0), (1.0, 2.0))


@dataclass(eq=False)
class SemiDataset:
    """Labeled pairs plus an unlabeled pool, stored densely.

    ``hidden_labels`` holds ground truth for the unlabeled pool when it is
    known.  It exists only for evaluation; training code never reads it.
    """

    X_l: np.ndarray
    y_l: np.ndarray
    X_u: np.ndarray
    hidden_labels: np.ndarray | None = None
    labeled_index: np.ndarray | None = None
    unlabeled_index: np.ndarray | None = None

    def __post_init__(self):
        self.X_l = np.atleast_2d(np.asarray(self.X_l, dtype=np.float64))
        self.y_l = np.asarray(self.y_l, dtype=np.float64).ravel()
        self.X_u = np.asarray(self.X_u, dtype=np.float64)
        if self.X_u.size == 0:
            self.X_u = self.X_u.reshape(0, self.X_l.shape[1])
        if self.X_l.shape[0] != self.y_l.shape[0]:
            raise ShapeError("labeled points and labels differ in count")
        if self.X_u.ndim != 2 or self.X_u.shape[1] != self.X_l.shape[1]:
            raise ShapeError(f"labeled dimension {self.X_l.shape[1]} vs unlabeled shape {self.X_u.shape}")
        if not np.all(np.abs(self.y_l) == 1.0):
            raise InputError("labels must be -1 or +1")
        if self.hidden_labels is not None:
            self.hidden_labels = np.asarray(self.hidden_labels, dtype=np.float64).ravel()
            if self.hidden_labels.shape[0] != self.X_u.shape[0]:
                raise ShapeError("hidden labels do not match unlabeled pool size")

    @property
    def d(self) -> int:
        return self.X_l.shape[1]

    @property
    def n_l(self) -> int:
        return self.X_l.shape[0]

    @property
    def n_u(self) -> int:
        return self.X_u.shape[0]

    @property
    def n(self) -> int:
        return self.n_l + self.n_u


# ---------------------------------------------------------------- parsing

def _parse_lines(lines):
    labels, indptr, indices, values = [], [0], [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(f"non-numeric label {tokens[0]!r}", lineno) from None
        if not np.isfinite(label):
            raise ParseError(f"non-finite label {tokens[0]!r}", lineno)
        last = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"expected <index>:<value>, got {tok!r}", lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"non-numeric token {tok!r}", lineno) from None
            if idx < 1:
                raise ParseError(f"feature index {idx} < 1", lineno)
            if idx <= last:
                raise ParseError(f"feature index {idx} not greater than previous index {last}", lineno)
            if not np.isfinite(val):
                raise ParseError(f"non-finite value in {tok!r}", lineno)
            last = idx
            indices.append(idx - 1)
            values.append(val)
        labels.append(label)
        indptr.append(len(indices))
    d = max(indices) + 1 if indices else 0
    X = sparse.csr_matrix(
        (np.asarray(values, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
        shape=(len(labels), d),
    )
    return X, np.asarray(labels, dtype=np.float64)


def parse_libsvm(source):
    """Read LIBSVM text into a CSR matrix (column ``j`` holds index ``j+1``) and raw labels.

    ``source`` is a path or an open text stream.  The matrix width is the
    largest feature index seen.
    """
    if hasattr(source, "read"):
        return _parse_lines(source)
    with open(os.fspath(source), "r", encoding="utf-8") as fh:
        return _parse_lines(fh)


def parse_libsvm_string(text: str):
    return _parse_lines(io.StringIO(text))


def _fmt(v):
    return repr(float(v))


def format_libsvm(X, labels) -> str:
    """Inverse of :func:`parse_libsvm`; zero entries are omitted."""
    X = sparse.csr_matrix(X)
    X.sort_indices()
    out = []
    for r, label in enumerate(labels):
        lo, hi = X.indptr[r], X.indptr[r + 1]
        lab = str(int(label)) if float(label).is_integer() else _fmt(label)
        feats = [f"{j + 1}:{_fmt(v)}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi]) if v != 0]
        out.append(" ".join([lab] + feats))
    return "\n".join(out) + ("\n" if out else "")


def write_libsvm(path, X, labels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_libsvm(X, labels))


def label_mapping(raw_labels) -> dict:
    """Raw label -> {-1, +1} for a binary alphabet, ordered low to high."""
    present = set(np.unique(np.asarray(raw_labels, dtype=np.float64)).tolist())
    for neg, pos in LABEL_ALPHABETS:
        if present <= {neg, pos}:
            return {neg: -1.0, pos: 1.0}
    raise InputError(f"labels {sorted(present)} are not a binary alphabet among {LABEL_ALPHABETS}")


def map_labels(raw_labels, mapping: dict | None = None) -> np.ndarray:
    raw = np.asarray(raw_labels, dtype=np.float64)
    mapping = label_mapping(raw) if mapping is None else mapping
    out = np.empty_like(raw)
    for i, v in enumerate(raw):
        try:
            out[i] = mapping[float(v)]
        except KeyError:
            raise InputError(f"label {v:g} outside alphabet {sorted(mapping)}") from None
    return out


def densify(X, d: int | None = None) -> np.ndarray:
    """Dense copy of ``X`` padded with zero columns up to width ``d``."""
    dense = X.toarray() if sparse.issparse(X) else np.atleast_2d(np.asarray(X, dtype=np.float64))
    if d is not None:
        if dense.shape[1] > d:
            raise ShapeError(f"input has dimension {dense.shape[1]}, expected at most {d}")
        if dense.shape[1] < d:
            dense = np.hstack([dense, np.zeros((dense.shape[0], d - dense.shape[1]))])
    return dense


def load_semi(labeled_path, unlabeled_path) -> SemiDataset:
    """Build a dataset from a labeled file and an unlabeled file.

    The label column of the unlabeled file becomes ``hidden_labels`` when it
    uses the labeled file's alphabet, and is ignored otherwise.
    """
    Xl, raw_l = parse_libsvm(labeled_path)
    Xu, raw_u = parse_libsvm(unlabeled_path)
    d = max(Xl.shape[1], Xu.shape[1], 1)
    mapping = label_mapping(raw_l)
    try:
        hidden = map_labels(raw_u, mapping)
    except InputError:
        hidden = None
    return SemiDataset(densify(Xl, d), map_labels(raw_l, mapping), densify(Xu, d), hidden)


# ---------------------------------------------------------------- splits

def make_semi_split(vectors, labels, n_labeled: int = 200, seed: int = 0, max_retries: int = 100) -> SemiDataset:
    """Sample ``n_labeled`` instances (without replacement) to keep their labels.

    The remaining instances form the unlabeled pool; their labels are kept as
    hidden ground truth.  Samples lacking either class are redrawn up to
    ``max_retries`` times.
    """
    X = densify(vectors)
    y = map_labels(labels)
    n = X.shape[0]
    if not 0 < n_labeled <= n:
        raise SplitError(f"cannot take {n_labeled} labeled instances from {n}")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries + 1):
        perm = rng.permutation(n)
        lab = np.sort(perm[:n_labeled])
        if np.unique(y[lab]).size == 2:
            break
    else:
        raise SplitError(f"labeled sample of {n_labeled} stayed single-class after {max_retries} retries")
    unl = np.sort(perm[n_labeled:])
    return SemiDataset(X[lab], y[lab], X[unl], y[unl], labeled_index=lab, unlabeled_index=unl)


def split_manifest(dataset: SemiDataset, seed: int, **extra) -> dict:
    return {
        "seed": int(seed),
        "n_labeled": dataset.n_l,
        "n_unlabeled": dataset.n_u,
        "labeled_indices": [int(i) for i in dataset.labeled_index],
        "unlabeled_indices": [int(i) for i in dataset.unlabeled_index],
        **extra,
    }


def write_split_manifest(path, dataset: SemiDataset, seed: int, **extra) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(split_manifest(dataset, seed, **extra), fh, indent=2)


@dataclass(eq=False)
class Fold:
    train: SemiDataset
    test_X: np.ndarray
    test_y: np.ndarray | None
    train_subset: np.ndarray
    test_subset: np.ndarray


def kfold_unlabeled(dataset: SemiDataset, k: int = 5, seed: int = 0) -> list[Fold]:
    """Partition the unlabeled pool into ``k`` near-equal subsets.

    Fold ``j`` trains on every labeled instance plus subset ``j`` and is
    scored on the other ``k - 1`` subsets.
    """
    if k < 2:
        raise InputError(f"k must be at least 2, got {k}")
    if dataset.n_u < k:
        raise InputError(f"{dataset.n_u} unlabeled instances cannot form {k} folds")
    parts = np.array_split(np.random.default_rng(seed).permutation(dataset.n_u), k)
    folds = []
    for j in range(k):
        train_idx = np.sort(parts[j])
        test_idx = np.sort(np.concatenate([parts[i] for i in range(k) if i != j]))
        hidden = dataset.hidden_labels
        train = SemiDataset(
            dataset.X_l,
            dataset.y_l,
            dataset.X_u[train_idx],
            None if hidden is None else hidden[train_idx],
        )
        folds.append(
            Fold(train, dataset.X_u[test_idx], None if hidden is None else hidden[test_idx], train_idx, test_idx)
        )
    return folds


# ---------------------------------------------------------------- scaling

@dataclass(frozen=True, eq=False)
class ScalerParams:
    lo: np.ndarray
    hi: np.ndarray

    def to_dict(self):
        return {"kind": "minmax", "min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_dict(cls, obj):
        return cls(np.asarray(obj["min"], dtype=np.float64), np.asarray(obj["max"], dtype=np.float64))


def scale_fit(vectors) -> ScalerParams:
    X = densify(vectors)
    return ScalerParams(X.min(axis=0), X.max(axis=0))


def scale_apply(params: ScalerParams, vectors) -> np.ndarray:
    """Affine min-max map to ``[0, 1]``; values outside the fitted range extrapolate.

    Dimensions that were constant during fitting map to 0.
    """
    X = densify(vectors, params.lo.shape[0])
    span = params.hi - params.lo
    ok = span > 0
    out = np.zeros_like(X)
    out[:, ok] = (X[:, ok] - params.lo[ok]) / span[ok]
    return out


def scale_dataset(dataset: SemiDataset, params: ScalerParams) -> SemiDataset:
    return SemiDataset(
        scale_apply(params, dataset.X_l),
        dataset.y_l,
        scale_apply(params, dataset.X_u),
        dataset.hidden_labels,
        dataset.labeled_index,
        dataset.unlabeled_index,
    )


# ---------------------------------------------------------------- synthetic

def two_gaussians(n: int, d: int = 5, shift: float = 2.0, seed: int = 0):
    """Balanced classes ``N(+-shift e_1, I)`` in ``d`` dimensions."""
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    X = rng.standard_normal((n, d))
    X[:, 0] += shift * y
    return X, y


def separable_blobs(n: int, d: int = 2, gap: float = 1.0, seed: int = 0):
    """Two classes split by the slab ``|x_1| < gap`` which no point enters."""
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    X = 0.5 * rng.standard_normal((n, d))
    X[:, 0] = y * (gap + np.abs(0.5 * rng.standard_normal(n)))
    return X, y
