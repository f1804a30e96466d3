"""Labeled datasets and triplet side-information.

A triplet ``(i, j, k)`` pairs an anchor ``i`` with a same-class positive ``j``
and a different-class negative ``k``.  Triplets are stored as an ``(n, 3)``
integer array of row indices into the source dataset.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, DataError, ShapeError

__all__ = [
    "LabeledDataset",
    "TripletSet",
    "mine_triplets",
    "save_triplets",
    "load_triplets",
]

ENUMERATE_MAX_N = 200


@dataclass(frozen=True)
class LabeledDataset:
    """Feature rows ``X`` (n, d_hat) with integer labels ``y`` (n,)."""

    X: np.ndarray
    y: np.ndarray
    task_id: str = "0"

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ShapeError(f"labels have shape {y.shape}, expected ({X.shape[0]},)")
        if X.shape[0] < 1:
            raise DataError("dataset has no samples")
        if not np.all(np.isfinite(X)):
            raise DataError("dataset contains non-finite features")
        if y.dtype.kind not in "iu":
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise DataError("labels must be integers")
            y = y.astype(int)
        X.flags.writeable = False
        y = y.copy()
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "task_id", str(self.task_id))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d_hat(self):
        return self.X.shape[1]

    @property
    def classes(self):
        return np.unique(self.y)

    def subset(self, index):
        return LabeledDataset(self.X[index], self.y[index], self.task_id)

    def concat(self, other):
        if other.d_hat != self.d_hat:
            raise ShapeError(f"cannot append {other.d_hat}-dim rows to {self.d_hat}-dim data")
        return LabeledDataset(
            np.vstack([self.X, other.X]), np.concatenate([self.y, other.y]), self.task_id
        )


@dataclass(frozen=True)
class TripletSet:
    triplets: np.ndarray = field(default_factory=lambda: np.empty((0, 3), dtype=np.int64))
    source_n: int = 0

    def __post_init__(self):
        T = np.asarray(self.triplets, dtype=np.int64).reshape(-1, 3)
        if T.size and (T.min() < 0 or T.max() >= self.source_n):
            raise IndexError(f"triplet index out of range for source_n={self.source_n}")
        T.flags.writeable = False
        object.__setattr__(self, "triplets", T)

    def __len__(self):
        return self.triplets.shape[0]

    def __iter__(self):
        return (tuple(int(v) for v in row) for row in self.triplets)

    def satisfies_labels(self, y):
        """True if every triplet has y[i] == y[j] and y[i] != y[k]."""
        i, j, k = self.triplets.T
        return bool(np.all(y[i] == y[j]) and np.all(y[i] != y[k]))


def _pairwise_sq_dists(X):
    sq = np.einsum("ij,ij->i", X, X)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(D, 0.0, out=D)
    return D


def mine_triplets(data, neighbors_per_anchor=3, impostors_per_pair=10, seed=0, mode="sample"):
    """Build triplet side-information for one labeled dataset.

    Parameters
    ----------
    data : LabeledDataset
    neighbors_per_anchor : int
        Number of nearest same-class points (Euclidean) used as positives for
        each anchor.  Distance ties go to the lower index.
    impostors_per_pair : int
        Number of different-class negatives drawn uniformly, without
        replacement, for every (anchor, positive) pair.
    seed : int
        Seed for the impostor draws.
    mode : {"sample", "enumerate"}
        ``"enumerate"`` emits every (i, j, k) with y[i] == y[j] != y[k]; it is
        only allowed for ``n <= 200``.

    Returns
    -------
    TripletSet
        Triplets in anchor-major order.
    """
    X, y = data.X, data.y
    n = X.shape[0]
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise ConfigurationError("need >=2 classes to form dissimilar pairs")
    if neighbors_per_anchor < 1 or impostors_per_pair < 1:
        raise ConfigurationError("neighbors_per_anchor and impostors_per_pair must be >= 1")
    singletons = classes[counts == 1]
    if singletons.size:
        warnings.warn(
            f"classes {singletons.tolist()} have a single member; no triplets anchored there",
            stacklevel=2,
        )

    if mode == "enumerate":
        if n > ENUMERATE_MAX_N:
            raise ConfigurationError(f"enumerate mode needs n <= {ENUMERATE_MAX_N}, got {n}")
        rows = []
        for i in range(n):
            same = np.flatnonzero((y == y[i]) & (np.arange(n) != i))
            diff = np.flatnonzero(y != y[i])
            for j in same:
                for k in diff:
                    rows.append((i, j, k))
        return TripletSet(np.array(rows, dtype=np.int64).reshape(-1, 3), n)
    if mode != "sample":
        raise ConfigurationError(f"unknown mining mode {mode!r}")

    rng = np.random.default_rng(seed)
    D = _pairwise_sq_dists(X)
    rows = []
    for i in range(n):
        same = np.flatnonzero((y == y[i]) & (np.arange(n) != i))
        if same.size == 0:
            continue
        # lexsort: primary key distance, secondary key index
        order = same[np.lexsort((same, D[i, same]))]
        diff = np.flatnonzero(y != y[i])
        n_imp = min(impostors_per_pair, diff.size)
        for j in order[:neighbors_per_anchor]:
            for k in rng.choice(diff, size=n_imp, replace=False):
                rows.append((i, j, k))
    return TripletSet(np.array(rows, dtype=np.int64).reshape(-1, 3), n)


def save_triplets(path, triplets):
    """Write the plain-text triplet cache: ``# n=<source_n>`` then ``i j k`` lines."""
    with open(path, "w") as fh:
        fh.write(f"# n={triplets.source_n}\n")
        for i, j, k in triplets.triplets:
            fh.write(f"{i} {j} {k}\n")


def load_triplets(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# n="):
            raise DataError(f"{path}: missing '# n=<source_n>' header")
        source_n = int(header[4:])
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DataError(f"{path}: line {lineno} does not hold 3 indices")
            rows.append([int(p) for p in parts])
    return TripletSet(np.array(rows, dtype=np.int64).reshape(-1, 3), source_n)
