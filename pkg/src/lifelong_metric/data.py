"""CSV datasets, stratified splits and a synthetic shared-subspace task generator."""

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import ConfigurationError, DataError
from .triplets import LabeledDataset

__all__ = [
    "load_csv",
    "save_csv",
    "stratified_split",
    "SyntheticSpec",
    "SyntheticTruth",
    "generate_synthetic",
]


def load_csv(path, task_id=None):
    """Read a dataset with a header row, an integer ``label`` column and numeric features.

    Errors name the 1-based file row (the header is row 1) and column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if "label" not in header:
            raise DataError(f"{path}: no 'label' column in header")
        label_col = header.index("label")
        feat_cols = [c for c in range(len(header)) if c != label_col]
        X, y = [], []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {rownum} has {len(row)} columns, "
                                f"header has {len(header)}")
            try:
                label = float(row[label_col])
            except ValueError:
                raise DataError(f"{path}: non-numeric label at row {rownum}, "
                                f"column {label_col + 1}") from None
            if label != int(label):
                raise DataError(f"{path}: non-integer label at row {rownum}, column {label_col + 1}")
            feats = []
            for c in feat_cols:
                try:
                    feats.append(float(row[c]))
                except ValueError:
                    raise DataError(f"{path}: non-numeric value {row[c]!r} at row {rownum}, "
                                    f"column {c + 1}") from None
            X.append(feats)
            y.append(int(label))
    if not X:
        raise DataError(f"{path}: no samples")
    if task_id is None:
        task_id = _stem(path)
    return LabeledDataset(np.array(X, dtype=float), np.array(y, dtype=int), task_id)


def _stem(path):
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0] if "." in name else name


def save_csv(path, data):
    """Write ``label,f0,f1,...`` with 17 significant digits per feature."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"f{i}" for i in range(data.d_hat)])
        for label, row in zip(data.y, data.X):
            writer.writerow([int(label)] + [format(v, ".17g") for v in row])


def stratified_split(data, fractions, seed):
    """Split per class into train / validation / test by the given fractions.

    Each class contributes ``round(f_train * n_c)`` training rows and
    ``round(f_val * n_c)`` validation rows; the rest is test.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must be 3 non-negative values summing to 1, "
                                 f"got {fractions}")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for c in np.unique(data.y):
        rows = np.flatnonzero(data.y == c)
        rows = rows[rng.permutation(rows.size)]
        n_tr = int(round(fractions[0] * rows.size))
        n_va = int(round(fractions[1] * rows.size))
        parts[0].append(rows[:n_tr])
        parts[1].append(rows[n_tr:n_tr + n_va])
        parts[2].append(rows[n_tr + n_va:])
    out = []
    for name, chunks in zip(("train", "validation", "test"), parts):
        idx = np.sort(np.concatenate(chunks))
        if idx.size == 0:
            out.append(None)
        else:
            out.append(data.subset(idx))
    if out[0] is None:
        raise ConfigurationError(f"task {data.task_id!r}: empty training split")
    return tuple(out)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the shared-subspace task generator.

    ``separation`` scales the spread of class means inside the subspace.
    """

    d_hat: int = 20
    d_true: int = 5
    num_tasks: int = 6
    classes_per_task: int = 2
    samples_per_class: int = 100
    noise_sigma: float = 0.5
    offdiag_density: float = 0.3
    separation: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.d_hat, self.d_true, self.num_tasks, self.classes_per_task,
               self.samples_per_class) < 1:
            raise ConfigurationError("synthetic counts must be >= 1")
        if self.d_true > self.d_hat:
            raise ConfigurationError(f"d_true={self.d_true} exceeds d_hat={self.d_hat}")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")
        if not 0.0 <= self.offdiag_density <= 1.0:
            raise ConfigurationError("offdiag_density must lie in [0, 1]")


@dataclass(frozen=True)
class SyntheticTruth:
    L0: np.ndarray
    W: tuple

    def metric(self, t):
        return self.L0.T @ self.W[t] @ self.L0


def _task_weights(rng, d_true, density):
    D = rng.normal(size=(d_true, d_true))
    C = D.T @ D / d_true
    mask = np.triu(rng.random((d_true, d_true)) < density, k=1)
    mask = mask | mask.T
    off = np.where(mask, C, 0.0)
    # diagonal dominance keeps the masked matrix positive definite
    diag = np.diag(C) + np.abs(off).sum(axis=1) + 0.5
    return off + np.diag(diag)


def generate_synthetic(spec):
    """Draw tasks that share one low-dimensional subspace.

    The subspace basis ``L0`` (d_true, d_hat) has orthonormal rows.  Task ``t``
    gets a positive definite ``W_t`` whose off-diagonal support has the given
    density.  Class means are ``separation * L0^T W_t^{1/2} z`` with
    ``z ~ N(0, I)``, and samples add isotropic ``N(0, noise_sigma^2)`` noise in
    the ambient space.

    Returns
    -------
    tasks : list of LabeledDataset
        Task ids ``task_00``, ``task_01``, ...; rows are grouped by class.
    truth : SyntheticTruth
    """
    rng = np.random.default_rng(spec.seed)
    Q, _ = np.linalg.qr(rng.normal(size=(spec.d_hat, spec.d_true)))
    L0 = Q.T
    tasks, weights = [], []
    for t in range(spec.num_tasks):
        W = _task_weights(rng, spec.d_true, spec.offdiag_density)
        root = np.real(scipy.linalg.sqrtm(W))
        X, y = [], []
        for c in range(spec.classes_per_task):
            mean = spec.separation * L0.T @ (root @ rng.normal(size=spec.d_true))
            noise = spec.noise_sigma * rng.normal(size=(spec.samples_per_class, spec.d_hat))
            X.append(mean + noise)
            y.append(np.full(spec.samples_per_class, c))
        tasks.append(LabeledDataset(np.vstack(X), np.concatenate(y), f"task_{t:02d}"))
        weights.append(W)
    return tasks, SyntheticTruth(L0, tuple(weights))
