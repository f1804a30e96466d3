"""Bilinear similarity / Mahalanobis distance under a dense metric matrix,
triplet hinge losses and their aggregate (sub)gradients.

Two metric kinds are supported:

* ``SIMILARITY``: ``s_M(x, y) = x^T M y`` with triplet loss
  ``max(0, 1 - s_M(x_i, x_j) + s_M(x_i, x_k))``.
* ``DISTANCE``: ``d_M(x, y) = (x - y)^T M (x - y)`` with triplet loss
  ``max(0, 1 + d_M(x_i, x_j) - d_M(x_i, x_k))``.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError

__all__ = [
    "MetricKind",
    "MetricMatrix",
    "GradientSummary",
    "similarity",
    "distance",
    "hinge_arguments",
    "triplet_hinge_loss",
    "summed_hinge_loss",
    "aggregate_gradient",
    "project_psd",
]


class MetricKind(str, enum.Enum):
    SIMILARITY = "similarity"
    DISTANCE = "distance"


@dataclass(frozen=True)
class MetricMatrix:
    """A square metric matrix tagged with how it is applied."""

    values: np.ndarray
    kind: MetricKind = MetricKind.DISTANCE

    def __post_init__(self):
        M = np.asarray(self.values, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ShapeError(f"metric must be square, got shape {M.shape}")
        if not np.all(np.isfinite(M)):
            raise ValueError("metric has non-finite entries")
        object.__setattr__(self, "values", M)
        object.__setattr__(self, "kind", MetricKind(self.kind))

    @property
    def dim(self):
        return self.values.shape[0]

    def is_symmetric(self, atol=1e-10):
        return bool(np.allclose(self.values, self.values.T, rtol=0.0, atol=atol))


@dataclass(frozen=True)
class GradientSummary:
    delta: np.ndarray
    triplet_count: int = 0

    @property
    def mean(self):
        if self.triplet_count == 0:
            return np.zeros_like(self.delta)
        return self.delta / self.triplet_count


def _unwrap(M, expected=None):
    if isinstance(M, MetricMatrix):
        if expected is not None and M.kind is not expected:
            raise ValueError(f"expected a {expected.value} metric, got {M.kind.value}")
        return M.values
    return np.asarray(M, dtype=float)


def _check_vectors(M, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"metric must be square, got shape {M.shape}")
    if x.shape != (M.shape[0],) or y.shape != (M.shape[0],):
        raise ShapeError(
            f"vectors of shape {x.shape} and {y.shape} do not match a {M.shape} metric"
        )
    return x, y


def similarity(M, x, y):
    """Bilinear similarity ``x^T M y``."""
    M = _unwrap(M, MetricKind.SIMILARITY)
    x, y = _check_vectors(M, x, y)
    return float(x @ M @ y)


def distance(M, x, y):
    """Squared Mahalanobis-type distance ``(x - y)^T M (x - y)``."""
    M = _unwrap(M, MetricKind.DISTANCE)
    x, y = _check_vectors(M, x, y)
    diff = x - y
    return float(diff @ M @ diff)


def _features(X):
    return X.X if hasattr(X, "X") else np.asarray(X, dtype=float)


def _triplet_array(T):
    if hasattr(T, "triplets"):
        return T.triplets
    return np.asarray(T, dtype=np.int64).reshape(-1, 3)


def hinge_arguments(M, T, X):
    """Vector of hinge arguments (loss before clipping at zero), one per triplet."""
    kind = M.kind
    A = M.values
    X = _features(X)
    idx = _triplet_array(T)
    if idx.size and (idx.min() < 0 or idx.max() >= X.shape[0]):
        raise IndexError("triplet index out of range")
    if X.shape[1] != A.shape[0]:
        raise ShapeError(f"{X.shape[1]}-dim features with a {A.shape} metric")
    xi, xj, xk = X[idx[:, 0]], X[idx[:, 1]], X[idx[:, 2]]
    if kind is MetricKind.SIMILARITY:
        return 1.0 - np.einsum("na,ab,nb->n", xi, A, xj - xk)
    dij = xi - xj
    dik = xi - xk
    return 1.0 + np.einsum("na,ab,nb->n", dij, A, dij) - np.einsum("na,ab,nb->n", dik, A, dik)


def triplet_hinge_loss(M, t, X):
    """Hinge loss of a single triplet ``t = (i, j, k)`` under metric ``M``."""
    arg = hinge_arguments(M, np.asarray(t, dtype=np.int64).reshape(1, 3), X)[0]
    return max(0.0, float(arg))


def summed_hinge_loss(M, T, X):
    return float(np.maximum(hinge_arguments(M, T, X), 0.0).sum())


def aggregate_gradient(M, T, X, active_only=True, form="table", reduction="blas"):
    """Sum of per-triplet loss gradients with respect to the metric.

    Parameters
    ----------
    M : MetricMatrix
    T : TripletSet or (n, 3) int array
    X : LabeledDataset or (n, d_hat) array
    active_only : bool
        Sum only over triplets whose hinge argument is strictly positive (the
        subgradient of the summed hinge loss).  A triplet sitting exactly on
        the kink counts as inactive.  When False every triplet contributes.
    form : {"table", "standard"}
        Similarity kind only.  ``"table"`` returns the symmetrized sum
        ``x_i (x_k - x_j)^T + (x_k - x_j) x_i^T``; ``"standard"`` returns the
        plain gradient ``x_i (x_k - x_j)^T``.  Distance gradients are
        symmetric already and ignore this flag.
    reduction : {"blas", "sequential"}
        ``"sequential"`` accumulates outer products one triplet at a time, in
        triplet order, as a deterministic reference.

    Returns
    -------
    GradientSummary
        ``delta`` is the (d_hat, d_hat) sum and ``triplet_count`` the number
        of contributing triplets.
    """
    if form not in ("table", "standard"):
        raise ValueError(f"unknown gradient form {form!r}")
    Xf = _features(X)
    idx = _triplet_array(T)
    d_hat = M.values.shape[0]
    if Xf.shape[1] != d_hat:
        raise ShapeError(f"{Xf.shape[1]}-dim features with a {M.values.shape} metric")
    if idx.shape[0] == 0:
        return GradientSummary(np.zeros((d_hat, d_hat)), 0)
    if active_only:
        idx = idx[hinge_arguments(M, idx, Xf) > 0.0]
    xi, xj, xk = Xf[idx[:, 0]], Xf[idx[:, 1]], Xf[idx[:, 2]]
    similar = M.kind is MetricKind.SIMILARITY
    if similar:
        u, v = xi, xk - xj
    else:
        u, v = xi - xj, xi - xk

    if reduction == "sequential":
        delta = np.zeros((d_hat, d_hat))
        for a in range(idx.shape[0]):
            if similar:
                delta += np.outer(u[a], v[a])
            else:
                delta += np.outer(u[a], u[a]) - np.outer(v[a], v[a])
    elif reduction == "blas":
        delta = u.T @ v if similar else u.T @ u - v.T @ v
    else:
        raise ValueError(f"unknown reduction {reduction!r}")

    if similar and form == "table":
        delta = delta + delta.T
    return GradientSummary(delta, int(idx.shape[0]))


def project_psd(M, floor=0.0):
    """Symmetrize ``M`` and clip its eigenvalues below ``floor``."""
    kind = M.kind if isinstance(M, MetricMatrix) else None
    A = _unwrap(M)
    S = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(S)
    P = (V * np.maximum(w, floor)) @ V.T
    P = 0.5 * (P + P.T)
    return MetricMatrix(P, kind) if kind is not None else P
