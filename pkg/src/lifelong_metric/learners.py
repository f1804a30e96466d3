"""Single-task metric learners that produce a task's base metric.

* :func:`oasis_fit` - online passive-aggressive bilinear similarity (OASIS).
* :func:`batch_distance_fit` - full-batch subgradient descent on the
  distance triplet hinge loss.

:func:`pa_target` turns a base metric into the target ``M_t - eta G_t`` that
the weight solver fits.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DivergenceError
from .metric import MetricKind, MetricMatrix, aggregate_gradient, hinge_arguments

__all__ = ["BaseLearnerConfig", "oasis_fit", "batch_distance_fit", "fit_base", "mean_gradient",
           "pa_target"]


@dataclass(frozen=True)
class BaseLearnerConfig:
    kind: MetricKind = MetricKind.SIMILARITY
    C: float = 0.1
    iterations: int = 20_000
    batch_step: float = 0.1
    pa_eta: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", MetricKind(self.kind))
        if not self.C > 0:
            raise ConfigurationError(f"C must be > 0, got {self.C}")
        if self.iterations < 0:
            raise ConfigurationError(f"iterations must be >= 0, got {self.iterations}")
        if not self.batch_step > 0:
            raise ConfigurationError(f"batch_step must be > 0, got {self.batch_step}")
        if not self.pa_eta >= 0:
            raise ConfigurationError(f"pa_eta must be >= 0, got {self.pa_eta}")


def oasis_fit(data, triplets, cfg):
    """Online passive-aggressive similarity learning from M = I.

    Each iteration draws one triplet uniformly (seeded) and, when its hinge
    loss ``l = 1 - x_i^T M (x_j - x_k)`` is positive, applies
    ``M += tau * x_i (x_j - x_k)^T`` with
    ``tau = min(C, l / ||x_i (x_j - x_k)^T||_F^2)``.
    """
    if cfg.kind is not MetricKind.SIMILARITY:
        raise ConfigurationError("oasis_fit learns a similarity metric")
    T = triplets.triplets
    if T.shape[0] == 0:
        raise ConfigurationError("oasis_fit needs at least one triplet")
    X = data.X
    M = np.eye(X.shape[1])
    rng = np.random.default_rng(cfg.seed)
    draws = rng.integers(0, T.shape[0], size=cfg.iterations)
    xi_all = X[T[:, 0]]
    v_all = X[T[:, 1]] - X[T[:, 2]]
    # ||x_i v^T||_F^2 = ||x_i||^2 ||v||^2
    norms = np.einsum("ij,ij->i", xi_all, xi_all) * np.einsum("ij,ij->i", v_all, v_all)
    for a in draws:
        xi, v = xi_all[a], v_all[a]
        loss = 1.0 - xi @ M @ v
        if loss <= 0.0 or norms[a] == 0.0:
            continue
        tau = min(cfg.C, loss / norms[a])
        M += tau * np.outer(xi, v)
    return MetricMatrix(M, MetricKind.SIMILARITY)


def batch_distance_fit(data, triplets, cfg):
    """Full-batch subgradient descent on the mean distance hinge loss from M = I."""
    if cfg.kind is not MetricKind.DISTANCE:
        raise ConfigurationError("batch_distance_fit learns a distance metric")
    X = data.X
    M = MetricMatrix(np.eye(X.shape[1]), MetricKind.DISTANCE)
    n_trip = len(triplets)
    if n_trip == 0:
        return M
    for it in range(cfg.iterations):
        g = aggregate_gradient(M, triplets, X, active_only=True)
        if g.triplet_count == 0:
            break
        A = M.values - cfg.batch_step * g.delta / n_trip
        if not np.all(np.isfinite(A)):
            raise DivergenceError(f"batch distance learner diverged at iteration {it}")
        M = MetricMatrix(A, MetricKind.DISTANCE)
    return M


def fit_base(data, triplets, cfg):
    if cfg.kind is MetricKind.SIMILARITY:
        return oasis_fit(data, triplets, cfg)
    return batch_distance_fit(data, triplets, cfg)


def mean_gradient(M, data, triplets):
    """Triplet-averaged active subgradient of the task loss at ``M``.

    Uses the symmetrized similarity form.  Zero for an empty triplet set.
    """
    n_trip = len(triplets)
    g = aggregate_gradient(M, triplets, data, active_only=True, form="table")
    if n_trip == 0:
        return g.delta
    return g.delta / n_trip


def pa_target(M_t, data, triplets, cfg):
    """``M_t - pa_eta * G_t`` with ``G_t`` the mean active subgradient at ``M_t``."""
    return M_t.values - cfg.pa_eta * mean_gradient(M_t, data, triplets)


def mean_hinge_loss(M, data, triplets):
    if len(triplets) == 0:
        return 0.0
    return float(np.maximum(hinge_arguments(M, triplets, data), 0.0).mean())
