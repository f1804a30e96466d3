"""The lifelong dictionary: ``d`` shared basis rows in ``d_hat`` dimensions.

Every task metric is represented as ``L0^T W_t L0``.  The dictionary is seeded
from the first task by local Fisher discriminant analysis and then refined with
gradient steps built from stored per-task summaries, never raw samples.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from sklearn.cluster import KMeans

from ._textio import format_matrix, parse_matrix
from .exceptions import ConfigurationError, DivergenceError, ShapeError

__all__ = [
    "LifelongDictionary",
    "TaskSummary",
    "init_dictionary",
    "fisher_directions",
    "dictionary_objective",
    "dictionary_gradient",
    "refine_dictionary",
    "save_dictionary",
    "load_dictionary",
    "DEFAULT_J_SCALES",
]

log = logging.getLogger(__name__)

DEFAULT_J_SCALES = (10, 20, 50)
DUPLICATE_COSINE = 0.99
RANK_TOL = 1e-6


@dataclass(frozen=True)
class LifelongDictionary:
    L0: np.ndarray

    def __post_init__(self):
        L0 = np.array(self.L0, dtype=float)
        if L0.ndim != 2:
            raise ShapeError(f"dictionary must be 2-D, got shape {L0.shape}")
        if L0.shape[0] > L0.shape[1]:
            raise ShapeError(f"d={L0.shape[0]} exceeds d_hat={L0.shape[1]}")
        if not np.all(np.isfinite(L0)):
            raise DivergenceError("dictionary has non-finite entries")
        L0.flags.writeable = False
        object.__setattr__(self, "L0", L0)

    @property
    def d(self):
        return self.L0.shape[0]

    @property
    def d_hat(self):
        return self.L0.shape[1]

    def metric(self, W):
        """``L0^T W L0``."""
        return self.L0.T @ np.asarray(W, dtype=float) @ self.L0


@dataclass
class TaskSummary:
    """What is kept about a task: its weights and frozen gradient summary.

    ``delta`` is the triplet-averaged loss gradient, evaluated at the base
    metric or at the task metric ``L0^T W L0`` depending on the engine's
    ``delta_at`` setting.  ``m_star`` is only held while the task is active.
    """

    task_id: str
    W: np.ndarray
    delta: np.ndarray
    triplet_count: int = 0
    kind: str = "distance"
    m_star: np.ndarray = field(default=None, repr=False)


def fisher_directions(X, y, reg=1e-6):
    """Generalized eigenpairs of between- vs. within-class scatter.

    Solves ``S_b v = w (S_w + eps I) v`` with
    ``eps = reg * trace(S_w) / d_hat`` and returns eigenvalues in descending
    order with the matching unit-norm eigenvectors as rows.
    """
    X = np.asarray(X, dtype=float)
    d_hat = X.shape[1]
    mu = X.mean(axis=0)
    S_w = np.zeros((d_hat, d_hat))
    S_b = np.zeros((d_hat, d_hat))
    for c in np.unique(y):
        Xc = X[y == c]
        mc = Xc.mean(axis=0)
        Z = Xc - mc
        S_w += Z.T @ Z
        S_b += Xc.shape[0] * np.outer(mc - mu, mc - mu)
    eps = reg * np.trace(S_w) / d_hat
    if eps <= 0:
        eps = reg
    w, V = scipy.linalg.eigh(S_b, S_w + eps * np.eye(d_hat))
    order = np.argsort(-w, kind="stable")
    vecs = V[:, order].T
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return w[order], vecs


def _canonical_sign(v):
    # largest-magnitude entry positive, ties to the lowest index
    return v if v[np.argmax(np.abs(v))] >= 0 else -v


def init_dictionary(first_task, d, num_clusters=3, J_scales=DEFAULT_J_SCALES, seed=0,
                    eigs_per_block=None):
    """Seed the dictionary from the first task by clustered local FDA.

    The task is clustered with k-means.  Around each cluster center and for
    each neighborhood size ``J``, the ``J`` nearest points of every class are
    collected and their Fisher eigenvectors harvested.  Candidates from all
    (cluster, J) blocks are ranked by eigenvalue; the top ``d`` are kept after
    unit-normalizing and greedily dropping near-duplicates (``|cos| > 0.99``)
    and candidates that fall inside the span already selected.

    Parameters
    ----------
    first_task : LabeledDataset
    d : int
        Number of dictionary rows.
    num_clusters : int
    J_scales : sequence of int
        Neighborhood sizes; each is clamped to the class size (with a warning).
    seed : int
        k-means seed.
    eigs_per_block : int, optional
        Eigenvectors harvested per (cluster, J) block; all by default.

    Returns
    -------
    LifelongDictionary
    """
    X, y = first_task.X, first_task.y
    n, d_hat = X.shape
    classes = np.unique(y)
    if d < 1 or d > d_hat:
        raise ConfigurationError(f"d must lie in [1, d_hat={d_hat}], got {d}")
    if num_clusters < 1:
        raise ConfigurationError("num_clusters must be >= 1")
    if classes.size < 2:
        raise ConfigurationError("dictionary initialization needs >=2 classes")
    if num_clusters > n:
        raise ConfigurationError(f"num_clusters={num_clusters} exceeds the {n} samples")

    km = KMeans(n_clusters=num_clusters, n_init=10, random_state=seed).fit(X)
    centers = km.cluster_centers_
    class_rows = {c: np.flatnonzero(y == c) for c in classes}
    min_class = min(len(r) for r in class_rows.values())
    for J in J_scales:
        if J > min_class:
            warnings.warn(f"J={J} exceeds the smallest class size {min_class}; clamping per class",
                          stacklevel=2)

    cand_vals, cand_vecs = [], []
    for center in centers:
        for J in J_scales:
            picked = []
            for c in classes:
                rows = class_rows[c]
                dist = np.sum((X[rows] - center) ** 2, axis=1)
                order = np.lexsort((rows, dist))
                picked.append(rows[order[: min(J, rows.size)]])
            picked = np.concatenate(picked)
            w, vecs = fisher_directions(X[picked], y[picked])
            if eigs_per_block is not None:
                w, vecs = w[:eigs_per_block], vecs[:eigs_per_block]
            cand_vals.append(w)
            cand_vecs.append(vecs)

    vals = np.concatenate(cand_vals)
    vecs = np.vstack(cand_vecs)
    # eigenvalues at round-off level are ties, broken by harvest order
    vals = np.where(vals > 1e-10 * max(vals.max(), 0.0), vals, 0.0)
    order = np.argsort(-vals, kind="stable")

    rows = []
    basis = np.zeros((0, d_hat))
    for idx in order:
        v = _canonical_sign(vecs[idx])
        if rows and np.max(np.abs(np.asarray(rows) @ v)) > DUPLICATE_COSINE:
            continue
        resid = v - basis.T @ (basis @ v)
        r = np.linalg.norm(resid)
        if r < RANK_TOL:
            continue
        rows.append(v)
        basis = np.vstack([basis, resid / r])
        if len(rows) == d:
            break
    if len(rows) < d:
        raise ConfigurationError(
            f"only {len(rows)} distinct candidate rows for d={d}; "
            "use a smaller d or more clusters / scales"
        )
    return LifelongDictionary(np.asarray(rows))


def _rows(L0):
    return L0.L0 if isinstance(L0, LifelongDictionary) else np.asarray(L0, dtype=float)


def _check_summaries(L, summaries):
    if not summaries:
        raise ValueError("need at least one task summary")
    d, d_hat = L.shape
    for s in summaries:
        if np.shape(s.W) != (d, d) or np.shape(s.delta) != (d_hat, d_hat):
            raise ShapeError(
                f"task {s.task_id!r}: W {np.shape(s.W)} / delta {np.shape(s.delta)} "
                f"do not fit a ({d}, {d_hat}) dictionary"
            )


def dictionary_gradient(L0, summaries, gamma, symmetrized=False):
    """Dictionary gradient ``(1/m) sum_t W_t^T L0 Delta_t + gamma L0``.

    With ``symmetrized=True`` the data term is the full derivative of
    ``<L0^T W_t L0, Delta_t>``, i.e. ``W_t L0 Delta_t^T + W_t^T L0 Delta_t``.
    """
    L = _rows(L0)
    _check_summaries(L, summaries)
    G = np.zeros_like(L)
    for s in summaries:
        W = np.asarray(s.W, dtype=float)
        Dt = np.asarray(s.delta, dtype=float)
        if symmetrized:
            G += W @ L @ Dt.T + W.T @ L @ Dt
        else:
            G += W.T @ L @ Dt
    return G / len(summaries) + gamma * L


def dictionary_objective(L0, summaries, gamma, symmetrized=False):
    """Linearized surrogate whose gradient is :func:`dictionary_gradient`.

    ``(c/m) sum_t <L0^T W_t L0, Delta_t> + (gamma/2) ||L0||_F^2`` with
    ``c = 1`` when symmetrized and ``c = 1/2`` otherwise; for the default form
    the match is exact when every ``W_t`` and ``Delta_t`` is symmetric.
    """
    L = _rows(L0)
    _check_summaries(L, summaries)
    c = 1.0 if symmetrized else 0.5
    data = sum(float(np.sum((L.T @ np.asarray(s.W) @ L) * np.asarray(s.delta))) for s in summaries)
    return c * data / len(summaries) + 0.5 * gamma * float(np.sum(L * L))


def refine_dictionary(L0, summaries, gamma, step=1e-3, steps=5, symmetrized=False,
                      max_halvings=5):
    """Gradient descent on the dictionary surrogate.

    Each of the ``steps`` updates is ``L0 <- L0 - step * grad``.  If a step
    would raise the surrogate, the step is halved (at most ``max_halvings``
    times); when no halving helps, refinement stops early and the current
    dictionary is returned.  The reduced step carries over to later updates.

    Raises
    ------
    DivergenceError
        If an update produces non-finite entries.
    """
    if not step > 0:
        raise ConfigurationError(f"step must be > 0, got {step}")
    if steps < 1:
        raise ConfigurationError(f"steps must be >= 1, got {steps}")
    L = _rows(L0).copy()
    obj = dictionary_objective(L, summaries, gamma, symmetrized)
    for it in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            G = dictionary_gradient(L, summaries, gamma, symmetrized)
        for _ in range(max_halvings + 1):
            with np.errstate(over="ignore", invalid="ignore"):
                cand = L - step * G
            if not np.all(np.isfinite(cand)):
                raise DivergenceError(f"dictionary step {it} with step size {step:g} is not finite")
            new_obj = dictionary_objective(cand, summaries, gamma, symmetrized)
            if new_obj <= obj:
                break
            step *= 0.5
        else:
            log.debug("dictionary refinement stalled at step %d", it)
            break
        L, obj = cand, new_obj
    return LifelongDictionary(L)


def save_dictionary(path, dictionary):
    """Write the ``d d_hat`` header followed by row-major values."""
    with open(path, "w") as fh:
        fh.write(format_matrix(dictionary.L0))


def load_dictionary(path):
    with open(path) as fh:
        return LifelongDictionary(parse_matrix(fh.read(), source=str(path)))
