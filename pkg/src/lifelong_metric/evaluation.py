"""kNN evaluation under learned metrics and sequential-task experiments."""

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .data import stratified_split
from .engine import EngineConfig, LifelongMetricLearner
from .exceptions import ConfigurationError
from .metric import MetricKind, MetricMatrix

__all__ = [
    "knn_classify",
    "knn_predict",
    "knn_error",
    "EvalReport",
    "SequenceResult",
    "run_sequence_experiment",
    "sweep_dimension",
    "sweep_sparsity",
]

DEFAULT_K = 3
DEFAULT_SPLITS = (0.25, 0.25, 0.5)


def _scores(M, train_X, Q):
    """Ranking keys (smaller is nearer), shape (n_queries, n_train)."""
    A = M.values
    if M.kind is MetricKind.SIMILARITY:
        return -(Q @ A @ train_X.T)
    out = np.empty((Q.shape[0], train_X.shape[0]))
    for start in range(0, Q.shape[0], 256):
        diff = Q[start:start + 256, None, :] - train_X[None, :, :]
        out[start:start + 256] = np.einsum("qna,ab,qnb->qn", diff, A, diff)
    return out


def _vote(keys, labels, k):
    order = np.argsort(keys, kind="stable")[:k]
    near_labels = labels[order]
    cand = np.unique(near_labels)
    counts = np.array([(near_labels == c).sum() for c in cand])
    agg = np.array([keys[order][near_labels == c].sum() for c in cand])
    # most votes, then smallest aggregate key, then lowest label
    best = np.lexsort((cand, agg, -counts))[0]
    return cand[best]


def knn_predict(M, train, queries, k=DEFAULT_K):
    """Predict labels for each row of ``queries`` by k-nearest-neighbor vote under ``M``.

    Distance metrics rank neighbors by ascending ``d_M``, similarity metrics by
    descending ``s_M``; equal keys go to the lower training index.  Vote ties
    go to the label with the smaller summed distance (larger summed
    similarity), then to the lower label.
    """
    if train.n == 0:
        raise ConfigurationError("empty training set")
    if not 1 <= k <= train.n:
        raise ConfigurationError(f"k must lie in [1, {train.n}], got {k}")
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    keys = _scores(M, train.X, Q)
    return np.array([_vote(row, train.y, k) for row in keys])


def knn_classify(M, train, query, k=DEFAULT_K):
    """Label of a single query vector; see :func:`knn_predict`."""
    return knn_predict(M, train, np.asarray(query, dtype=float)[None, :], k)[0]


def knn_error(M, train, test, k=DEFAULT_K):
    if test is None or test.n == 0:
        return float("nan")
    return float(np.mean(knn_predict(M, train, test.X, k) != test.y))


@dataclass
class EvalReport:
    per_task_error: dict
    per_task_std: dict
    avg_error: float
    train_seconds: float
    reps: int
    single_task_error: dict = field(default_factory=dict)
    single_task_avg: float = float("nan")
    avg_validation_error: float = float("nan")


@dataclass
class SequenceResult:
    """Outcome of a sequential experiment.

    ``stage_errors[r, s, t]`` is task ``t``'s test error in repetition ``r``
    after the ``s``-th task arrived; entries with ``t > s`` are NaN.
    ``records`` holds one dict per (stage, task, rep) and ``learners`` the
    final learner of each repetition.
    """

    report: EvalReport
    task_ids: list
    stage_errors: np.ndarray
    single_task_errors: np.ndarray
    records: list
    learners: list = field(default_factory=list)

    @property
    def stage_matrix(self):
        """Mean over repetitions; cells before a task exists stay NaN."""
        if not self.stage_errors.size:
            return self.stage_errors
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN upper triangle
            return np.nanmean(self.stage_errors, axis=0)


def _rep_config(cfg, seed):
    return replace(cfg, seed=seed, base=replace(cfg.base, seed=seed))


def run_sequence_experiment(tasks, splits=DEFAULT_SPLITS, cfg=None, reps=1, seeds=None,
                            k=DEFAULT_K):
    """Train tasks one after another and track every learned task's test error.

    Parameters
    ----------
    tasks : list of LabeledDataset
        Presented in list order; at least two.
    splits : (train, validation, test) fractions
        Stratified per class and re-drawn for every repetition.
    cfg : EngineConfig
    reps : int
    seeds : sequence of int, optional
        One per repetition, defaulting to ``cfg.seed + r``.  The seed drives the
        splits, the dictionary initialization, triplet mining and the base learner.
    k : int
        Neighbors for kNN.

    Returns
    -------
    SequenceResult
    """
    cfg = cfg or EngineConfig()
    if len(tasks) < 2:
        raise ConfigurationError("a sequence experiment needs at least 2 tasks")
    if reps < 1:
        raise ConfigurationError("reps must be >= 1")
    seeds = list(seeds) if seeds is not None else [cfg.seed + r for r in range(reps)]
    if len(seeds) != reps:
        raise ConfigurationError(f"got {len(seeds)} seeds for {reps} repetitions")

    m = len(tasks)
    task_ids = [t.task_id for t in tasks]
    if len(set(task_ids)) != m:
        raise ConfigurationError("task ids must be unique")
    stage = np.full((reps, m, m), np.nan)
    single = np.full((reps, m), np.nan)
    val_err = np.full((reps, m), np.nan)
    records = []
    learners = []
    total_seconds = 0.0

    for r, seed in enumerate(seeds):
        split_sets = [stratified_split(task, splits, seed * 1000 + t) for t, task in enumerate(tasks)]
        learner = LifelongMetricLearner(_rep_config(cfg, seed))
        for s, (train, _, _) in enumerate(split_sets):
            tic = time.perf_counter()
            learner.observe_batch(train)
            seconds = time.perf_counter() - tic
            total_seconds += seconds
            base = learner.active.base_metric
            if base is None:
                base = MetricMatrix(np.eye(train.d_hat), cfg.kind)
            single[r, s] = knn_error(base, train, split_sets[s][2], k)
            for t in range(s + 1):
                tr, _, te = split_sets[t]
                err = knn_error(learner.task_metric(task_ids[t]), tr, te, k)
                stage[r, s, t] = err
                records.append({"stage": s, "task": task_ids[t], "rep": r, "error": err,
                                "seconds": seconds if t == s else 0.0})
        for t in range(m):
            tr, va, _ = split_sets[t]
            val_err[r, t] = knn_error(learner.task_metric(task_ids[t]), tr, va, k)
        learners.append(learner)

    final = stage[:, m - 1, :]
    report = EvalReport(
        per_task_error={tid: float(final[:, t].mean()) for t, tid in enumerate(task_ids)},
        per_task_std={tid: float(final[:, t].std()) for t, tid in enumerate(task_ids)},
        avg_error=float(final.mean()),
        train_seconds=total_seconds,
        reps=reps,
        single_task_error={tid: float(single[:, t].mean()) for t, tid in enumerate(task_ids)},
        single_task_avg=float(single.mean()),
        avg_validation_error=float(np.nanmean(val_err)) if np.isfinite(val_err).any() else float("nan"),
    )
    return SequenceResult(report, task_ids, stage, single, records, learners)


def _sweep(tasks, name, values, cfg, reps, seeds, splits, k):
    out = {}
    for v in values:
        try:
            point_cfg = replace(cfg, **{name: v})
            out[v] = run_sequence_experiment(tasks, splits, point_cfg, reps, seeds, k).report.avg_error
        except ConfigurationError as exc:
            warnings.warn(f"{name}={v}: {exc}", stacklevel=3)
            out[v] = float("nan")
    return out


def sweep_dimension(tasks, d_values, cfg, reps=1, seeds=None, splits=DEFAULT_SPLITS, k=DEFAULT_K):
    """Average final-stage test error for each dictionary size ``d``.

    Points that cannot be run (for example ``d > d_hat``) map to NaN with a warning.
    """
    return _sweep(tasks, "d", d_values, cfg, reps, seeds, splits, k)


def sweep_sparsity(tasks, lambda_values, cfg, reps=1, seeds=None, splits=DEFAULT_SPLITS,
                   k=DEFAULT_K):
    """Average final-stage test error for each off-diagonal sparsity weight."""
    return _sweep(tasks, "lambda_t", lambda_values, cfg, reps, seeds, splits, k)
