"""
Learning tasks one after another
================================

Six synthetic two-class tasks share one hidden 5-dimensional subspace of a
20-dimensional feature space.  The learner sees them in order.  For each task
it fits a base metric, solves sparse weights against the shared dictionary and
then nudges the dictionary.  Raw samples of a task are dropped as soon as the
next task arrives; only a weight matrix and a gradient summary stay behind.

The stage matrix printed below has one row per arrival.  Row s holds the test
error of every task learned so far, measured after task s was trained.
"""

import warnings

import numpy as np

from lifelong_metric import (
    BaseLearnerConfig,
    EngineConfig,
    SyntheticSpec,
    generate_synthetic,
    run_sequence_experiment,
)

# small per-class training sets trigger a harmless neighborhood-size warning
warnings.simplefilter("ignore", UserWarning)

spec = SyntheticSpec(d_hat=20, d_true=5, num_tasks=6, samples_per_class=100, noise_sigma=0.5,
                     separation=0.5, seed=0)
tasks, truth = generate_synthetic(spec)

# the same settings as demos/synthetic_benchmark.cfg
cfg = EngineConfig(d=5, lambda_t=0.3, gamma=0.05, dict_step=0.1, dict_steps=60, delta_at="live",
                   base=BaseLearnerConfig(kind="distance", iterations=200))
res = run_sequence_experiment(tasks, (0.25, 0.25, 0.5), cfg, reps=1, seeds=[0])

np.set_printoptions(precision=3, suppress=True)
print("stage matrix (rows: after task s, columns: task t):")
print(res.stage_matrix)
print("single-task base learner errors:", res.single_task_errors[0])
print(f"average error, lifelong {res.report.avg_error:.3f} vs. base learner alone "
      f"{res.report.single_task_avg:.3f}")

# What did the learner keep?  One d x d weight matrix and one d_hat x d_hat
# gradient summary per task, plus the shared dictionary.
learner = res.learners[0]
for tid, s in learner.tasks.items():
    print(tid, "W", s.W.shape, "delta", s.delta.shape, "triplets", s.triplet_count)
print("checkpoint size:", len(learner.state_bytes()), "bytes")

# How much of the hidden subspace does the dictionary span?  1.0 means all of it.
Q, _ = np.linalg.qr(learner.dictionary.L0.T)
print("captured fraction of the true subspace:",
      round(float(np.linalg.norm(truth.L0 @ Q) ** 2 / spec.d_true), 3))
