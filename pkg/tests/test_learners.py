import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lifelong_metric import (
    BaseLearnerConfig,
    ConfigurationError,
    DivergenceError,
    LabeledDataset,
    MetricKind,
    MetricMatrix,
    TripletSet,
    aggregate_gradient,
    batch_distance_fit,
    mine_triplets,
    oasis_fit,
    pa_target,
    triplet_hinge_loss,
)
from lifelong_metric.learners import mean_gradient, mean_hinge_loss

from conftest import blobs

SIM = MetricKind.SIMILARITY
DIST = MetricKind.DISTANCE


def test_oasis_passive_when_margin_met():
    X = LabeledDataset(np.array([[1.0, 0.0], [5.0, 0.0], [1.0, 3.0]]), [0, 0, 1])
    M = oasis_fit(X, TripletSet([[0, 1, 2]], 3), BaseLearnerConfig(kind=SIM, iterations=50))
    assert np.array_equal(M.values, np.eye(2))


def test_oasis_one_active_triplet_huge_C_satisfies_exactly():
    X = LabeledDataset(np.array([[1.0, 0.5], [0.2, 0.1], [0.9, 0.7]]), [0, 0, 1])
    T = TripletSet([[0, 1, 2]], 3)
    assert triplet_hinge_loss(MetricMatrix(np.eye(2), SIM), (0, 1, 2), X) > 0
    M = oasis_fit(X, T, BaseLearnerConfig(kind=SIM, C=1e12, iterations=1))
    # the PA step lands exactly on the margin: s_ij - s_ik = 1
    xi, xj, xk = X.X
    gap = xi @ M.values @ (xj - xk)
    assert abs(1.0 - gap) <= 1e-10
    assert triplet_hinge_loss(M, (0, 1, 2), X) <= 1e-10


def test_oasis_tau_capped_by_C():
    X = LabeledDataset(np.array([[1.0, 0.5], [0.2, 0.1], [0.9, 0.7]]), [0, 0, 1])
    C = 1e-3
    M = oasis_fit(X, TripletSet([[0, 1, 2]], 3), BaseLearnerConfig(kind=SIM, C=C, iterations=1))
    xi, xj, xk = X.X
    step = M.values - np.eye(2)
    assert np.allclose(step, C * np.outer(xi, xj - xk))


def test_oasis_skips_zero_norm_direction():
    X = LabeledDataset(np.array([[1.0, 0.0], [2.0, 2.0], [2.0, 2.0]]), [0, 0, 1])
    M = oasis_fit(X, TripletSet([[0, 1, 2]], 3), BaseLearnerConfig(kind=SIM, iterations=10))
    assert np.array_equal(M.values, np.eye(2))


def test_oasis_deterministic_and_kind_checked():
    data = blobs(10, 3)
    T = mine_triplets(data, 2, 3, seed=0)
    cfg = BaseLearnerConfig(kind=SIM, iterations=300, seed=4)
    assert oasis_fit(data, T, cfg).values.tobytes() == oasis_fit(data, T, cfg).values.tobytes()
    with pytest.raises(ConfigurationError):
        oasis_fit(data, T, BaseLearnerConfig(kind=DIST))
    with pytest.raises(ConfigurationError):
        oasis_fit(data, TripletSet(np.empty((0, 3)), data.n), cfg)


def test_batch_distance_all_inactive_returns_identity():
    X = LabeledDataset(np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]), [0, 0, 1])
    M = batch_distance_fit(X, TripletSet([[0, 1, 2]], 3), BaseLearnerConfig(kind=DIST))
    assert np.array_equal(M.values, np.eye(2))


def test_batch_distance_scalar_closed_form():
    # d_hat = 1: m <- m - step * ((xi-xj)^2 - (xi-xk)^2) while 1 + m (xi-xj)^2 - m (xi-xk)^2 > 0
    X = LabeledDataset(np.array([[0.0], [1.0], [1.2]]), [0, 0, 1])
    step = 0.1
    M = batch_distance_fit(X, TripletSet([[0, 1, 2]], 3),
                           BaseLearnerConfig(kind=DIST, iterations=1, batch_step=step))
    # hinge argument 1 + 1 - 1.44 > 0, so the triplet is active
    expected = 1.0 - step * (1.0 - 1.44)
    assert M.values[0, 0] == pytest.approx(expected, abs=1e-15)


def test_batch_distance_loss_non_increasing_on_separable_fixture():
    data = blobs(12, 3, spread=1.0, seed=5)
    T = mine_triplets(data, 2, 4, seed=0)
    losses = []
    M = MetricMatrix(np.eye(3))
    for it in range(1, 40):
        M = batch_distance_fit(data, T, BaseLearnerConfig(kind=DIST, iterations=it, batch_step=0.01))
        losses.append(mean_hinge_loss(M, data, T))
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_batch_distance_symmetric_output():
    data = blobs(12, 4, spread=1.0)
    T = mine_triplets(data, 2, 3, seed=0)
    M = batch_distance_fit(data, T, BaseLearnerConfig(kind=DIST, iterations=50, batch_step=0.01))
    assert M.is_symmetric()


def test_batch_distance_divergence_names_iteration():
    X = LabeledDataset(np.array([[0.0], [1e150], [1.0]]), [0, 0, 1])
    with pytest.raises(DivergenceError, match="iteration 0"):
        with np.errstate(all="ignore"):
            batch_distance_fit(X, TripletSet([[0, 1, 2]], 3),
                               BaseLearnerConfig(kind=DIST, iterations=5, batch_step=1e300))


def test_pa_target_examples():
    X = LabeledDataset(np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]), [0, 0, 1])
    T = TripletSet([[0, 1, 2]], 3)
    M = MetricMatrix(np.eye(2))
    cfg = BaseLearnerConfig(kind=DIST, pa_eta=0.5)
    assert np.array_equal(pa_target(M, X, T, cfg), M.values)
    X2 = LabeledDataset(np.array([[0.0, 0.0], [1.0, 0.5], [1.2, -0.3]]), [0, 0, 1])
    assert np.array_equal(pa_target(M, X2, T, BaseLearnerConfig(kind=DIST, pa_eta=0.0)), M.values)
    delta = aggregate_gradient(M, T, X2).delta
    assert np.allclose(pa_target(M, X2, T, cfg), M.values - 0.5 * delta)


def test_mean_gradient_is_sum_over_count():
    data = blobs(8, 3, spread=0.5)
    T = mine_triplets(data, 2, 3, seed=0)
    M = MetricMatrix(np.eye(3))
    g = aggregate_gradient(M, T, data)
    assert np.allclose(mean_gradient(M, data, T), g.delta / len(T))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        BaseLearnerConfig(C=0)
    with pytest.raises(ConfigurationError):
        BaseLearnerConfig(pa_eta=-1)
    assert BaseLearnerConfig(kind="distance").kind is DIST


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 10.0))
def test_oasis_single_step_properties(seed, C):
    rng = np.random.default_rng(seed)
    X = LabeledDataset(rng.normal(size=(3, 3)), [0, 0, 1])
    T = TripletSet([[0, 1, 2]], 3)
    before = triplet_hinge_loss(MetricMatrix(np.eye(3), SIM), (0, 1, 2), X)
    M = oasis_fit(X, T, BaseLearnerConfig(kind=SIM, C=C, iterations=1))
    step = M.values - np.eye(3)
    if before == 0.0:
        assert np.array_equal(step, 0.0 * step)
    else:
        xi, xj, xk = X.X
        direction = np.outer(xi, xj - xk)
        tau = np.sum(step * direction) / np.sum(direction * direction)
        assert tau <= C * (1 + 1e-9)
        assert triplet_hinge_loss(M, (0, 1, 2), X) <= before


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 10.0))
def test_pa_target_identity_when_satisfied(seed, eta):
    rng = np.random.default_rng(seed)
    # classes 100 apart with unit noise: every triplet is inactive at M = I
    X = np.vstack([rng.normal(size=(5, 2)), rng.normal(size=(5, 2)) + [100.0, 0.0]])
    data = LabeledDataset(X, [0] * 5 + [1] * 5)
    T = mine_triplets(data, 2, 2, seed=seed)
    M = MetricMatrix(np.eye(2))
    assert aggregate_gradient(M, T, data).triplet_count == 0
    assert np.array_equal(pa_target(M, data, T, BaseLearnerConfig(kind=DIST, pa_eta=eta)), M.values)
