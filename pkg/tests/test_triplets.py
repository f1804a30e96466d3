import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lifelong_metric import ConfigurationError, DataError, LabeledDataset, mine_triplets
from lifelong_metric.triplets import TripletSet, load_triplets, save_triplets

from conftest import blobs


def test_four_point_fixture_gives_four_triplets():
    # two classes of two; each anchor has one positive and one impostor draw
    X = np.array([[0.0, 0.0], [0.0, 1.0], [5.0, 0.0], [5.0, 1.0]])
    data = LabeledDataset(X, [0, 0, 1, 1])
    T = mine_triplets(data, neighbors_per_anchor=1, impostors_per_pair=1, seed=0)
    assert len(T) == 4
    rows = [tuple(r) for r in T]
    assert [(i, j) for i, j, _ in rows] == [(0, 1), (1, 0), (2, 3), (3, 2)]
    assert T.satisfies_labels(data.y)


def test_single_class_rejected():
    data = LabeledDataset(np.zeros((3, 2)), [1, 1, 1])
    with pytest.raises(ConfigurationError, match="need >=2 classes"):
        mine_triplets(data)


def test_singleton_class_warns_and_anchors_nothing():
    X = np.arange(10, dtype=float).reshape(5, 2)
    data = LabeledDataset(X, [0, 0, 0, 0, 1])
    with pytest.warns(UserWarning, match="single member"):
        T = mine_triplets(data, 2, 1, seed=0)
    assert 4 not in set(T.triplets[:, 0].tolist())


def test_deterministic_under_seed():
    data = blobs(15, 3, classes=3)
    a = mine_triplets(data, 3, 5, seed=9)
    b = mine_triplets(data, 3, 5, seed=9)
    assert a.triplets.tobytes() == b.triplets.tobytes()
    assert not np.array_equal(a.triplets, mine_triplets(data, 3, 5, seed=10).triplets)


def test_positives_are_nearest_with_index_ties():
    # equal distances: the lower index wins
    X = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 3.0], [9.0, 9.0], [9.0, 8.0]])
    data = LabeledDataset(X, [0, 0, 0, 0, 1, 1])
    T = mine_triplets(data, 2, 1, seed=0)
    positives = [j for i, j, _ in T if i == 0]
    assert positives == [1, 2]


def test_enumerate_mode_matches_definition():
    data = blobs(3, 2, classes=2)
    T = mine_triplets(data, mode="enumerate")
    y = data.y
    expected = [(i, j, k) for i, j, k in itertools.product(range(data.n), repeat=3)
                if i != j and y[i] == y[j] and y[i] != y[k]]
    assert sorted(map(tuple, T)) == sorted(expected)


def test_enumerate_mode_size_limit():
    with pytest.raises(ConfigurationError):
        mine_triplets(blobs(101, 2), mode="enumerate")


def test_cache_round_trip(tmp_path):
    T = mine_triplets(blobs(6, 2), 2, 3, seed=1)
    path = tmp_path / "t.txt"
    save_triplets(path, T)
    text = path.read_text().splitlines()
    assert text[0] == f"# n={T.source_n}"
    back = load_triplets(path)
    assert back.source_n == T.source_n
    assert np.array_equal(back.triplets, T.triplets)


def test_cache_missing_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0 1 2\n")
    with pytest.raises(DataError):
        load_triplets(path)


def test_tripletset_rejects_bad_index():
    with pytest.raises(IndexError):
        TripletSet([[0, 1, 3]], 3)


def test_dataset_validation():
    with pytest.raises(DataError):
        LabeledDataset(np.array([[np.nan, 1.0]]), [0])
    with pytest.raises(DataError):
        LabeledDataset(np.ones((2, 2)), [0.5, 1])


@settings(max_examples=40, deadline=None)
@given(
    st.integers(2, 4),
    st.lists(st.integers(1, 6), min_size=2, max_size=4),
    st.integers(1, 4),
    st.integers(1, 5),
    st.integers(0, 10_000),
)
def test_mining_invariants(d_hat, sizes, neighbors, impostors, seed):
    rng = np.random.default_rng(seed)
    y = np.concatenate([np.full(s, c) for c, s in enumerate(sizes)])
    data = LabeledDataset(rng.normal(size=(y.size, d_hat)), y)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        T = mine_triplets(data, neighbors, impostors, seed=seed)
        again = mine_triplets(data, neighbors, impostors, seed=seed)
    assert T.satisfies_labels(data.y)
    assert len(T) <= data.n * neighbors * impostors
    i, j, k = T.triplets.T if len(T) else (np.array([]),) * 3
    assert np.all(i != j) and np.all(i != k)
    assert T.triplets.tobytes() == again.triplets.tobytes()
