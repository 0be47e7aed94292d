import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwpnet.clustering import ClusterModel, NotFittedError, kmeans_assign, kmeans_fit
from cwpnet.model import ModelConfig


def purity(labels, truth):
    total = 0
    for c in np.unique(labels):
        total += np.bincount(truth[labels == c]).max()
    return total / len(truth)


def two_blobs(seed, n=200, sep=10.0, dim=2):
    r = np.random.default_rng(seed)
    truth = np.repeat([0, 1], n // 2)
    centres = np.zeros((2, dim))
    centres[1, 0] = sep
    return centres[truth] + r.normal(size=(n, dim)), truth


def test_four_points_two_clusters():
    pts = np.array([[0, 0], [0, 1], [10, 0], [10, 1]], dtype=float)
    model = kmeans_fit(pts, 2, seed=0)
    assert model.labels[0] == model.labels[1] != model.labels[2] == model.labels[3]


def test_k_equals_n_has_zero_inertia():
    pts = np.random.default_rng(1).normal(size=(6, 3))
    model = kmeans_fit(pts, 6, seed=2)
    assert model.inertia == 0.0
    assert sorted(model.labels.tolist()) == list(range(6))


def test_blob_purity():
    x, truth = two_blobs(3)
    model = kmeans_fit(x, 2, seed=0)
    assert purity(model.labels, truth) == 1.0


def test_too_few_points():
    with pytest.raises(ValueError, match="at least"):
        kmeans_fit(np.zeros((3, 2)), 4)


def test_deterministic_rerun_bitwise():
    x = np.random.default_rng(4).normal(size=(50, 8))
    a, b = kmeans_fit(x, 5, seed=7), kmeans_fit(x, 5, seed=7)
    assert a.centroids.tobytes() == b.centroids.tobytes()
    assert np.array_equal(a.labels, b.labels)


def test_assign_exact_centroid_and_tie():
    model = ClusterModel(k=3, centroids=np.array([[0.0, 0.0], [2.0, 0.0], [5.0, 5.0]]))
    assert kmeans_assign(model, np.array([5.0, 5.0])) == 2
    assert kmeans_assign(model, np.array([1.0, 0.0])) == 0


def test_assign_matches_exhaustive_oracle():
    r = np.random.default_rng(5)
    cent = r.normal(size=(5, 4))
    model = ClusterModel(k=5, centroids=cent)
    for rep in r.normal(size=(30, 4)):
        dists = [float(np.sum((rep - c) ** 2)) for c in cent]
        assert kmeans_assign(model, rep) == dists.index(min(dists))


def test_assign_unfitted():
    with pytest.raises(NotFittedError):
        kmeans_assign(ClusterModel(k=2), np.zeros(2))


def test_default_cluster_count():
    assert ModelConfig().num_clusters == 5


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 6), st.integers(1, 5))
def test_fit_invariants(seed, k, dim):
    x = np.random.default_rng(seed).normal(size=(20, dim))
    model = kmeans_fit(x, k, seed=seed)
    assert model.centroids.shape == (k, dim)
    assert np.all(np.isfinite(model.centroids))
    assert np.array_equal(kmeans_assign(model, x), model.labels)
    assert model.n_iter <= 100
