import numpy as np
import pytest
from sklearn.datasets import make_blobs

from pricer.apps.kmeans import (
    KmeansSetup,
    KmeansState,
    inertia,
    isolated,
    kmeans_round,
    lloyd,
    relative_inertia,
    run_kmeans,
    split_iid,
)
from pricer.network import NetworkModel, ring_topology
from pricer.protocol import run_round
from pricer.scheme import CollaborationScheme, Dataset

from conftest import perfect_model


@pytest.fixture
def blobs():
    pts, _ = make_blobs(n_samples=300, centers=3, n_features=2, random_state=0)
    return pts


def test_relative_inertia_basics(blobs):
    c = blobs[:3]
    assert relative_inertia(c, blobs, c) == 1.0
    assert relative_inertia(blobs[3:6], blobs, c) >= 0.0
    with pytest.raises(ZeroDivisionError):
        relative_inertia(c, c, c)


def test_inertia_matches_direct_sum(blobs):
    c = blobs[:4]
    direct = sum(min(np.sum((x - ck) ** 2) for ck in c) for x in blobs)
    assert inertia(c, blobs) == pytest.approx(direct, rel=1e-12)


def test_empty_cluster_reseeded_from_data(blobs):
    far = np.array([[0.0, 0.0], [1e6, 1e6]])
    out = lloyd(blobs, far, 1, np.random.default_rng(0))
    assert any(np.all(out[1] == x) for x in blobs)


def test_single_node_matches_lloyd(blobs):
    init = blobs[:3].copy()
    state = KmeansState(local=(), centroids=init, round=1)
    R = 1e3
    for _ in range(3):
        state = kmeans_round(state, [blobs], perfect_model(1), CollaborationScheme.identity(1), 5, np.random.default_rng(0), R)
    ref = lloyd(blobs, init, 15, np.random.default_rng(0))
    np.testing.assert_allclose(state.centroids, ref, rtol=1e-12, atol=1e-12)


def test_replicated_data_matches_pooled_lloyd(blobs):
    n = 4
    init = blobs[[0, 100, 200]].copy()
    state = KmeansState(local=(), centroids=init, round=1)
    for _ in range(4):
        state = kmeans_round(state, [blobs] * n, perfect_model(n), CollaborationScheme.identity(n), 5, np.random.default_rng(1), 1e3)
    pooled = np.concatenate([blobs] * n)
    ref = lloyd(pooled, init, 20, np.random.default_rng(1))
    np.testing.assert_allclose(state.centroids, ref, rtol=1e-10, atol=1e-10)


def test_single_cluster_is_mean_estimation():
    rng = np.random.default_rng(3)
    nodes = [rng.normal(size=(20, 2)) * 0.1 for _ in range(3)]
    model, _ = ring_topology(3, 1, p_c=0.7, p=[0.9, 0.5, 0.3])
    scheme = CollaborationScheme(A=np.full((3, 3), 0.8), Sigma=np.full((3, 3), 0.05))
    state = KmeansState(local=(), centroids=np.zeros((1, 2)), round=1)
    out = kmeans_round(state, nodes, model, scheme, 1, np.random.default_rng(9), 1.0)
    means = np.stack([x.mean(axis=0) for x in nodes])
    expect = run_round(Dataset(X=means, R=1.0), model, scheme, np.random.default_rng(9)).ps_estimate
    # the first draws of both generators coincide because one Lloyd step with K=1 uses no randomness
    np.testing.assert_allclose(out.centroids[0], expect, rtol=1e-12)


def test_split_and_isolated():
    pts = np.arange(20.0).reshape(10, 2)
    parts = split_iid(pts, 3, np.random.default_rng(0))
    assert sum(len(p) for p in parts) == 10
    model = NetworkModel(p=np.full(3, 0.5), P=np.full((3, 3), 0.7) + 0.3 * np.eye(3))
    assert np.all(isolated(model).P == np.eye(3))


@pytest.mark.slow
def test_collaboration_helps_on_one_seed():
    res = run_kmeans(KmeansSetup(centers=4, K=4), seed=0)
    assert res.relative_no_collab > res.relative_pricer >= 1 - 1e-6
