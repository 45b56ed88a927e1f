"""Distributed K-means where the PS averages local centroids over relays."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.cluster import KMeans, kmeans_plusplus
from sklearn.datasets import make_blobs

from pricer.network import NetworkModel, default_scattered_positions, scattered_topology
from pricer.optimizer import OptimizerConfig, optimize
from pricer.protocol import run_round
from pricer.scheme import CollaborationScheme, Dataset, TrustMatrix


@dataclass(frozen=True)
class KmeansState:
    local: tuple  # per-node K x d arrays
    centroids: np.ndarray
    round: int = 0
    inertia: tuple = ()


def inertia(centroids: np.ndarray, data: np.ndarray) -> float:
    """Sum of squared distances from each point to its nearest centroid."""
    d2 = ((data[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).sum())


def relative_inertia(centroids: np.ndarray, data: np.ndarray, baseline: np.ndarray) -> float:
    base = inertia(baseline, data)
    if base == 0:
        raise ZeroDivisionError("baseline inertia is zero; ratio undefined")
    return inertia(centroids, data) / base


def lloyd(points: np.ndarray, centroids: np.ndarray, iters: int, rng: np.random.Generator) -> np.ndarray:
    """Plain Lloyd iterations. An empty cluster restarts at a random local point."""
    c = np.array(centroids, dtype=float)
    for _ in range(iters):
        lab = ((points[:, None, :] - c[None, :, :]) ** 2).sum(axis=2).argmin(axis=1)
        for k in range(c.shape[0]):
            mask = lab == k
            if mask.any():
                c[k] = points[mask].mean(axis=0)
            else:
                c[k] = points[rng.integers(points.shape[0])]
    return c


def _clip(block: np.ndarray, R: float) -> np.ndarray:
    norm = np.linalg.norm(block)
    return block if norm <= R else block * (R / norm)


def kmeans_round(
    state: KmeansState,
    node_data: list,
    model: NetworkModel,
    scheme: CollaborationScheme,
    local_iters: int,
    rng: np.random.Generator,
    R: float,
    K: int | None = None,
) -> KmeansState:
    """Local Lloyd steps on every node, then one relayed averaging round.

    Round 0 seeds each node with K-means++ on its own points. Each node's
    K x d centroid block is flattened into one vector, clipped to radius
    ``R``, and averaged through the protocol.
    """
    K = state.centroids.shape[0] if K is None else K
    local = []
    for pts in node_data:
        if state.round == 0:
            seed = int(rng.integers(2**31 - 1))
            init, _ = kmeans_plusplus(pts, n_clusters=K, random_state=seed)
        else:
            init = state.centroids
        local.append(lloyd(pts, init, local_iters, rng))
    d = local[0].shape[1]
    X = np.stack([_clip(c.ravel(), R) for c in local])
    out = run_round(Dataset(X=X, R=R), model, scheme, rng)
    cent = out.ps_estimate.reshape(K, d)
    pooled = np.concatenate(node_data)
    return KmeansState(tuple(local), cent, state.round + 1, state.inertia + (inertia(cent, pooled),))


def split_iid(points: np.ndarray, n: int, rng: np.random.Generator) -> list:
    idx = rng.permutation(points.shape[0])
    return [points[part] for part in np.array_split(idx, n)]


@dataclass(frozen=True)
class KmeansSetup:
    n_points: int = 2000
    K: int = 10
    centers: int | None = None  # blob count, defaults to K
    d: int = 2
    cluster_std: float = 1.0
    center_box: tuple = (-10.0, 10.0)
    rounds: int = 10
    local_iters: int = 5
    lam: float = 1.0
    max_iters: int = 20000
    eps_trusted: float = 1e3
    eps_untrusted: float = 0.01
    delta: float = 1e-3
    r_factor: float = 1.5
    positions: list | None = None


@dataclass
class KmeansResult:
    relative_pricer: float
    relative_no_collab: float
    history_pricer: list = field(default_factory=list)
    history_no_collab: list = field(default_factory=list)
    R: float = 0.0


def isolated(model: NetworkModel) -> NetworkModel:
    """Same PS links, no node-node links."""
    return NetworkModel(p=model.p, P=np.eye(model.n))


def _scheme_for(model, trust, R, d_eff, setup: KmeansSetup, seed: int) -> CollaborationScheme:
    # Dividing the objective by R^2 leaves a problem in (A, Sigma / R) with
    # weight lam / R^2 on the bias, so solve at unit radius and rescale.
    cfg = OptimizerConfig(lam=setup.lam, bias_norm="l2", max_iters=setup.max_iters, seed=seed)
    unit = optimize(model, trust, 1.0, d_eff, cfg).scheme
    return CollaborationScheme(A=unit.A, Sigma=unit.Sigma * R)


def run_kmeans(setup: KmeansSetup, seed: int) -> KmeansResult:
    """Blobs on the scattered layout: relayed aggregation vs no collaboration.

    Both runs share the data split and the round-0 local seeding; the
    baseline is sklearn's KMeans on the pooled data, run to convergence.
    """
    rng = np.random.default_rng(seed)
    pos = default_scattered_positions() if setup.positions is None else np.asarray(setup.positions)
    model, trust = scattered_topology(pos, eps_trusted=setup.eps_trusted, eps_untrusted=setup.eps_untrusted, delta=setup.delta)
    n = model.n
    pts, _ = make_blobs(
        n_samples=setup.n_points, centers=setup.centers or setup.K, n_features=setup.d, cluster_std=setup.cluster_std,
        center_box=setup.center_box, random_state=int(rng.integers(2**31 - 1)),
    )
    nodes = split_iid(pts, n, rng)
    central = KMeans(n_clusters=setup.K, n_init=10, tol=0.0, random_state=int(rng.integers(2**31 - 1))).fit(pts)

    # R from the round-0 local centroid blocks, with a safety factor.
    seeds0 = [int(s) for s in rng.integers(2**31 - 1, size=n)]
    norms = [np.linalg.norm(kmeans_plusplus(x, n_clusters=setup.K, random_state=s)[0]) for x, s in zip(nodes, seeds0)]
    R = setup.r_factor * max(norms)
    d_eff = setup.K * setup.d
    run_seed = int(rng.integers(2**31 - 1))

    results = []
    for net in (model, isolated(model)):
        scheme = _scheme_for(net, trust, R, d_eff, setup, seed)
        r = np.random.default_rng(run_seed)
        state = KmeansState(local=(), centroids=np.zeros((setup.K, setup.d)))
        for _ in range(setup.rounds):
            state = kmeans_round(state, nodes, net, scheme, setup.local_iters, r, R, setup.K)
        results.append(state)
    rel = [relative_inertia(s.centroids, pts, central.cluster_centers_) for s in results]
    base = inertia(central.cluster_centers_, pts)
    return KmeansResult(
        relative_pricer=rel[0],
        relative_no_collab=rel[1],
        history_pricer=[v / base for v in results[0].inertia],
        history_no_collab=[v / base for v in results[1].inertia],
        R=R,
    )
