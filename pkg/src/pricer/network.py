"""Stochastic network topology: intermittent node-PS and node-node links.

Links are Bernoulli. The two directions of a node pair may be correlated
through ``E[i, j] = E[tau_ij * tau_ji]``; distinct pairs are independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pricer.scheme import TrustMatrix

_TOL = 1e-12


@dataclass(frozen=True)
class NetworkModel:
    """Connectivity probabilities of an intermittently connected network.

    Attributes:
        p: length-n node -> PS success probabilities.
        P: n x n node -> node success probabilities, ``P[i, j]`` for ``i -> j``.
        E: symmetric n x n matrix of ``E[tau_ij * tau_ji]``. Defaults to the
            independent value ``P * P.T`` (diagonal 1).
    """

    p: np.ndarray
    P: np.ndarray
    E: np.ndarray | None = None

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        P = np.array(self.P, dtype=float)
        n = p.shape[0]
        if p.ndim != 1 or P.shape != (n, n):
            raise ValueError(f"shape mismatch: p {p.shape}, P {P.shape}")
        E = P * P.T if self.E is None else np.array(self.E, dtype=float)
        if E.shape != (n, n):
            raise ValueError(f"E must be {n}x{n}, got {E.shape}")
        for name, arr in (("p", p), ("P", P), ("E", E)):
            if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1:
                raise ValueError(f"{name} entries must lie in [0, 1]")
        if not np.allclose(np.diag(P), 1.0):
            raise ValueError("P must have unit diagonal (p_ii = 1)")
        np.fill_diagonal(E, 1.0)
        if not np.allclose(E, E.T):
            raise ValueError("E must be symmetric")
        lo = np.maximum(0.0, P + P.T - 1.0)
        hi = np.minimum(P, P.T)
        bad = (E < lo - _TOL) | (E > hi + _TOL)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValueError(
                f"infeasible joint law for pair ({i}, {j}): E={E[i, j]:.6g} "
                f"outside [{lo[i, j]:.6g}, {hi[i, j]:.6g}]"
            )
        # E >= p_ij p_ji is assumed by the MSE analysis but not needed to sample.
        for arr in (p, P, E):
            arr.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "E", E)

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def positively_correlated(self) -> bool:
        """True when every pair satisfies ``E_ij >= p_ij * p_ji``."""
        return bool(np.all(self.E >= self.P * self.P.T - _TOL))

    def to_dict(self) -> dict:
        return {"n": self.n, "p": self.p.tolist(), "P": self.P.tolist(), "E": self.E.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkModel":
        model = cls(p=d["p"], P=d["P"], E=d.get("E"))
        if "n" in d and int(d["n"]) != model.n:
            raise ValueError(f"n={d['n']} disagrees with len(p)={model.n}")
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "NetworkModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LinkRealization:
    """One draw of all link states. ``tau[i, j]`` is the ``i -> j`` link."""

    tau_ps: np.ndarray
    tau: np.ndarray


def sample_links(model: NetworkModel, rng: np.random.Generator) -> LinkRealization:
    """Draw one realization of every node-PS and node-node link."""
    tau_ps, tau = sample_links_batch(model, rng, 1)
    return LinkRealization(tau_ps=tau_ps[0], tau=tau[0])


def sample_links_batch(
    model: NetworkModel, rng: np.random.Generator, size: int
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` independent realizations.

    Returns ``(tau_ps, tau)`` with shapes ``(size, n)`` and ``(size, n, n)``.
    Each unordered pair uses one uniform variate mapped onto the 2x2 joint
    table ``[11 | 10 | 01 | 00]`` with masses ``E, p_ij - E, p_ji - E, rest``.
    """
    n = model.n
    tau_ps = (rng.random((size, n)) < model.p).astype(np.int8)
    iu, ju = np.triu_indices(n, k=1)
    u = rng.random((size, iu.size))
    p_ij = model.P[iu, ju]
    p_ji = model.P[ju, iu]
    e = model.E[iu, ju]
    fwd = u < p_ij
    bwd = (u < e) | ((u >= p_ij) & (u < p_ij + p_ji - e))
    tau = np.zeros((size, n, n), dtype=np.int8)
    tau[:, iu, ju] = fwd
    tau[:, ju, iu] = bwd
    tau[:, np.arange(n), np.arange(n)] = 1
    return tau_ps, tau


def pair_outcomes(model: NetworkModel, i: int, j: int) -> list[tuple[int, int, float]]:
    """Joint law of ``(tau_ij, tau_ji)`` as ``(tau_ij, tau_ji, prob)`` rows."""
    e = model.E[i, j]
    a, b = model.P[i, j], model.P[j, i]
    cells = [(1, 1, e), (1, 0, a - e), (0, 1, b - e), (0, 0, 1.0 - a - b + e)]
    return [(x, y, max(pr, 0.0)) for x, y, pr in cells]


def ring_topology(
    n: int,
    k_hops: int,
    p_good: float = 0.9,
    p_other: float = 0.1,
    sole_good: bool = True,
    p: list[float] | np.ndarray | None = None,
    p_c: float = 0.9,
    eps_ngbr: float = 1e3,
    eps_other: float = 1.0,
    delta: float = 1e-3,
) -> tuple[NetworkModel, TrustMatrix]:
    """Nodes on a ring with Erdos-Renyi node-node links of probability ``p_c``.

    Node i trusts j (``eps_ngbr``) when j is within ``k_hops`` ring hops,
    including j = i; every other link gets ``eps_other``. PS probabilities
    come from ``p`` when given, otherwise node 0 gets ``p_good`` and the rest
    ``p_other`` (``sole_good``), or all nodes get ``p_good``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 <= k_hops <= n / 2:
        raise ValueError(f"k_hops must lie in [0, n/2], got {k_hops}")
    if p is not None:
        p_vec = np.asarray(p, dtype=float)
        if p_vec.shape != (n,):
            raise ValueError(f"p must have length {n}")
    elif sole_good:
        p_vec = np.full(n, p_other)
        p_vec[0] = p_good
    else:
        p_vec = np.full(n, p_good)
    P = np.full((n, n), float(p_c))
    np.fill_diagonal(P, 1.0)

    idx = np.arange(n)
    gap = np.abs(idx[:, None] - idx[None, :])
    hops = np.minimum(gap, n - gap)
    eps = np.where(hops <= k_hops, eps_ngbr, eps_other).astype(float)
    trust = TrustMatrix(eps=eps, delta=np.full((n, n), float(delta)))
    return NetworkModel(p=p_vec, P=P), trust


def outage_probability(distance, scale: float = 30.0, offset: float = 5.2):
    """mmWave link success probability ``min(1, exp(-d / scale + offset))``."""
    d = np.asarray(distance, dtype=float)
    return np.minimum(1.0, np.exp(-d / scale + offset))


def scattered_topology(
    positions,
    ps_position=(0.0, 0.0),
    scale: float = 30.0,
    offset: float = 5.2,
    eps_trusted: float = 1e3,
    eps_untrusted: float = 0.01,
    delta: float = 1e-3,
    trust_threshold: float = 0.5,
) -> tuple[NetworkModel, TrustMatrix]:
    """Distance-driven topology; nodes trust each other iff ``p_ij > 0.5``."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 2 or not np.all(np.isfinite(pos)):
        raise ValueError("positions must be a finite n x 2 array")
    ps = np.asarray(ps_position, dtype=float)
    d_ps = np.linalg.norm(pos - ps, axis=1)
    d_nn = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    p = outage_probability(d_ps, scale, offset)
    P = outage_probability(d_nn, scale, offset)
    np.fill_diagonal(P, 1.0)
    trusted = P > trust_threshold
    eps = np.where(trusted, eps_trusted, eps_untrusted).astype(float)
    n = pos.shape[0]
    trust = TrustMatrix(eps=eps, delta=np.full((n, n), float(delta)))
    return NetworkModel(p=p, P=P), trust


def default_scattered_positions() -> np.ndarray:
    """Ten-node layout: three hubs near the PS, seven far nodes near hubs."""
    hubs = [(165.0, 0.0), (170.0, 120.0), (160.0, 240.0)]
    far = [(255.0, -28.0), (250.0, 30.0), (262.0, 95.0), (248.0, 150.0),
           (258.0, 212.0), (252.0, 268.0), (300.0, 0.0)]
    pts = []
    for r, deg in hubs + far:
        t = np.deg2rad(deg)
        pts.append((r * np.cos(t), r * np.sin(t)))
    return np.array(pts)


def erdos_renyi_topology(n: int, m: int, p: float, q: float) -> NetworkModel:
    """Symmetric setting: first ``m`` nodes reach the PS w.p. ``q``, others never."""
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    p_vec = np.zeros(n)
    p_vec[:m] = q
    P = np.full((n, n), float(p))
    np.fill_diagonal(P, 1.0)
    return NetworkModel(p=p_vec, P=P)
