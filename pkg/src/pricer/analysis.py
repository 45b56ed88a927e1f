"""Analytic MSE decomposition and an exact enumeration oracle for small n."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pricer.network import NetworkModel, pair_outcomes
from pricer.scheme import CollaborationScheme, Dataset

MAX_ORACLE_N = 5
_CHUNK = 1 << 16


@dataclass(frozen=True)
class MseBreakdown:
    tiv: float
    piv: float
    bias_l1: float
    bias_l2: float
    s: np.ndarray
    bound: float


def s_vector(model: NetworkModel, scheme: CollaborationScheme) -> np.ndarray:
    """Expected total weight ``S_i = sum_j p_j P_ij A_ij`` of node i's data at the PS."""
    return (model.P * scheme.A) @ model.p


def tiv_terms(model: NetworkModel, scheme: CollaborationScheme) -> np.ndarray:
    """The four unscaled sums making up the topology-induced variance."""
    p, P, E, A = model.p, model.P, model.E, scheme.A
    s = s_vector(model, scheme)
    t1 = np.sum(p[None, :] * P * (1 - P) * A**2)
    col = np.sum(P * A, axis=0)
    t2 = np.sum(p * (1 - p) * col**2)
    t3 = np.sum(np.outer(p, p) * (E - P * P.T) * A * A.T)
    t4 = np.sum(s - 1.0) ** 2
    return np.array([t1, t2, t3, t4])


def tiv(model: NetworkModel, scheme: CollaborationScheme, R: float, absolute_bias: bool = False) -> float:
    """Topology-induced variance.

    With ``absolute_bias=True`` the last term uses ``(sum_i |S_i - 1|)^2``,
    which keeps the result a valid bound when the per-node biases have mixed
    signs and the data are not aligned.
    """
    t = tiv_terms(model, scheme)
    if absolute_bias:
        t[3] = np.sum(np.abs(s_vector(model, scheme) - 1.0)) ** 2
    return float(R**2 / model.n**2 * t.sum())


def piv(model: NetworkModel, scheme: CollaborationScheme, d: int) -> float:
    """Privacy-induced variance ``(d/n^2) sum_ij p_j P_ij Sigma_ij^2``."""
    return float(d / model.n**2 * np.sum(model.p[None, :] * model.P * scheme.Sigma**2))


def bound(
    model: NetworkModel, scheme: CollaborationScheme, R: float, d: int, absolute_bias: bool = False
) -> MseBreakdown:
    s = s_vector(model, scheme)
    t = tiv(model, scheme, R, absolute_bias)
    v = piv(model, scheme, d)
    return MseBreakdown(
        tiv=t,
        piv=v,
        bias_l1=float(np.sum(np.abs(s - 1))),
        bias_l2=float(np.sum((s - 1) ** 2)),
        s=s,
        bound=t + v,
    )


def _factors(model: NetworkModel):
    """Independent random factors as lists of (value-tuple, prob) cells."""
    n = model.n
    factors = []
    for k in range(n):
        cells = [((1,), model.p[k]), ((0,), 1.0 - model.p[k])]
        factors.append(("ps", (k,), [c for c in cells if c[1] > 0]))
    for i in range(n):
        for j in range(i + 1, n):
            cells = [((a, b), pr) for a, b, pr in pair_outcomes(model, i, j) if pr > 0]
            factors.append(("pair", (i, j), cells))
    return factors


def exact_mse_terms(data: Dataset, model: NetworkModel, scheme: CollaborationScheme) -> tuple[float, float]:
    """Exact ``(topology_term, noise_term)`` of the MSE by full enumeration.

    Every joint outcome of the PS links and of each node pair is visited
    with its probability. The data-dependent error uses the actual vectors;
    the Gaussian noise contributes its variance analytically.
    """
    n = model.n
    if n > MAX_ORACLE_N:
        raise ValueError(f"exact oracle supports n <= {MAX_ORACLE_N}, got {n}")
    if not (data.n == n == scheme.n):
        raise ValueError("dimension mismatch")
    factors = _factors(model)
    radix = np.array([len(f[2]) for f in factors], dtype=np.int64)
    total = int(np.prod(radix))
    X, A, S2, d = data.X, scheme.A, scheme.Sigma**2, data.d
    topo = 0.0
    noise = 0.0
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        m = idx.size
        prob = np.ones(m)
        tau_ps = np.zeros((m, n))
        tau = np.zeros((m, n, n))
        tau[:, np.arange(n), np.arange(n)] = 1.0
        rem = idx
        for (kind, key, cells), r in zip(factors, radix):
            digit = rem % r
            rem = rem // r
            vals = np.array([c[0] for c in cells], dtype=float)[digit]
            prob *= np.array([c[1] for c in cells])[digit]
            if kind == "ps":
                tau_ps[:, key[0]] = vals[:, 0]
            else:
                i, j = key
                tau[:, i, j] = vals[:, 0]
                tau[:, j, i] = vals[:, 1]
        w = tau_ps[:, None, :] * tau
        coef = (w * A).sum(axis=2) - 1.0
        dev = coef @ X / n
        topo += float(prob @ np.sum(dev**2, axis=1))
        noise += float(prob @ ((w * S2).sum(axis=(1, 2)))) * d / n**2
    return topo, noise


def exact_mse(data: Dataset, model: NetworkModel, scheme: CollaborationScheme) -> float:
    topo, noise = exact_mse_terms(data, model, scheme)
    return topo + noise
