"""Closed-form collaboration for the symmetric random-graph setting.

Nodes ``0..m-1`` reach the PS with probability ``q``; the other ``n - m``
never do and rely on relays. Every node-node link succeeds with probability
``p``. By symmetry the scheme has three free values: the self weight
``gamma``, the relay weight ``alpha`` from a disconnected node to a
connected one, and the noise ``sigma`` on those links.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pricer.network import NetworkModel, erdos_renyi_topology
from pricer.optimizer import project_cone
from pricer.privacy import Unbounded
from pricer.scheme import CollaborationScheme, TrustMatrix

LAMBDA_INF = math.inf


@dataclass(frozen=True)
class ErConfig:
    n: int
    m: int
    p: float
    q: float
    eps: float
    delta: float
    R: float = 1.0
    d: int = 1
    lam: float = LAMBDA_INF

    def __post_init__(self):
        if not 1 <= self.m <= self.n:
            raise ValueError("need 1 <= m <= n")
        if not (0 < self.p <= 1 and 0 < self.q <= 1):
            raise ValueError("p and q must lie in (0, 1]")
        if self.eps <= 0 or not 0 < self.delta <= 1:
            raise ValueError("need eps > 0 and delta in (0, 1]")
        if self.R <= 0 or self.d < 1:
            raise ValueError("need R > 0 and d >= 1")
        if not self.lam > 0:
            raise ValueError("lambda must be positive (use LAMBDA_INF for the unbiased limit)")

    @property
    def xi(self) -> float:
        return 2.0 * math.sqrt(2.0 * math.log(1.25 / self.delta))

    @property
    def slope(self) -> float:
        return self.xi * self.R / self.eps


def closed_form(cfg: ErConfig) -> tuple[float, float, float]:
    """Optimal ``(alpha, gamma, sigma)`` for the L2-regularized problem.

    With ``n == m`` nobody relays, the relay weight does not enter the
    objective, and ``alpha = sigma = 0`` is returned.
    """
    n, m, p, q, R, lam = cfg.n, cfg.m, cfg.p, cfg.q, cfg.R, cfg.lam
    if m * p * q == 0:
        raise ZeroDivisionError("m p q must be positive")
    if n == m:
        alpha = 0.0
        gamma = 1.0 / q if math.isinf(lam) else (R**2 / n + lam) / (R**2 / n**2 * (1 + (m - 1) * q) + lam * q)
    elif math.isinf(lam):
        alpha = 1.0 / (m * p * q)
        gamma = 1.0 / q
    else:
        kappa = 1 - p + cfg.d * cfg.xi**2 / cfg.eps**2
        spread = 1 + (m - 1) * q
        a = R**2 / (lam * n**2)
        b = R**2 / (lam * m * n)
        denom = a * kappa * (a * spread + q) + m * p * q * (b * spread + q)
        alpha = q / denom * (R**2 / (lam * n) + 1)
        c = R**2 / n**2
        gamma = (c * (n - spread * (n - m) * p * alpha) + lam) / (c * spread + lam * q)
    return alpha, gamma, cfg.slope * alpha


def mse_at_lambda_inf(cfg: ErConfig) -> float:
    """MSE of the unbiased closed-form scheme."""
    n, m, p, q, R = cfg.n, cfg.m, cfg.p, cfg.q, cfg.R
    relay = (n - m) / (n**2 * m * p * q) * (1 - p + cfg.d * cfg.xi**2 / cfg.eps**2)
    return R**2 * (relay + (1 - q) / (m * q))


def no_collab_mse(cfg: ErConfig, q_prime: float):
    """MSE of inverse-probability weighting when nodes only use their own PS link.

    ``q_prime`` is the PS probability of the otherwise disconnected nodes.
    """
    if q_prime < 0 or q_prime > 1:
        raise ValueError("q_prime must lie in [0, 1]")
    if q_prime == 0 and cfg.n > cfg.m:
        return Unbounded.INFINITE
    n, m = cfg.n, cfg.m
    rest = (n - m) / q_prime if n > m else 0.0
    return cfg.R**2 / n**2 * (m / cfg.q + rest - n)


def expand_scheme(
    cfg: ErConfig, alpha: float, gamma: float, sigma: float
) -> tuple[NetworkModel, CollaborationScheme, TrustMatrix]:
    """Full matrices for the symmetric values, plus the model and uniform trust."""
    n, m = cfg.n, cfg.m
    model = erdos_renyi_topology(n, m, cfg.p, cfg.q)
    A = np.zeros((n, n))
    S = np.zeros((n, n))
    A[m:, :m] = alpha
    S[m:, :m] = sigma
    np.fill_diagonal(A, gamma)
    trust = TrustMatrix.uniform(n, cfg.eps, cfg.delta)
    return model, CollaborationScheme(A=A, Sigma=S), trust


def symmetric_objective(cfg: ErConfig, alpha: float, gamma: float, sigma: float) -> float:
    """Topology variance + privacy variance + lambda * L2 bias in the three values."""
    n, m, p, q, R, d = cfg.n, cfg.m, cfg.p, cfg.q, cfg.R, cfg.d
    w = gamma + (n - m) * p * alpha
    tiv = R**2 / n**2 * (
        m * (n - m) * q * p * (1 - p) * alpha**2 + m * q * (1 - q) * w**2 + (m * q * w - n) ** 2
    )
    piv = d / n**2 * q * p * m * (n - m) * sigma**2
    bias = m * (q * gamma - 1) ** 2 + (n - m) * (m * q * p * alpha - 1) ** 2
    lam = 0.0 if math.isinf(cfg.lam) else cfg.lam
    return tiv + piv + lam * bias


def symmetric_gradient(cfg: ErConfig, alpha: float, gamma: float, sigma: float) -> np.ndarray:
    n, m, p, q, R, d = cfg.n, cfg.m, cfg.p, cfg.q, cfg.R, cfg.d
    lam = 0.0 if math.isinf(cfg.lam) else cfg.lam
    c = R**2 / n**2
    w = gamma + (n - m) * p * alpha
    dw = 2 * m * q * (1 - q) * w + 2 * m * q * (m * q * w - n)
    ga = c * (2 * m * (n - m) * q * p * (1 - p) * alpha + dw * (n - m) * p)
    ga += lam * 2 * (n - m) * (m * q * p * alpha - 1) * m * q * p
    gg = c * dw + lam * 2 * m * (q * gamma - 1) * q
    gs = 2 * d / n**2 * q * p * m * (n - m) * sigma
    return np.array([ga, gg, gs])


def _hessian(cfg: ErConfig) -> np.ndarray:
    # The objective is quadratic, so differences of gradients are exact.
    g0 = symmetric_gradient(cfg, 0.0, 0.0, 0.0)
    return np.column_stack([symmetric_gradient(cfg, *e) - g0 for e in np.eye(3)])


def symmetric_pgd(
    cfg: ErConfig, max_iters: int = 200_000, tol: float = 1e-14, start=(0.0, 0.0, 0.0)
) -> tuple[float, float, float]:
    """Projected gradient descent on the three symmetric values.

    ``(alpha, sigma)`` is projected onto the privacy cone after each step;
    ``gamma`` is unconstrained. Step size is ``1 / L`` with ``L`` the
    largest Hessian eigenvalue.
    """
    if math.isinf(cfg.lam):
        raise ValueError("numeric descent needs a finite lambda")
    L = float(np.linalg.eigvalsh(_hessian(cfg)).max())
    eta = 1.0 / L
    x = np.array(start, dtype=float)
    for _ in range(max_iters):
        g = symmetric_gradient(cfg, *x)
        y = x - eta * g
        a, s = project_cone(y[0], y[2], cfg.slope)
        nxt = np.array([a, y[1], s])
        if np.max(np.abs(nxt - x)) <= tol * max(1.0, np.max(np.abs(nxt))):
            x = nxt
            break
        x = nxt
    return float(x[0]), float(x[1]), float(x[2])
