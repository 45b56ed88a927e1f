"""Bias-regularized MSE minimization over weights and noise levels.

Projected gradient descent: a gradient step on ``(A, Sigma)`` followed by an
entrywise Euclidean projection onto the privacy cone
``{alpha >= 0, sigma >= slope * alpha}``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from pricer.analysis import piv, s_vector, tiv
from pricer.network import NetworkModel
from pricer.scheme import CollaborationScheme, TrustMatrix, cone_slopes

BIAS_NORMS = ("l1", "l2")


@dataclass(frozen=True)
class OptimizerConfig:
    eta_alpha: float = 0.01
    eta_sigma: float = 0.01
    lam: float = 0.0
    bias_norm: str = "l2"
    max_iters: int = 2000
    tol: float = 1e-8
    window: int = 10
    seed: int = 0
    init_floor: float = 0.01
    init_jitter: float = 0.5

    def __post_init__(self):
        if self.eta_alpha <= 0 or self.eta_sigma <= 0:
            raise ValueError("step sizes must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.bias_norm not in BIAS_NORMS:
            raise ValueError(f"bias_norm must be one of {BIAS_NORMS}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 <= self.init_jitter < 1:
            raise ValueError("init_jitter must lie in [0, 1)")


@dataclass
class OptimizerTrace:
    objective: list = field(default_factory=list)
    tiv: list = field(default_factory=list)
    piv: list = field(default_factory=list)
    bias: list = field(default_factory=list)
    feasible: list = field(default_factory=list)
    scheme: CollaborationScheme | None = None
    converged: bool = False

    def append(self, tiv: float, piv: float, bias: float, lam: float, feasible: bool):
        self.objective.append(tiv + piv + lam * bias)
        self.tiv.append(tiv)
        self.piv.append(piv)
        self.bias.append(bias)
        self.feasible.append(feasible)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "objective", "tiv", "piv", "bias"])
        for k, row in enumerate(zip(self.objective, self.tiv, self.piv, self.bias)):
            w.writerow([k, *(repr(float(x)) for x in row)])
        return buf.getvalue()


class OptimizerError(RuntimeError):
    def __init__(self, message: str, trace: OptimizerTrace):
        super().__init__(message)
        self.trace = trace


def bias(model: NetworkModel, scheme: CollaborationScheme, bias_norm: str = "l2") -> float:
    dev = s_vector(model, scheme) - 1.0
    if bias_norm == "l1":
        return float(np.sum(np.abs(dev)))
    if bias_norm == "l2":
        return float(np.sum(dev**2))
    raise ValueError(f"unknown bias norm {bias_norm!r}")


def objective(
    model: NetworkModel, scheme: CollaborationScheme, R: float, d: int, lam: float, bias_norm: str = "l2"
) -> float:
    return tiv(model, scheme, R) + piv(model, scheme, d) + lam * bias(model, scheme, bias_norm)


def gradient(
    model: NetworkModel, scheme: CollaborationScheme, R: float, d: int, lam: float, bias_norm: str = "l2"
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic partial derivatives ``(d/dA, d/dSigma)`` of :func:`objective`.

    The L1 bias uses the subgradient ``sign(S_i - 1)`` (0 at the kink).
    """
    p, P, E, A, S = model.p, model.P, model.E, scheme.A, scheme.Sigma
    n = model.n
    pP = p[None, :] * P  # p_j P_ij
    s = (pP * A).sum(axis=1)
    col = (P * A).sum(axis=0)
    C = np.outer(p, p) * (E - P * P.T)
    g = 2 * pP * (1 - P) * A
    g += 2 * (p * (1 - p) * col)[None, :] * P
    g += 2 * C * A.T
    g += 2 * (s.sum() - n) * pP
    g *= R**2 / n**2
    dev = s - 1.0
    if bias_norm == "l2":
        g += lam * 2 * dev[:, None] * pP
    elif bias_norm == "l1":
        g += lam * np.sign(dev)[:, None] * pP
    else:
        raise ValueError(f"unknown bias norm {bias_norm!r}")
    gs = 2 * d * pP * S / n**2
    return g, gs


def project_cone(alpha: float, sigma: float, slope: float) -> tuple[float, float]:
    """Nearest point of ``{a >= 0, s >= slope * a}`` to ``(alpha, sigma)``."""
    if slope < 0 or not np.isfinite(slope):
        raise ValueError("slope must be finite and nonnegative")
    if alpha >= 0 and sigma >= slope * alpha:
        return alpha, sigma
    if sigma >= 0 and alpha < 0:
        return 0.0, sigma
    t = max((alpha + slope * sigma) / (1 + slope * slope), 0.0)
    return t, slope * t


def project_cone_array(alpha, sigma, slope) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`project_cone`, same three cases entrywise."""
    alpha, sigma, slope = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(sigma, float), np.asarray(slope, float))
    t = np.maximum((alpha + slope * sigma) / (1 + slope * slope), 0.0)
    a = np.array(t)
    s = np.array(slope * t)
    inside = (alpha >= 0) & (sigma >= slope * alpha)
    left = ~inside & (sigma >= 0) & (alpha < 0)
    a[inside] = alpha[inside]
    s[inside] = sigma[inside]
    a[left] = 0.0
    s[left] = sigma[left]
    return a, s


class _Problem:
    """Constant coefficients of the objective, hoisted out of the descent loop."""

    def __init__(self, model: NetworkModel, R: float, d: int, lam: float, bias_norm: str):
        p, P = model.p, model.P
        self.n = model.n
        self.c = R**2 / self.n**2
        self.pP = p[None, :] * P
        self.w1 = self.pP * (1 - P)
        self.w2 = p * (1 - p)
        self.P = P
        self.C = np.outer(p, p) * (model.E - P * P.T)
        self.pv = d / self.n**2 * self.pP
        self.lam = lam
        self.l1 = bias_norm == "l1"

    def evaluate(self, A: np.ndarray, S: np.ndarray):
        """Return ``(tiv, piv, bias, dA, dSigma)``."""
        s = (self.pP * A).sum(axis=1)
        col = (self.P * A).sum(axis=0)
        CA = self.C * A.T
        tot = s.sum() - self.n
        t = self.c * ((self.w1 * A * A).sum() + (self.w2 * col * col).sum() + (CA * A).sum() + tot * tot)
        v = float((self.pv * S * S).sum())
        dev = s - 1.0
        g = 2 * self.c * (self.w1 * A + (self.w2 * col)[None, :] * self.P + CA + tot * self.pP)
        if self.l1:
            b = float(np.abs(dev).sum())
            g += self.lam * np.sign(dev)[:, None] * self.pP
        else:
            b = float((dev * dev).sum())
            g += self.lam * 2 * dev[:, None] * self.pP
        return float(t), v, b, g, 2 * self.pv * S


def initial_scheme(model: NetworkModel, trust: TrustMatrix, R: float, cfg: OptimizerConfig) -> CollaborationScheme:
    """Boundary-feasible start ``sigma = slope * alpha``.

    ``alpha_ij = 1 / (n max(p_j P_ij, floor))``, capped at ``1 / (1 + slope^2)``
    (where the unit weight lands after projection) and scaled by a seeded
    factor drawn from ``U(1 - jitter, 1 + jitter)``.
    """
    n = model.n
    slopes = cone_slopes(trust, R)
    a0 = 1.0 / (n * np.maximum(model.p[None, :] * model.P, cfg.init_floor))
    a0 = np.minimum(a0, 1.0 / (1.0 + slopes**2))
    rng = np.random.default_rng(cfg.seed)
    a0 = a0 * rng.uniform(1 - cfg.init_jitter, 1 + cfg.init_jitter, size=(n, n))
    a0 = np.where(model.P == 0, 0.0, a0)
    return CollaborationScheme(A=a0, Sigma=slopes * a0)


def optimize(
    model: NetworkModel,
    trust: TrustMatrix,
    R: float,
    d: int,
    config: OptimizerConfig | None = None,
    init: CollaborationScheme | None = None,
) -> OptimizerTrace:
    """Run projected gradient descent from ``init`` (default: :func:`initial_scheme`)."""
    cfg = config or OptimizerConfig()
    if trust.n != model.n:
        raise ValueError("trust and model sizes differ")
    slopes = cone_slopes(trust, R)
    frozen = model.P == 0
    diag = np.eye(model.n, dtype=bool)
    scheme = init if init is not None else initial_scheme(model, trust, R, cfg)
    trace = OptimizerTrace()
    prob = _Problem(model, R, d, cfg.lam, cfg.bias_norm)
    A, S = np.array(scheme.A), np.array(scheme.Sigma)
    t, v, b, gA, gS = prob.evaluate(A, S)
    trace.append(t, v, b, cfg.lam, _feasible(A, S, slopes))
    with np.errstate(over="ignore", invalid="ignore"):
        _descend(prob, cfg, A, S, gA, gS, slopes, frozen, diag, trace)
    return trace


def _descend(prob, cfg, A, S, gA, gS, slopes, frozen, diag, trace):
    for it in range(1, cfg.max_iters + 1):
        stepA = A - cfg.eta_alpha * gA
        A, S = project_cone_array(stepA, S - cfg.eta_sigma * gS, slopes)
        # Self-links carry no privacy noise.
        A[diag] = np.maximum(stepA[diag], 0.0)
        S[diag] = 0.0
        A[frozen] = 0.0
        S[frozen] = 0.0
        t, v, b, gA, gS = prob.evaluate(A, S)
        trace.append(t, v, b, cfg.lam, _feasible(A, S, slopes))
        if not np.isfinite(trace.objective[-1]):
            trace.scheme = SimpleNamespace(A=A, Sigma=S)
            raise OptimizerError(f"objective became non-finite at iteration {it}", trace)
        if it >= cfg.window and abs(trace.objective[-1] - trace.objective[-1 - cfg.window]) < cfg.tol:
            trace.converged = True
            break
    trace.scheme = CollaborationScheme(A=A, Sigma=S)


def _feasible(A: np.ndarray, S: np.ndarray, slopes: np.ndarray) -> bool:
    return bool((S >= slopes * A - 1e-12).all() and A.min() >= 0 and S.min() >= 0)
