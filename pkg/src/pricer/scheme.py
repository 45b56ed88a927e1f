"""Decision variables, trust constraints and datasets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def _encode(arr: np.ndarray) -> list:
    # JSON has no infinity; self-trust is written as the string "inf".
    return [[("inf" if math.isinf(v) else float(v)) for v in row] for row in arr]


def _decode(rows) -> np.ndarray:
    return np.array([[math.inf if v == "inf" else float(v) for v in row] for row in rows])


@dataclass(frozen=True)
class TrustMatrix:
    """Per-link privacy requirements ``(eps[i, j], delta[i, j])`` for ``i -> j``.

    ``eps`` may hold ``inf`` for a link with no privacy requirement.
    """

    eps: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        eps = np.array(self.eps, dtype=float)
        delta = np.array(self.delta, dtype=float)
        if eps.ndim != 2 or eps.shape[0] != eps.shape[1] or delta.shape != eps.shape:
            raise ValueError(f"trust matrices must be square and equal shape: {eps.shape}, {delta.shape}")
        if np.any(np.isnan(eps)) or np.any(eps <= 0):
            raise ValueError("eps entries must be positive")
        if np.any(~np.isfinite(delta)) or np.any(delta <= 0) or np.any(delta > 1):
            raise ValueError("delta entries must lie in (0, 1]")
        eps.setflags(write=False)
        delta.setflags(write=False)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "delta", delta)

    @property
    def n(self) -> int:
        return self.eps.shape[0]

    @classmethod
    def uniform(cls, n: int, eps: float, delta: float) -> "TrustMatrix":
        return cls(eps=np.full((n, n), float(eps)), delta=np.full((n, n), float(delta)))

    def to_dict(self) -> dict:
        return {"eps": _encode(self.eps), "delta": self.delta.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrustMatrix":
        return cls(eps=_decode(d["eps"]), delta=np.array(d["delta"], dtype=float))


@dataclass(frozen=True)
class CollaborationScheme:
    """Weights ``A[i, j]`` and noise std ``Sigma[i, j]`` node i uses toward node j."""

    A: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        S = np.array(self.Sigma, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or S.shape != A.shape:
            raise ValueError(f"A and Sigma must be square and equal shape: {A.shape}, {S.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(S))):
            raise ValueError("A and Sigma must be finite")
        if A.min() < 0 or S.min() < 0:
            raise ValueError("A and Sigma must be nonnegative")
        A.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Sigma", S)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @classmethod
    def identity(cls, n: int) -> "CollaborationScheme":
        return cls(A=np.eye(n), Sigma=np.zeros((n, n)))

    def restricted_to(self, P: np.ndarray) -> "CollaborationScheme":
        """Zero every entry whose link can never succeed (``P[i, j] == 0``)."""
        dead = np.asarray(P) == 0
        return CollaborationScheme(A=np.where(dead, 0.0, self.A), Sigma=np.where(dead, 0.0, self.Sigma))

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "Sigma": self.Sigma.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CollaborationScheme":
        return cls(A=d["A"], Sigma=d["Sigma"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "CollaborationScheme":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Dataset:
    """Local vectors, one row per node, all inside the ball of radius ``R``."""

    X: np.ndarray
    R: float

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError("X must be n x d")
        R = float(self.R)
        if not R > 0:
            raise ValueError("R must be positive")
        norms = np.linalg.norm(X, axis=1)
        if norms.max(initial=0.0) > R * (1 + 1e-12):
            raise ValueError(f"max row norm {norms.max():.6g} exceeds R={R:.6g}")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "R", R)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.X.mean(axis=0)


def load_dataset(path: str | Path, R: float | None = None) -> Dataset:
    """Read a CSV with one node per row; ``R`` defaults to the max row norm."""
    X = np.loadtxt(path, delimiter=",", ndmin=2)
    if R is None:
        R = float(np.linalg.norm(X, axis=1).max())
    return Dataset(X=X, R=R)


def cone_slope(trust: TrustMatrix, R: float, i: int, j: int) -> float:
    """Noise-to-weight slope ``2R/eps * sqrt(2 ln(1.25/delta))`` for link ``i -> j``.

    Self-links are exempt (each node trusts itself), so ``i == j`` gives 0,
    as does ``eps = inf``.
    """
    if i == j:
        return 0.0
    eps, delta = trust.eps[i, j], trust.delta[i, j]
    if not 0 < delta <= 1.25:
        raise ValueError(f"delta={delta} outside the Gaussian-mechanism domain")
    if math.isinf(eps):
        return 0.0
    return 2.0 * R / eps * math.sqrt(2.0 * math.log(1.25 / delta))


def cone_slopes(trust: TrustMatrix, R: float) -> np.ndarray:
    """Matrix of cone slopes, zero on the diagonal."""
    beta = 2.0 * R / trust.eps * np.sqrt(2.0 * np.log(1.25 / trust.delta))
    np.fill_diagonal(beta, 0.0)
    return beta


def is_feasible(
    scheme: CollaborationScheme, trust: TrustMatrix, R: float, atol: float = 0.0
) -> tuple[bool, list[tuple[int, int]]]:
    """Check ``sigma_ij >= slope_ij * alpha_ij`` on every link.

    Returns ``(ok, violations)`` with violations as ``(i, j)`` index pairs.
    """
    if scheme.n != trust.n:
        raise ValueError(f"scheme is {scheme.n}x{scheme.n}, trust is {trust.n}x{trust.n}")
    beta = cone_slopes(trust, R)
    bad = (scheme.Sigma < beta * scheme.A - atol) | (scheme.A < 0) | (scheme.Sigma < 0)
    violations = [(int(i), int(j)) for i, j in np.argwhere(bad)]
    return not violations, violations


def save_config(path: str | Path, **parts) -> None:
    """Write any mix of model/scheme/trust objects into one JSON document."""
    doc = {name: obj.to_dict() for name, obj in parts.items()}
    Path(path).write_text(json.dumps(doc, indent=2))
