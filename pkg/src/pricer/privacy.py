"""Privacy accounting: link-level, relay-level and PS-level guarantees.

Array-valued results use ``np.inf`` for an unbounded epsilon (noise-free
release of a nonzero signal) and ``np.nan`` where no guarantee can be
certified. Scalar results and exported reports use :class:`Unbounded`
instead, so nothing downstream has to parse floating-point infinities.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from pricer.network import NetworkModel
from pricer.scheme import CollaborationScheme


class Unbounded(enum.Enum):
    INFINITE = "INFINITE"
    NO_GUARANTEE = "NO_GUARANTEE"


def _log_factor(delta) -> np.ndarray | float:
    return np.sqrt(2.0 * np.log(1.25 / np.asarray(delta, dtype=float)))


def _as_value(x: float):
    if math.isnan(x):
        return Unbounded.NO_GUARANTEE
    if math.isinf(x):
        return Unbounded.INFINITE
    return float(x)


def _export(x: float):
    v = _as_value(float(x))
    return v.value if isinstance(v, Unbounded) else v


def gaussian_mechanism_eps(sensitivity: float, sigma: float, delta: float):
    """Epsilon of the Gaussian mechanism ``(sens/sigma) sqrt(2 ln(1.25/delta))``.

    Returns ``Unbounded.INFINITE`` for ``sigma = 0`` with a positive sensitivity.
    """
    if sensitivity < 0 or sigma < 0:
        raise ValueError("sensitivity and sigma must be nonnegative")
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if sensitivity == 0:
        return 0.0
    if sigma == 0:
        return Unbounded.INFINITE
    return float(sensitivity / sigma * _log_factor(delta))


def gaussian_dp_violation(eps: float, delta: float, shift: float, sigma: float, thresholds) -> float:
    """Largest ``P(M(x) in S) - e^eps P(M(x') in S) - delta`` over threshold sets.

    ``M(x) = x + N(0, sigma^2)`` in one dimension with ``|x - x'| = shift``.
    Both half-lines ``S = (t, inf)`` and ``S = (-inf, t)`` and both orderings
    of the pair are tried; a nonpositive return value means no violation.
    """
    from scipy.stats import norm

    t = np.asarray(thresholds, dtype=float)
    worst = -np.inf
    for a, b in ((shift, 0.0), (0.0, shift)):
        upper = norm.sf(t, loc=a, scale=sigma) - math.exp(eps) * norm.sf(t, loc=b, scale=sigma)
        lower = norm.cdf(t, loc=a, scale=sigma) - math.exp(eps) * norm.cdf(t, loc=b, scale=sigma)
        worst = max(worst, float(upper.max()), float(lower.max()))
    return worst - delta


def local_link_dp(
    model: NetworkModel, scheme: CollaborationScheme, R: float, delta
) -> tuple[np.ndarray, np.ndarray]:
    """Per-link ``(eps_ij, p_ij * delta_ij)`` for what node i sends to node j.

    ``delta`` is a scalar or an n x n array. Self-links are not transmissions
    and report ``(0, 0)``.
    """
    n = model.n
    dl = np.broadcast_to(np.asarray(delta, dtype=float), (n, n))
    if np.any(dl <= 0) or np.any(dl > 1):
        raise ValueError("delta entries must lie in (0, 1]")
    A, S, P = scheme.A, scheme.Sigma, model.P
    with np.errstate(divide="ignore", invalid="ignore"):
        eps = _log_factor(dl) * 2.0 * A * R / S
    eps = np.where((A == 0) | (P == 0), 0.0, eps)
    eff = P * dl
    np.fill_diagonal(eps, 0.0)
    np.fill_diagonal(eff, 0.0)
    return eps, eff


def bernstein_r(sigmas_sq, probs, delta_prime: float, form: str = "bernstein") -> float:
    """Deviation radius ``r`` with ``P(|zeta - E zeta| >= r) <= delta_prime``.

    ``zeta = sum_k tau_k s_k`` with independent ``tau_k ~ Ber(probs[k])`` and
    ``s_k = sigmas_sq[k]``. With ``L = ln(2/delta')``, ``M = max s_k`` and
    ``V = sum p(1-p) s^2``:

    * ``form="bernstein"`` (default) solves the two-sided Bernstein bound
      ``2 exp(-r^2 / (2 (V + M r / 3))) = delta'``, giving
      ``r = L M / 3 + sqrt(L^2 M^2 / 9 + 2 L V)``.
    * ``form="halved"`` gives ``(L/2)(M/3 + sqrt(M^2/9 + 4V/L))``. It is about
      half the Bernstein radius and can fail the tail guarantee.
    """
    s = np.asarray(sigmas_sq, dtype=float)
    p = np.asarray(probs, dtype=float)
    if s.shape != p.shape:
        raise ValueError("sigmas_sq and probs must have equal length")
    if not 0 < delta_prime <= 1:
        raise ValueError(f"delta_prime must lie in (0, 1], got {delta_prime}")
    if np.any(s < 0) or np.any((p < 0) | (p > 1)):
        raise ValueError("variances must be nonnegative and probs in [0, 1]")
    live = p > 0
    M = float(s[live].max()) if live.any() else 0.0
    if M == 0:
        return 0.0
    L = math.log(2.0 / delta_prime)
    V = float(np.sum(p * (1 - p) * s**2))
    if form == "bernstein":
        return L * M / 3 + math.sqrt(L**2 * M**2 / 9 + 2 * L * V)
    if form == "halved":
        return L / 2 * (M / 3 + math.sqrt(M**2 / 9 + 4 * V / L))
    raise ValueError(f"unknown form {form!r}")


def exact_tail(sigmas_sq, probs, r: float) -> float:
    """``P(|zeta - E zeta| >= r)`` by enumerating all participation patterns."""
    s = np.asarray(sigmas_sq, dtype=float)
    p = np.asarray(probs, dtype=float)
    k = s.size
    if k > 20:
        raise ValueError("enumeration limited to 20 terms")
    bits = (np.arange(1 << k)[:, None] >> np.arange(k)) & 1
    prob = np.prod(np.where(bits == 1, p, 1 - p), axis=1)
    dev = np.abs(bits @ s - p @ s)
    return float(prob[dev >= r].sum())


def relay_stats(model: NetworkModel, scheme: CollaborationScheme, j: int, delta_prime: float, form: str = "bernstein"):
    """Mean noise variance ``zeta_bar_j`` reaching relay j and its radius ``r_j``."""
    others = np.arange(model.n) != j
    s2 = scheme.Sigma[others, j] ** 2
    pr = model.P[others, j]
    return float(pr @ s2), bernstein_r(s2, pr, delta_prime, form)


def relay_identity_dp(
    model: NetworkModel,
    scheme: CollaborationScheme,
    R: float,
    j: int,
    delta_p: float,
    delta_prime: float,
    form: str = "bernstein",
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sender ``(eps_ij, p_ij (delta_p + delta'))`` hiding whether i took part at relay j.

    ``eps`` is ``nan`` for senders that need a guarantee when the noise
    budget is too thin (``zeta_bar_j <= r``). Entry ``j`` is the relay itself
    and reports 0.
    """
    return _relay_dp(model, scheme, R, j, delta_p, delta_prime, form, 1.0)


def relay_data_dp(
    model: NetworkModel,
    scheme: CollaborationScheme,
    R: float,
    j: int,
    delta_d: float,
    delta_prime: float,
    form: str = "bernstein",
) -> tuple[np.ndarray, np.ndarray]:
    """Same as :func:`relay_identity_dp` for protecting the value of ``x_i``.

    Swapping one data vector for another moves the relay sum twice as far as
    dropping it, so epsilon doubles.
    """
    return _relay_dp(model, scheme, R, j, delta_d, delta_prime, form, 2.0)


def _relay_dp(model, scheme, R, j, delta_x, delta_prime, form, factor):
    if not 0 < delta_x <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta_x}")
    zbar, r = relay_stats(model, scheme, j, delta_prime, form)
    slack = zbar - r
    a = scheme.A[:, j]
    pj = model.P[:, j]
    if slack > 0:
        eps = factor * float(_log_factor(delta_x)) * a * R / math.sqrt(slack)
    else:
        eps = np.full(model.n, np.nan)
    eps = np.where((a == 0) | (pj == 0), 0.0, eps)
    eff = pj * (delta_x + delta_prime)
    eps[j] = 0.0
    eff = eff.copy()
    eff[j] = 0.0
    return eps, eff


@dataclass(frozen=True)
class PsLevelDp:
    """Composed guarantee for node i when the PS sees every relay output."""

    eps_identity: float
    eps_data: float
    delta: float
    terms: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def ps_composed_dp(
    model: NetworkModel,
    scheme: CollaborationScheme,
    R: float,
    i: int,
    delta: float,
    delta_primes=None,
    form: str = "bernstein",
) -> PsLevelDp:
    """Basic composition over every relay j with ``p_ij > 0`` (j = i included).

    ``delta_primes`` defaults to ``delta / 2`` for each relay. Failing
    preconditions are listed per relay in ``violations`` and the epsilons
    are then ``nan``.
    """
    n = model.n
    dps = np.full(n, delta / 2) if delta_primes is None else np.asarray(delta_primes, dtype=float)
    relays = [j for j in range(n) if model.P[i, j] > 0]
    violations = []
    dmin = min(model.P[i, j] for j in relays)
    if not 0 < delta <= dmin:
        violations.append(("delta", f"delta={delta:.6g} not in (0, {dmin:.6g}]"))
    terms = {}
    for j in relays:
        pij = model.P[i, j]
        gap = delta - pij * dps[j]
        zbar, r = relay_stats(model, scheme, j, float(dps[j]), form)
        slack = zbar + scheme.Sigma[j, j] ** 2 - r
        if scheme.A[i, j] == 0:
            terms[j] = 0.0
            continue
        if gap <= 0:
            violations.append((j, f"delta - p_ij*delta'_j = {gap:.6g} <= 0"))
            continue
        if 1.25 * pij / gap <= 1:
            violations.append((j, f"1.25*p_ij/(delta - p_ij*delta'_j) = {1.25 * pij / gap:.6g} <= 1"))
            continue
        if slack <= 0:
            violations.append((j, f"zeta_bar + sigma_jj^2 - r = {slack:.6g} <= 0"))
            continue
        terms[j] = math.sqrt(2 * math.log(1.25 * pij / gap)) * scheme.A[i, j] * R / math.sqrt(slack)
    if violations:
        e = math.nan
        return PsLevelDp(e, e, float(delta * model.p.sum()), terms, violations)
    eps_p = math.fsum(terms.values())
    return PsLevelDp(eps_p, 2.0 * eps_p, float(delta * model.p.sum()), terms, violations)


@dataclass(frozen=True)
class ErPrivacyScaling:
    eps_p: float
    sigma: float
    delta_prime: float
    slack: float
    valid: bool
    reasons: tuple[str, ...]


def er_central_privacy_scaling(n: int, m: int, p: float, q: float, R: float, eps: float, delta: float) -> ErPrivacyScaling:
    """Relay identity leakage in the symmetric random-graph setting.

    Uses the unbiased weight ``1/(mpq)`` with the noise level that makes the
    peer constraint tight, ``sigma = xi R / (m p q eps)``, and picks
    ``delta'`` through ``ln(2/delta') = 12 (n-m) p (1-p) sigma^2``. ``valid``
    is False with reasons when that construction breaks down.
    """
    xi = 2 * math.sqrt(2 * math.log(1.25 / delta))
    sigma = xi * R / (m * p * q * eps)
    reasons = []
    if not n > m:
        reasons.append("need n > m")
    if not p > 7 / 8:
        reasons.append("need p > 7/8")
    L = 12 * (n - m) * p * (1 - p) * sigma**2
    if L < math.log(2):
        reasons.append("delta' would exceed 1: eps above the admissible window")
    if p > 7 / 8 and sigma > 1 / math.sqrt(2 * (1 - p)) - 2:
        reasons.append("sigma above 1/sqrt(2(1-p)) - 2: eps below the admissible window")
    slack = (n - m) * p * sigma**2 * (1 - 2 * sigma * (sigma + 2) * (1 - p))
    if slack <= 0:
        reasons.append("zeta_bar - r <= 0")
    delta_prime = 2 * math.exp(-L) if L > 0 else 2.0
    eps_p = xi * R / (2 * m * p * q) / math.sqrt(slack) if slack > 0 else math.nan
    return ErPrivacyScaling(eps_p, sigma, delta_prime, slack, not reasons, tuple(reasons))


@dataclass
class PrivacyReport:
    """Every guarantee for one (model, scheme) pair."""

    local_eps: np.ndarray
    local_delta: np.ndarray
    relay_identity_eps: np.ndarray
    relay_data_eps: np.ndarray
    relay_delta: np.ndarray
    ps: list
    bernstein_r: np.ndarray
    bernstein_delta: np.ndarray

    def rows(self) -> list[dict]:
        n = self.local_eps.shape[0]
        out = []

        def add(level, i, j, eps, delta):
            out.append({"level": level, "i": i, "j": j, "eps": _export(eps), "delta": float(delta)})

        for i in range(n):
            for j in range(n):
                add("local", i, j, self.local_eps[i, j], self.local_delta[i, j])
        for i in range(n):
            for j in range(n):
                add("relay_identity", i, j, self.relay_identity_eps[i, j], self.relay_delta[i, j])
        for i in range(n):
            for j in range(n):
                add("relay_data", i, j, self.relay_data_eps[i, j], self.relay_delta[i, j])
        for i, res in enumerate(self.ps):
            add("ps_identity", i, "", res.eps_identity, res.delta)
            add("ps_data", i, "", res.eps_data, res.delta)
        for j in range(n):
            add("bernstein", "", j, self.bernstein_r[j], self.bernstein_delta[j])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["level", "i", "j", "eps", "delta"], lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            row = dict(row)
            for k in ("eps", "delta"):
                if isinstance(row[k], float):
                    row[k] = repr(row[k])
            w.writerow(row)
        return buf.getvalue()

    def to_json(self) -> str:
        def mat(a):
            return [[_export(x) for x in row] for row in a]

        doc = {
            "local": {"eps": mat(self.local_eps), "delta": self.local_delta.tolist()},
            "relay_identity": {"eps": mat(self.relay_identity_eps), "delta": self.relay_delta.tolist()},
            "relay_data": {"eps": mat(self.relay_data_eps), "delta": self.relay_delta.tolist()},
            "ps_identity": [{"eps": _export(r.eps_identity), "delta": r.delta, "violations": [list(map(str, v)) for v in r.violations]} for r in self.ps],
            "ps_data": [{"eps": _export(r.eps_data), "delta": r.delta} for r in self.ps],
            "bernstein": {"r": self.bernstein_r.tolist(), "delta_prime": self.bernstein_delta.tolist()},
        }
        return json.dumps(doc, indent=2)


def privacy_report(
    model: NetworkModel,
    scheme: CollaborationScheme,
    R: float,
    delta,
    delta_total: float | None = None,
    form: str = "bernstein",
) -> PrivacyReport:
    """Assemble all guarantees.

    ``delta`` is the per-link target (scalar or n x n). The relay budget
    ``delta_total`` (default: mean of ``delta``) is split evenly between the
    mechanism term and the concentration term ``delta'``.
    """
    n = model.n
    local_eps, local_delta = local_link_dp(model, scheme, R, delta)
    dt = float(np.mean(delta)) if delta_total is None else float(delta_total)
    dx, dprime = dt / 2, dt / 2
    ident = np.zeros((n, n))
    data = np.zeros((n, n))
    rdelta = np.zeros((n, n))
    rs = np.zeros(n)
    for j in range(n):
        ident[:, j], rdelta[:, j] = relay_identity_dp(model, scheme, R, j, dx, dprime, form)
        data[:, j], _ = relay_data_dp(model, scheme, R, j, dx, dprime, form)
        rs[j] = relay_stats(model, scheme, j, dprime, form)[1]
    ps = [ps_composed_dp(model, scheme, R, i, dt, np.full(n, dprime), form) for i in range(n)]
    return PrivacyReport(local_eps, local_delta, ident, data, rdelta, ps, rs, np.full(n, dprime))
