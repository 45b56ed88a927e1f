"""Two-stage relayed aggregation and its Monte-Carlo evaluation.

Stage 1: node j receives ``tau_ij * (A[i, j] x_i + n_ij)`` from every node i
and sums what arrives. Stage 2: the PS averages the relay sums that reach it.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from pricer.network import LinkRealization, NetworkModel, sample_links, sample_links_batch
from pricer.scheme import CollaborationScheme, Dataset

BLOCK_TRIALS = 4096

CSV_FIELDS = ("config_hash", "trials", "mse", "se", "bound", "tiv", "piv", "bias_l1", "bias_l2")


@dataclass(frozen=True)
class RoundOutcome:
    links: LinkRealization
    node_aggregates: np.ndarray
    ps_estimate: np.ndarray
    true_mean: np.ndarray
    squared_error: float


@dataclass(frozen=True)
class McResult:
    mse: float
    se: float
    trials: int


def _check_dims(data: Dataset, model: NetworkModel, scheme: CollaborationScheme) -> None:
    if not (data.n == model.n == scheme.n):
        raise ValueError(f"dimension mismatch: data n={data.n}, model n={model.n}, scheme n={scheme.n}")


def run_round(
    data: Dataset, model: NetworkModel, scheme: CollaborationScheme, rng: np.random.Generator
) -> RoundOutcome:
    """Execute one round on freshly sampled links.

    Noise is only drawn for links that are up; a dead link carries nothing.
    """
    _check_dims(data, model, scheme)
    n, d = data.n, data.d
    links = sample_links(model, rng)
    live = links.tau.astype(bool)
    noise = np.zeros((n, n, d))
    ii, jj = np.nonzero(live)
    noise[ii, jj] = rng.standard_normal((ii.size, d)) * scheme.Sigma[ii, jj, None]
    # agg[j] = sum_i tau_ij (A_ij x_i + n_ij)
    agg = np.einsum("ij,id->jd", live * scheme.A, data.X) + noise.sum(axis=0)
    est = (links.tau_ps[:, None] * agg).sum(axis=0) / n
    mean = data.mean
    err = float(np.sum((est - mean) ** 2))
    return RoundOutcome(links=links, node_aggregates=agg, ps_estimate=est, true_mean=mean, squared_error=err)


def _block_errors(
    data: Dataset, model: NetworkModel, scheme: CollaborationScheme, seed: int, block: int, size: int
) -> np.ndarray:
    rng = np.random.default_rng([seed, block])
    n, d = data.n, data.d
    tau_ps, tau = sample_links_batch(model, rng, size)
    # Path weight of x_i through relay j to the PS.
    w = tau_ps[:, None, :] * tau
    coef = (w * scheme.A).sum(axis=2) - 1.0
    dev = coef @ data.X / n
    # Independent Gaussians on live paths sum to one Gaussian per trial.
    var = (w * scheme.Sigma**2).sum(axis=(1, 2)) / n**2
    dev = dev + np.sqrt(var)[:, None] * rng.standard_normal((size, d))
    return np.sum(dev**2, axis=1)


def squared_errors(
    data: Dataset,
    model: NetworkModel,
    scheme: CollaborationScheme,
    trials: int,
    seed: int,
    workers: int = 1,
) -> np.ndarray:
    """Per-trial squared errors in trial order.

    Trials are split into fixed blocks of ``BLOCK_TRIALS``; block ``b`` draws
    from ``default_rng([seed, b])``, so the result does not depend on
    ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    _check_dims(data, model, scheme)
    sizes = [min(BLOCK_TRIALS, trials - s) for s in range(0, trials, BLOCK_TRIALS)]
    jobs = [(data, model, scheme, seed, b, sz) for b, sz in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _block_errors(*a), jobs))
    else:
        parts = [_block_errors(*a) for a in jobs]
    return np.concatenate(parts)


def monte_carlo_mse(
    data: Dataset,
    model: NetworkModel,
    scheme: CollaborationScheme,
    trials: int,
    seed: int,
    workers: int = 1,
) -> McResult:
    """Empirical MSE with its standard error."""
    errs = squared_errors(data, model, scheme, trials, seed, workers)
    mse = math.fsum(errs) / trials
    se = float(np.std(errs, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return McResult(mse=mse, se=se, trials=trials)


def config_hash(data: Dataset, model: NetworkModel, scheme: CollaborationScheme) -> str:
    doc = {"model": model.to_dict(), "scheme": scheme.to_dict(), "X": data.X.tolist(), "R": data.R}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def mc_csv_row(data: Dataset, model: NetworkModel, scheme: CollaborationScheme, mc: McResult) -> dict:
    """One summary row pairing the empirical MSE with the analytic breakdown."""
    from pricer.analysis import bound

    b = bound(model, scheme, data.R, data.d)
    return {
        "config_hash": config_hash(data, model, scheme),
        "trials": mc.trials,
        "mse": mc.mse,
        "se": mc.se,
        "bound": b.bound,
        "tiv": b.tiv,
        "piv": b.piv,
        "bias_l1": b.bias_l1,
        "bias_l2": b.bias_l2,
    }
