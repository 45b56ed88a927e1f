import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pricer.network import NetworkModel
from pricer.scheme import CollaborationScheme, Dataset, TrustMatrix

settings.register_profile("pricer", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pricer")


def random_model(rng, n, correlated=True, zero_frac=0.0):
    p = rng.uniform(0.05, 1.0, n)
    P = rng.uniform(0.05, 1.0, (n, n))
    if zero_frac:
        P[rng.random((n, n)) < zero_frac] = 0.0
    np.fill_diagonal(P, 1.0)
    if correlated:
        lo = P * P.T
        hi = np.minimum(P, P.T)
        E = lo + rng.random((n, n)) * (hi - lo)
        E = np.triu(E, 1)
        E = E + E.T
    else:
        E = None
    return NetworkModel(p=p, P=P, E=E)


def random_scheme(rng, n, scale=1.0):
    return CollaborationScheme(A=rng.uniform(0, scale, (n, n)), Sigma=rng.uniform(0, scale, (n, n)))


def ball_points(rng, n, d, R):
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (R * rng.random(n) ** (1.0 / d))[:, None]


def random_config(seed, n_max=4, d_max=3):
    """(data, model, scheme) with n <= n_max, d <= d_max, data inside the R-ball."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    R = float(rng.uniform(0.5, 2.0))
    model = random_model(rng, n)
    scheme = random_scheme(rng, n)
    return Dataset(X=ball_points(rng, n, d, R), R=R), model, scheme


def aligned(n, d, R):
    X = np.zeros((n, d))
    X[:, 0] = R
    return Dataset(X=X, R=R)


def perfect_model(n):
    return NetworkModel(p=np.ones(n), P=np.ones((n, n)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def uniform_trust(n, eps=1.0, delta=1e-3):
    return TrustMatrix.uniform(n, eps, delta)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
