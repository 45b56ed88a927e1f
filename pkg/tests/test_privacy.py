import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pricer.erdos_renyi import ErConfig, closed_form, expand_scheme
from pricer.network import NetworkModel
from pricer.optimizer import OptimizerConfig, optimize
from pricer.network import ring_topology
from pricer.privacy import (
    Unbounded,
    bernstein_r,
    er_central_privacy_scaling,
    exact_tail,
    gaussian_dp_violation,
    gaussian_mechanism_eps,
    local_link_dp,
    privacy_report,
    ps_composed_dp,
    relay_data_dp,
    relay_identity_dp,
    relay_stats,
)
from pricer.scheme import CollaborationScheme, TrustMatrix, cone_slopes

from conftest import perfect_model, random_model


# -- Gaussian mechanism -------------------------------------------------------


def test_gaussian_eps_examples():
    assert gaussian_mechanism_eps(0.0, 1.0, 1e-3) == 0.0
    assert gaussian_mechanism_eps(1.0, 1.0, 1.25 * math.exp(-2)) == pytest.approx(2.0, rel=1e-14)
    assert gaussian_mechanism_eps(1.0, 0.0, 1e-3) is Unbounded.INFINITE
    with pytest.raises(ValueError):
        gaussian_mechanism_eps(1.0, 1.0, 0.0)


@pytest.mark.parametrize("ratio", [0.05, 0.3, 1.0, 1.5])
@pytest.mark.parametrize("delta", [1e-8, 1e-3, 0.2])
def test_gaussian_guarantee_holds_on_grid(ratio, delta):
    eps = gaussian_mechanism_eps(ratio, 1.0, delta)
    t = np.linspace(-15, 15, 3001)
    for shift in np.linspace(0, ratio, 5):
        assert gaussian_dp_violation(eps, delta, shift, 1.0, t) <= 1e-9


def test_gaussian_formula_fails_far_outside_its_regime():
    # At large sensitivity-to-noise ratios the classical constant is not enough.
    delta = 0.5
    eps = gaussian_mechanism_eps(20.0, 1.0, delta)
    t = np.linspace(-40, 60, 20001)
    assert gaussian_dp_violation(eps, delta, 20.0, 1.0, t) > 1e-3


# -- local link ---------------------------------------------------------------


def test_local_dp_dead_link_and_zero_weight():
    P = np.array([[1.0, 0.0], [0.5, 1.0]])
    model = NetworkModel(p=np.ones(2), P=P)
    scheme = CollaborationScheme(A=np.array([[1.0, 0.7], [0.0, 1.0]]), Sigma=np.array([[0.0, 0.1], [0.1, 0.0]]))
    eps, eff = local_link_dp(model, scheme, 1.0, 1e-3)
    assert eps[0, 1] == 0.0 and eff[0, 1] == 0.0
    assert eps[1, 0] == 0.0 and eff[1, 0] == pytest.approx(0.5e-3)


def test_local_dp_boundary_recovers_target():
    rng = np.random.default_rng(0)
    n = 4
    trust = TrustMatrix(eps=rng.uniform(0.1, 10, (n, n)), delta=rng.uniform(1e-6, 0.1, (n, n)))
    A = rng.uniform(0.1, 1, (n, n))
    scheme = CollaborationScheme(A=A, Sigma=cone_slopes(trust, 1.3) * A)
    model = random_model(rng, n)
    eps, _ = local_link_dp(model, scheme, 1.3, trust.delta)
    off = ~np.eye(n, dtype=bool)
    np.testing.assert_allclose(eps[off], trust.eps[off], rtol=1e-13)


def test_local_dp_noise_free_is_infinite():
    model = perfect_model(2)
    scheme = CollaborationScheme(A=np.ones((2, 2)), Sigma=np.zeros((2, 2)))
    eps, _ = local_link_dp(model, scheme, 1.0, 1e-3)
    assert math.isinf(eps[0, 1]) and eps[0, 0] == 0.0


@given(st.integers(0, 10_000), st.floats(0.01, 2.0))
def test_local_dp_monotone(seed, bump):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 3)
    A = rng.uniform(0.1, 1, (3, 3))
    S = rng.uniform(0.1, 1, (3, 3))
    base, _ = local_link_dp(model, CollaborationScheme(A, S), 1.0, 1e-3)
    more_w, _ = local_link_dp(model, CollaborationScheme(A + bump, S), 1.0, 1e-3)
    more_s, _ = local_link_dp(model, CollaborationScheme(A, S + bump), 1.0, 1e-3)
    off = ~np.eye(3, dtype=bool)
    assert np.all(more_w[off] > base[off])
    assert np.all(more_s[off] < base[off])


def test_optimizer_output_is_certified():
    model, trust = ring_topology(6, 1, p_c=0.6)
    trace = optimize(model, trust, 1.0, 1, OptimizerConfig(max_iters=300, lam=0.1))
    eps, _ = local_link_dp(model, trace.scheme, 1.0, trust.delta)
    off = ~np.eye(6, dtype=bool)
    assert np.all(eps[off] <= trust.eps[off] + 1e-9)


# -- Bernstein radius ---------------------------------------------------------


def test_bernstein_deterministic_participation():
    s = np.array([1.0, 4.0, 2.0])
    p = np.array([1.0, 0.0, 1.0])
    L = math.log(2 / 0.05)
    assert bernstein_r(s, p, 0.05, form="halved") == pytest.approx(2.0 * L / 3, rel=1e-14)
    assert bernstein_r(s, p, 0.05) == pytest.approx(4.0 * L / 3, rel=1e-14)
    assert exact_tail(s, p, bernstein_r(s, p, 0.05)) == 0.0


def test_bernstein_uniform_example_enumerated():
    s, p = np.ones(4), np.full(4, 0.5)
    r = bernstein_r(s, p, 0.1)
    assert exact_tail(s, p, r) <= 0.1


def test_bernstein_sampled_twenty_terms():
    rng = np.random.default_rng(1)
    s = rng.uniform(0, 2, 20)
    p = rng.uniform(0.2, 0.9, 20)
    r = bernstein_r(s, p, 0.05)
    zeta = (rng.random((100_000, 20)) < p) @ s
    assert np.mean(np.abs(zeta - p @ s) >= r) <= 0.05


def test_halved_form_radius_can_fail():
    # Eleven rare equal terms; the smaller radius lands just below a lattice point.
    s = np.ones(11)
    p = np.full(11, 0.12)
    dp = 5.231099308056258e-05
    r_halved = bernstein_r(s, p, dp, form="halved")
    assert exact_tail(s, p, r_halved) > dp
    assert exact_tail(s, p, bernstein_r(s, p, dp)) <= dp


def test_bernstein_empty_and_invalid():
    assert bernstein_r([0.0, 0.0], [0.5, 0.5], 0.1) == 0.0
    with pytest.raises(ValueError):
        bernstein_r([1.0], [0.5], 0.0)
    with pytest.raises(ValueError):
        bernstein_r([1.0], [0.5], 0.1, form="other")


@given(st.integers(0, 100_000))
def test_bernstein_tail_property(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 12))
    s = rng.uniform(0, 3, k) * (rng.random(k) < 0.8)
    p = rng.uniform(0, 1, k)
    dp = float(10 ** rng.uniform(-4, 0))
    r = bernstein_r(s, p, dp)
    if r == 0.0:
        # no live noise term: zeta is constant and never deviates
        assert exact_tail(s, p, np.finfo(float).tiny) == 0.0
    else:
        assert exact_tail(s, p, r) <= dp


# -- relay level --------------------------------------------------------------


def _relay_setup(seed=0, n=5):
    rng = np.random.default_rng(seed)
    model = random_model(rng, n)
    scheme = CollaborationScheme(A=rng.uniform(0, 1, (n, n)), Sigma=rng.uniform(2, 4, (n, n)))
    return model, scheme


def test_relay_zero_weight_and_dead_link():
    model, scheme = _relay_setup()
    A = np.array(scheme.A)
    A[1, 0] = 0.0
    P = np.array(model.P)
    P[2, 0] = 0.0
    m2 = NetworkModel(p=model.p, P=P)
    s2 = CollaborationScheme(A=A, Sigma=scheme.Sigma)
    eps, eff = relay_identity_dp(m2, s2, 1.0, 0, 1e-3, 1e-3)
    assert eps[1] == 0.0
    assert eps[2] == 0.0 and eff[2] == 0.0
    assert eps[0] == 0.0


def test_relay_data_is_twice_identity():
    for seed in range(10):
        model, scheme = _relay_setup(seed)
        for j in range(model.n):
            ident, d1 = relay_identity_dp(model, scheme, 1.0, j, 1e-3, 1e-3)
            data, d2 = relay_data_dp(model, scheme, 1.0, j, 1e-3, 1e-3)
            ok = np.isfinite(ident)
            assert np.all(data[ok] == 2.0 * ident[ok])
            np.testing.assert_array_equal(d1, d2)


def test_relay_thin_noise_gives_no_guarantee():
    model, scheme = _relay_setup()
    thin = CollaborationScheme(A=scheme.A, Sigma=scheme.Sigma * 1e-3)
    eps, _ = relay_identity_dp(model, thin, 1.0, 0, 1e-3, 1e-6)
    assert np.isnan(eps[1:]).all()


@given(st.integers(0, 10_000), st.floats(0.1, 3.0))
def test_relay_eps_decreases_with_other_noise(seed, bump):
    model, scheme = _relay_setup(seed, n=4)
    P = np.array(model.P)
    P[P < 0.3] = 0.3
    model = NetworkModel(p=model.p, P=P)
    j = 0
    base, _ = relay_identity_dp(model, scheme, 1.0, j, 1e-3, 1e-2)
    S = np.array(scheme.Sigma)
    S[2, j] += bump
    more, _ = relay_identity_dp(model, CollaborationScheme(A=scheme.A, Sigma=S), 1.0, j, 1e-3, 1e-2)
    for i in (1, 3):
        if np.isfinite(base[i]):
            assert more[i] < base[i]


def test_relay_matches_symmetric_expression():
    cfg = ErConfig(n=40, m=4, p=0.9, q=0.8, eps=1.0, delta=1e-3)
    alpha, gamma, sigma = closed_form(cfg)
    model, scheme, _ = expand_scheme(cfg, alpha, gamma, sigma)
    dp = 1e-3
    eps, _ = relay_identity_dp(model, scheme, cfg.R, 0, cfg.delta, dp)
    k = cfg.n - cfg.m
    zbar = k * cfg.p * sigma**2
    r = bernstein_r(np.full(k, sigma**2), np.full(k, cfg.p), dp)
    expect = cfg.xi * cfg.R / (2 * cfg.m * cfg.p * cfg.q) / math.sqrt(zbar - r)
    assert eps[cfg.m:] == pytest.approx(np.full(k, expect), rel=1e-12)
    assert relay_stats(model, scheme, 0, dp) == pytest.approx((zbar, r), rel=1e-12)


# -- PS level -----------------------------------------------------------------


def _one_relay_case(twin=False):
    # node 0 reaches relay 1 (and relay 2 when twin); everything noisy enough
    n = 4
    P = np.eye(n)
    P[0, 1] = 0.9
    P[2, 1] = P[3, 1] = 0.8
    if twin:
        P[0, 2] = 0.9
        P[1, 2] = P[3, 2] = 0.8
    model = NetworkModel(p=np.ones(n), P=P)
    A = np.where(P > 0, 0.5, 0.0)
    np.fill_diagonal(A, 0.0)
    S = np.where(P > 0, 5.0, 0.0)
    np.fill_diagonal(S, 0.0)
    return model, CollaborationScheme(A=A, Sigma=S)


def test_ps_single_relay_no_composition():
    model, scheme = _one_relay_case()
    res = ps_composed_dp(model, scheme, 1.0, 0, 0.5)
    assert res.ok
    assert set(res.terms) == {0, 1} and res.terms[0] == 0.0
    assert res.eps_identity == res.terms[1]
    assert res.eps_data == 2 * res.eps_identity
    assert res.delta == pytest.approx(0.5 * model.p.sum())


def test_ps_two_identical_relays_double():
    one = ps_composed_dp(*_one_relay_case(), 1.0, 0, 0.5)
    two = ps_composed_dp(*_one_relay_case(twin=True), 1.0, 0, 0.5)
    assert two.ok and two.eps_identity == pytest.approx(2 * one.eps_identity, rel=1e-14)
    assert two.eps_identity == math.fsum(two.terms.values())


def test_ps_isolated_node():
    model = NetworkModel(p=np.full(3, 0.5), P=np.eye(3))
    scheme = CollaborationScheme(A=np.zeros((3, 3)), Sigma=np.zeros((3, 3)))
    res = ps_composed_dp(model, scheme, 1.0, 0, 1e-3)
    assert res.ok and res.eps_identity == 0.0
    assert res.delta == pytest.approx(1e-3 * 1.5)


def test_ps_reports_precondition_failures():
    model, scheme = _one_relay_case()
    res = ps_composed_dp(model, scheme, 1.0, 0, 0.95)
    assert not res.ok and math.isnan(res.eps_identity)


# -- random-graph scaling -----------------------------------------------------


def test_er_scaling_regime_checks():
    low_p = er_central_privacy_scaling(200, 5, 0.8, 0.9, 1.0, 2.0, 1e-3)
    assert not low_p.valid and any("7/8" in r for r in low_p.reasons)
    loud = er_central_privacy_scaling(200, 5, 0.99, 0.9, 1.0, 0.01, 1e-3)
    assert not loud.valid


def test_er_scaling_sqrt_law():
    a = er_central_privacy_scaling(105, 5, 0.95, 0.9, 1.0, 5.0, 1e-3)
    b = er_central_privacy_scaling(205, 5, 0.95, 0.9, 1.0, 5.0, 1e-3)
    assert a.valid and b.valid
    assert b.eps_p / a.eps_p == pytest.approx(1 / math.sqrt(2), rel=0.1)


# -- report -------------------------------------------------------------------


def test_report_exports_enums_not_floats():
    model = perfect_model(3)
    scheme = CollaborationScheme(A=np.ones((3, 3)), Sigma=np.zeros((3, 3)))
    rep = privacy_report(model, scheme, 1.0, 1e-3)
    text = rep.to_csv()
    assert "inf" not in text.replace("INFINITE", "")
    assert "nan" not in text.replace("NO_GUARANTEE", "").lower()
    assert "INFINITE" in text
    assert "INFINITE" in rep.to_json()
