import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from hetpref.datagen import Dataset, GaussianDiff, PanelSpec, generate, generate_with_types
from hetpref.estimators import (
    RLHF_CONFIG,
    SIGN_CONFIG,
    Estimate,
    LambdaSchedule,
    OptimConfig,
    cross_entropy_grad,
    cross_entropy_loss,
    fit_em,
    fit_rlhf,
    fit_sign,
    sign_empirical_loss,
    sign_surrogate_grad,
    sign_surrogate_loss,
)
from hetpref.metrics import angle_degrees
from hetpref.population import FiniteMixture, GaussianMixedLogit


def _small_ds(seed=0, n=300, d=4):
    pop = GaussianMixedLogit(np.linspace(1.0, -0.5, d), 0.5 * np.eye(d))
    return generate(pop, GaussianDiff(np.eye(d)), n, seed=seed)


def _central_diff(f, theta, h=1e-5):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(-2.0, 2.0), min_size=4, max_size=4))
def test_cross_entropy_gradient_matches_finite_differences(seed, theta):
    ds = _small_ds(seed)
    theta = np.array(theta)
    numeric = _central_diff(lambda t: cross_entropy_loss(t, ds), theta)
    np.testing.assert_allclose(cross_entropy_grad(theta, ds), numeric, rtol=1e-4, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4), st.floats(0.5, 15.0))
def test_surrogate_gradient_matches_finite_differences(seed, theta, lam):
    ds = _small_ds(seed)
    theta = np.array(theta)
    numeric = _central_diff(lambda t: sign_surrogate_loss(t, ds, lam), theta)
    np.testing.assert_allclose(sign_surrogate_grad(theta, ds, lam), numeric, rtol=1e-4, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_zero_one_loss_scale_invariant_and_odd(seed, c):
    ds = _small_ds(seed, n=100)
    theta = np.random.default_rng(seed).standard_normal(ds.dim)
    base = sign_empirical_loss(theta, ds)
    assert sign_empirical_loss(c * theta, ds) == base
    assert sign_empirical_loss(-theta, ds) == -base


def test_lambda_schedule_caps_and_continues():
    sched = LambdaSchedule()
    lam = sched.initial
    for _ in range(1000):
        lam = sched.step(lam)
    assert lam == sched.maximum
    ds = _small_ds(n=40_000)
    est = fit_sign(ds, SIGN_CONFIG, sched)
    assert est.final_lambda == sched.maximum
    with pytest.raises(ValueError):
        LambdaSchedule(initial=20.0, maximum=15.0)
    with pytest.raises(ValueError):
        LambdaSchedule(growth_factor=1.0)


def test_optim_config_validation():
    with pytest.raises(ValueError):
        OptimConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        OptimConfig(early_stop_patience=3)
    with pytest.raises(ValueError):
        OptimConfig(optimizer="lbfgs")


def test_rlhf_matches_exact_logistic_mle():
    ds = _small_ds(1, n=20_000, d=3)
    exact = minimize(cross_entropy_loss, np.zeros(3), args=(ds,), jac=cross_entropy_grad, method="BFGS").x
    est = fit_rlhf(ds)
    assert angle_degrees(est.beta_hat, exact) < 1.0
    np.testing.assert_allclose(np.linalg.norm(est.beta_hat), np.linalg.norm(exact), rtol=0.02)


def test_homogeneous_population_is_recovered():
    beta = np.array([2.0, -1.0, 0.5])
    pop = FiniteMixture([1.0], [beta])
    ds = generate(pop, GaussianDiff(np.eye(3)), 50_000, seed=2)
    assert angle_degrees(fit_rlhf(ds).mu_hat, beta) < 2.0
    assert angle_degrees(fit_sign(ds).mu_hat, beta) < 3.0


def test_sign_lowers_zero_one_loss_from_warm_start():
    pop = FiniteMixture([0.5, 0.5], [[2.0, -1.0], [0.0, 1.0]])
    ds = generate(pop, GaussianDiff(np.eye(2)), 20_000, seed=0)
    from hetpref.estimators import sign_warm_start

    start = sign_empirical_loss(sign_warm_start(ds, 0), ds)
    assert sign_empirical_loss(fit_sign(ds).mu_hat, ds) <= start + 1e-3


def test_zero_records_rejected():
    empty = Dataset(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError, match="zero records"):
        fit_rlhf(empty)
    with pytest.raises(ValueError, match="zero records"):
        fit_sign(empty)


def test_fits_are_deterministic_and_serializable():
    ds = _small_ds(3, n=3000)
    a, b = fit_sign(ds), fit_sign(ds)
    np.testing.assert_array_equal(a.beta_hat, b.beta_hat)
    back = Estimate.from_dict(a.to_dict())
    np.testing.assert_array_equal(back.mu_hat, a.mu_hat)
    assert back.loss_trace == [(int(e), float(v)) for e, v in a.loss_trace]


def test_early_stopping_uses_validation_split():
    ds = _small_ds(4, n=5000)
    cfg = OptimConfig(learning_rate=0.5, max_epochs=50, validation_fraction=0.2, early_stop_patience=2)
    est = fit_rlhf(ds, cfg)
    assert est.converged
    assert len(est.loss_trace) <= 51


def test_adam_optimizer_runs():
    ds = _small_ds(5, n=5000)
    est = fit_rlhf(ds, OptimConfig(learning_rate=0.005, optimizer="adam", max_epochs=30))
    exact = fit_rlhf(ds)
    assert angle_degrees(est.mu_hat, exact.mu_hat) < 3.0


def test_em_single_component_equals_rlhf():
    pop = FiniteMixture([0.5, 0.5], [[3.0, 2.0], [-1.0, -2.0]])
    ds = generate(pop, GaussianDiff(np.eye(2)), 2000, panel=PanelSpec(100, 20), seed=0)
    em = fit_em(ds, 1, RLHF_CONFIG, rng=0)
    assert angle_degrees(em.beta_em, fit_rlhf(ds, RLHF_CONFIG).beta_hat) < 1e-6


def test_em_recovers_antipodal_types():
    beta0 = np.array([4.0, 0.0, 0.0])
    pop = FiniteMixture([0.5, 0.5], [beta0, -beta0])
    ds, types = generate_with_types(pop, GaussianDiff(np.eye(3)), PanelSpec(200, 20), seed=1)
    em = fit_em(ds, 2, RLHF_CONFIG, rng=1)
    assigned = np.array([em.assignments[u] for u in range(200)])
    agree = np.mean(assigned == types)
    purity = max(agree, 1.0 - agree)
    assert purity >= 0.9
    np.testing.assert_allclose(em.recompute_beta_em(), em.beta_em, atol=1e-12)


def test_em_input_validation():
    ds = _small_ds(n=50)
    with pytest.raises(ValueError, match="user ids"):
        fit_em(ds, 2)
    panel = generate(FiniteMixture([1.0], [[1.0, 0.0]]), GaussianDiff(np.eye(2)), 20, panel=PanelSpec(4, 5))
    with pytest.raises(ValueError, match="exceeds"):
        fit_em(panel, 5)
