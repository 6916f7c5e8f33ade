import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from hetpref._numerics import sigmoid_prime
from hetpref.datagen import GaussianDiff, ItemCatalog, generate
from hetpref.estimators import fit_rlhf, sign_empirical_loss
from hetpref.metrics import angle_degrees
from hetpref.oracles import (
    AsymmetricPopulationError,
    expected_sigmoid_prime,
    grid_sign_minimizer_2d,
    curvature_probe,
    fit_power_law,
    population_mle_direction,
    reweighted_mean_direction,
    reweighted_mean_direction_gh,
    sign_identity_check,
    two_type_analysis,
    two_type_region_grid,
)
from hetpref.population import (
    FiniteMixture,
    GaussianMixedLogit,
    TwoType,
    antipodal_counterexample,
    conditionally_symmetric,
)


def test_two_type_closed_forms():
    res = two_type_analysis(0.7, 3)
    assert res.u_bar == -0.2
    assert res.u_naive > 0
    assert res.reversed
    assert res.alpha_threshold_mean == 0.75
    # the reversal region is exactly between the two thresholds
    for alpha in np.linspace(0.05, 0.95, 37):
        r = two_type_analysis(alpha, 3.0)
        inside = r.alpha_threshold_naive < alpha < r.alpha_threshold_mean
        assert r.reversed == inside


def test_two_type_naive_matches_fitted_logistic():
    # One item against the outside option: X = +-1 and the pooled fit is logit(P(choose item)).
    pop = TwoType(0.7, 3.0)
    ds = generate(pop, ItemCatalog([[1.0], [0.0]]), 200_000, seed=0)
    est = fit_rlhf(ds)
    assert est.beta_hat[0] == pytest.approx(two_type_analysis(0.7, 3.0).u_naive, abs=0.02)


def test_region_grid_always_reversed():
    grid = two_type_region_grid()
    assert len(grid) == 400
    assert all(r.reversed for _, r in grid)


def test_two_type_rejects_bad_inputs():
    with pytest.raises(ValueError):
        two_type_analysis(1.0, 3.0)
    with pytest.raises(ValueError):
        two_type_analysis(0.5, -1.0)


def test_expected_sigmoid_prime_matches_quad():
    for var in (0.01, 0.1, 1.0, 4.0, 4.01, 5.0, 25.0, 400.0, 1e4):
        s = math.sqrt(var)
        ref, _ = quad(lambda z: sigmoid_prime(s * z) * math.exp(-z * z / 2) / math.sqrt(2 * math.pi), -40, 40,
                      points=[0.0], limit=500, epsabs=1e-15)
        assert expected_sigmoid_prime(var) == pytest.approx(ref, rel=1e-9)
    # very wide Gaussians: density at 0 times the unit mass of sigmoid'
    assert expected_sigmoid_prime(1e8) == pytest.approx(1 / math.sqrt(2 * math.pi * 1e8), rel=1e-6)


def test_counterexample_direction_regression():
    d = reweighted_mean_direction_gh(antipodal_counterexample(), np.eye(2))
    assert angle_degrees(d, [1.0, 0.0]) == pytest.approx(13.03, abs=0.05)
    # heavier weight on the short atom (0, 1) tilts the fit towards it
    assert d[1] > 0


def test_reweighting_agrees_with_population_mle():
    pop = FiniteMixture([0.2, 0.5, 0.3], [[1.0, -2.0, 0.5], [0.3, 1.0, 1.0], [2.0, 0.0, -1.0]])
    a = reweighted_mean_direction(pop, np.eye(3), n_mc=200_000, seed=4)
    b = population_mle_direction(pop, np.eye(3), n_mc=200_000, seed=4)
    assert angle_degrees(a, b) < 0.5
    assert angle_degrees(a, reweighted_mean_direction_gh(pop, np.eye(3))) < 0.5


def test_population_mle_flags_non_convergence():
    from hetpref.estimators import OptimConfig

    with pytest.warns(RuntimeWarning):
        fit = population_mle_direction(antipodal_counterexample(), np.eye(2), n_mc=10_000,
                                       cfg=OptimConfig(learning_rate=0.1, max_epochs=2, tol=1e-12), return_fit=True)
    assert not fit.converged


def _exact_min_zero_one(ds):
    """Minimum of the piecewise-constant loss, evaluated at midpoints between breakpoints."""
    crit = np.mod(np.arctan2(ds.x[:, 0], -ds.x[:, 1]), math.pi)
    crit = np.sort(np.concatenate([crit, crit + math.pi]))
    mids = (crit + np.roll(crit, -1)) / 2
    mids[-1] = (crit[-1] + crit[0] + 2 * math.pi) / 2
    return min(sign_empirical_loss(np.array([math.cos(p), math.sin(p)]), ds) for p in mids)


def test_grid_minimizer_matches_breakpoint_enumeration():
    ds = generate(conditionally_symmetric(1.0), GaussianDiff(np.eye(2)), 200, seed=3)
    theta, loss = grid_sign_minimizer_2d(ds, 20_000, return_loss=True)
    assert loss == pytest.approx(_exact_min_zero_one(ds), abs=1e-12)
    assert sign_empirical_loss(theta, ds) == loss


def test_grid_minimizer_validation():
    ds3 = generate(FiniteMixture([1.0], [[1.0, 0.0, 0.0]]), GaussianDiff(np.eye(3)), 10)
    with pytest.raises(ValueError):
        grid_sign_minimizer_2d(ds3)
    ds = generate(antipodal_counterexample(), GaussianDiff(np.eye(2)), 100)
    with pytest.warns(RuntimeWarning):
        grid_sign_minimizer_2d(ds, 100)


def test_sign_identity_passes_on_symmetric_populations():
    x = np.random.default_rng(0).standard_normal((1000, 2))
    for pop in (antipodal_counterexample(), conditionally_symmetric(2.0)):
        rep = sign_identity_check(pop, x)
        assert rep.passed and rep.n_checked == 1000


def test_sign_identity_reports_violations_for_asymmetric_population():
    pop = TwoType(0.7, 3.0)
    with pytest.raises(AsymmetricPopulationError):
        sign_identity_check(pop, [[1.0]])
    rep = sign_identity_check(pop, [[1.0], [-2.0]], guard=False)
    assert not rep.passed
    assert len(rep.violations) == 2
    diff, gap, prob = rep.violations[0]
    assert diff == [1.0] and gap < 0 < prob - 0.5


def test_curvature_exponent_is_quadratic():
    pop = GaussianMixedLogit([2.0, 0.0, 0.0], np.eye(3))
    angles = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5]
    pts = curvature_probe(pop, GaussianDiff(np.eye(3)), angles, n_mc=2_000_000, seed=0)
    assert pts[0].excess > 0
    _, p = fit_power_law(pts)
    assert 1.5 <= p <= 2.5


def test_curvature_probe_validation():
    with pytest.raises(AsymmetricPopulationError):
        curvature_probe(FiniteMixture([0.75, 0.25], [[1.0, 1.0], [1.0, -3.0]]), GaussianDiff(np.eye(2)), [0.1])
    with pytest.raises(ValueError):
        curvature_probe(conditionally_symmetric(), GaussianDiff(np.eye(2)), [1.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        curvature_probe(conditionally_symmetric(), GaussianDiff(np.eye(2)), [0.0, 0.1], n_mc=1000)
