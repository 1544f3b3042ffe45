import numpy as np
import pytest
from scipy.stats import norm

from conftest import make_moments
from errors import DegenerateSampleError, PreconditionError
from expost import (
    ACTIVE_SET,
    BUDGET_ONLY,
    METHOD0,
    PREDICTIVE,
    ExPostPoint,
    ForecastCovarianceSpec,
    active_constraints,
    beta_constants,
    compare_frontiers,
    cvar_normal,
    efficient_frontier_equation,
    expost_consistency_test,
    expost_frontier_method0,
    expost_frontier_method1,
    expost_moments,
    recover_theta,
    standard_constants,
)
from optimizer import LOWER, UPPER, Portfolio, frontier


def test_two_asset_constants():
    c = standard_constants([0.01, 0.02], np.eye(2))
    assert c.variant == BUDGET_ONLY
    assert c.alpha0 == pytest.approx(0.015, abs=1e-15)
    assert c.alpha1 == pytest.approx(5e-5, abs=1e-15)
    assert c.alpha2 == pytest.approx(0.5, abs=1e-15)


def test_flat_means_have_no_spread(four_assets):
    c = standard_constants(np.full(4, 0.02), four_assets.covariance)
    assert abs(c.alpha1) < 1e-15
    with pytest.raises(DegenerateSampleError):
        recover_theta(c, c.alpha2 + 0.1)
    assert recover_theta(c, c.alpha2) == 0.0


def test_budget_only_active_set_matches_standard(four_assets):
    mu, sigma = four_assets.mean, four_assets.covariance
    plain = standard_constants(mu, sigma)
    active = standard_constants(mu, sigma, (np.ones((4, 1)), np.array([1.0])))
    assert active.variant == ACTIVE_SET
    for name in ("alpha0", "alpha1", "alpha2"):
        assert getattr(active, name) == pytest.approx(getattr(plain, name), abs=1e-12)
    assert np.allclose(plain.D0 @ np.ones(4), 0.0, atol=1e-10)


def test_no_cross_covariance_no_bias_zeroes_beta0_beta1(four_assets):
    c = standard_constants(four_assets.mean, four_assets.covariance)
    betas = beta_constants(c, ForecastCovarianceSpec.exemplar(four_assets.covariance, 0.2), four_assets.mean)
    assert betas.beta0 == pytest.approx(0.0, abs=1e-12)
    assert betas.beta1 == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("kappa,rho", [(0.5, 0.0), (0.1, 0.4), (1.0, -0.3)])
def test_exemplar_beta2_closed_form(four_assets, kappa, rho):
    c = standard_constants(four_assets.mean, four_assets.covariance)
    betas = beta_constants(c, ForecastCovarianceSpec.exemplar(four_assets.covariance, kappa, rho), four_assets.mean)
    n = 4
    expected = kappa * (c.alpha1 + (n - 1) * (1 + rho ** 2)) + 2 * rho * c.alpha1 * np.sqrt(kappa)
    assert betas.beta2 == pytest.approx(expected, rel=1e-10)


def test_theta_zero_is_min_variance(four_assets):
    c = standard_constants(four_assets.mean, four_assets.covariance)
    betas = beta_constants(c, ForecastCovarianceSpec.exemplar(four_assets.covariance, 0.3), four_assets.mean)
    point = expost_moments(c, betas, 0.0)
    assert point.mu_pf == c.alpha0
    assert point.var_pf == c.alpha2
    with pytest.raises(PreconditionError):
        expost_moments(c, betas, -0.1)


def test_iid_inflation_is_theta_squared_kappa(four_assets):
    M = 52
    c = standard_constants(four_assets.mean, four_assets.covariance)
    spec = ForecastCovarianceSpec.validation(four_assets.covariance, "iid", M)
    betas = beta_constants(c, spec, four_assets.mean)
    theta = 0.7
    point = expost_moments(c, betas, theta)
    assert point.var_pf - point.exante_var == pytest.approx(theta ** 2 * (c.alpha1 + 3) / M, rel=1e-10)
    assert point.mu_pf == pytest.approx(point.target_return)


def test_frontier_equation_reproduces_moments(four_assets):
    c = standard_constants(four_assets.mean, four_assets.covariance)
    betas = beta_constants(c, ForecastCovarianceSpec.exemplar(four_assets.covariance, 0.5), four_assets.mean)
    point = expost_moments(c, betas, 0.3)
    eq = efficient_frontier_equation(c, betas)
    assert float(eq.mu_at(point.var_pf)) == pytest.approx(point.mu_pf, rel=1e-10)
    with pytest.raises(PreconditionError):
        eq.mu_at(eq.B0 - 1.0)


def test_method0_min_variance_point_not_inflated(four_assets):
    fr = frontier(four_assets, 0.5, 5)
    points = expost_frontier_method0(four_assets, 0.5, fr)
    assert points[0].method == METHOD0
    assert points[0].var_pf == pytest.approx(points[0].exante_var, rel=1e-6)
    assert all(p.var_pf >= p.exante_var - 1e-15 for p in points)
    assert any(p.var_pf > p.exante_var + 1e-12 for p in points[1:-1])


def test_active_constraints_skip_dependent_bounds():
    vertex = Portfolio(
        np.array([0.0, 0.0, 0.5, 0.5]), 0.035, 0.2, "frontier",
        ((0, LOWER), (1, LOWER), (2, UPPER), (3, UPPER)),
    )
    A, b = active_constraints(vertex, 4, 0.5)
    assert A.shape == (4, 4)
    assert np.allclose(b, [1.0, 0.0, 0.0, 0.5])


def test_interior_points_only_budget_active(identity_four):
    fr = frontier(identity_four, 1.0, 5)
    for point in fr.points[1:3]:
        c = standard_constants(identity_four.mean, identity_four.covariance, active_constraints(point, 4, 1.0))
        assert c.p == 1


def test_method1_close_to_method0_predictive(identity_four):
    spec = ForecastCovarianceSpec.validation(identity_four.covariance, PREDICTIVE)
    point = expost_frontier_method1(identity_four, 1.0, [0.2525], 200, seed=1, spec=spec)[0]
    # θ = 0.05: σ²_p + θ²(n - 1 + α1)
    expected = 0.250125 + 0.0025 * 3.05
    assert point.theta == pytest.approx(0.05, rel=1e-6)
    assert point.var_pf == pytest.approx(expected, rel=0.05)
    assert point.draws == 200


def test_method1_shrinks_toward_exante(identity_four):
    variances = []
    for kappa in (1.0, 0.1, 0.01):
        spec = ForecastCovarianceSpec.exemplar(identity_four.covariance, kappa)
        variances.append(expost_frontier_method1(identity_four, 1.0, [0.2525], 200, seed=2, spec=spec)[0].var_pf)
    assert variances[0] > variances[1] > variances[2]
    spec = ForecastCovarianceSpec.exemplar(identity_four.covariance, 1e-4)
    tiny = expost_frontier_method1(identity_four, 1.0, [0.2525], 200, seed=2, spec=spec)[0]
    assert tiny.var_pf == pytest.approx(tiny.exante_var, abs=1e-4)


def test_method1_without_forecast_noise_is_anchor(identity_four):
    zero = np.zeros((4, 4))
    spec = ForecastCovarianceSpec(sigma_rr=np.eye(4), sigma_rf=zero, sigma_ff=zero, delta=np.zeros(4))
    point = expost_frontier_method1(identity_four, 1.0, [0.3], 10, seed=0, spec=spec)[0]
    assert point.var_pf == pytest.approx(point.exante_var, abs=1e-10)
    assert point.mu_pf == pytest.approx(0.3, abs=1e-10)


def test_method1_needs_two_draws(identity_four):
    with pytest.raises(PreconditionError):
        expost_frontier_method1(identity_four, 1.0, [0.3], 1, seed=0)


def test_exemplar_rejects_bad_parameters():
    with pytest.raises(PreconditionError):
        ForecastCovarianceSpec.exemplar(np.eye(2), 0.0)
    with pytest.raises(PreconditionError):
        ForecastCovarianceSpec.exemplar(np.eye(2), 0.5, rho=1.5)
    with pytest.raises(PreconditionError):
        ForecastCovarianceSpec.validation(np.eye(2), "iid")


def test_cvar_normal_values():
    assert cvar_normal(0.0, 1.0, 0.01, days_per_period=1) == pytest.approx(2.6652, abs=1e-4)
    assert cvar_normal(0.01, 1e-12, 0.01, days_per_period=1) == pytest.approx(-0.01, abs=1e-9)
    with pytest.raises(PreconditionError):
        cvar_normal(0.0, 0.0)
    with pytest.raises(PreconditionError):
        cvar_normal(0.0, 1.0, alpha=0.6)


def test_compare_frontiers_interpolates_at_same_return():
    ef = [
        ExPostPoint(theta=0.0, mu_pf=0.2, var_pf=0.25, method=METHOD0),
        ExPostPoint(theta=1.0, mu_pf=0.4, var_pf=0.49, method=METHOD0),
    ]
    rows = compare_frontiers([{1: (0.3, 0.65)}], {METHOD0: [ef]}, B=2)
    first, second = rows
    assert first.vol_diff == pytest.approx(0.05)
    tail = norm.pdf(norm.ppf(0.01)) / 0.01
    assert first.cvar_diff_bp == pytest.approx(1e4 * 0.05 / np.sqrt(5) * tail, rel=1e-9)
    assert first.origins == 1
    assert np.isnan(second.vol_diff) and second.origins == 0


def test_expost_consistency_test_per_point():
    rng = np.random.default_rng(5)
    realized = rng.normal(0.004, 0.04, size=(39, 3))
    results = expost_consistency_test(realized, np.full(3, 0.001), np.full(3, 0.0004), H=4, critical=3.2189)
    assert [r.b for r in results] == [1, 2, 3]
    assert all(0.0 <= r.pvalue <= 1.0 for r in results)
    assert all(r.consistent == (r.outcome.statistic < 3.2189) for r in results)
    with pytest.raises(PreconditionError):
        expost_consistency_test(realized, np.zeros(3), np.zeros(3), H=4, critical=1.0)


def test_general_betas_agree_with_iid_inflation_on_random_instances():
    rng = np.random.default_rng(17)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        root = rng.normal(size=(n, n))
        sigma = root @ root.T / n + 0.05 * np.eye(n)
        mu = rng.normal(0.01, 0.02, size=n)
        M = int(rng.integers(20, 400))
        c = standard_constants(mu, sigma)
        betas = beta_constants(c, ForecastCovarianceSpec.validation(sigma, "iid", M), mu)
        theta = float(rng.uniform(0.0, 2.0))
        point = expost_moments(c, betas, theta)
        expected = theta ** 2 * ((n - 1) + c.alpha1) / M
        assert point.var_pf - point.exante_var == pytest.approx(expected, rel=1e-10, abs=1e-14)


def test_method0_active_set_identity_on_random_instances():
    rng = np.random.default_rng(29)
    with_bounds = 0
    for _ in range(200):
        n = int(rng.integers(4, 9))
        root = rng.normal(size=(n, n))
        sigma = root @ root.T / n + 0.05 * np.eye(n)
        mu = rng.normal(0.01, 0.02, size=n)
        M = int(rng.integers(20, 400))
        U = 1.6 / n
        moments = make_moments(mu, sigma, sample_size=M)
        fr = frontier(moments, U, 5)
        points = expost_frontier_method0(moments, U, fr, mode="iid", M=M)
        for portfolio, point in zip(fr.points, points):
            A, b = active_constraints(portfolio, n, U)
            c = standard_constants(mu, sigma, (A, b))
            with_bounds += c.p > 1
            assert np.allclose(c.D0 @ A, 0.0, atol=1e-8)
            inflation = point.theta ** 2 * ((n - c.p) + c.alpha1) / M
            assert point.var_pf - point.exante_var == pytest.approx(inflation, rel=1e-10, abs=1e-14)
            betas = beta_constants(c, ForecastCovarianceSpec.exemplar(sigma, 1.0 / M), mu)
            general = expost_moments(c, betas, point.theta)
            assert general.var_pf - general.exante_var == pytest.approx(inflation, rel=1e-8, abs=1e-14)
    assert with_bounds >= 50


def test_method0_iid_matches_method1_without_binding_draws(identity_four):
    M = 520
    fr = frontier(identity_four, 1.0, 5)
    closed = expost_frontier_method0(identity_four, 1.0, fr, mode="iid", M=M)[1]
    # θ = 0.75: σ²_p + θ²(n - 1 + α1)/M
    assert closed.theta == pytest.approx(0.75, rel=1e-6)
    assert closed.var_pf == pytest.approx(0.278125 + 0.5625 * 3.05 / M, rel=1e-9)
    spec = ForecastCovarianceSpec.validation(identity_four.covariance, "iid", M)
    simulated = expost_frontier_method1(identity_four, 1.0, [closed.target_return], 4000, seed=3, spec=spec)[0]
    assert simulated.theta == pytest.approx(closed.theta, rel=1e-6)
    assert simulated.var_pf - simulated.exante_var == pytest.approx(closed.var_pf - closed.exante_var, rel=0.25)
    assert simulated.mu_pf == pytest.approx(closed.mu_pf, abs=2e-3)
