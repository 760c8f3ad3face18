import numpy as np
import pytest

from hmvar.estimators import pair_weights
from hmvar.kernels import KernelSpec
from hmvar.oracle import (ComponentDgp, chs_mean_decomposition, draw_scores, example1_gap,
                          omitted_within_term, population_cov, psd_gap_report, v_adj,
                          v_chs_estimand, v_con_estimand, v_true)
from hmvar.panel import balanced_panel, build_panel

from conftest import random_panel


def unit(panel, **kw):
    return ComponentDgp.zero_mean(panel, **kw)


def test_population_cov_entries():
    p = balanced_panel(2, 3)
    assert population_cov(unit(p), 0, 0)[0, 0] == 3
    rho = 0.4
    d = unit(p, sigma2_alpha=0, sigma2_eps=0, rho=rho)
    assert population_cov(d, 0, 1)[0, 0] == pytest.approx(rho / (1 - rho ** 2))
    assert population_cov(unit(p, rho=rho), 0, 3)[0, 0] == pytest.approx(1 / (1 - rho ** 2))


@pytest.mark.parametrize("T, expected", [(2, 20), (3, 63), (5, 275), (10, 2100)])
def test_true_variance_g_equals_t(T, expected):
    assert v_true(unit(balanced_panel(T, T)))[0, 0] == expected


def test_zero_dgp_everything_zero():
    p = balanced_panel(3, 4)
    d = ComponentDgp.zero_mean(p, v=2, sigma2_alpha=0, sigma2_gamma_innov=0, sigma2_eps=0)
    k = KernelSpec("triangular", 2)
    for f in (v_true, lambda d: v_adj(d, k), lambda d: v_con_estimand(d, k),
              lambda d: v_chs_estimand(d, k)):
        assert np.all(f(d) == 0)


def random_dgp(rng, max_dim=7):
    p = random_panel(rng, max_dim, max_dim, 40)
    v = int(rng.integers(1, 3))
    d = ComponentDgp(p, rng.normal(size=(p.n, v)), rng.uniform(0, 2, v), rng.uniform(0, 2, v),
                     float(rng.uniform(-0.9, 0.9)), rng.uniform(0, 2, v))
    k = KernelSpec(("triangular", "uniform")[int(rng.integers(2))], int(rng.integers(0, p.T)))
    return d, k


def test_fast_route_matches_pair_route(rng):
    for _ in range(25):
        d, k = random_dgp(rng)
        assert np.allclose(v_true(d), v_true(d, route="pairs"), rtol=1e-12, atol=1e-12)
        assert np.allclose(v_adj(d, k), v_adj(d, k, route="pairs"), rtol=1e-12, atol=1e-12)
        assert np.allclose(v_con_estimand(d, k), v_con_estimand(d, k, route="pairs"), atol=1e-11)
        for drop in (False, True):
            assert np.allclose(v_chs_estimand(d, k, drop), v_chs_estimand(d, k, drop, route="pairs"),
                               atol=1e-11)


def test_estimands_are_expectations_of_estimators(rng):
    """With known means, the mean of each estimator equals its estimand exactly."""
    for _ in range(5):
        d, k = random_dgp(rng, 5)
        p = d.panel
        rows = np.arange(p.n)
        for method, target in (("HM", v_con_estimand(d, k)), ("CHS", v_chs_estimand(d, k))):
            W = pair_weights(p, rows, method, k)
            cov = np.zeros((p.n, p.n, d.v, d.v))
            for i in range(p.n):
                for j in range(p.n):
                    cov[i, j] = population_cov(d, i, j)
            mean = np.einsum("ij,ijab->ab", W, cov) + d.mu.T @ W @ d.mu
            assert np.allclose(mean, target, atol=1e-10)


def test_uniform_zero_bandwidth_at_rho_zero_gives_truth():
    d = unit(build_panel([(1, 1), (1, 2), (2, 1), (2, 3), (3, 3), (3, 3)]))
    assert np.allclose(v_adj(d, KernelSpec("uniform", 0)), v_true(d))


def test_full_window_differs_by_omitted_term_only():
    d = unit(balanced_panel(4, 5), rho=0.5)
    gap = v_adj(d, KernelSpec("uniform", 4)) - v_true(d)
    assert np.allclose(gap, omitted_within_term(d))
    assert omitted_within_term(d)[0, 0] > 0


def test_zero_mean_con_at_zero_bandwidth_adds_cell_covariance():
    p = build_panel([(1, 1), (1, 1), (1, 2), (2, 1), (2, 2), (2, 2), (3, 2)])
    d = unit(p, rho=0.3)
    k = KernelSpec("triangular", 0)
    cell = sum(population_cov(d, i, j) for i in range(p.n) for j in range(p.n)
               if p.g[i] == p.g[j] and p.t[i] == p.t[j])
    assert np.allclose(v_con_estimand(d, k), v_adj(d, k) + cell)


def test_plugin_gap_arithmetic():
    assert example1_gap([0.5, -1, 0.5])[0] == -0.5
    assert example1_gap([0, 0, 0]) == (0.0, 3.0)
    assert example1_gap([1, 1, 1])[0] == 7.0
    with pytest.raises(ValueError):
        example1_gap([1, 2])


def test_sign_table_decomposition_as_computed():
    mu = np.array([[-1, -1, 1, 1], [1, -1, -1, 1]], dtype=float).ravel()
    d = ComponentDgp(balanced_panel(2, 4), mu, 0, 0, 0, 0)
    k = KernelSpec("uniform", 1)
    dec = chs_mean_decomposition(d, k)
    got = tuple(float(dec[key][0, 0]) for key in ("cluster", "time", "cell", "serial", "within"))
    assert got == (0.0, 8.0, 8.0, 0.0, 0.0)
    assert v_chs_estimand(d, k)[0, 0] == dec["total"][0, 0] == 0.0


def test_sign_table_with_undercoverage():
    """A 2x4 sign table whose within-cluster lag products push the estimand below truth."""
    mu = np.array([[-1, -1, -1, 1], [1, 1, -1, -1]], dtype=float).ravel()
    d = ComponentDgp(balanced_panel(2, 4), mu, 0, 0, 0, 0)
    k = KernelSpec("uniform", 1)
    rep = psd_gap_report(d, k)
    assert rep.v_true[0, 0] == 0
    dec = chs_mean_decomposition(d, k)
    got = tuple(float(dec[key][0, 0]) for key in ("cluster", "time", "cell", "serial", "within"))
    assert got == (4.0, 4.0, 8.0, 0.0, 2.0)
    assert rep.chs_gap_min_eig == v_chs_estimand(d, k)[0, 0] == -4.0
    assert rep.singular and rep.ratio_norm is None


def test_psd_gap_report_is_conservative(rng):
    for _ in range(20):
        d, k = random_dgp(rng)
        assert psd_gap_report(d, k).conservative


def test_draw_scores_moments(rng):
    d = ComponentDgp(balanced_panel(3, 3), np.linspace(-1, 1, 9), 0.5, 0.7, 0.6, 0.3)
    y = draw_scores(d, rng, 100_000)[..., 0]
    assert np.allclose(y.mean(axis=0), d.mu[:, 0], atol=0.03)
    emp = np.cov(y[:, 0], y[:, 4])[0, 1]
    assert emp == pytest.approx(population_cov(d, 0, 4)[0, 0], abs=0.03)


def test_invalid_dgp():
    p = balanced_panel(2, 2)
    with pytest.raises(ValueError):
        ComponentDgp(p, np.zeros(3))
    with pytest.raises(ValueError):
        ComponentDgp.zero_mean(p, sigma2_alpha=-1)
    with pytest.raises(ValueError):
        ComponentDgp.zero_mean(p, rho=1.0)
