import numpy as np
import pytest
import statsmodels.api as sm

from hmvar.estimators import METHODS
from hmvar.kernels import KernelSpec
from hmvar.linalg import IllConditionedError
from hmvar.panel import balanced_panel, build_panel
from hmvar.regression import (Z_975, ConvergenceError, Design, NegativeVarianceError, ols_fit,
                              resolve_kernel, sandwich, within_transform)
from hmvar.simulation import SimulationConfig, simulate_panel

from conftest import random_panel


def make_design(rng, p, k=2):
    X = rng.normal(size=(p.n, k))
    y = X @ np.arange(1, k + 1) + rng.normal(size=p.n) * (1 + np.abs(X[:, 0]))
    return Design(y, X, p, [f"x{j}" for j in range(k)]).with_intercept()


def test_with_intercept_prepends_const(rng):
    d = make_design(rng, balanced_panel(3, 3))
    assert d.names == ["const", "x0", "x1"]
    assert np.all(d.X[:, 0] == 1)


def test_two_way_transform_annihilates_additive_effects():
    p = balanced_panel(2, 2)
    d = Design(np.array([1.0, 2.0, 3.0, 4.0]), np.array([1.0, 2.0, 3.0, 4.0]), p, ["x"])
    out = within_transform(d)
    assert np.allclose(out.X, 0) and np.allclose(out.y, 0)


@pytest.mark.parametrize("unbalanced", [False, True])
def test_within_transform_is_idempotent_projection(rng, unbalanced):
    if unbalanced:
        recs = [(g, t) for g in range(1, 6) for t in range(1, 7) if rng.random() > 0.3]
        p = build_panel(recs + [(1, 1), (2, 2)])
    else:
        p = balanced_panel(5, 6)
    a, b = rng.normal(size=p.G), rng.normal(size=p.T)
    X = np.column_stack([a[p.g] + b[p.t], rng.normal(size=p.n)])
    d = within_transform(Design(rng.normal(size=p.n), X, p, ["fe", "z"]))
    assert np.allclose(d.X[:, 0], 0, atol=1e-9)
    again = within_transform(d)
    assert np.allclose(again.X, d.X, atol=1e-10) and np.allclose(again.y, d.y, atol=1e-10)
    D = np.column_stack([np.eye(p.G)[p.g], np.eye(p.T)[p.t]])
    resid = X[:, 1] - D @ np.linalg.lstsq(D, X[:, 1], rcond=None)[0]
    assert np.allclose(d.X[:, 1], resid, atol=1e-8)


def test_within_transform_nonconvergence_reported(rng):
    recs = [(g, t) for g in range(1, 30) for t in range(1, 30) if rng.random() > 0.5]
    p = build_panel(recs)
    with pytest.raises(ConvergenceError):
        within_transform(Design(rng.normal(size=p.n), rng.normal(size=p.n), p, ["x"]), max_iter=1)


def test_noiseless_fit_is_exact(rng):
    p = balanced_panel(4, 5)
    X = rng.normal(size=(p.n, 2))
    fit = ols_fit(Design(X @ [2.0, -1.0] + 0.5, X, p, ["a", "b"]).with_intercept())
    assert np.allclose(fit.beta, [0.5, 2.0, -1.0], atol=1e-10)
    for m in METHODS:
        assert np.all(sandwich(fit, m, KernelSpec("triangular", 1)).se < 1e-6)


def test_intercept_only_is_mean(rng):
    p = balanced_panel(3, 4)
    y = rng.normal(size=p.n)
    fit = ols_fit(Design(y, np.ones(p.n), p, ["const"]))
    assert fit.beta[0] == pytest.approx(y.mean())


def test_singular_design():
    p = balanced_panel(3, 3)
    x = np.arange(p.n, dtype=float)
    with pytest.raises(IllConditionedError):
        ols_fit(Design(x, np.column_stack([x, 2 * x]), p, ["a", "b"]))


def test_ehw_matches_statsmodels_hc0(rng):
    d = make_design(rng, balanced_panel(6, 7))
    ref = sm.OLS(d.y, d.X).fit(cov_type="HC0")
    res = sandwich(ols_fit(d), "EHW")
    assert np.allclose(res.cov, ref.cov_params(), rtol=1e-10)
    assert np.allclose(res.estimate, ref.params)


def test_cluster_methods_match_statsmodels(rng):
    p = random_panel(rng, 9, 9, 150)
    d = make_design(rng, p)
    fit = ols_fit(d)
    kw = {"use_correction": False}
    one = sm.OLS(d.y, d.X).fit(cov_type="cluster", cov_kwds={"groups": p.g, **kw})
    two = sm.OLS(d.y, d.X).fit(cov_type="cluster",
                               cov_kwds={"groups": np.column_stack([p.g, p.t]), **kw})
    assert np.allclose(sandwich(fit, "CRg").cov, one.cov_params(), rtol=1e-9)
    assert np.allclose(sandwich(fit, "CGM").cov, two.cov_params(), rtol=1e-9)


def test_ehw_se_on_iid_data(rng):
    n = 10_000
    p = build_panel([(i + 1, 1) for i in range(n)])
    x = rng.normal(size=n)
    d = Design(1 + 2 * x + rng.normal(size=n), x, p, ["x"]).with_intercept()
    se = sandwich(ols_fit(d), "EHW").se
    assert se[1] == pytest.approx(1 / np.sqrt(n), rel=0.1)


def test_scaling_outcome_scales_se(rng):
    d = make_design(rng, balanced_panel(5, 6))
    k = KernelSpec("triangular", 2)
    fit1, fit2 = ols_fit(d), ols_fit(Design(2 * d.y, d.X, d.panel, d.names))
    for m in METHODS:
        assert np.allclose(sandwich(fit2, m, k).se, 2 * sandwich(fit1, m, k).se)


def test_hm_se_positive(rng):
    for _ in range(20):
        p = random_panel(rng, 6, 6, 50)
        if p.n < 4 or p.T < 2:
            continue
        d = make_design(rng, p, 1)
        try:
            fit = ols_fit(d)
        except IllConditionedError:
            continue
        assert np.all(sandwich(fit, "HM", KernelSpec("uniform", p.T - 1)).se > 0)


def test_inference_fields(rng):
    d = make_design(rng, balanced_panel(6, 8))
    res = sandwich(ols_fit(d), "HM", "auto")
    assert res.kernel.kind == "triangular" and res.bandwidth >= 1
    assert np.allclose(res.ci_high - res.ci_low, 2 * Z_975 * res.se)
    assert np.allclose(res.tstat, res.estimate / res.se)
    doc = res.to_dict()
    assert set(doc["coefficients"]) == {"const", "x0", "x1"}
    assert Z_975 == pytest.approx(1.959964, abs=1e-6)


def test_auto_kernel_uses_time_aggregated_scores(rng):
    fit = ols_fit(make_design(rng, balanced_panel(5, 40)))
    from hmvar.estimators import time_aggregate
    from hmvar.kernels import andrews_bandwidth
    assert resolve_kernel(fit, "auto").bandwidth == andrews_bandwidth(
        time_aggregate(fit.design.panel, fit.scores))
    with pytest.raises(ValueError):
        resolve_kernel(fit, "bartlett")


def test_negative_variance_is_flagged():
    p = balanced_panel(2, 3)
    s = np.array([-1.0, -1.0, 0.0, 1.0, 1.0, -1.0])
    fit = ols_fit(Design(s, np.ones(p.n), p, ["const"]))
    fit.scores = s[:, None]
    with pytest.raises(NegativeVarianceError) as exc:
        sandwich(fit, "CHS", KernelSpec("uniform", 1))
    assert exc.value.method == "CHS" and exc.value.coefficient == "const"


def test_simulated_slope_near_truth():
    c = SimulationConfig(G=50, T=100, master_seed=3)
    fit = ols_fit(simulate_panel(c, 0).with_intercept())
    se = np.sqrt(sandwich(fit, "HM").cov[1, 1])
    assert abs(fit.beta[1] - c.beta1) < 5 * se


def test_unknown_method(rng):
    with pytest.raises(ValueError):
        sandwich(ols_fit(make_design(rng, balanced_panel(3, 3))), "HC3")
