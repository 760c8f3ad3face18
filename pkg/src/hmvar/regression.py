"""OLS on panel data with sandwich standard errors from any score-variance estimator."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .estimators import METHODS, estimate, time_aggregate
from .kernels import KernelSpec, andrews_bandwidth
from .linalg import IllConditionedError, as_sym, solve_spd, spectral_norm, sym_eigen_min
from .panel import PanelIndex

Z_975 = 1.959963984540054


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, delta: float):
        super().__init__(message)
        self.delta = delta


class NegativeVarianceError(ValueError):
    """A sandwich variance with a negative diagonal entry."""

    def __init__(self, method: str, coefficient: str, min_eigenvalue: float):
        super().__init__(f"{method}: negative variance for coefficient {coefficient!r} "
                         f"(min eigenvalue of the variance matrix {min_eigenvalue:.4g})")
        self.method = method
        self.coefficient = coefficient
        self.min_eigenvalue = min_eigenvalue


@dataclass
class Design:
    y: np.ndarray
    X: np.ndarray
    panel: PanelIndex
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        self.X = X[:, None] if X.ndim == 1 else X
        n, v = self.X.shape
        if self.y.shape[0] != n or n != self.panel.n:
            raise ValueError(f"y has {self.y.shape[0]} rows, X has {n}, panel has {self.panel.n}")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.X))):
            raise ValueError("design has non-finite entries")
        if n <= v:
            raise ValueError(f"need more observations than regressors (n={n}, v={v})")
        if not self.names:
            self.names = [f"x{j + 1}" for j in range(v)]
        if len(self.names) != v:
            raise ValueError("one name per regressor column is required")

    def with_intercept(self) -> "Design":
        return replace(self, X=np.column_stack([np.ones(self.panel.n), self.X]),
                       names=["const", *self.names])


def _two_way_demean_balanced(p: PanelIndex, a: np.ndarray) -> np.ndarray:
    cells = np.zeros((p.G * p.T, a.shape[1]))
    np.add.at(cells, p.cell_code, a)
    cells = cells.reshape(p.G, p.T, -1) / p.cell_counts[:, :, None]
    g_mean = cells.mean(axis=1)
    t_mean = cells.mean(axis=0)
    return a - g_mean[p.g] - t_mean[p.t] + cells.mean(axis=(0, 1))


def _group_demean(codes, size, a):
    counts = np.bincount(codes, minlength=size).astype(float)
    sums = np.zeros((size, a.shape[1]))
    np.add.at(sums, codes, a)
    means = np.divide(sums, counts[:, None], out=np.zeros_like(sums), where=counts[:, None] > 0)
    return a - means[codes]


def within_transform(d: Design, tol: float = 1e-10, max_iter: int = 500) -> Design:
    """Remove additive cluster and period effects from y and every column of X.

    Balanced panels (equal counts in every cell) use the closed-form double
    demeaning; otherwise alternating projections run until the largest change
    falls below ``tol``.
    """
    p = d.panel
    if p.G < 2 or np.count_nonzero(p.time_counts) < 2:
        raise ValueError("within transformation needs at least 2 clusters and 2 periods")
    a = np.column_stack([d.y, d.X])
    counts = p.cell_counts
    if np.all(counts == counts.flat[0]):
        out = _two_way_demean_balanced(p, a)
    else:
        out = a.copy()
        scale = max(1.0, float(np.max(np.abs(a))))
        for _ in range(max_iter):
            prev = out
            out = _group_demean(p.t, p.T, _group_demean(p.g, p.G, out))
            delta = float(np.max(np.abs(out - prev))) / scale
            if delta < tol:
                break
        else:
            raise ConvergenceError(f"alternating demeaning did not converge in {max_iter} "
                                   f"iterations (last change {delta:.3g})", delta)
    return replace(d, y=out[:, 0], X=out[:, 1:])


@dataclass
class FitResult:
    beta: np.ndarray
    residuals: np.ndarray
    bread: np.ndarray
    scores: np.ndarray
    design: Design

    @property
    def names(self):
        return self.design.names


def ols_fit(d: Design) -> FitResult:
    bread = as_sym(d.X.T @ d.X)
    try:
        beta = solve_spd(bread, d.X.T @ d.y)
    except IllConditionedError as exc:
        raise IllConditionedError(f"singular design: {exc}", exc.min_eigenvalue) from None
    resid = d.y - d.X @ beta
    return FitResult(beta, resid, bread, d.X * resid[:, None], d)


@dataclass
class InferenceResult:
    names: list[str]
    estimate: np.ndarray
    se: np.ndarray
    tstat: np.ndarray
    pvalue: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    cov: np.ndarray
    method: str
    kernel: KernelSpec | None = None
    chs_drop_adjustment: bool = False
    meat_min_eigenvalue: float = 0.0

    @property
    def bandwidth(self) -> int | None:
        return None if self.kernel is None else self.kernel.bandwidth

    def to_dict(self) -> dict:
        out = {"method": self.method,
               "kernel": None if self.kernel is None else self.kernel.to_dict(),
               "chs_drop_adjustment": self.chs_drop_adjustment,
               "coefficients": {}}
        for j, name in enumerate(self.names):
            out["coefficients"][name] = {
                "estimate": float(self.estimate[j]), "se": float(self.se[j]),
                "t": float(self.tstat[j]), "p": float(self.pvalue[j]),
                "ci": [float(self.ci_low[j]), float(self.ci_high[j])]}
        return out


def resolve_kernel(fit: FitResult, kernel: KernelSpec | str | None) -> KernelSpec:
    """``'auto'`` or ``None`` -> triangular kernel with the plug-in bandwidth."""
    if isinstance(kernel, KernelSpec):
        return kernel
    if kernel not in (None, "auto"):
        raise ValueError(f"kernel must be a KernelSpec or 'auto', got {kernel!r}")
    p = fit.design.panel
    return KernelSpec("triangular", andrews_bandwidth(time_aggregate(p, fit.scores)))


def sandwich(fit: FitResult, method: str, kernel: KernelSpec | str | None = "auto",
             drop_adjustment: bool = False) -> InferenceResult:
    """bread⁻¹ · V̂_method(scores) · bread⁻¹ with normal-theory tests and 95% intervals."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    k = resolve_kernel(fit, kernel) if method in ("CHS", "HM") else None
    meat = estimate(fit.design.panel, fit.scores, method, k, drop_adjustment)
    binv = solve_spd(fit.bread, np.eye(fit.bread.shape[0]))
    cov = as_sym(binv @ meat.matrix @ binv)
    diag = np.diag(cov).copy()
    # Exact zeros computed in floating point can land a few ulps below zero; the
    # rounding scale is that of the summed score products, not of the result.
    scale = fit.design.panel.n * spectral_norm(binv @ (fit.scores.T @ fit.scores) @ binv)
    diag[(diag < 0) & (diag >= -1e-12 * scale)] = 0.0
    if np.any(diag < 0):
        j = int(np.argmin(diag))
        raise NegativeVarianceError(method, fit.names[j], sym_eigen_min(cov))
    se = np.sqrt(diag)
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = fit.beta / se
    pvalue = 2 * stats.norm.sf(np.abs(tstat))
    return InferenceResult(list(fit.names), fit.beta.copy(), se, tstat, pvalue,
                           fit.beta - Z_975 * se, fit.beta + Z_975 * se, cov, method, k,
                           drop_adjustment and method == "CHS", meat.min_eigenvalue)
