"""Exact population estimands for component-structure panels.

The data-generating process is ``Y_i = mu_i + alpha_{g(i)} + gamma_{t(i)} + eps_i``
with iid cluster effects, a stationary AR(1) time effect shared by all
clusters, and iid idiosyncratic noise. Vector scores use independent
components per coordinate, so every covariance matrix is diagonal while the
mean contributions are full outer products.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimators import pair_weights
from .kernels import KernelSpec
from .linalg import as_sym, spectral_norm, sym_eigen_min
from .panel import PanelIndex, build_panel


@dataclass
class ComponentDgp:
    panel: PanelIndex
    mu: np.ndarray
    sigma2_alpha: np.ndarray | float = 1.0
    sigma2_gamma_innov: np.ndarray | float = 1.0
    rho: float = 0.0
    sigma2_eps: np.ndarray | float = 1.0

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        if mu.shape[0] != self.panel.n:
            raise ValueError(f"mu has {mu.shape[0]} rows; panel has n={self.panel.n}")
        self.mu = mu
        v = mu.shape[1]
        for name in ("sigma2_alpha", "sigma2_gamma_innov", "sigma2_eps"):
            val = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (v,)).copy()
            if np.any(val < 0) or not np.all(np.isfinite(val)):
                raise ValueError(f"{name} must be finite and nonnegative")
            setattr(self, name, val)
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be below 1, got {self.rho}")

    @property
    def v(self) -> int:
        return self.mu.shape[1]

    @property
    def sigma2_gamma(self) -> np.ndarray:
        """Stationary variance of the time effect."""
        return self.sigma2_gamma_innov / (1 - self.rho ** 2)

    @classmethod
    def zero_mean(cls, panel: PanelIndex, v: int = 1, **kw) -> "ComponentDgp":
        return cls(panel, np.zeros((panel.n, v)), **kw)


def population_cov(d: ComponentDgp, i: int, j: int) -> np.ndarray:
    p = d.panel
    lag = abs(int(p.t[i]) - int(p.t[j]))
    c = d.sigma2_alpha * (p.g[i] == p.g[j]) + d.sigma2_gamma * d.rho ** lag \
        + d.sigma2_eps * (i == j)
    return np.diag(c)


# --- double-sum route -------------------------------------------------------

def _pair_sum(d: ComponentDgp, weight_fn, with_means: bool, block: int = 256) -> np.ndarray:
    """Σ_ij W_ij (Cov_ij [+ mu_i mu_jᵀ]) with W produced blockwise by ``weight_fn(rows)``."""
    p = d.panel
    parts = np.zeros(3)
    means = np.zeros((d.v, d.v))
    for start in range(0, p.n, block):
        rows = np.arange(start, min(start + block, p.n))
        w = weight_fn(rows)
        same_g = p.g[rows][:, None] == p.g[None, :]
        decay = d.rho ** np.abs(p.t[rows][:, None] - p.t[None, :])
        parts += [np.sum(w * same_g), np.sum(w * decay), np.sum(w[np.arange(rows.size), rows])]
        if with_means:
            means += d.mu[rows].T @ w @ d.mu
    cov = np.diag(d.sigma2_alpha * parts[0] + d.sigma2_gamma * parts[1] + d.sigma2_eps * parts[2])
    return as_sym(cov + means)


def _method_weights(d, method, k, drop=False):
    return lambda rows: pair_weights(d.panel, rows, method, k, drop)


# --- factorized route ------------------------------------------------------

@dataclass
class _Moments:
    """Cell-level building blocks shared by all estimands (one scalar per coordinate for covariances)."""
    cov_cluster: np.ndarray
    cov_time: np.ndarray
    cov_cell: np.ndarray
    cov_lag: dict = field(default_factory=dict)
    cov_within: dict = field(default_factory=dict)
    mean_cluster: np.ndarray = None
    mean_time: np.ndarray = None
    mean_cell: np.ndarray = None
    mean_lag: dict = field(default_factory=dict)
    mean_within: dict = field(default_factory=dict)


def _moments(d: ComponentDgp, max_lag: int) -> _Moments:
    p = d.panel
    a, b, e = d.sigma2_alpha, d.sigma2_gamma, d.sigma2_eps
    N = p.cell_counts.astype(float)
    nt = p.time_counts.astype(float)
    ng = p.cluster_counts.astype(float)
    lags = np.abs(np.subtract.outer(np.arange(p.T), np.arange(p.T)))
    R = d.rho ** lags
    n = float(p.n)
    m = _Moments(
        cov_cluster=a * np.sum(ng ** 2) + b * np.einsum("gs,st,gt->", N, R, N) + e * n,
        cov_time=a * np.sum(N ** 2) + b * np.sum(nt ** 2) + e * n,
        cov_cell=(a + b) * np.sum(N ** 2) + e * n,
    )
    mu_cells = np.zeros((p.G * p.T, d.v))
    np.add.at(mu_cells, p.cell_code, d.mu)
    mu_cells = mu_cells.reshape(p.G, p.T, d.v)
    mu_t = mu_cells.sum(axis=0)
    mu_g = mu_cells.sum(axis=1)
    flat = mu_cells.reshape(-1, d.v)
    m.mean_cluster, m.mean_time, m.mean_cell = mu_g.T @ mu_g, mu_t.T @ mu_t, flat.T @ flat
    for h in range(1, max_lag + 1):
        same_g_pairs = np.sum(N[:, :-h] * N[:, h:])
        m.cov_lag[h] = a * same_g_pairs + b * d.rho ** h * np.sum(nt[:-h] * nt[h:])
        m.cov_within[h] = (a + b * d.rho ** h) * same_g_pairs
        m.mean_lag[h] = mu_t[:-h].T @ mu_t[h:]
        m.mean_within[h] = mu_cells[:, :-h].reshape(-1, d.v).T @ mu_cells[:, h:].reshape(-1, d.v)
    return m


def _check(d: ComponentDgp, k: KernelSpec | None):
    if k is not None and k.bandwidth >= d.panel.T and k.bandwidth > 0:
        raise ValueError(f"bandwidth {k.bandwidth} must be below T={d.panel.T}")


def v_true(d: ComponentDgp, route: str = "fast") -> np.ndarray:
    """Var(Σ_i Y_i)."""
    if route == "pairs":
        return _pair_sum(d, lambda rows: np.ones((rows.size, d.panel.n)), with_means=False)
    p = d.panel
    nt = p.time_counts.astype(float)
    R = d.rho ** np.abs(np.subtract.outer(np.arange(p.T), np.arange(p.T)))
    c = d.sigma2_alpha * np.sum(p.cluster_counts.astype(float) ** 2) \
        + d.sigma2_gamma * (nt @ R @ nt) + d.sigma2_eps * p.n
    return np.diag(c)


def v_adj(d: ComponentDgp, k: KernelSpec, route: str = "fast") -> np.ndarray:
    """Kernel-truncated variance without the within-cluster cross-lag correction."""
    _check(d, k)
    if route == "pairs":
        return _pair_sum(d, _method_weights(d, "CHS", k, drop=True), with_means=False)
    m = _moments(d, k.bandwidth)
    c = m.cov_cluster + m.cov_time - m.cov_cell
    for h, w in enumerate(k.weights(), start=1):
        c = c + 2 * w * m.cov_lag[h]
    return np.diag(c)


def v_con_estimand(d: ComponentDgp, k: KernelSpec, route: str = "fast") -> np.ndarray:
    """Expectation of the conservative estimator (second moments, means included)."""
    _check(d, k)
    if route == "pairs":
        return _pair_sum(d, _method_weights(d, "HM", k), with_means=True)
    m = _moments(d, k.bandwidth)
    c = m.cov_cluster + m.cov_time
    out = m.mean_cluster + m.mean_time
    for h, w in enumerate(k.weights(), start=1):
        c = c + w * (2 * m.cov_lag[h] + 2 * m.cov_time)
        out = out + w * (m.mean_lag[h] + m.mean_lag[h].T + 2 * m.mean_time)
    return as_sym(np.diag(c) + out)


def v_chs_estimand(d: ComponentDgp, k: KernelSpec, drop_adjustment: bool = False,
                   route: str = "fast") -> np.ndarray:
    """Expectation of the plug-in CHS estimator."""
    _check(d, k)
    if route == "pairs":
        return _pair_sum(d, _method_weights(d, "CHS", k, drop_adjustment), with_means=True)
    m = _moments(d, k.bandwidth)
    c = m.cov_cluster + m.cov_time - m.cov_cell
    out = m.mean_cluster + m.mean_time - m.mean_cell
    for h, w in enumerate(k.weights(), start=1):
        c = c + 2 * w * m.cov_lag[h]
        out = out + w * (m.mean_lag[h] + m.mean_lag[h].T)
        if not drop_adjustment:
            c = c - 2 * w * m.cov_within[h]
            out = out - w * (m.mean_within[h] + m.mean_within[h].T)
    return as_sym(np.diag(c) + out)


def omitted_within_term(d: ComponentDgp) -> np.ndarray:
    """Both-order within-cluster cross-lag covariances over all lags (left out of v_adj)."""
    m = _moments(d, d.panel.T - 1)
    return np.diag(sum((2 * m.cov_within[h] for h in m.cov_within), np.zeros(d.v)))


def chs_mean_decomposition(d: ComponentDgp, k: KernelSpec) -> dict[str, np.ndarray]:
    """Mean contributions to the CHS estimand, term by term.

    ``serial`` and ``within`` are one-order sums (Σ_t E[y_t]E[y_{t+m}]ᵀ and the
    within-cluster analogue) weighted by ω(m, M); each enters the aggregate
    twice, once per order.
    """
    m = _moments(d, k.bandwidth)
    w = k.weights()
    zero = np.zeros((d.v, d.v))
    serial = sum((wi * m.mean_lag[h] for h, wi in enumerate(w, start=1)), zero)
    within = sum((wi * m.mean_within[h] for h, wi in enumerate(w, start=1)), zero)
    total = m.mean_cluster + m.mean_time - m.mean_cell + serial + serial.T - within - within.T
    return {"cluster": m.mean_cluster, "time": m.mean_time, "cell": m.mean_cell,
            "serial": serial, "within": within, "total": total}


def example1_gap(means) -> tuple[float, float]:
    """Bias of the plug-in and the conservative long-run variance targets for T = 3.

    D1 is the plug-in bias Σ m_t² + 2Σ m_t m_{t+1}; D2 adds the extra
    Σ y_t² target, evaluated with unit variances.
    """
    m = np.asarray(means, dtype=float)
    if m.shape != (3,):
        raise ValueError(f"expected exactly 3 means, got shape {m.shape}")
    cross = float(np.sum(m[:-1] * m[1:]))
    sq = float(np.sum(m ** 2))
    return sq + 2 * cross, 2 * sq + 2 * cross + 3.0


@dataclass
class EstimandReport:
    v_true: np.ndarray
    v_adj: np.ndarray
    v_con: np.ndarray
    v_chs: np.ndarray
    lambda_n: float
    psd_gap_min_eig: float
    chs_gap_min_eig: float
    omitted_term: np.ndarray
    ratio_norm: float | None
    singular: bool

    @property
    def conservative(self) -> bool:
        return self.psd_gap_min_eig >= -1e-10 * spectral_norm(self.v_con)


def psd_gap_report(d: ComponentDgp, k: KernelSpec) -> EstimandReport:
    vt, va = v_true(d), v_adj(d, k)
    vc, vh = v_con_estimand(d, k), v_chs_estimand(d, k)
    lam = sym_eigen_min(vt)
    singular = lam <= 0
    ratio = None
    if not singular:
        ratio = float(np.linalg.norm(np.linalg.solve(vt, va) - np.eye(d.v), ord=2))
    return EstimandReport(vt, va, vc, vh, lam, sym_eigen_min(vc - va), sym_eigen_min(vh - vt),
                          omitted_within_term(d), ratio, singular)


def draw_scores(d: ComponentDgp, rng: np.random.Generator, reps: int) -> np.ndarray:
    """Simulated score panels, shape (reps, n, v)."""
    p = d.panel
    sa, se = np.sqrt(d.sigma2_alpha), np.sqrt(d.sigma2_eps)
    alpha = rng.standard_normal((reps, p.G, d.v)) * sa
    nu = rng.standard_normal((reps, p.T, d.v)) * np.sqrt(d.sigma2_gamma_innov)
    gamma = np.empty_like(nu)
    gamma[:, 0] = rng.standard_normal((reps, d.v)) * np.sqrt(d.sigma2_gamma)
    for t in range(1, p.T):
        gamma[:, t] = d.rho * gamma[:, t - 1] + nu[:, t]
    eps = rng.standard_normal((reps, p.n, d.v)) * se
    return d.mu + alpha[:, p.g] + gamma[:, p.t] + eps


def random_component_dgp(rng: np.random.Generator, max_dim: int = 12):
    """Random unbalanced panel, arbitrary means, and a random nonnegative kernel."""
    G, T = int(rng.integers(1, max_dim + 1)), int(rng.integers(2, max_dim + 1))
    n = int(rng.integers(2, 3 * G * T + 1))
    recs = np.column_stack([rng.integers(1, G + 1, n), rng.integers(1, T + 1, n)])
    recs[0, 1] = T
    panel = build_panel(recs.tolist())
    v = int(rng.integers(1, 4))
    mu = rng.normal(0, rng.uniform(0.1, 3), (panel.n, v))
    d = ComponentDgp(panel, mu, rng.uniform(0, 2, v), rng.uniform(0, 2, v),
                     float(rng.uniform(-0.9, 0.9)), rng.uniform(0, 2, v))
    kind = ("triangular", "uniform")[int(rng.integers(0, 2))]
    return d, KernelSpec(kind, int(rng.integers(0, panel.T)))
