"""Monte Carlo size experiments for the two-way panel regression design.

Every latent component of replication ``r`` draws from its own Philox stream
keyed by ``(master_seed, r, component tag)``, so a replication's data do not
depend on which worker computes it or in what order.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .estimators import METHODS
from .kernels import KernelSpec
from .oracle import ComponentDgp, v_true
from .panel import PanelIndex, balanced_panel
from .regression import Design, NegativeVarianceError, ols_fit, resolve_kernel, sandwich

HET_PATTERNS = ("checkerboard", "time-alternating", "none")
_TAGS = {"alpha_x": 1, "alpha_u": 2, "gamma_x": 3, "gamma_u": 4, "eps_x": 5, "eps_u": 6}


@dataclass
class SimulationConfig:
    G: int = 50
    T: int = 100
    rho: float = 0.25
    beta0: float = 0.1
    beta1: float = 0.1
    w_alpha: float = 0.15
    w_gamma: float = 0.20
    w_eps: float = 0.15
    het_amplitude: float = 0.1
    het_pattern: str = "checkerboard"
    replications: int = 1000
    master_seed: int = 20240101
    methods: tuple[str, ...] = METHODS
    kernel: KernelSpec | str = "auto"
    alpha_level: float = 0.05
    chs_drop_adjustment: bool = False
    name: str = ""

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be below 1, got {self.rho}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not 0 < self.alpha_level < 1:
            raise ValueError("alpha_level must lie in (0, 1)")
        if self.G < 1 or self.T < 1:
            raise ValueError("G and T must be positive")
        if self.het_pattern not in HET_PATTERNS:
            raise ValueError(f"het_pattern must be one of {HET_PATTERNS}")
        weights = (self.w_alpha, self.w_gamma, self.w_eps, self.het_amplitude)
        if not all(math.isfinite(w) for w in weights):
            raise ValueError("component weights must be finite")
        self.methods = tuple(self.methods)
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; expected a subset of {METHODS}")
        if isinstance(self.kernel, dict):
            self.kernel = KernelSpec(**self.kernel)
        if not isinstance(self.kernel, KernelSpec) and self.kernel != "auto":
            raise ValueError("kernel must be 'auto' or a KernelSpec")

    @property
    def critical_value(self) -> float:
        return float(stats.norm.isf(self.alpha_level / 2))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["methods"] = list(self.methods)
        out["kernel"] = self.kernel if isinstance(self.kernel, str) else self.kernel.to_dict()
        return out


def stream(master_seed: int, rep_index: int, tag: str) -> np.random.Generator:
    ss = np.random.SeedSequence([int(master_seed), int(rep_index), _TAGS[tag]])
    return np.random.Generator(np.random.Philox(ss))


def ar1_path(T: int, rho: float, innovation_sd: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) path started from its stationary distribution."""
    if not abs(rho) < 1:
        raise ValueError(f"|rho| must be below 1, got {rho}")
    nu = rng.standard_normal(T) * innovation_sd
    out = np.empty(T)
    out[0] = nu[0] / math.sqrt(1 - rho ** 2)
    for t in range(1, T):
        out[t] = rho * out[t - 1] + nu[t]
    return out


def het_effect(c: SimulationConfig, panel: PanelIndex) -> np.ndarray:
    """Per-observation slope heterogeneity (1-based g and t parity)."""
    g, t = panel.g + 1, panel.t + 1
    if c.het_pattern == "checkerboard":
        sign = np.where((g + t) % 2 == 0, 1.0, -1.0)
    elif c.het_pattern == "time-alternating":
        sign = np.where(t % 2 == 0, 1.0, -1.0)
    else:
        return np.zeros(panel.n)
    return c.het_amplitude * sign


def _component(c: SimulationConfig, panel: PanelIndex, rep: int, which: str) -> np.ndarray:
    a = stream(c.master_seed, rep, f"alpha_{which}").standard_normal(c.G)
    gm = ar1_path(c.T, c.rho, 1.0, stream(c.master_seed, rep, f"gamma_{which}"))
    e = stream(c.master_seed, rep, f"eps_{which}").standard_normal(panel.n)
    return c.w_alpha * a[panel.g] + c.w_gamma * gm[panel.t] + c.w_eps * e


def simulate_regressor(c: SimulationConfig, rep_index: int) -> np.ndarray:
    panel = balanced_panel(c.G, c.T)
    return _component(c, panel, rep_index, "x")


def simulate_panel(c: SimulationConfig, rep_index: int) -> Design:
    """One balanced G x T draw in cluster-major order, regressor only (no intercept column)."""
    panel = balanced_panel(c.G, c.T)
    x = _component(c, panel, rep_index, "x")
    u = _component(c, panel, rep_index, "u")
    y = c.beta0 + (c.beta1 + het_effect(c, panel)) * x + u
    return Design(y, x, panel, ["x"])


def regressor_dgp(c: SimulationConfig) -> ComponentDgp:
    """The regressor process written as a component DGP (mean zero)."""
    panel = balanced_panel(c.G, c.T)
    return ComponentDgp.zero_mean(panel, sigma2_alpha=c.w_alpha ** 2,
                                  sigma2_gamma_innov=c.w_gamma ** 2, rho=c.rho,
                                  sigma2_eps=c.w_eps ** 2)


def score_variance_oracle(c: SimulationConfig, block: int = 64) -> np.ndarray:
    """Var of Σ_i (e_i, x_i e_i) at the true coefficients, with e_i = u_i + h_i x_i.

    x and u are independent Gaussian fields with the same covariance kernel K,
    so Var(Σ x_i u_i) = Σ K_ij², Var(Σ h_i x_i²) = 2 Σ h_i h_j K_ij², and the
    cross terms vanish by symmetry.
    """
    d = regressor_dgp(c)
    p = d.panel
    h = het_effect(c, p)
    a, b, e = d.sigma2_alpha[0], d.sigma2_gamma[0], d.sigma2_eps[0]
    var_e = var_xe = 0.0
    for start in range(0, p.n, block):
        rows = np.arange(start, min(start + block, p.n))
        K = a * (p.g[rows][:, None] == p.g[None, :]) \
            + b * c.rho ** np.abs(p.t[rows][:, None] - p.t[None, :])
        K[np.arange(rows.size), rows] += e
        hh = h[rows][:, None] * h[None, :]
        var_e += np.sum(K) + np.sum(hh * K)
        var_xe += np.sum(K ** 2) + 2 * np.sum(hh * K ** 2)
    return np.diag([var_e, var_xe])


@dataclass
class ReplicationResult:
    rep_index: int
    beta1: float
    bandwidth: int | None
    variance: dict[str, float] = field(default_factory=dict)
    reject: dict[str, bool] = field(default_factory=dict)
    failed: dict[str, str] = field(default_factory=dict)


def run_replication(c: SimulationConfig, rep_index: int) -> ReplicationResult:
    fit = ols_fit(simulate_panel(c, rep_index).with_intercept())
    kernel = None
    if any(m in ("CHS", "HM") for m in c.methods):
        kernel = resolve_kernel(fit, None if c.kernel == "auto" else c.kernel)
    out = ReplicationResult(rep_index, float(fit.beta[1]),
                            None if kernel is None else kernel.bandwidth)
    crit = c.critical_value
    for method in c.methods:
        try:
            res = sandwich(fit, method, kernel, c.chs_drop_adjustment)
        except NegativeVarianceError as exc:
            out.failed[method] = str(exc)
            continue
        var = float(res.cov[1, 1])
        out.variance[method] = var
        out.reject[method] = bool(var > 0 and abs(fit.beta[1] - c.beta1) / math.sqrt(var) > crit)
    return out


def _run_chunk(args):
    c, reps = args
    return [run_replication(c, r) for r in reps]


@dataclass
class RejectionReport:
    config: SimulationConfig
    replications: int
    rejections: dict[str, int]
    failures: dict[str, int]
    rates: dict[str, float]
    mc_se: dict[str, float]
    mean_variance: dict[str, float]
    beta1_mean: float
    beta1_variance: float
    mean_bandwidth: float | None
    oracle_score_variance: list[list[float]] | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["config"] = self.config.to_dict()
        return out


def aggregate(c: SimulationConfig, results: list[ReplicationResult],
              oracle: np.ndarray | None = None) -> RejectionReport:
    results = sorted(results, key=lambda r: r.rep_index)
    R = len(results)
    rej = {m: sum(r.reject.get(m, False) for r in results) for m in c.methods}
    fail = {m: sum(m in r.failed for r in results) for m in c.methods}
    rates = {m: rej[m] / R for m in c.methods}
    mc_se = {m: math.sqrt(rates[m] * (1 - rates[m]) / R) for m in c.methods}
    mean_var = {}
    for m in c.methods:
        vals = [r.variance[m] for r in results if m in r.variance]
        mean_var[m] = math.fsum(vals) / len(vals) if vals else float("nan")
    betas = np.array([r.beta1 for r in results])
    bws = [r.bandwidth for r in results if r.bandwidth is not None]
    return RejectionReport(
        c, R, rej, fail, rates, mc_se, mean_var,
        math.fsum(betas) / R, float(np.var(betas, ddof=1)) if R > 1 else 0.0,
        math.fsum(bws) / len(bws) if bws else None,
        None if oracle is None else oracle.tolist())


def run_monte_carlo(c: SimulationConfig, workers: int = 1, with_oracle: bool = False,
                    chunk: int = 25) -> RejectionReport:
    """Simulate, fit, and test ``beta1`` under every method for each replication."""
    reps = list(range(c.replications))
    if workers <= 1:
        results = _run_chunk((c, reps))
    else:
        chunks = [(c, reps[i:i + chunk]) for i in range(0, len(reps), chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [r for part in pool.map(_run_chunk, chunks) for r in part]
    oracle = score_variance_oracle(c) if with_oracle else None
    return aggregate(c, results, oracle)


def clt_check(c: SimulationConfig, R: int) -> float:
    """Kolmogorov-Smirnov distance of the standardized regressor sum from N(0, 1).

    The regressor panel is a mean-zero component process, so its exact
    standard deviation comes from the oracle.
    """
    d = regressor_dgp(c)
    sigma = math.sqrt(float(v_true(d)[0, 0]))
    if not sigma > 0:
        raise ValueError("oracle variance is zero for this configuration")
    z = np.array([simulate_regressor(c, r).sum() for r in range(R)]) / sigma
    return float(stats.kstest(z, "norm").statistic)


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))
