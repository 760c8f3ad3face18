"""Finite-n left-hand sides of the weak-dependence rate conditions.

These evaluate, for a given panel, a geometric dependence profile
θ_s = ρ_θ^s, moment order p and bandwidths, the quantities that must vanish
asymptotically for the central limit theorem and the variance results.
They illustrate rates on concrete panels; they do not verify limits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec
from .oracle import ComponentDgp, v_true
from .panel import DEFAULT_ALPHA_GRID, PanelIndex, delta_boundary, neighborhood_cost


def theta_profile(rho_theta: float, s) -> np.ndarray:
    """θ_s = ρ_θ^s; identically zero for independent data (ρ_θ = 0)."""
    s = np.asarray(s, dtype=float)
    if not 0 <= rho_theta < 1:
        raise ValueError("rho_theta must lie in [0, 1)")
    if rho_theta == 0:
        return np.zeros_like(s)
    return rho_theta ** s


def default_lambda(p: PanelIndex, rho_theta: float) -> float:
    """λ_min(V_true) for unit-variance components with AR coefficient ρ_θ on this panel."""
    return float(v_true(ComponentDgp.zero_mean(p, rho=rho_theta))[0, 0])


@dataclass
class AssumptionTerms:
    clt_a: dict[int, float]
    clt_b: float
    vcon: float
    adj_a: float
    adj_b: float
    adj_c: float
    lambda_n: float

    def as_rows(self) -> list[tuple[str, float]]:
        return [("clt(a) k=1", self.clt_a[1]), ("clt(a) k=2", self.clt_a[2]),
                ("clt(b)", self.clt_b), ("vcon", self.vcon), ("adj(a)", self.adj_a),
                ("adj(b)", self.adj_b), ("adj(c)", self.adj_c)]


def _pow(theta: np.ndarray, e: float) -> np.ndarray:
    return np.where(theta > 0, theta ** e, 0.0)


def assumption_terms(p: PanelIndex, rho_theta: float, p_moment: float, m_n: int,
                     kernel: KernelSpec, lambda_n: float | None = None,
                     alpha_grid=DEFAULT_ALPHA_GRID) -> AssumptionTerms:
    """Evaluate every rate expression at the panel's n, λ_n, T.

    Parameters
    ----------
    m_n : int
        Truncation distance in the CLT conditions.
    kernel : KernelSpec
        Kernel and bandwidth M used by the variance estimator.
    lambda_n : float, optional
        Smallest eigenvalue of the true variance; defaults to :func:`default_lambda`.
    """
    if p_moment <= 4:
        raise ValueError("moment order p must exceed 4")
    lam = default_lambda(p, rho_theta) if lambda_n is None else float(lambda_n)
    if not lam > 0:
        raise ValueError("lambda_n must be positive")
    n, T, M = p.n, p.T, kernel.bandwidth
    theta = theta_profile(rho_theta, np.arange(T + max(m_n, M) + 1))

    def cost_sum(m, k, e):
        return sum(neighborhood_cost(p, s, m, k, alpha_grid) * _pow(theta[s:s + 1], e)[0]
                   for s in range(0, m + 1))

    clt_a = {k: float(n / lam ** (1 + k / 2) * cost_sum(m_n, k, 1 - (2 + k) / p_moment))
             for k in (1, 2)}
    clt_b = n ** 2 * _pow(theta[m_n:m_n + 1], 1 - 1 / p_moment)[0] / lam ** 0.5
    vcon = n / lam ** 2 * cost_sum(M, 2, 1 - 4 / p_moment)

    e2 = 1 - 2 / p_moment
    w = kernel.weights()
    adj_a = n / lam * sum(abs(w[m - 1] - 1) * delta_boundary(p, m, 1) * _pow(theta[m:m + 1], e2)[0]
                          for m in range(1, M + 1))
    N = p.cell_counts.astype(float)
    nt = p.time_counts.astype(float)
    adj_b = sum(np.sum(N[:, :-m] * N[:, m:]) * _pow(theta[m:m + 1], e2)[0]
                for m in range(1, T)) / lam
    adj_c = sum(np.sum(nt[:-m] * nt[m:]) * _pow(theta[m:m + 1], e2)[0]
                for m in range(M + 1, T)) / lam
    return AssumptionTerms(clt_a, float(clt_b), float(vcon), float(adj_a), float(adj_b),
                           float(adj_c), lam)
