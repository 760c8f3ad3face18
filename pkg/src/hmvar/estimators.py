"""Variance estimators for the sum of panel scores.

All estimators return unnormalized sums of outer products. ``scores`` is an
``(n, v)`` array (a 1-D array is treated as ``v = 1``) whose rows line up
with the panel's observations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec
from .linalg import as_sym, spectral_norm, sym_eigen_min
from .panel import PanelIndex

METHODS = ("EHW", "CRg", "CRt", "CGM", "CHS", "HM")
BRUTE_FORCE_MAX_N = 10_000


@dataclass
class VarianceEstimate:
    matrix: np.ndarray
    method: str
    kernel: KernelSpec | None = None
    chs_drop_adjustment: bool = False
    min_eigenvalue: float = field(init=False)

    def __post_init__(self):
        self.matrix = as_sym(self.matrix)
        self.min_eigenvalue = sym_eigen_min(self.matrix)


def as_scores(p: PanelIndex, scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.ndim != 2 or s.shape[0] != p.n:
        raise ValueError(f"scores have shape {s.shape}; panel has n={p.n}")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores have non-finite entries")
    return s


def _group_sums(codes: np.ndarray, size: int, s: np.ndarray) -> np.ndarray:
    return np.stack([np.bincount(codes, weights=s[:, c], minlength=size)
                     for c in range(s.shape[1])], axis=1)


def time_aggregate(p: PanelIndex, scores) -> np.ndarray:
    """y_t = Σ_{i in period t} Y_i as a (T, v) array; empty periods are zero."""
    return _group_sums(p.t, p.T, as_scores(p, scores))


def cluster_aggregate(p: PanelIndex, scores) -> np.ndarray:
    return _group_sums(p.g, p.G, as_scores(p, scores))


def cell_aggregate(p: PanelIndex, scores) -> np.ndarray:
    """Cell sums as a (G, T, v) array."""
    s = as_scores(p, scores)
    return _group_sums(p.cell_code, p.G * p.T, s).reshape(p.G, p.T, s.shape[1])


def _check_kernel(p: PanelIndex, k: KernelSpec) -> None:
    if k.bandwidth >= p.T and k.bandwidth > 0:
        raise ValueError(f"bandwidth {k.bandwidth} must be below T={p.T}")


def _lagged(y: np.ndarray, m: int) -> np.ndarray:
    """Σ_t y_t y_{t+m}ᵀ along the first axis."""
    return y[:-m].T @ y[m:]


def _serial_terms(y: np.ndarray, k: KernelSpec) -> np.ndarray:
    total = np.zeros((y.shape[1], y.shape[1]))
    for m, w in enumerate(k.weights(), start=1):
        a = _lagged(y, m)
        total += w * (a + a.T)
    return total


def _within_cluster_terms(cells: np.ndarray, k: KernelSpec) -> np.ndarray:
    v = cells.shape[2]
    total = np.zeros((v, v))
    for m, w in enumerate(k.weights(), start=1):
        a = cells[:, :-m].reshape(-1, v).T @ cells[:, m:].reshape(-1, v)
        total += w * (a + a.T)
    return total


def ehw_matrix(p, scores):
    s = as_scores(p, scores)
    return s.T @ s


def cr_matrix(p, scores, dim):
    if dim in ("cluster", "g"):
        agg = cluster_aggregate(p, scores)
    elif dim in ("time", "t"):
        agg = time_aggregate(p, scores)
    else:
        raise ValueError(f"unknown clustering dimension {dim!r}")
    return agg.T @ agg


def cell_matrix(p, scores):
    c = cell_aggregate(p, scores).reshape(p.G * p.T, -1)
    return c.T @ c


def cgm_matrix(p, scores):
    return cr_matrix(p, scores, "cluster") + cr_matrix(p, scores, "time") - cell_matrix(p, scores)


def chs_matrix(p, scores, k: KernelSpec, drop_adjustment: bool = False):
    _check_kernel(p, k)
    s = as_scores(p, scores)
    total = cgm_matrix(p, s) + _serial_terms(time_aggregate(p, s), k)
    if not drop_adjustment:
        total = total - _within_cluster_terms(cell_aggregate(p, s), k)
    return total


def hm_matrix(p, scores, k: KernelSpec):
    _check_kernel(p, k)
    if np.any(k.weights() < 0):
        raise ValueError("conservative estimator needs nonnegative kernel weights")
    s = as_scores(p, scores)
    y = time_aggregate(p, s)
    total = cr_matrix(p, s, "cluster") + cr_matrix(p, s, "time")
    same = y.T @ y
    for m, w in enumerate(k.weights(), start=1):
        a = _lagged(y, m)
        total = total + w * (a + a.T + 2 * same)
    return total


def ehw(p, scores) -> VarianceEstimate:
    return VarianceEstimate(ehw_matrix(p, scores), "EHW")


def cr_one_way(p, scores, dim: str = "cluster") -> VarianceEstimate:
    method = "CRg" if dim in ("cluster", "g") else "CRt"
    return VarianceEstimate(cr_matrix(p, scores, dim), method)


def cgm(p, scores) -> VarianceEstimate:
    return VarianceEstimate(cgm_matrix(p, scores), "CGM")


def chs(p, scores, k: KernelSpec, drop_adjustment: bool = False) -> VarianceEstimate:
    return VarianceEstimate(chs_matrix(p, scores, k, drop_adjustment), "CHS", k, drop_adjustment)


def hm_con(p, scores, k: KernelSpec) -> VarianceEstimate:
    """Conservative estimator robust to heterogeneous means.

    Two one-way cluster sums (no cell subtraction) plus, for every lag m up to
    the bandwidth, ω(m, M) times the both-order lag-m products of the period
    sums and twice their lag-0 products. PSD for nonnegative weights.
    """
    return VarianceEstimate(hm_matrix(p, scores, k), "HM", k)


def estimate(p, scores, method: str, k: KernelSpec | None = None,
             drop_adjustment: bool = False) -> VarianceEstimate:
    """Dispatch on a method tag from :data:`METHODS`."""
    if method == "EHW":
        return ehw(p, scores)
    if method == "CRg":
        return cr_one_way(p, scores, "cluster")
    if method == "CRt":
        return cr_one_way(p, scores, "time")
    if method == "CGM":
        return cgm(p, scores)
    if method in ("CHS", "HM"):
        if k is None:
            raise ValueError(f"{method} needs a kernel")
        if method == "CHS":
            return chs(p, scores, k, drop_adjustment)
        return hm_con(p, scores, k)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def pair_weights(p: PanelIndex, rows: np.ndarray, method: str, k: KernelSpec | None = None,
                 drop_adjustment: bool = False) -> np.ndarray:
    """Weight W_ij with estimate = Σ_ij W_ij Y_i Y_jᵀ, for the given rows i and all j.

    Built directly from each estimator's pair-level definition, without going
    through period or cluster aggregates.
    """
    gi, gj = p.g[rows][:, None], p.g[None, :]
    ti, tj = p.t[rows][:, None], p.t[None, :]
    same_g, same_t = gi == gj, ti == tj
    if method == "EHW":
        return (rows[:, None] == np.arange(p.n)[None, :]).astype(float)
    if method == "CRg":
        return same_g.astype(float)
    if method == "CRt":
        return same_t.astype(float)
    w = same_g.astype(float) + same_t
    if method in ("CGM", "CHS"):
        w -= same_g & same_t
    if method == "CGM":
        return w
    lag = np.abs(ti - tj)
    for m, om in enumerate(k.weights(), start=1):
        at_m = lag == m
        w += om * at_m
        if method == "CHS" and not drop_adjustment:
            w -= om * (at_m & same_g)
        if method == "HM":
            w += 2 * om * same_t
    return w


def brute_force(p: PanelIndex, scores, method: str, k: KernelSpec | None = None,
                drop_adjustment: bool = False, block: int = 512) -> VarianceEstimate:
    """Reference evaluation of any estimator as a double sum over observation pairs."""
    if p.n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force is limited to n <= {BRUTE_FORCE_MAX_N}, got {p.n}")
    if method in ("CHS", "HM"):
        if k is None:
            raise ValueError(f"{method} needs a kernel")
        _check_kernel(p, k)
    s = as_scores(p, scores)
    total = np.zeros((s.shape[1], s.shape[1]))
    for start in range(0, p.n, block):
        rows = np.arange(start, min(start + block, p.n))
        total += s[rows].T @ pair_weights(p, rows, method, k, drop_adjustment) @ s
    return VarianceEstimate(total, method, k, drop_adjustment)


def relative_gap(a, b) -> float:
    """‖a − b‖ / max(‖a‖, ‖b‖) in spectral norm (0 when both vanish)."""
    scale = max(spectral_norm(a), spectral_norm(b))
    return 0.0 if scale == 0 else spectral_norm(np.asarray(a) - np.asarray(b)) / scale
