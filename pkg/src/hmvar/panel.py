"""Panel index space, the panel distance, and neighborhood concentration measures.

Observations are stored densely (0-based) in the order given. Cluster labels
are recoded to ``0..G-1`` in sorted order; time labels keep their spacing and
are shifted so the first admissible period is index 0 (period ``t`` maps to
``t - 1``). Periods with no observations are allowed and simply have zero
count.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

DEFAULT_ALPHA_GRID = tuple(np.geomspace(1.02, 16.0, 25))


@dataclass(frozen=True, eq=False)
class PanelIndex:
    """Observation -> (cluster, period) maps and the derived index sets.

    Attributes
    ----------
    g : ndarray of int, shape (n,)
        Dense cluster code of each observation, in ``0..G-1``.
    t : ndarray of int, shape (n,)
        Period index of each observation, in ``0..T-1``.
    G, T : int
        Number of clusters and number of periods (empty periods included).
    cluster_labels : ndarray
        External cluster id for each dense code.
    """

    g: np.ndarray
    t: np.ndarray
    G: int
    T: int
    cluster_labels: np.ndarray

    def __post_init__(self):
        for arr in (self.g, self.t, self.cluster_labels):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.g.shape[0])

    @cached_property
    def time_counts(self) -> np.ndarray:
        """|N_t^T| for t = 0..T-1."""
        return np.bincount(self.t, minlength=self.T)

    @cached_property
    def cluster_counts(self) -> np.ndarray:
        """|N_g^G| for g = 0..G-1."""
        return np.bincount(self.g, minlength=self.G)

    @cached_property
    def cell_counts(self) -> np.ndarray:
        """|N_{t,g}^{T∩G}| as a dense (G, T) array."""
        return np.bincount(self.cell_code, minlength=self.G * self.T).reshape(self.G, self.T)

    @cached_property
    def cell_code(self) -> np.ndarray:
        return self.g * self.T + self.t

    @cached_property
    def by_time(self) -> list[np.ndarray]:
        return _buckets(self.t, self.T)

    @cached_property
    def by_cluster(self) -> list[np.ndarray]:
        return _buckets(self.g, self.G)

    @cached_property
    def by_cell(self) -> dict[tuple[int, int], np.ndarray]:
        """Nonempty cells keyed by ``(t, g)``."""
        out = {}
        for code, members in enumerate(_buckets(self.cell_code, self.G * self.T)):
            if members.size:
                g, t = divmod(code, self.T)
                out[(t, g)] = members
        return out

    def take(self, order: Sequence[int]) -> "PanelIndex":
        """Panel with observations reordered (labels travel with them)."""
        order = np.asarray(order)
        return PanelIndex(self.g[order].copy(), self.t[order].copy(), self.G, self.T,
                          self.cluster_labels.copy())

    def to_records(self) -> list[tuple[int, int]]:
        """External ``(g, t)`` pairs, suitable for :func:`build_panel`."""
        return [(int(self.cluster_labels[g]), int(t) + 1) for g, t in zip(self.g, self.t)]


def _buckets(codes: np.ndarray, size: int) -> list[np.ndarray]:
    order = np.argsort(codes, kind="stable")
    bounds = np.searchsorted(codes[order], np.arange(size + 1))
    return [order[bounds[k]:bounds[k + 1]] for k in range(size)]


def build_panel(records: Iterable[tuple[int, int]]) -> PanelIndex:
    """Build a :class:`PanelIndex` from ``(cluster id, period id)`` pairs.

    Ids must be positive integers. Periods are read as ``1..T`` with
    ``T = max(t)``; gaps become empty periods.
    """
    arr = np.asarray(list(records))
    if arr.size == 0:
        raise ValueError("panel needs at least one observation")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("records must be (g, t) pairs")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.mod(arr, 1) == 0):
            raise ValueError("cluster and period ids must be integers")
        arr = arr.astype(np.int64)
    if np.any(arr <= 0):
        bad = int(np.argmax(np.any(arr <= 0, axis=1)))
        raise ValueError(f"ids must be positive integers (record {bad}: {tuple(arr[bad])})")
    labels, g = np.unique(arr[:, 0], return_inverse=True)
    t = arr[:, 1].astype(np.int64) - 1
    return PanelIndex(g.astype(np.int64), t, int(labels.size), int(t.max()) + 1, labels)


def balanced_panel(G: int, T: int, per_cell: int = 1) -> PanelIndex:
    """Balanced panel in cluster-major order: (1,1), (1,2), ..., (G,T)."""
    return build_panel([(g, t) for g in range(1, G + 1) for t in range(1, T + 1)
                        for _ in range(per_cell)])


def distance(p: PanelIndex, i: int, j: int) -> int:
    """0 if i and j share a cluster or a period, else the gap in periods."""
    for k in (i, j):
        if not 0 <= k < p.n:
            raise IndexError(f"observation {k} out of range for n={p.n}")
    if p.g[i] == p.g[j] or p.t[i] == p.t[j]:
        return 0
    return int(abs(p.t[i] - p.t[j]))


def _lag_counts(p: PanelIndex, h: int) -> np.ndarray:
    """Per-observation neighbor count at lag h (zero outside 1..T)."""
    padded = np.concatenate([np.zeros(h, dtype=np.int64), p.time_counts,
                             np.zeros(h, dtype=np.int64)])
    t = p.t + h
    out = padded[t + h] + padded[t - h]
    if h == 0:
        out = out + p.cluster_counts[p.g] - p.time_counts[p.t]
    return out.astype(float)


def delta_boundary(p: PanelIndex, s: int, k: float) -> float:
    """Average number of observations s periods away, raised to the k-th power."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    return float(np.mean(_lag_counts(p, s) ** k))


def delta_window(p: PanelIndex, s: int, m: int, k: float) -> float:
    """Average windowed neighbor count over lags s..m, raised to the k-th power."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s > m:
        return 0.0
    total = np.zeros(p.n)
    for h in range(s, m + 1):
        total += _lag_counts(p, h)
    return float(np.mean(total ** k))


def neighborhood_cost(p: PanelIndex, s: int, m: int, k: float,
                      alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID) -> float:
    """Grid minimum over alpha of the Hölder bound combining both concentration measures."""
    grid = np.asarray(alpha_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("alpha grid is empty")
    if np.any(grid <= 1):
        raise ValueError("alpha grid points must exceed 1")
    best = np.inf
    for a in grid:
        window = delta_window(p, s, m, k * a)
        if window == 0.0:
            return 0.0
        val = window ** (1 / a) * delta_boundary(p, s, a / (a - 1)) ** (1 - 1 / a)
        best = min(best, val)
    return float(best)


@dataclass
class ConcentrationReport:
    delta_boundary: dict[tuple[int, float], float]
    delta_window: dict[tuple[int, int, float], float]
    cost: dict[tuple[int, int, float], float]
    alpha_grid: list[float]


def concentration_report(p: PanelIndex, s_values: Iterable[int], m_values: Iterable[int],
                         k_values: Iterable[float],
                         alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID) -> ConcentrationReport:
    s_values, m_values, k_values = list(s_values), list(m_values), list(k_values)
    db = {(s, k): delta_boundary(p, s, k) for s in s_values for k in k_values}
    dw, cost = {}, {}
    for s in s_values:
        for m in m_values:
            for k in k_values:
                dw[(s, m, k)] = delta_window(p, s, m, k)
                cost[(s, m, k)] = neighborhood_cost(p, s, m, k, alpha_grid)
    return ConcentrationReport(db, dw, cost, [float(a) for a in alpha_grid])
