"""Lag kernels and the AR(1) plug-in bandwidth rule."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

KINDS = ("triangular", "uniform")
RHO_CLAMP = 0.97
BARTLETT_CONSTANT = 1.1447


class DegenerateSeriesWarning(UserWarning):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "triangular"
    bandwidth: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KINDS}")
        if int(self.bandwidth) != self.bandwidth or self.bandwidth < 0:
            raise ValueError(f"bandwidth must be a nonnegative integer, got {self.bandwidth}")

    def weights(self) -> np.ndarray:
        """ω(m, M) for m = 1..M."""
        return np.array([weight(self, m) for m in range(1, self.bandwidth + 1)])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "bandwidth": int(self.bandwidth)}


def weight(k: KernelSpec, m: int) -> float:
    if m < 1:
        raise ValueError("lag must be at least 1")
    if k.kind == "triangular":
        return max(0.0, 1.0 - m / (k.bandwidth + 1))
    return 1.0 if m <= k.bandwidth else 0.0


@dataclass(frozen=True)
class BandwidthChoice:
    bandwidth: int
    rho: tuple[float, ...]
    alpha1: float
    degenerate: bool = False


def ar1_coefficients(series) -> np.ndarray:
    """Per-coordinate lag-1 OLS slope of the demeaned series, clamped to ±0.97.

    Coordinates with zero variance get ``nan``.
    """
    y = np.asarray(series, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    y = y - y.mean(axis=0)
    den = np.sum(y[:-1] ** 2, axis=0)
    num = np.sum(y[1:] * y[:-1], axis=0)
    scale = np.max(np.abs(y), axis=0)
    ok = (den > 0) & (scale > 0) & (den > 1e-24 * scale ** 2 * len(y))
    rho = np.full(y.shape[1], np.nan)
    rho[ok] = np.clip(num[ok] / den[ok], -RHO_CLAMP, RHO_CLAMP)
    return rho


def bandwidth_from_rho(rho, T: int) -> tuple[int, float]:
    """Bartlett-kernel plug-in bandwidth for given AR(1) coefficients (equal weights)."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    alpha1 = float(np.mean(4 * rho ** 2 / ((1 - rho) ** 2 * (1 + rho) ** 2)))
    raw = math.ceil(BARTLETT_CONSTANT * (alpha1 * T) ** (1 / 3)) if alpha1 > 0 else 0
    return int(min(max(raw, 1), T - 1)), alpha1


def andrews_bandwidth_choice(series) -> BandwidthChoice:
    y = np.asarray(series, dtype=float)
    T = y.shape[0]
    if T < 3:
        raise ValueError(f"need at least 3 periods for bandwidth selection, got {T}")
    rho = ar1_coefficients(y)
    usable = rho[~np.isnan(rho)]
    if usable.size == 0:
        warnings.warn("score series has zero variance; using bandwidth 1", DegenerateSeriesWarning,
                      stacklevel=2)
        return BandwidthChoice(1, tuple(rho.tolist()), 0.0, degenerate=True)
    M, alpha1 = bandwidth_from_rho(usable, T)
    return BandwidthChoice(M, tuple(rho.tolist()), alpha1)


def andrews_bandwidth(series) -> int:
    """Data-driven lag truncation for the triangular kernel.

    Parameters
    ----------
    series : array_like, shape (T,) or (T, v)
        Time-aggregated scores y_t.
    """
    return andrews_bandwidth_choice(series).bandwidth
