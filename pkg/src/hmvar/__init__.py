"""Variance estimation for sums of cluster- and serially-dependent panel scores."""

__version__ = "0.1.0"

from .estimators import METHODS, brute_force, cgm, chs, cr_one_way, ehw, hm_con, time_aggregate
from .kernels import KernelSpec, andrews_bandwidth, weight
from .panel import PanelIndex, balanced_panel, build_panel, distance

__all__ = [
    "METHODS", "KernelSpec", "PanelIndex", "andrews_bandwidth", "balanced_panel", "brute_force",
    "build_panel", "cgm", "chs", "cr_one_way", "distance", "ehw", "hm_con", "time_aggregate",
    "weight",
]
