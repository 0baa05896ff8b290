"""Exact step-function algebra for two-sample CDF comparisons.

Everything here follows the <= (right-continuous) convention: a CDF
evaluated at t counts observations with value <= t. Extrema of the
difference curve are computed exactly by scanning the merged breakpoints;
no grids or smoothing are involved.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import Adjuster, DegenerateDesignError, Sample
from .reports import BoundsEstimate

__all__ = [
    "StepCdf",
    "DeltaCurve",
    "build_curve",
    "sup_delta",
    "inf_delta",
    "makarov_bounds",
    "dump_curve",
]


@dataclass(frozen=True)
class StepCdf:
    """Right-continuous weighted empirical CDF.

    breakpoints are sorted and distinct; heights[i] is the CDF value at and
    right of breakpoints[i] (0 before the first). For normalized weights the
    last height is 1.
    """

    breakpoints: np.ndarray
    heights: np.ndarray

    @classmethod
    def from_values(cls, values, weights=None, normalize=True):
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise DegenerateDesignError("cannot build a CDF from an empty arm")
        if weights is None:
            weights = np.full(values.size, 1.0 / values.size)
        else:
            weights = np.asarray(weights, dtype=np.float64)
            if np.any(weights <= 0):
                raise ValueError("weights must be positive")
            if normalize:
                weights = weights / weights.sum()
        order = np.argsort(values, kind="mergesort")
        v = values[order]
        w = weights[order]
        keep = np.empty(v.size, dtype=bool)
        keep[:-1] = v[1:] != v[:-1]
        keep[-1] = True
        cum = np.cumsum(w)[keep]
        if normalize:
            cum[-1] = 1.0  # close cumulative rounding
        return cls(breakpoints=v[keep], heights=cum)

    def __post_init__(self):
        if np.any(np.diff(self.heights) < -1e-12):
            raise ValueError("CDF heights must be nondecreasing")

    def __call__(self, t):
        idx = np.searchsorted(self.breakpoints, np.asarray(t, dtype=np.float64),
                              side="right")
        padded = np.concatenate([[0.0], self.heights])
        return padded[idx]


@dataclass(frozen=True)
class DeltaCurve:
    """The treated-minus-control adjusted CDF difference t -> F1(t) - F0(t)."""

    f1: StepCdf
    f0: StepCdf
    merged_breakpoints: np.ndarray
    # raw inputs kept for the exact scan
    _vals1: np.ndarray = field(repr=False)
    _vals0: np.ndarray = field(repr=False)
    _w1: np.ndarray | None = field(repr=False, default=None)
    _w0: np.ndarray | None = field(repr=False, default=None)

    def delta(self, t):
        return self.f1(t) - self.f0(t)


def build_curve(sample: Sample, adjuster: Adjuster | None = None,
                weight_mode: str = "none", p_of_x=None) -> DeltaCurve:
    """Build the adjusted CDF-difference curve from a sample.

    weight_mode "none" uses plain 1/n_j ECDFs; "ipw-normalized" weights
    unit i by D_i/p(x_i) (treated) or (1-D_i)/(1-p(x_i)) (control) and
    renormalizes within arm so each CDF still reaches 1.
    """
    if adjuster is None:
        adj = np.zeros(sample.n)
    else:
        if len(adjuster.values) != sample.n:
            raise ValueError("adjuster length does not match sample size")
        adj = adjuster.values
    y = sample.y - adj
    t_mask = sample.d == 1
    vals1 = y[t_mask]
    vals0 = y[~t_mask]
    if vals1.size == 0 or vals0.size == 0:
        raise DegenerateDesignError("both treatment arms must be nonempty")
    if weight_mode == "none":
        w1 = w0 = None
        f1 = StepCdf.from_values(vals1)
        f0 = StepCdf.from_values(vals0)
    elif weight_mode == "ipw-normalized":
        if p_of_x is None:
            raise ValueError("ipw mode requires propensity values")
        p = np.asarray(p_of_x, dtype=np.float64)
        w1 = 1.0 / p[t_mask]
        w0 = 1.0 / (1.0 - p[~t_mask])
        w1 = w1 / w1.sum()
        w0 = w0 / w0.sum()
        f1 = StepCdf.from_values(vals1, w1, normalize=True)
        f0 = StepCdf.from_values(vals0, w0, normalize=True)
    else:
        raise ValueError(f"unknown weight_mode {weight_mode!r}")
    merged = np.unique(np.concatenate([vals1, vals0]))
    return DeltaCurve(f1=f1, f0=f0, merged_breakpoints=merged,
                      _vals1=vals1, _vals0=vals0, _w1=w1, _w0=w0)


def sup_delta(curve: DeltaCurve) -> tuple[float, float]:
    """Exact max over t of the difference curve.

    Returns (t_star, value); value >= 0 always since the curve is 0 off
    support. t_star is the smallest maximizing breakpoint, or -inf when the
    max 0 is attained only off-support.
    """
    sup, t_sup, _, _ = kernels.scan_extrema(curve._vals1, curve._vals0,
                                            curve._w1, curve._w0)
    return t_sup, sup


def inf_delta(curve: DeltaCurve) -> tuple[float, float]:
    """Exact min over t; value <= 0, t_star smallest minimizing breakpoint
    or +inf sentinel. The implied upper bound is 1 + value."""
    _, _, inf, t_inf = kernels.scan_extrema(curve._vals1, curve._vals0,
                                            curve._w1, curve._w0)
    return t_inf, inf


def makarov_bounds(sample: Sample) -> BoundsEstimate:
    """Unadjusted bounds on P(Y(1) - Y(0) <= 0) from the two observed arms;
    equivalent to the adjusted machinery with a zero adjustment term."""
    curve = build_curve(sample)
    t_l, sup = sup_delta(curve)
    t_u, inf = inf_delta(curve)
    return BoundsEstimate(theta_l=sup, theta_u=1.0 + inf, t_l=t_l, t_u=t_u,
                          pi_hat=sample.n1 / sample.n, n=sample.n)


def dump_curve(curve: DeltaCurve) -> np.ndarray:
    """(t, delta(t)) rows at every merged breakpoint, for external plotting."""
    t = curve.merged_breakpoints
    return np.column_stack([t, curve.delta(t)])
