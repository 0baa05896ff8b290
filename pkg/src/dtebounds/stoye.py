"""Two-sided interval for a partially identified probability, with critical
values solving a coverage-constrained minimization.

The pair (c_l, c_u) minimizes sigma_l*c_l + sigma_u*c_u subject to two
coverage constraints over independent standard normals (Z1, Z2); each
constraint probability is an integral over Z1 of a closed-form normal CDF
term, evaluated by adaptive Gauss-Kronrod quadrature. The pretested length
term Lambda switches off when the estimated bound gap falls below a
vanishing threshold h_n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import norm

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

from .data import ConfigError
from .reports import BoundsEstimate

__all__ = ["StoyeInterval", "h_threshold", "solve_critical_values", "stoye_ci"]

Z_TRUNC = 8.0
GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(96)
BISECT_TOL = 1e-12
GOLDEN_TOL = 1e-9
H_RULES = ("stoye", "logn", "qloglog")


class EstimationFailure(RuntimeError):
    """Solver non-convergence; carries the last iterate in the message."""



@dataclass(frozen=True)
class StoyeInterval:
    c_l: float
    c_u: float
    lam: float
    h_n: float
    lo: float
    hi: float
    empty: bool
    alpha: float
    h_rule: str

    def to_dict(self) -> dict:
        return {"c_l": self.c_l, "c_u": self.c_u, "lambda": self.lam,
                "h_n": self.h_n, "lo": self.lo, "hi": self.hi,
                "empty": self.empty, "alpha": self.alpha,
                "h_rule": self.h_rule}


def h_threshold(n: int, rule: str = "stoye", q_factor: float = 2.0) -> float:
    """Vanishing threshold sequence for the length pretest."""
    if n < 3:
        raise ConfigError("n too small for a threshold sequence")
    if rule == "stoye":
        return math.sqrt(math.log(math.log(n)) / n)
    if rule == "logn":
        return math.sqrt(math.log(n) / n)
    if rule == "qloglog":
        if q_factor < 2.0:
            raise ConfigError("q_factor must be >= 2")
        return math.sqrt(q_factor * math.log(math.log(n)) / n)
    raise ConfigError(f"unknown h rule {rule!r}; choose from {H_RULES}")


def _gauss_legendre(lo: float, hi: float, a: float, b: float, w: float) -> float:
    """integral over [lo, hi] of phi(z) * Phi((a + b*z) / w), via fixed-order
    Gauss-Legendre; exact to well below 1e-10 for these smooth integrands."""
    if hi <= lo:
        return 0.0
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    z = mid + half * GL_NODES
    vals = _INV_SQRT_2PI * np.exp(-0.5 * z * z) * ndtr((a + b * z) / w)
    return float(half * np.dot(GL_WEIGHTS, vals))


def _constraint1(c_l: float, c_u: float, rho: float, lam_u: float) -> float:
    """P(-c_l <= Z1 and rho*Z1 <= c_u + lam_u + Z2*sqrt(1-rho^2))."""
    w = math.sqrt(max(0.0, 1.0 - rho * rho))
    a = c_u + lam_u
    if w < 1e-10:
        # perfectly correlated limit: the Z2 term vanishes
        if rho > 0:
            return max(0.0, float(ndtr(a) - ndtr(-c_l)))
        return float(ndtr(-max(-c_l, -a)))
    return _gauss_legendre(-c_l, Z_TRUNC, a, -rho, w)


def _constraint2(c_l: float, c_u: float, rho: float, lam_l: float) -> float:
    """P(Z2*sqrt(1-rho^2) - c_l - lam_l <= rho*Z1 and Z1 <= c_u)."""
    w = math.sqrt(max(0.0, 1.0 - rho * rho))
    a = c_l + lam_l
    if w < 1e-10:
        if rho > 0:
            return max(0.0, float(ndtr(c_u) - ndtr(-a)))
        return float(ndtr(min(c_u, a)))
    return _gauss_legendre(-Z_TRUNC, c_u, a, rho, w)


def _bisect_cl(fn, target: float, lo: float = 0.0, hi: float = 12.0):
    """Smallest c_l with fn(c_l) >= target; fn nondecreasing. None if
    unattainable on [lo, hi]."""
    if fn(hi) < target:
        return None
    if fn(lo) >= target:
        return lo
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if fn(mid) >= target:
            hi = mid
        else:
            lo = mid
        if hi - lo < BISECT_TOL:
            break
    return hi


def solve_critical_values(alpha: float, rho: float, lam_l: float,
                          lam_u: float, sigma_l: float, sigma_u: float):
    """Minimize sigma_l*c_l + sigma_u*c_u subject to both coverage
    constraints.

    Outer golden-section search over c_u with the required c_l solved by
    bisection from each constraint; the feasible c_l for fixed c_u is the
    max of the two bisection solutions, both nondecreasing requirements.
    """
    if not 0.0 < alpha < 0.5:
        raise ConfigError("alpha must lie in (0, 0.5) for two-sided intervals")
    target = 1.0 - alpha
    z_a = float(norm.ppf(1 - alpha))
    z_half = float(norm.ppf(1 - alpha / 2))
    rho = float(np.clip(rho, -1.0, 1.0))

    def cl_required(c_u: float):
        c1 = _bisect_cl(lambda c: _constraint1(c, c_u, rho, lam_u), target)
        c2 = _bisect_cl(lambda c: _constraint2(c, c_u, rho, lam_l), target)
        if c1 is None or c2 is None:
            return None
        return max(c1, c2)

    best = {"obj": float("inf"), "c_l": None, "c_u": None}

    def objective(c_u: float) -> float:
        req = cl_required(c_u)
        if req is None:
            return float("inf")
        obj = sigma_l * req + sigma_u * c_u
        if obj < best["obj"]:
            best.update(obj=obj, c_l=req, c_u=c_u)
        return obj

    lo, hi = max(0.0, z_a - 1e-6), z_half + 1e-6
    # coarse bracket, then golden-section refinement
    grid = np.linspace(lo, hi, 21)
    vals = [objective(c) for c in grid]
    j = int(np.argmin(vals))
    a = grid[max(0, j - 1)]
    b = grid[min(len(grid) - 1, j + 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = objective(x1), objective(x2)
    it = 0
    while b - a > GOLDEN_TOL and it < 400:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = objective(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = objective(x2)
        it += 1
    objective(0.5 * (a + b))
    if best["c_l"] is None:
        raise EstimationFailure(
            f"critical-value search failed: no feasible point found for "
            f"rho={rho:.4f}, lam=({lam_l:.3g},{lam_u:.3g})")
    return (float(np.clip(best["c_l"], 0.0, z_half)),
            float(np.clip(best["c_u"], 0.0, z_half)))


def stoye_ci(est: BoundsEstimate, alpha: float, n: int | None = None,
             h_rule: str = "stoye", q_factor: float = 2.0) -> StoyeInterval:
    """Pretested two-sided interval from a cross-fitting estimate."""
    n = n or est.n
    sigma_l, sigma_u = est.sigma_l, est.sigma_u
    h_n = h_threshold(n, h_rule, q_factor)
    gap = est.theta_u - est.theta_l
    lam = gap if gap > h_n else 0.0
    if sigma_l < 1e-10 or sigma_u < 1e-10:
        # degenerate variance: fall back to the conservative half-alpha pair
        z_half = float(norm.ppf(1 - alpha / 2))
        c_l = c_u = z_half
    else:
        rho = est.sigma_lu / (sigma_l * sigma_u)
        if abs(rho) > 1.0 + 1e-9:
            raise ConfigError("variance triple is not positive semidefinite")
        sqrt_n = math.sqrt(n)
        c_l, c_u = solve_critical_values(alpha, rho,
                                         sqrt_n * lam / sigma_l,
                                         sqrt_n * lam / sigma_u,
                                         sigma_l, sigma_u)
    lo = est.theta_l - c_l * sigma_l / math.sqrt(n)
    hi = est.theta_u + c_u * sigma_u / math.sqrt(n)
    return StoyeInterval(c_l=c_l, c_u=c_u, lam=lam, h_n=h_n, lo=lo, hi=hi,
                         empty=lo > hi, alpha=alpha, h_rule=h_rule)
