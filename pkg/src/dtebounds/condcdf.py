"""Conditional outcome-CDF models and extraction of adjustment functions.

A fitted model estimates F_j(t | x) for one arm. The adjustment functions
are, per covariate row, the grid argmax (lower side) and argmin (upper
side) of F_1(t|x) - F_0(t|x). Model quality affects only the width of the
resulting bounds, never their validity, so the built-in learners are
deliberately simple and dependency-free: k-nearest-neighbor and ridge.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import Adjuster, ConfigError, Sample, make_folds

__all__ = [
    "GridSpec",
    "ConditionalCdfModel",
    "ConstantCdfModel",
    "LocationShiftModel",
    "QuantileGridModel",
    "parse_model_spec",
    "fit_arm_model",
    "extract_adjusters",
    "select_model",
]

TAU_GRID = np.round(np.linspace(0.0, 1.0, 101), 2)


@dataclass(frozen=True)
class GridSpec:
    """Candidate-location grid for the per-row argmax/argmin search.

    kind "normal": random draws centered at 0 with scale equal to the
    outcome range; kind "linear": equispaced over an inflated outcome range
    (deterministic alternative for reproducibility studies).
    """

    kind: str = "normal"
    size: int = 10_000

    def build(self, y_lo: float, y_hi: float, rng) -> np.ndarray:
        if self.size < 1:
            raise ConfigError("grid size must be positive")
        span = max(y_hi - y_lo, 1e-12)
        if self.kind == "normal":
            return np.sort(rng.normal(0.0, span, size=self.size))
        if self.kind == "linear":
            pad = 0.5 * span
            return np.linspace(y_lo - pad, y_hi + pad, self.size)
        raise ConfigError(f"unknown grid kind {self.kind!r}")


class ConditionalCdfModel:
    """Interface: eval_cdf(t, x) in [0,1], nondecreasing in t for fixed x."""

    kind = "abstract"

    def eval_cdf(self, t, x):
        raise NotImplementedError

    def cdf_matrix(self, grid, X):
        """len(X) x len(grid) matrix of conditional CDF values."""
        return np.vstack([self.eval_cdf(grid, x) for x in X])


class ConstantCdfModel(ConditionalCdfModel):
    """Covariate-free empirical CDF of the arm outcomes."""

    kind = "constant"

    def __init__(self, y):
        self.y_sorted = np.sort(np.asarray(y, dtype=np.float64))

    def eval_cdf(self, t, x=None):
        out = kernels.ecdf_at(self.y_sorted, t)
        return out if np.ndim(t) else float(out[0])

    # location-shift view with a zero shift, for the fast argopt kernel
    def predict_mu(self, X):
        return np.zeros(len(X))

    @property
    def residuals(self):
        return self.y_sorted


class LocationShiftModel(ConditionalCdfModel):
    """F_j(t|x) modeled as Fe(t - mu(x)) with Fe the in-train residual ECDF."""

    kind = "loc_shift"

    def __init__(self, regressor, residuals):
        self.regressor = regressor
        self.residuals = np.sort(residuals)

    def predict_mu(self, X):
        return self.regressor.predict(np.atleast_2d(X))

    def eval_cdf(self, t, x):
        mu = float(self.predict_mu(np.atleast_2d(x))[0])
        out = kernels.ecdf_at(self.residuals, np.asarray(t, dtype=float) - mu)
        return out if np.ndim(t) else float(out[0])


class QuantileGridModel(ConditionalCdfModel):
    """Per-row quantile predictions on a tau grid, linearly interpolated.

    Predictions are sorted per row (monotone rearrangement) before
    interpolation; outside the predicted range the CDF is clamped to 0/1.
    """

    kind = "quantile_grid"

    def __init__(self, y, x, k, taus=TAU_GRID):
        self.y = np.asarray(y, dtype=np.float64)
        self.x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        self.k = int(k)
        self.taus = np.asarray(taus, dtype=np.float64)
        if self.k > self.y.size:
            raise ConfigError(f"k={self.k} exceeds arm size {self.y.size}")

    def predict_quantiles(self, X):
        X = np.atleast_2d(X)
        idx = _knn_indices(self.x, X, self.k)
        q = np.quantile(self.y[idx], self.taus, axis=1).T
        return np.sort(q, axis=1)

    def eval_cdf(self, t, x):
        q = self.predict_quantiles(np.atleast_2d(x))[0]
        out = kernels.interp_cdf_row(q, self.taus, np.atleast_1d(
            np.asarray(t, dtype=np.float64)))
        return out if np.ndim(t) else float(out[0])


class _KnnMean:
    def __init__(self, x, y, k):
        self.x = x
        self.y = y
        self.k = k

    def predict(self, X):
        idx = _knn_indices(self.x, np.atleast_2d(X), self.k)
        return self.y[idx].mean(axis=1)


class _Ridge:
    """Ridge regression with intercept; penalty chosen by generalized CV
    when lam is None."""

    def __init__(self, x, y, lam=None):
        n, p = x.shape
        self.x_mean = x.mean(axis=0)
        self.x_scale = x.std(axis=0)
        self.x_scale[self.x_scale == 0] = 1.0
        xs = (x - self.x_mean) / self.x_scale
        self.y_mean = y.mean()
        yc = y - self.y_mean
        u, s, vt = np.linalg.svd(xs, full_matrices=False)
        uty = u.T @ yc
        if lam is None:
            lams = np.logspace(-4, 4, 41)
            best, lam_best = np.inf, 1.0
            for lm in lams:
                shrink = s / (s**2 + lm)
                resid = yc - u @ (s * shrink * uty)
                df = np.sum(s**2 / (s**2 + lm))
                gcv = (resid @ resid) / n / (1 - df / n) ** 2
                if gcv < best:
                    best, lam_best = gcv, lm
            lam = lam_best
        self.lam = lam
        self.coef = vt.T @ (s / (s**2 + lam) * uty)

    def predict(self, X):
        xs = (np.atleast_2d(X) - self.x_mean) / self.x_scale
        return self.y_mean + xs @ self.coef


def _knn_indices(train_x, query_x, k):
    d2 = ((query_x[:, None, :] - train_x[None, :, :]) ** 2).sum(axis=2)
    if k >= train_x.shape[0]:
        return np.argsort(d2, axis=1)
    part = np.argpartition(d2, k - 1, axis=1)[:, :k]
    return part


def parse_model_spec(spec: str):
    """Split a model spec string like 'knn_loc_shift:k=15' into
    (name, params)."""
    name, _, rest = spec.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            if not val:
                raise ConfigError(f"malformed model spec {spec!r}")
            params[key.strip()] = val.strip()
    return name.strip(), params


def fit_arm_model(y, x, spec: str, seed: int = 0) -> ConditionalCdfModel:
    """Fit one arm's conditional CDF model from outcomes y and covariates x.

    Degenerate (constant) covariates trigger a fallback to the constant
    model with a warning; an oversized k is an error.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if y.size == 0:
        raise ConfigError("cannot fit a model on an empty arm")
    name, params = parse_model_spec(spec)
    if name == "constant":
        return ConstantCdfModel(y)
    if np.all(x.std(axis=0) == 0):
        warnings.warn(f"constant covariates: falling back to constant model"
                      f" (requested {spec!r})")
        return ConstantCdfModel(y)
    k_default = math.ceil(math.sqrt(y.size))
    if name == "knn_loc_shift":
        k = int(params.get("k", k_default))
        if k > y.size:
            raise ConfigError(f"k={k} exceeds arm size {y.size}")
        reg = _KnnMean(x, y, k)
        resid = y - reg.predict(x)
        return LocationShiftModel(reg, resid)
    if name == "ridge_loc_shift":
        lam_raw = params.get("lambda", "auto")
        lam = None if lam_raw == "auto" else float(lam_raw)
        reg = _Ridge(x, y, lam)
        resid = y - reg.predict(x)
        return LocationShiftModel(reg, resid)
    if name == "knn_quantile":
        k = int(params.get("k", k_default))
        return QuantileGridModel(y, x, k)
    raise ConfigError(f"unknown model spec {spec!r}")


def extract_adjusters(m1: ConditionalCdfModel, m0: ConditionalCdfModel,
                      x_eval, grid: np.ndarray) -> tuple[Adjuster, Adjuster]:
    """Per evaluation row, the grid argmax (lower) and argmin (upper) of
    F1(t|x) - F0(t|x); ties break toward the smallest grid point.

    The caller is responsible for fitting the models on data disjoint from
    x_eval's fold.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ConfigError("empty argmax grid")
    x_eval = np.atleast_2d(np.asarray(x_eval, dtype=np.float64))
    if m1.kind == "constant" and m0.kind == "constant":
        # covariate-free CDFs: bounds are invariant to any constant shift,
        # so the zero function is the canonical adjuster
        zero = np.zeros(len(x_eval))
        return (Adjuster(values=zero, label="zero"),
                Adjuster(values=zero, label="zero"))
    loc_kinds = ("constant", "loc_shift")
    if m1.kind == "quantile_grid" and m0.kind == "quantile_grid":
        q1 = m1.predict_quantiles(x_eval)
        q0 = m0.predict_quantiles(x_eval)
        s_lo, s_hi = kernels.interp_cdf_argopt(q1, q0, m1.taus, grid)
    elif m1.kind in loc_kinds and m0.kind in loc_kinds:
        s_lo, s_hi = kernels.shift_cdf_argopt(
            m1.predict_mu(x_eval), m0.predict_mu(x_eval),
            m1.residuals, m0.residuals, grid)
    else:
        f1 = m1.cdf_matrix(grid, x_eval)
        f0 = m0.cdf_matrix(grid, x_eval)
        d = f1 - f0
        s_lo = grid[np.argmax(d, axis=1)]
        s_hi = grid[np.argmin(d, axis=1)]
    return (Adjuster(values=s_lo, label="fitted_L"),
            Adjuster(values=s_hi, label="fitted_U"))


def _inner_bound(train: Sample, spec: str, side: str, cv_folds: int,
                 seed: int, grid_spec: GridSpec) -> float:
    """Cross-validated pooled bound inside the training data only."""
    plan = make_folds(train, cv_folds, seed)
    rng = np.random.default_rng(seed)
    grid = grid_spec.build(train.y_lo, train.y_hi, rng)
    adj = np.empty(train.n)
    for k in range(1, cv_folds + 1):
        oof = train.subset(plan.complement(k))
        m1 = fit_arm_model(oof.y[oof.d == 1], oof.x[oof.d == 1], spec, seed)
        m0 = fit_arm_model(oof.y[oof.d == 0], oof.x[oof.d == 0], spec, seed)
        members = plan.members(k)
        s_lo, s_hi = extract_adjusters(m1, m0, train.x[members], grid)
        adj[members] = s_lo.values if side == "L" else s_hi.values
    y_adj = train.y - adj
    sup, _, inf, _ = kernels.scan_extrema(y_adj[train.d == 1],
                                          y_adj[train.d == 0])
    return sup if side == "L" else 1.0 + inf


def select_model(candidates, train: Sample, side: str, cv_folds: int = 5,
                 seed: int = 0, grid_spec: GridSpec = GridSpec()) -> str:
    """Pick the candidate spec whose inner cross-validated bound is best:
    largest lower bound (side 'L') or smallest upper bound (side 'U').

    Held-out data never enters; candidates that fail to fit are excluded,
    and if all fail the constant model is returned with a warning.
    """
    if side not in ("L", "U"):
        raise ConfigError("side must be 'L' or 'U'")
    if not candidates:
        raise ConfigError("need at least one candidate model spec")
    if len(candidates) == 1:
        return candidates[0]
    best_spec, best_val = None, -np.inf
    for spec in candidates:
        try:
            val = _inner_bound(train, spec, side, cv_folds, seed, grid_spec)
        except Exception as exc:  # noqa: BLE001 - robustness contract
            warnings.warn(f"candidate {spec!r} failed during selection: {exc}")
            continue
        score = val if side == "L" else -val
        if score > best_val:
            best_val, best_spec = score, spec
    if best_spec is None:
        warnings.warn("all candidate models failed; using constant model")
        return "constant"
    return best_spec
