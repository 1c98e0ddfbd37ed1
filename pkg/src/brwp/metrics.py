"""Evaluation metrics: exact mixture marginals, grid KL, W2, HPD, error norms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import UsageError
from .prox_math import log_erf_interval
from .problems import MixtureSpec

KL_FLOOR = 1e-300


@dataclass(frozen=True)
class Grid1D:
    lo: float
    hi: float
    n_points: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise UsageError(f"grid needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.n_points < 2:
            raise UsageError("grid needs at least two points")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_points)


@dataclass
class MarginalCurve:
    """Density values on a grid.

    ``normalization`` is the constant the raw curve was divided by and
    ``narrow`` flags a grid that misses more than 1e-3 of the mass.
    """

    grid: Grid1D
    density: np.ndarray
    normalization: float
    log_normalization: float = 0.0
    narrow: bool = False

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid.points))


def _log_half_line_terms(y, sigma, lam):
    # log of the integral of exp(-(t-y)^2/(2 sigma^2) - lam |t|) over t>0 and t<0
    a = lam * sigma**2
    s = np.sqrt(2.0) * sigma
    log_s = np.log(s)
    pos = ((y - a) ** 2 - y**2) / (2 * sigma**2) + log_s + log_erf_interval(-(y - a) / s, np.inf)
    neg = ((y + a) ** 2 - y**2) / (2 * sigma**2) + log_s + log_erf_interval(-np.inf, -(y + a) / s)
    return pos, neg


def log_coordinate_integrals(spec: MixtureSpec) -> np.ndarray:
    """``log I[n, j]``: integral over the j-th coordinate for center ``n``."""
    pos, neg = _log_half_line_terms(spec.centers, spec.sigma, spec.lam)
    return np.logaddexp(pos, neg)


def mixture_log_normalizer(spec: MixtureSpec) -> float:
    """``log Z`` of ``exp(-f - lam ||x||_1)`` over all of ``R^d``."""
    return float(special.logsumexp(np.sum(log_coordinate_integrals(spec), axis=1)))


def mixture_marginal_exact(spec: MixtureSpec, dim: int, grid: Grid1D) -> MarginalCurve:
    """Exact one-dimensional marginal of the Gaussian/Laplace mixture along ``dim``."""
    if not 0 <= dim < spec.d:
        raise UsageError(f"dim must lie in [0, {spec.d}), got {dim}")
    log_i = log_coordinate_integrals(spec)
    log_z = float(special.logsumexp(np.sum(log_i, axis=1)))
    others = np.sum(log_i, axis=1) - log_i[:, dim]  # (M,)
    x = grid.points
    y = spec.centers[:, dim]
    expo = (-((x[:, None] - y) ** 2) / (2 * spec.sigma**2) - spec.lam * np.abs(x)[:, None]
            + others)
    density = np.exp(special.logsumexp(expo, axis=1) - log_z)
    mass = float(np.trapezoid(density, x))
    return MarginalCurve(grid, density, math.exp(log_z) if log_z < 700 else math.inf,
                         log_z, narrow=mass < 0.999)


def kde_on_grid(samples, H: float, grid: Grid1D) -> MarginalCurve:
    """Gaussian KDE ``sum_j exp(-(x - x_j)^2 / (2H))``, normalized by trapezoid rule.

    ``H`` is a variance, not a standard deviation.
    """
    samples = np.ravel(np.asarray(samples, dtype=float))
    if samples.size < 1:
        raise UsageError("KDE needs at least one sample")
    if not H > 0:
        raise UsageError("bandwidth must be positive")
    x = grid.points
    expo = -((x[:, None] - samples) ** 2) / (2.0 * H)
    log_raw = special.logsumexp(expo, axis=1)
    shift = float(np.max(log_raw))
    raw = np.exp(log_raw - shift)
    z = float(np.trapezoid(raw, x))
    if z <= 0:
        raise UsageError("KDE has no mass on the grid")
    return MarginalCurve(grid, raw / z, z, shift + math.log(z))


def _as_curve_values(c, grid):
    if isinstance(c, MarginalCurve):
        if c.grid != grid:
            raise UsageError("curves live on different grids")
        return np.asarray(c.density, dtype=float)
    return np.asarray(c, dtype=float)


def kl_on_grid(p, q, grid: Grid1D | None = None) -> float:
    """Trapezoid approximation of ``KL(p || q)``.

    ``p`` and ``q`` are ``MarginalCurve`` objects on the same grid, or raw
    arrays together with ``grid``. Both are floored at 1e-300 and
    renormalized before taking logs.
    """
    if grid is None:
        if not isinstance(p, MarginalCurve):
            raise UsageError("raw density arrays need an explicit grid")
        grid = p.grid
    pv = _as_curve_values(p, grid)
    qv = _as_curve_values(q, grid)
    if pv.shape != (grid.n_points,) or qv.shape != (grid.n_points,):
        raise UsageError("density arrays do not match the grid")
    x = grid.points
    pv = np.maximum(pv, KL_FLOOR)
    qv = np.maximum(qv, KL_FLOOR)
    pv = pv / np.trapezoid(pv, x)
    qv = qv / np.trapezoid(qv, x)
    return float(np.trapezoid(pv * (np.log(pv) - np.log(qv)), x))


def w2_1d(a, b) -> float:
    """Wasserstein-2 distance between two equal-size empirical measures on the line."""
    a = np.sort(np.ravel(np.asarray(a, dtype=float)))
    b = np.sort(np.ravel(np.asarray(b, dtype=float)))
    if a.shape != b.shape:
        raise UsageError(f"sample sizes differ: {a.size} vs {b.size}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def hpd_threshold(potential_values, alpha: float) -> float:
    """Smallest sample value whose empirical CDF reaches ``1 - alpha``."""
    v = np.sort(np.ravel(np.asarray(potential_values, dtype=float)))
    if v.size == 0:
        raise UsageError("HPD threshold of an empty sample")
    if not 0.0 < alpha < 1.0:
        raise UsageError(f"alpha must lie in (0, 1), got {alpha}")
    # the tolerance absorbs rounding in (1 - alpha) * n, e.g. alpha = 0.95, n = 100
    k = math.ceil((1.0 - alpha) * v.size - 1e-9)
    return float(v[min(max(k, 1), v.size) - 1])


def error_norms(est, truth, peak: float | None = None) -> dict:
    """``l1_rel`` (mean absolute error), ``rmse`` and ``psnr`` in dB.

    PSNR uses ``max(truth) - min(truth)`` as peak unless given, and is
    ``inf`` for an exact match.
    """
    est = np.ravel(np.asarray(est, dtype=float))
    truth = np.ravel(np.asarray(truth, dtype=float))
    if est.shape != truth.shape:
        raise UsageError(f"lengths differ: {est.size} vs {truth.size}")
    diff = est - truth
    rmse = float(np.sqrt(np.mean(diff**2)))
    if peak is None:
        peak = float(np.max(truth) - np.min(truth))
    if not peak > 0:
        raise UsageError("PSNR peak must be positive")
    psnr = math.inf if rmse == 0 else 20.0 * math.log10(peak / rmse)
    return {"l1_rel": float(np.mean(np.abs(diff))), "rmse": rmse, "psnr": psnr}
