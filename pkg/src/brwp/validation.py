"""Self-checks of the interaction kernels against brute-force references.

Each ``check_*`` function returns a ``CheckResult``; ``validate_kernels``
runs them all and reports the conjunction.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import asdict, dataclass

import numpy as np

from .kernels import (
    GaussianKernelParams,
    gaussian_kde_score,
    interaction_general_prox,
    interaction_l1_delta,
    quadrature_score_oracle,
    separable_interaction_l1,
    separable_weighted_mean,
)
from .prox_math import ProxParams, shrink


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0


def _timed(fn):
    def run(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


@_timed
def check_gaussian_vs_quadrature(seed=0, n_draws: int = 20, tol: float = 1e-6) -> CheckResult:
    """Closed-form Gaussian-KDE score against adaptive quadrature in 1-D.

    The quadrature uses the same Laplace-approximated per-point normalizer
    that the closed form integrates, so agreement is limited only by
    quadrature accuracy.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_draws):
        h = rng.uniform(1e-3, 0.1)
        lam = float(rng.choice([0.0, 0.5, 1.0]))
        sigma = rng.uniform(0.5, 2.0)
        n = int(rng.integers(1, 6))
        pts = rng.normal(0.0, 1.0, size=(n, 1))
        x = float(rng.uniform(-2.0, 2.0))
        p = ProxParams(lam=lam, h=h, beta=1.0)
        got = float(gaussian_kde_score(pts, np.array([x]), p, GaussianKernelParams(sigma))[0])
        ref = quadrature_score_oracle(pts, x, p, kde_sigma=sigma, denominator="laplace",
                                      rtol=1e-11)
        worst = max(worst, abs(got - ref) / max(abs(ref), 1e-300))
    return CheckResult("gaussian_kde_vs_quadrature", worst <= tol, worst, tol,
                       f"{n_draws} random draws, max relative error")


def enumeration_weighted_mean(positions, p: ProxParams) -> np.ndarray:
    """Weighted means from the full kernel on the tensor grid of coordinates.

    Every combination of per-dimension coordinates (``N^d`` points) is a
    particle of the enumerated ensemble; the query points are the original
    particles. Exponential in ``d``; only for small checks.
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    n, d = pos.shape
    grid = np.array(list(itertools.product(*[pos[:, ell] for ell in range(d)])))
    s = shrink(grid, p.lam * p.h)
    bias = 0.5 * p.beta * (np.sum((s - grid) ** 2, axis=1) / (2.0 * p.h)
                           + p.lam * np.sum(np.abs(s), axis=1))
    out = np.empty_like(pos)
    for i in range(n):
        u = -p.beta * np.sum((pos[i] - grid) ** 2, axis=1) / (4.0 * p.h) + bias
        w = np.exp(u - u.max())
        out[i] = (w / w.sum()) @ grid
    return out


@_timed
def check_separable_vs_enumeration(seed=0, tol: float = 1e-12) -> CheckResult:
    """Separable weighted means equal the ``N^d`` enumeration for small ensembles."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n, d in itertools.product((2, 3, 4), (1, 2, 3)):
        pos = rng.normal(size=(n, d))
        p = ProxParams(lam=float(rng.uniform(0.0, 2.0)), h=float(rng.uniform(0.05, 0.5)))
        fast = separable_weighted_mean(pos, p)
        sliced = np.einsum("ijl,jl->il", separable_interaction_l1(pos, p), pos)
        ref = enumeration_weighted_mean(pos, p)
        worst = max(worst, float(np.max(np.abs(fast - ref))), float(np.max(np.abs(sliced - ref))))
    return CheckResult("separable_vs_enumeration", worst <= tol, worst, tol,
                       "(N, d) in {2,3,4} x {1,2,3}, max absolute error")


@_timed
def check_general_reduction(seed=0, tol: float = 1e-14, row_tol: float = 1e-12) -> CheckResult:
    """General-prox kernel with ``g = lam |.|_1`` equals the L1 kernel; rows sum to one."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    row_dev = 0.0
    for _ in range(10):
        n, d = int(rng.integers(2, 12)), int(rng.integers(1, 6))
        pos = rng.normal(scale=2.0, size=(n, d))
        p = ProxParams(lam=float(rng.uniform(0.0, 2.0)), h=float(rng.uniform(0.01, 0.5)),
                       beta=float(rng.uniform(0.5, 2.0)))
        m_l1 = interaction_l1_delta(pos, p)
        m_gen = interaction_general_prox(
            pos, p,
            lambda x, lam=p.lam: lam * np.sum(np.abs(x)),
            lambda x, h, lam=p.lam: shrink(x, lam * h),
        )
        sep = separable_interaction_l1(pos, p)
        worst = max(worst, float(np.max(np.abs(m_l1 - m_gen))))
        row_dev = max(row_dev, float(np.max(np.abs(m_l1.sum(axis=1) - 1.0))),
                      float(np.max(np.abs(m_gen.sum(axis=1) - 1.0))),
                      float(np.max(np.abs(sep.sum(axis=1) - 1.0))))
    ok = worst <= tol and row_dev <= row_tol
    return CheckResult("general_prox_reduction", ok, worst, tol,
                       f"max row-sum deviation {row_dev:.2e} (threshold {row_tol:g})")


class _Normal:
    # scipy.stats.norm has a large per-call overhead inside nested quadrature
    def __init__(self, mean, var):
        self.mean, self.var = mean, var

    def logpdf(self, y):
        return -0.5 * (y - self.mean) ** 2 / self.var - 0.5 * np.log(2 * np.pi * self.var)

    def pdf(self, y):
        return np.exp(self.logpdf(y))


def _orders(hs, errs):
    return np.diff(np.log(errs)) / np.diff(np.log(hs))


@_timed
def check_order_smooth(min_order: float = 1.5) -> CheckResult:
    """Kernel score against the exact Fokker-Planck score, smooth quadratic potential.

    ``rho0 = N(0.5, 1)``, ``V = x^2 / 2``, ``beta = 1``: the Fokker-Planck
    solution stays Gaussian with mean ``0.5 e^{-t}`` and variance
    ``e^{-2t} + 1 - e^{-2t}``, so the score at ``t = h`` is explicit.
    The error is the maximum over three query points.
    """
    m0, v0 = 0.5, 1.0
    rho = _Normal(m0, v0)
    potential = (lambda z: 0.5 * z * z, lambda z: z)
    queries = (-1.0, 0.3, 1.5)
    hs = np.array([0.1, 0.05, 0.025, 0.0125])
    errs = []
    for h in hs:
        p = ProxParams(lam=0.0, h=float(h), beta=1.0)
        mt = m0 * np.exp(-h)
        vt = v0 * np.exp(-2 * h) + (1 - np.exp(-2 * h))
        errs.append(max(abs(quadrature_score_oracle(rho, q, p, potential=potential) + (q - mt) / vt)
                        for q in queries))
    orders = _orders(hs, np.array(errs))
    worst = float(orders.min())
    return CheckResult("score_order_smooth", worst >= min_order, worst, min_order,
                       "orders " + ", ".join(f"{o:.3f}" for o in orders))


@_timed
def check_order_l1(min_order: float = 0.4) -> CheckResult:
    """Kernel score with ``V = |x|`` against the initial score ``-(x - 0.5)``.

    The error is weighted by ``rho0 = N(0.5, 1)`` and integrated (L1 in
    ``rho0``); the grid is refined near the kink at 0 where the error
    concentrates.
    """
    m0 = 0.5
    rho = _Normal(m0, 1.0)
    hs = np.array([0.04, 0.02, 0.01, 0.005])
    errs = []
    for h in hs:
        p = ProxParams(lam=1.0, h=float(h), beta=1.0)
        xs = np.unique(np.concatenate([np.linspace(-4, 5, 46), np.sqrt(h) * np.linspace(-6, 6, 31)]))
        score = np.array([quadrature_score_oracle(rho, x, p, rtol=1e-7) for x in xs])
        err = np.abs(score + (xs - m0))
        errs.append(float(np.trapezoid(err * rho.pdf(xs), xs)))
    orders = _orders(hs, np.array(errs))
    worst = float(orders.min())
    return CheckResult("score_order_l1", worst >= min_order, worst, min_order,
                       "orders " + ", ".join(f"{o:.3f}" for o in orders))


def validate_kernels(seed=0, include_orders: bool = True) -> dict:
    """Run every kernel check; ``report["passed"]`` is their conjunction."""
    checks = [
        check_gaussian_vs_quadrature(seed),
        check_separable_vs_enumeration(seed),
        check_general_reduction(seed),
    ]
    if include_orders:
        checks += [check_order_smooth(), check_order_l1()]
    return {
        "seed": int(seed),
        "passed": all(c.passed for c in checks),
        "checks": [asdict(c) for c in checks],
    }
