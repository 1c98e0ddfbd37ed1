"""Interaction kernels of the regularized Wasserstein proximal operator.

The kernel turns an ensemble into weights that approximate the score of the
density obtained by one proximal step. Four variants are provided:

* ``delta``: the ensemble is an empirical measure (``interaction_l1_delta``).
* ``general``: same, for a nonsmooth term given by value and prox callbacks.
* ``separable``: the ensemble is replaced by the tensor grid of its
  coordinates, giving one row-stochastic matrix per dimension.
* ``gaussian``: the ensemble is a Gaussian KDE; the score is available in
  closed form through error-function integrals (``gaussian_kde_score``).

``quadrature_score_oracle`` evaluates the same score by brute-force
quadrature in one dimension and is used as the reference for all variants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.spatial.distance import cdist

from .errors import NumericError, UsageError
from .prox_math import ProxParams, log_erf_interval, logsumexp, shrink, softmax_stable

KERNEL_VARIANTS = ("delta", "gaussian", "separable", "general")


@dataclass
class Ensemble:
    """Particle positions (``N x d``) and the iteration that produced them."""

    positions: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.ndim != 2 or pos.shape[0] < 1 or pos.shape[1] < 1:
            raise UsageError(f"positions must be an N x d array, got shape {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise NumericError("ensemble contains non-finite positions", iteration=self.iteration)
        self.positions = pos
        if self.iteration < 0:
            raise UsageError("iteration index must be nonnegative")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class GaussianKernelParams:
    """KDE bandwidth; ``c = 2h / (sigma^2 beta)`` is derived, never stored."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise UsageError(f"KDE bandwidth must be positive, got {self.sigma}")

    def c(self, p: ProxParams) -> float:
        return 2.0 * p.h / (self.sigma**2 * p.beta)


def default_bandwidth(positions) -> float:
    """Silverman-style bandwidth: mean coordinate std times ``N^(-1/(d+4))``."""
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    n, d = pos.shape
    spread = float(np.mean(np.std(pos, axis=0, ddof=1))) if n > 1 else 0.0
    if spread <= 0:
        spread = 1.0
    return spread * n ** (-1.0 / (d + 4))


def _positions(e) -> np.ndarray:
    return e.positions if isinstance(e, Ensemble) else np.atleast_2d(np.asarray(e, dtype=float))


def kernel_exponent_l1(xi, xj, p: ProxParams) -> float:
    """Exponent ``U(xi, xj)`` of the L1 interaction kernel.

    Both slots use the half-step position ``xj``.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    xj = np.atleast_1d(np.asarray(xj, dtype=float))
    s = shrink(xj, p.lam * p.h)
    dist2 = np.sum((xi - xj) ** 2)
    gap2 = np.sum((s - xj) ** 2)
    return float(-0.5 * p.beta * ((dist2 - gap2) / (2.0 * p.h) - p.lam * np.sum(np.abs(s))))


def _row_normalize(exponent: np.ndarray) -> np.ndarray:
    finite = np.isfinite(exponent)
    if not finite.all():
        bad = int(np.argwhere(~finite)[0][0])
        raise NumericError(f"non-finite kernel exponent in row {bad}", index=bad)
    return softmax_stable(exponent, axis=1)


def _column_bias_exponent(pos, prox_pos, g_at_prox, p: ProxParams) -> np.ndarray:
    # U_ij = -beta |xi - xj|^2 / 4h + beta/2 (|prox(xj) - xj|^2 / 2h + g(prox(xj)))
    gap2 = np.sum((prox_pos - pos) ** 2, axis=1)
    bias = 0.5 * p.beta * (gap2 / (2.0 * p.h) + g_at_prox)
    dist2 = cdist(pos, pos, "sqeuclidean")
    return -p.beta * dist2 / (4.0 * p.h) + bias[None, :]


def interaction_l1_delta(e, p: ProxParams) -> np.ndarray:
    """Row-stochastic ``M`` for the empirical-measure kernel with ``g = lam |.|_1``."""
    pos = _positions(e)
    s = shrink(pos, p.lam * p.h)
    g_s = p.lam * np.sum(np.abs(s), axis=1)
    return _row_normalize(_column_bias_exponent(pos, s, g_s, p))


def interaction_general_prox(e, p: ProxParams, g_value, g_prox) -> np.ndarray:
    """Row-stochastic ``M`` for a nonsmooth term given by callbacks.

    ``g_value(x)`` returns ``g`` at a d-vector; ``g_prox(x, h)`` returns the
    proximal point with step ``h``. ``p.lam`` is ignored.
    """
    pos = _positions(e)
    prox_pos = np.empty_like(pos)
    g_at = np.empty(pos.shape[0])
    for j, x in enumerate(pos):
        prox_pos[j] = g_prox(x, p.h)
        g_at[j] = g_value(prox_pos[j])
        if not (np.all(np.isfinite(prox_pos[j])) and np.isfinite(g_at[j])):
            raise NumericError(f"nonsmooth callback returned a non-finite value at particle {j}",
                               index=j)
    return _row_normalize(_column_bias_exponent(pos, prox_pos, g_at, p))


def _separable_exponent(col: np.ndarray, p: ProxParams) -> np.ndarray:
    s = shrink(col, p.lam * p.h)
    bias = 0.5 * p.beta * ((s - col) ** 2 / (2.0 * p.h) + p.lam * np.abs(s))
    diff = col[:, None] - col[None, :]
    return -p.beta * diff**2 / (4.0 * p.h) + bias[None, :]


def separable_interaction_l1(e, p: ProxParams) -> np.ndarray:
    """Per-dimension kernel, shape ``(N, N, d)``; slice ``[:, :, l]`` is row-stochastic."""
    pos = _positions(e)
    n, d = pos.shape
    out = np.empty((n, n, d))
    for ell in range(d):
        out[:, :, ell] = _row_normalize(_separable_exponent(pos[:, ell], p))
    return out


def separable_weighted_mean(e, p: ProxParams) -> np.ndarray:
    """``sum_j (M_ij)_l x_jl`` for every particle and dimension, shape ``(N, d)``.

    Equivalent to contracting ``separable_interaction_l1`` with the positions
    without holding the ``N x N x d`` array.
    """
    pos = _positions(e)
    out = np.empty_like(pos)
    for ell in range(pos.shape[1]):
        col = pos[:, ell]
        out[:, ell] = _row_normalize(_separable_exponent(col, p)) @ col
    return out


def _gaussian_pair_terms(x, z, p: ProxParams, c: float):
    """Log of the per-coordinate normalizer and the ratio of its x-derivative to it.

    ``x`` and ``z`` broadcast against each other; ``x`` is the query
    coordinate and ``z`` the particle coordinate.
    """
    beta, h, lam = p.beta, p.h, p.lam
    lh = lam * h
    q = beta / (4.0 * h)
    b_pos = x + c * z + lh
    b_neg = x + c * z - lh
    b_mid = x + c * z

    half_log_k = 0.5 * np.log(4.0 * h / (beta * (1.0 + c)))
    root = np.sqrt(beta * (1.0 + c) / (4.0 * h))
    e1 = -q * (lh**2 - b_pos**2 / (1.0 + c))
    a1 = root * (lh - b_pos / (1.0 + c))
    log_t1 = half_log_k + log_erf_interval(a1, np.inf) + e1
    e2 = -q * (lh**2 - b_neg**2 / (1.0 + c))
    a2 = root * (-lh - b_neg / (1.0 + c))
    log_t2 = half_log_k + log_erf_interval(-np.inf, a2) + e2

    if lam > 0:
        root3 = np.sqrt(c * beta / (4.0 * h))
        e3 = q * b_mid**2 / c
        lo = root3 * (-lh - b_mid / c)
        hi = root3 * (lh - b_mid / c)
        log_t3 = 0.5 * np.log(4.0 * h / (c * beta)) + log_erf_interval(lo, hi) + e3
    else:
        log_t3 = np.full(np.broadcast(x, z).shape, -np.inf)

    log_t = np.logaddexp(np.logaddexp(log_t1, log_t2), log_t3)
    w1 = np.exp(log_t1 - log_t)
    w2 = np.exp(log_t2 - log_t)
    w3 = np.exp(log_t3 - log_t)
    ratio = (0.5 * beta / (h * (1.0 + c))) * (w1 * b_pos + w2 * b_neg)
    ratio = ratio + np.exp(-a1**2 + e1 - log_t) / (1.0 + c)
    ratio = ratio - np.exp(-a2**2 + e2 - log_t) / (1.0 + c)
    if lam > 0:
        ratio = ratio + w3 * (0.5 * beta * b_mid / (h * c))
        ratio = ratio - (np.exp(-hi**2 + e3 - log_t) - np.exp(-lo**2 + e3 - log_t)) / c
    return log_t, ratio


def gaussian_kde_score(e, query, p: ProxParams, k: GaussianKernelParams) -> np.ndarray:
    """Score of the proximal kernel applied to a Gaussian KDE of the ensemble.

    ``query`` is a d-vector or a ``(Q, d)`` stack; the result has the same
    shape. The normalization constants of the KDE and the kernel cancel and
    are omitted.
    """
    pos = _positions(e)
    q = np.asarray(query, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    if q.shape[1] != pos.shape[1]:
        raise UsageError(f"query has dimension {q.shape[1]}, ensemble has {pos.shape[1]}")
    c = k.c(p)
    log_t, ratio = _gaussian_pair_terms(q[:, None, :], pos[None, :, :], p, c)
    log_w = -np.sum(pos**2, axis=1) / (2.0 * k.sigma**2)
    log_a = log_w[None, :] + np.sum(log_t, axis=2)
    if not np.all(np.isfinite(logsumexp(log_a, axis=1))):
        bad = int(np.argwhere(~np.isfinite(logsumexp(log_a, axis=1)))[0][0])
        raise NumericError(f"kernel normalizer underflowed at query {q[bad]}", index=bad)
    weights = softmax_stable(log_a, axis=1)
    mixed = np.einsum("qn,qnd->qd", weights, ratio)
    score = -0.5 * p.beta * p.lam * np.sign(q) - p.beta * q / (2.0 * p.h) + mixed
    return score[0] if single else score


def _log_moreau_l1(y, p: ProxParams):
    # -(beta/2) * (lam |S(y)| + (S(y) - y)^2 / 2h)
    s = shrink(y, p.lam * p.h)
    return -0.5 * p.beta * (p.lam * np.abs(s) + (s - y) ** 2 / (2.0 * p.h))


def _log_l1_normalizer(y: float, p: ProxParams) -> float:
    # log of the integral over z of exp(-(beta/2) (lam |z| + (z - y)^2 / 2h))
    q = p.beta / (4.0 * p.h)
    lh = p.lam * p.h
    rq = np.sqrt(q)
    right = -q * (2.0 * lh * y - lh**2) + log_erf_interval(-rq * (y - lh), np.inf)
    left = -q * (-2.0 * lh * y - lh**2) + log_erf_interval(-np.inf, -rq * (y + lh))
    return float(np.logaddexp(right, left) - np.log(rq))


def quadrature_score_oracle(
    rho,
    query: float,
    p: ProxParams,
    *,
    kde_sigma: float | None = None,
    potential=None,
    denominator: str = "exact",
    inner: str = "auto",
    rtol: float = 1e-9,
) -> float:
    """Brute-force score ``d/dx log K rho(query)`` of the proximal kernel in 1-D.

    Args:
        rho: an ensemble (interpreted as a Gaussian KDE with bandwidth
            ``kde_sigma``) or a frozen 1-D distribution / callable exposing
            ``logpdf``.
        query: evaluation point.
        p: kernel parameters; ``p.lam`` sets ``V = lam |x|`` unless a
            ``potential`` is given.
        potential: optional ``(value, derivative)`` pair of callables for a
            smooth potential ``V``.
        denominator: ``"exact"`` evaluates the per-``y`` normalizer by a nested
            quadrature; ``"laplace"`` replaces it by its Laplace approximation
            ``exp(-(beta/2) * moreau envelope)`` (L1 potential only), which is
            the form the closed-form Gaussian kernel integrates.
        inner: how the exact normalizer is integrated: ``"quad"`` (nested
            adaptive quadrature), ``"closed"`` (Gaussian integrals on the two
            half-lines, L1 potential only) or ``"auto"`` (closed for L1).
        rtol: relative tolerance of the outer integrals.

    Raises:
        NumericError: if an integral does not reach the requested tolerance.
    """
    beta, h = p.beta, p.h
    x = float(query)
    if potential is None:
        v_val = lambda z: p.lam * np.abs(z)  # noqa: E731
        v_der = lambda z: p.lam * np.sign(z)  # noqa: E731
        kinks = [-p.lam * p.h, p.lam * p.h] if p.lam > 0 else []
    else:
        if denominator == "laplace":
            raise UsageError("the Laplace denominator is only available for the L1 potential")
        if inner == "closed":
            raise UsageError("the closed-form normalizer is only available for the L1 potential")
        v_val, v_der = potential
        kinks = []
    use_closed = potential is None and inner in ("auto", "closed")

    if isinstance(rho, (Ensemble, np.ndarray, list, tuple)):
        pos = _positions(rho)
        if pos.shape[1] != 1:
            raise UsageError("quadrature oracle is one-dimensional")
        if kde_sigma is None:
            raise UsageError("an ensemble needs a KDE bandwidth")
        centers = pos[:, 0]

        def log_rho(y):
            y = np.asarray(y, dtype=float)
            expo = -((y[..., None] - centers) ** 2) / (2.0 * kde_sigma**2)
            return logsumexp(expo, axis=-1)
    else:
        log_rho = rho.logpdf if hasattr(rho, "logpdf") else (lambda y: np.log(rho(y)))

    def log_inv_z(y):
        if denominator == "laplace":
            return -float(_log_moreau_l1(y, p))
        if use_closed:
            return -_log_l1_normalizer(y, p)
        width = 12.0 * np.sqrt(2.0 * h / beta) + 2.0 * h * abs(float(v_der(y)))
        expo = lambda z: -0.5 * beta * (v_val(z) + (z - y) ** 2 / (2.0 * h))  # noqa: E731
        grid = np.linspace(y - width, y + width, 201)
        shift = float(np.max([expo(z) for z in grid]))
        pts = [t for t in kinks if y - width < t < y + width]
        val, err = integrate.quad(lambda z: np.exp(expo(z) - shift), y - width, y + width,
                                  points=pts or None, limit=200, epsabs=0.0, epsrel=1e-12)
        if err > 1e-8 * val:
            raise NumericError(f"inner quadrature at y={y} reached only {err / val:.2e}")
        return -(shift + np.log(val))

    def log_integrand(y):
        return -beta * (x - y) ** 2 / (4.0 * h) + log_rho(y) + log_inv_z(y)

    def log_surrogate(y):
        # cheap stand-in for log_integrand, only used to pick an overflow-safe shift
        approx = -_log_moreau_l1(y, p) if potential is None else 0.5 * beta * np.vectorize(v_val)(y)
        return -beta * (x - y) ** 2 / (4.0 * h) + log_rho(y) + approx

    half = 10.0 * np.sqrt(h / beta) + 10.0
    lo, hi = x - half, x + half
    probe = np.linspace(lo, hi, 2001)
    shift = float(np.max(log_surrogate(probe)))
    pts = sorted({x, *[t for t in kinks if lo < t < hi]})

    def quad(fn):
        val, err = integrate.quad(fn, lo, hi, points=pts, limit=500, epsabs=0.0, epsrel=rtol)
        return val, err

    den, den_err = quad(lambda y: np.exp(log_integrand(y) - shift))
    if not den > 0 or den_err > rtol * den:
        raise NumericError(f"denominator quadrature reached only {den_err / max(den, 1e-300):.2e}")
    scale = beta / (2.0 * h)
    num, num_err = integrate.quad(
        lambda y: -scale * (x - y) * np.exp(log_integrand(y) - shift),
        lo, hi, points=pts, limit=500, epsabs=rtol * den * np.sqrt(scale), epsrel=rtol,
    )
    if num_err > max(rtol * abs(num), rtol * den * np.sqrt(scale)):
        raise NumericError(f"numerator quadrature reached only {num_err:.2e}")
    return float(-0.5 * beta * v_der(x) + num / den)
