"""Target builders for the numerical experiments.

Each builder returns callbacks that accept a single d-vector or an
``(N, d)`` stack of particles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg
from scipy import special

from .errors import ConfigError
from .prox_math import LinearDataFit
from .samplers import TargetSpec


@dataclass
class MixtureSpec:
    """Gaussian mixture with equal weights and an L1 factor ``exp(-lam ||x||_1)``."""

    centers: np.ndarray
    sigma: float
    lam: float = 0.0

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if self.centers.shape[0] < 1:
            raise ConfigError("a mixture needs at least one center")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be nonnegative, got {self.lam}")

    @property
    def d(self) -> int:
        return self.centers.shape[1]


def random_mixture(d: int, n_centers: int, sigma: float, lam: float, seed, box: float = 10.0
                   ) -> MixtureSpec:
    """Centers drawn uniformly from ``[-box, box]^d``."""
    rng = np.random.default_rng(seed)
    return MixtureSpec(rng.uniform(-box, box, size=(n_centers, d)), sigma, lam)


def _mixture_log_terms(x, spec: MixtureSpec):
    diff = x[..., None, :] - spec.centers  # (..., M, d)
    return diff, -np.sum(diff**2, axis=-1) / (2.0 * spec.sigma**2)


def mixture_target(spec: MixtureSpec, beta: float = 1.0) -> TargetSpec:
    def f_value(x):
        x = np.asarray(x, dtype=float)
        _, logt = _mixture_log_terms(x, spec)
        return -special.logsumexp(logt, axis=-1)

    def f_grad(x):
        x = np.asarray(x, dtype=float)
        diff, logt = _mixture_log_terms(x, spec)
        w = special.softmax(logt, axis=-1)
        return np.einsum("...m,...md->...d", w, diff) / spec.sigma**2

    return TargetSpec(f_value, f_grad, l1_weight=spec.lam, beta=beta)


@dataclass
class LogisticData:
    X: np.ndarray
    Y: np.ndarray
    theta_star: np.ndarray
    lam: float


def generate_logistic_data(n: int, d: int, seed, lam: float | None = None) -> LogisticData:
    """Rademacher covariates with unit rows and Bernoulli labels.

    The ground truth has ones in its first ``d/4`` entries. The default L1
    weight is ``3d / (2 pi^2)``.
    """
    if d < 4 or d % 4:
        raise ConfigError(f"dimension must be a positive multiple of 4, got {d}")
    rng = np.random.default_rng(seed)
    theta = np.zeros(d)
    theta[: d // 4] = 1.0
    X = rng.choice([-1.0, 1.0], size=(n, d)) / np.sqrt(d)
    Y = (rng.random(n) < special.expit(X @ theta)).astype(float)
    if lam is None:
        lam = 3.0 * d / (2.0 * np.pi**2)
    return LogisticData(X, Y, theta, float(lam))


def logistic_posterior(data: LogisticData, beta: float = 1.0) -> TargetSpec:
    X, Y = data.X, data.Y

    def f_value(theta):
        z = np.asarray(theta, dtype=float) @ X.T
        return np.sum(np.logaddexp(0.0, z), axis=-1) - z @ Y

    def f_grad(theta):
        z = np.asarray(theta, dtype=float) @ X.T
        return (special.expit(z) - Y) @ X

    return TargetSpec(f_value, f_grad, l1_weight=data.lam, beta=beta)


class DiscreteGradient:
    """Forward differences on an ``(nx, ny)`` image with replicate boundary.

    Images are flattened row-major. The output stacks horizontal differences
    (along ``ny``) on top of vertical ones (along ``nx``), so the operator
    has shape ``(2d, d)``.
    """

    def __init__(self, image_shape):
        nx, ny = (int(s) for s in image_shape)
        if nx < 2 or ny < 2:
            raise ConfigError(f"image shape must be at least 2 x 2, got {image_shape}")
        self.image_shape = (nx, ny)
        self.d = nx * ny
        self.shape = (2 * self.d, self.d)

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        lead = u.shape[:-1]
        img = u.reshape(lead + self.image_shape)
        dh = np.zeros_like(img)
        dv = np.zeros_like(img)
        dh[..., :, :-1] = img[..., :, 1:] - img[..., :, :-1]
        dv[..., :-1, :] = img[..., 1:, :] - img[..., :-1, :]
        return np.concatenate([dh.reshape(lead + (-1,)), dv.reshape(lead + (-1,))], axis=-1)

    def adjoint(self, q):
        q = np.asarray(q, dtype=float)
        lead = q.shape[:-1]
        qh = q[..., : self.d].reshape(lead + self.image_shape)
        qv = q[..., self.d:].reshape(lead + self.image_shape)
        out = np.zeros_like(qh)
        out[..., :, 1:] += qh[..., :, :-1]
        out[..., :, :-1] -= qh[..., :, :-1]
        out[..., 1:, :] += qv[..., :-1, :]
        out[..., :-1, :] -= qv[..., :-1, :]
        return out.reshape(lead + (-1,))


def discrete_gradient(image_shape) -> DiscreteGradient:
    return DiscreteGradient(image_shape)


@dataclass
class ImagingSpec:
    forward: LinearDataFit
    truth: np.ndarray
    image_shape: tuple
    noise_var: float = 0.2
    corruption_var: float = 0.1
    corruption_count: int = 0
    lam: float = 1.0
    mode: str = "l12tv"

    def __post_init__(self):
        self.truth = np.asarray(self.truth, dtype=float).ravel()
        if any(s < 1 for s in self.image_shape):
            raise ConfigError(f"image dimensions must be positive, got {self.image_shape}")
        if self.truth.size != int(np.prod(self.image_shape)):
            raise ConfigError("truth image does not match image_shape")
        if self.mode not in ("l1tv", "l12tv"):
            raise ConfigError(f"unknown regularization mode {self.mode!r}")


def piecewise_constant_image(shape) -> np.ndarray:
    """Synthetic test image: background, a bright rectangle and a dimmer disc."""
    nx, ny = shape
    img = np.zeros((nx, ny))
    img[nx // 6 : nx // 2, ny // 5 : (3 * ny) // 5] = 1.0
    ii, jj = np.mgrid[0:nx, 0:ny]
    disc = (ii - 0.68 * nx) ** 2 + (jj - 0.65 * ny) ** 2 <= (0.2 * min(nx, ny)) ** 2
    img[disc] = 0.6
    return img


def make_denoise_problem(shape, seed, noise_var: float = 0.2, corruption_var: float = 0.1,
                         corruption_count: int | None = None, lam: float = 1.0,
                         mode: str = "l12tv", truth=None) -> ImagingSpec:
    """``A = I + E`` with sparse Gaussian ``E`` and ``z = A u + eta``."""
    rng = np.random.default_rng(seed)
    u = piecewise_constant_image(shape) if truth is None else np.asarray(truth, dtype=float)
    d = u.size
    count = 3 * d if corruption_count is None else int(corruption_count)
    A = np.eye(d)
    flat = rng.choice(d * d, size=count, replace=False)
    A.flat[flat] += np.sqrt(corruption_var) * rng.standard_normal(count)
    z = A @ u.ravel() + np.sqrt(noise_var) * rng.standard_normal(d)
    return ImagingSpec(LinearDataFit(A, z), u.ravel(), tuple(shape), noise_var,
                       corruption_var, count, lam, mode)


def _l2_norm_grad(D, u, eps):
    du = D.apply(u)
    norm = np.sqrt(np.sum(du * du, axis=-1, keepdims=True) + eps**2)
    return D.adjoint(du / norm)


def l12tv_target(spec: ImagingSpec, eps: float = 1e-8, beta: float = 1.0) -> TargetSpec:
    """Smooth part ``||Au - z||^2 - lam ||Du||_2``; nonsmooth part ``lam ||Du||_1``.

    The ``||Du||_1`` term has no cheap prox; its callbacks here are only for
    evaluating the potential. Sampling goes through ``tv_problem`` instead.
    """
    D = discrete_gradient(spec.image_shape)
    data = spec.forward
    c = spec.lam if spec.mode == "l12tv" else 0.0

    def f_value(u):
        du = D.apply(u)
        return data.value(u) - c * np.sqrt(np.sum(du * du, axis=-1) + eps**2)

    def f_grad(u):
        g = data.grad(u)
        if c:
            g = g - c * _l2_norm_grad(D, u, eps)
        return g

    def g_value(u):
        return float(spec.lam * np.sum(np.abs(D.apply(u))))

    def g_prox(u, h):
        raise ConfigError("the TV term is handled by the primal-dual sampler")

    return TargetSpec(f_value, f_grad, g_value=g_value, g_prox=g_prox, beta=beta)


def tv_extra_grad(spec: ImagingSpec, eps: float = 1e-8):
    """Gradient of ``-lam ||Du||_2`` for the L1-2 prior, or ``None`` for plain TV."""
    if spec.mode != "l12tv" or spec.lam == 0:
        return None
    D = discrete_gradient(spec.image_shape)
    return lambda u: -spec.lam * _l2_norm_grad(D, u, eps)


def tv_problem(spec: ImagingSpec, n: int, seed, gamma: float, tau: float | None = None,
               spread: float = 0.1):
    """Initial ``TvState`` around the observation, plus the data fit and extra gradient."""
    from .samplers import TvState, dual_step_size

    D = discrete_gradient(spec.image_shape)
    rng = np.random.default_rng(seed)
    d = spec.truth.size
    u0 = spec.forward.phi[None, :] + spread * rng.standard_normal((n, d))
    p0 = D.apply(u0)
    y0 = np.zeros((n, 2 * d))
    if tau is None:
        tau = dual_step_size(D, gamma) if gamma > 0 else 0.0
    state = TvState(u0, p0, y0, D, gamma, spec.lam, tau)
    return state, spec.forward, tv_extra_grad(spec)


class _CirculantOp(scipy.sparse.linalg.LinearOperator):
    def __init__(self, taps_fft, d, stride):
        self._fft = taps_fft
        self._d = d
        self._stride = stride
        super().__init__(dtype=float, shape=(d // stride, d))

    def _matvec(self, x):
        full = np.fft.irfft(np.fft.rfft(np.ravel(x)) * self._fft, n=self._d)
        return full[:: self._stride]

    def _rmatvec(self, r):
        up = np.zeros(self._d)
        up[:: self._stride] = np.ravel(r)
        return np.fft.irfft(np.fft.rfft(up) * np.conj(self._fft), n=self._d)


def _circulant_column(d: int, kernel) -> np.ndarray:
    taps = np.asarray(kernel, dtype=float)
    col = np.zeros(d)
    half = len(taps) // 2
    for k, t in enumerate(taps):
        col[(k - half) % d] += t
    return col


def circulant_matrix(d: int, kernel) -> np.ndarray:
    """Dense ``d x d`` circular convolution matrix, taps centered at index 0."""
    col = _circulant_column(d, kernel)
    return np.stack([np.roll(col, j) for j in range(d)], axis=1)


def circulant_blur(d: int, kernel=None, m: int | None = None, phi=None, dense: bool = False
                   ) -> LinearDataFit:
    """Circular convolution with ``kernel`` followed by keeping every ``d/m``-th row.

    The default kernel is a normalized box of width 5. With ``dense=False``
    products go through the FFT.
    """
    if kernel is None:
        kernel = np.full(5, 0.2)
    m = d if m is None else int(m)
    if not 1 <= m <= d or d % m:
        raise ConfigError(f"m={m} must divide d={d}")
    stride = d // m
    phi = np.zeros(m) if phi is None else phi
    if dense:
        return LinearDataFit(circulant_matrix(d, kernel)[::stride], phi)
    col = _circulant_column(d, kernel)
    return LinearDataFit(_CirculantOp(np.fft.rfft(col), d, stride), phi)


def cs_problem(image, kernel=None, noise_var: float = 0.2, seed=0, lam: float = 1.0,
               dense: bool = True):
    """Compressive blur data ``z = A x + eps`` with ``m = d/4`` and the matching target."""
    x = np.asarray(image, dtype=float).ravel()
    d = x.size
    op = circulant_blur(d, kernel, d // 4, dense=dense)
    rng = np.random.default_rng(seed)
    z = op.forward(x) + np.sqrt(noise_var) * rng.standard_normal(d // 4)
    data = LinearDataFit(op.F, z)
    target = TargetSpec(data.value, data.grad, l1_weight=lam)
    return data, target
