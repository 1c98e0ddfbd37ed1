"""Particle iteration engines.

``brwp_step`` is the deterministic splitting sampler: an explicit gradient
step on the smooth part followed by a proximal step whose diffusion comes
from the interaction kernel. ``tv_pd_step`` couples it with a primal-dual
sweep for total-variation priors, and ``myula_step`` is the stochastic
Moreau-Yosida Langevin baseline run as independent chains.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NumericError
from .kernels import (
    KERNEL_VARIANTS,
    Ensemble,
    GaussianKernelParams,
    default_bandwidth,
    gaussian_kde_score,
    interaction_general_prox,
    interaction_l1_delta,
    separable_weighted_mean,
)
from .prox_math import LinearDataFit, ProxParams, project_linf_ball, prox_l2_datafit, shrink


@dataclass
class TargetSpec:
    """Density proportional to ``exp(-beta (f + g))``.

    ``f_value`` and ``f_grad`` accept a d-vector or an ``(N, d)`` stack.
    The nonsmooth part is either ``l1_weight * ||x||_1`` or given through
    ``g_value`` / ``g_prox(x, h)`` callbacks.
    """

    f_value: Callable
    f_grad: Callable
    l1_weight: float | None = None
    g_value: Callable | None = None
    g_prox: Callable | None = None
    beta: float = 1.0

    def __post_init__(self):
        has_l1 = self.l1_weight is not None
        has_cb = self.g_value is not None and self.g_prox is not None
        if has_l1 == has_cb:
            raise ConfigError("give exactly one of l1_weight or the (g_value, g_prox) pair")
        if has_l1 and self.l1_weight < 0:
            raise ConfigError("l1_weight must be nonnegative")
        if not self.beta > 0:
            raise ConfigError("beta must be positive")

    @property
    def is_l1(self) -> bool:
        return self.l1_weight is not None

    def prox(self, x, h):
        """Proximal map of ``g`` with step ``h``, applied row-wise."""
        if self.is_l1:
            return shrink(x, self.l1_weight * h)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.asarray(self.g_prox(x, h), dtype=float)
        return np.stack([self.g_prox(row, h) for row in x])

    def g(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_l1:
            return self.l1_weight * np.sum(np.abs(x), axis=-1)
        if x.ndim == 1:
            return float(self.g_value(x))
        return np.array([self.g_value(row) for row in x])

    def potential(self, x):
        """``f + g`` (per row for a stack)."""
        return self.f_value(x) + self.g(x)


@dataclass
class SamplerConfig:
    h: float
    n_particles: int
    n_iters: int
    kernel_variant: str = "separable"
    seed: int = 0
    kde_sigma: float | None = None
    init_spread: float = 1.0
    init_center: float = 0.0

    def __post_init__(self):
        errors = []
        if not self.h > 0:
            errors.append(f"h must be positive, got {self.h}")
        if self.n_particles < 1:
            errors.append(f"n_particles must be at least 1, got {self.n_particles}")
        if self.n_iters < 0:
            errors.append(f"n_iters must be nonnegative, got {self.n_iters}")
        if self.kernel_variant not in KERNEL_VARIANTS:
            errors.append(f"unknown kernel variant {self.kernel_variant!r}")
        if self.kde_sigma is not None and not self.kde_sigma > 0:
            errors.append("kde_sigma must be positive")
        if self.init_spread < 0:
            errors.append("init_spread must be nonnegative")
        if errors:
            raise ConfigError("; ".join(errors), errors)


def init_ensemble(n: int, d: int, seed, spread: float = 1.0, center=0.0) -> Ensemble:
    """I.i.d. Gaussian particles around ``center`` with standard deviation ``spread``."""
    rng = np.random.default_rng(seed)
    pos = np.asarray(center, dtype=float) + spread * rng.standard_normal((n, d))
    return Ensemble(pos, 0)


def _check_finite(x: np.ndarray, iteration: int) -> None:
    bad = ~np.all(np.isfinite(x), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise NumericError(f"non-finite particle {i} at iteration {iteration}",
                           iteration=iteration, index=i)


def _check_compatible(t: TargetSpec, variant: str) -> None:
    if variant == "general" and t.is_l1:
        raise ConfigError("the general kernel needs g_value/g_prox callbacks")
    if variant != "general" and not t.is_l1:
        raise ConfigError(f"the {variant} kernel needs an L1 nonsmooth term")


def brwp_step(e: Ensemble, t: TargetSpec, c: SamplerConfig) -> Ensemble:
    """One BRWP-splitting iteration; returns a new ensemble."""
    _check_compatible(t, c.kernel_variant)
    x = e.positions
    x_half = x - c.h * np.asarray(t.f_grad(x), dtype=float).reshape(x.shape)
    _check_finite(x_half, e.iteration + 1)
    lam = t.l1_weight if t.is_l1 else 0.0
    p = ProxParams(lam=lam, h=c.h, beta=t.beta)

    if c.kernel_variant == "delta":
        avg = interaction_l1_delta(x_half, p) @ x_half
        x_new = x_half + 0.5 * (shrink(x_half, lam * c.h) - avg)
    elif c.kernel_variant == "separable":
        avg = separable_weighted_mean(x_half, p)
        x_new = x_half + 0.5 * (shrink(x_half, lam * c.h) - avg)
    elif c.kernel_variant == "general":
        avg = interaction_general_prox(x_half, p, t.g_value, t.g_prox) @ x_half
        x_new = x_half + 0.5 * (t.prox(x_half, c.h) - avg)
    else:
        sigma = c.kde_sigma if c.kde_sigma is not None else default_bandwidth(x_half)
        score = gaussian_kde_score(x_half, x_half, p, GaussianKernelParams(sigma))
        x_new = shrink(x_half, lam * c.h) - (c.h / t.beta) * score

    _check_finite(x_new, e.iteration + 1)
    return Ensemble(x_new, e.iteration + 1)


@dataclass
class RunSummary:
    final: Ensemble
    records: list = field(default_factory=list)
    trajectory: list | None = None


def _emit(hooks, ens, records):
    for hook in hooks:
        for metric, dim, value in hook(ens):
            records.append((ens.iteration, metric, int(dim), float(value)))


def brwp_run(e0: Ensemble, t: TargetSpec, c: SamplerConfig, hooks: Sequence[Callable] = (),
             keep_trajectory: bool = False) -> RunSummary:
    """Iterate ``brwp_step`` ``c.n_iters`` times.

    Each hook maps an ensemble to an iterable of ``(metric, dim, value)``
    and is evaluated at iteration 0 and after every step.
    """
    ens = e0
    records: list = []
    traj = [ens.positions.copy()] if keep_trajectory else None
    _emit(hooks, ens, records)
    for _ in range(c.n_iters):
        ens = brwp_step(ens, t, c)
        _emit(hooks, ens, records)
        if traj is not None:
            traj.append(ens.positions.copy())
    return RunSummary(ens, records, traj)


def particle_rngs(seed, n: int) -> list:
    """One independent generator per particle, derived from a single seed.

    ``seed`` is an integer or a ``numpy.random.SeedSequence``.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in root.spawn(n)]


def myula_step(e: Ensemble, t: TargetSpec, c: SamplerConfig, rng, noise_scale: float = 1.0
               ) -> Ensemble:
    """One MYULA step for every particle, smoothing parameter ``2h``.

    ``rng`` is a list of per-particle generators (see ``particle_rngs``) or a
    single generator. ``noise_scale=0`` switches the injected noise off.
    """
    x = e.positions
    h = c.h
    drift = np.asarray(t.f_grad(x), dtype=float).reshape(x.shape)
    moreau = (x - t.prox(x, 2.0 * h)) / (2.0 * h)
    if isinstance(rng, np.random.Generator):
        xi = rng.standard_normal(x.shape)
    else:
        xi = np.stack([g.standard_normal(x.shape[1]) for g in rng])
    x_new = x - h * drift - h * moreau + noise_scale * np.sqrt(2.0 * h / t.beta) * xi
    _check_finite(x_new, e.iteration + 1)
    return Ensemble(x_new, e.iteration + 1)


def myula_run(e0: Ensemble, t: TargetSpec, c: SamplerConfig, hooks: Sequence[Callable] = (),
              rngs=None) -> RunSummary:
    """Independent MYULA chains; per-particle generators default to ``particle_rngs(c.seed)``."""
    if rngs is None:
        rngs = particle_rngs(c.seed, e0.n)
    ens = e0
    records: list = []
    _emit(hooks, ens, records)
    for _ in range(c.n_iters):
        ens = myula_step(ens, t, c, rngs)
        _emit(hooks, ens, records)
    return RunSummary(ens, records)


@dataclass
class TvState:
    """Particles of the primal-dual TV sampler.

    ``u`` holds images (``N x d``), ``p`` the auxiliary gradient field and
    ``y`` the dual variable (both ``N x 2d``). ``D`` is any object with
    ``apply`` / ``adjoint`` acting on stacks of vectors.
    """

    u: np.ndarray
    p: np.ndarray
    y: np.ndarray
    D: object
    gamma: float
    lam: float
    tau: float
    iteration: int = 0

    def __post_init__(self):
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        n, d = self.u.shape
        m = self.D.shape[0]
        if self.D.shape[1] != d or self.p.shape != (n, m) or self.y.shape != (n, m):
            raise ConfigError(
                f"inconsistent TV shapes: u {self.u.shape}, p {self.p.shape}, "
                f"y {self.y.shape}, D {self.D.shape}"
            )
        if self.gamma < 0 or self.lam < 0 or self.tau < 0:
            raise ConfigError("gamma, lam and tau must be nonnegative")


def dual_step_size(D, gamma: float, n_power: int = 20, seed=0) -> float:
    """``1 / (gamma^2 ||L||^2)`` for ``L = [I, -D]``, norm by power iteration."""
    if not gamma > 0:
        raise ConfigError(f"gamma must be positive to size the dual step, got {gamma}")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(D.shape[1])
    v /= np.linalg.norm(v)
    dd_norm = 0.0
    for _ in range(n_power):
        w = D.adjoint(D.apply(v))
        dd_norm = float(np.linalg.norm(w))
        if dd_norm == 0:
            break
        v = w / dd_norm
    # ||L||^2 = ||L L^T|| = ||I + D D^T|| = 1 + ||D^T D||
    return 1.0 / (gamma**2 * (1.0 + dd_norm))


def datafit_callbacks(data: LinearDataFit):
    """``g(v) = ||phi - F v||^2`` and its proximal map."""

    def g_value(v):
        return float(data.value(v))

    def g_prox(v, h):
        # prox_l2_datafit(., 2h) is the prox of ||phi - F .||^2 with step h
        return prox_l2_datafit(v, data, 2.0 * h)

    return g_value, g_prox


def tv_pd_step(s: TvState, data: LinearDataFit, c: SamplerConfig, beta: float = 1.0,
               extra_grad: Callable | None = None, p_kernel: str = "delta") -> TvState:
    """One primal-dual sweep of the TV sampler.

    ``extra_grad`` adds a smooth term to the primal gradient step (used for
    the ``-lam ||Du||_2`` part of the L1-2 prior). ``p_kernel`` selects the
    ``delta`` or ``separable`` kernel for the gradient-field particles.
    """
    if data.shape[1] != s.u.shape[1]:
        raise ConfigError(f"operator width {data.shape[1]} does not match image size {s.u.shape[1]}")
    h, g = c.h, s.gamma
    it = s.iteration + 1

    u_half = s.u + h * g * s.D.adjoint(s.y)
    if extra_grad is not None:
        u_half = u_half - h * np.asarray(extra_grad(s.u), dtype=float)
    p_half = s.p - h * g * s.y
    _check_finite(u_half, it)
    _check_finite(p_half, it)

    g_value, g_prox = datafit_callbacks(data)
    pu = ProxParams(lam=0.0, h=h, beta=beta)
    m_u = interaction_general_prox(u_half, pu, g_value, g_prox)
    u_new = u_half + 0.5 * (prox_l2_datafit(u_half, data, 2.0 * h) - m_u @ u_half)

    pp = ProxParams(lam=s.lam, h=h, beta=beta)
    if p_kernel == "separable":
        avg = separable_weighted_mean(p_half, pp)
    elif p_kernel == "delta":
        avg = interaction_l1_delta(p_half, pp) @ p_half
    else:
        raise ConfigError(f"unsupported kernel for the gradient field: {p_kernel!r}")
    p_new = p_half + 0.5 * (shrink(p_half, s.lam * h) - avg)
    _check_finite(u_new, it)
    _check_finite(p_new, it)

    ascent = (2.0 * p_new - s.p) - s.D.apply(2.0 * u_new - s.u)
    y_new = project_linf_ball(s.y + s.tau * g * ascent)
    return replace(s, u=u_new, p=p_new, y=y_new, iteration=it)
