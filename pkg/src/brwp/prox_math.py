"""Proximal maps and numerically stable special functions.

Everything here is a pure function of its inputs. Vector arguments are
numpy arrays; the last axis is the coordinate axis, so most functions also
accept an ``(N, d)`` stack of particles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from scipy import special

from .errors import UsageError

_HALF_LOG_PI = 0.5 * np.log(np.pi)
_LOG_HALF_SQRT_PI = np.log(0.5 * np.sqrt(np.pi))


@dataclass(frozen=True)
class ProxParams:
    """L1 weight ``lam``, step size ``h`` and inverse temperature ``beta``."""

    lam: float = 0.0
    h: float = 0.1
    beta: float = 1.0

    def __post_init__(self):
        if not self.h > 0:
            raise UsageError(f"step size h must be positive, got {self.h}")
        if not self.beta > 0:
            raise UsageError(f"beta must be positive, got {self.beta}")
        if not self.lam >= 0:
            raise UsageError(f"L1 weight must be nonnegative, got {self.lam}")


@dataclass
class LinearDataFit:
    """Forward operator ``F`` (m x d) and observation ``phi`` (length m).

    ``F`` is either a dense array or a ``scipy.sparse.linalg.LinearOperator``.
    Factorizations of ``I + h F^T F`` are cached per step size.
    """

    F: object
    phi: np.ndarray
    _chol: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if isinstance(self.F, scipy.sparse.linalg.LinearOperator):
            shape = self.F.shape
        else:
            self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
            if not np.all(np.isfinite(self.F)):
                raise UsageError("forward operator has non-finite entries")
            shape = self.F.shape
        if self.phi.shape != (shape[0],):
            raise UsageError(
                f"observation has shape {self.phi.shape}, operator expects ({shape[0]},)"
            )

    @property
    def shape(self):
        return self.F.shape

    def forward(self, u):
        if isinstance(self.F, np.ndarray):
            return u @ self.F.T
        u = np.asarray(u)
        if u.ndim == 1:
            return self.F.matvec(u)
        return np.stack([self.F.matvec(row) for row in u])

    def adjoint(self, r):
        if isinstance(self.F, np.ndarray):
            return r @ self.F
        r = np.asarray(r)
        if r.ndim == 1:
            return self.F.rmatvec(r)
        return np.stack([self.F.rmatvec(row) for row in r])

    def value(self, u):
        """``||phi - F u||^2`` (per row for a stack)."""
        res = self.forward(u) - self.phi
        return np.sum(res * res, axis=-1)

    def grad(self, u):
        return 2.0 * self.adjoint(self.forward(u) - self.phi)

    def _solve(self, rhs, h):
        if isinstance(self.F, np.ndarray):
            key = float(h)
            if key not in self._chol:
                d = self.F.shape[1]
                system = np.eye(d) + h * (self.F.T @ self.F)
                self._chol[key] = scipy.linalg.cho_factor(system)
            return scipy.linalg.cho_solve(self._chol[key], rhs.T).T
        d = self.F.shape[1]
        op = scipy.sparse.linalg.LinearOperator(
            (d, d), matvec=lambda v: v + h * self.F.rmatvec(self.F.matvec(v)), dtype=float
        )
        rows = np.atleast_2d(rhs)
        out = np.empty_like(rows)
        for i, b in enumerate(rows):
            sol, info = scipy.sparse.linalg.cg(op, b, rtol=1e-12, atol=0.0, maxiter=10 * d)
            if info != 0:
                raise UsageError(f"conjugate gradient did not converge (info={info})")
            out[i] = sol
        return out.reshape(rhs.shape)


def shrink(x, tau):
    """Soft thresholding ``sign(x) * max(|x| - tau, 0)``."""
    if tau < 0:
        raise UsageError(f"threshold must be nonnegative, got {tau}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def moreau_grad_l1(x, p: ProxParams):
    """Gradient of the Moreau envelope of ``lam * ||.||_1`` with parameter ``h``."""
    x = np.asarray(x, dtype=float)
    return (x - shrink(x, p.lam * p.h)) / p.h


def prox_l2_datafit(v, data: LinearDataFit, h: float):
    """Exact ``(I + h F^T F)^{-1} (v + h F^T phi)``.

    This is the proximal map with step ``h`` of ``0.5 * ||phi - F u||^2``.
    Accepts a single vector or an ``(N, d)`` stack.
    """
    v = np.asarray(v, dtype=float)
    d = data.shape[1]
    if v.shape[-1] != d:
        raise UsageError(f"vector length {v.shape[-1]} does not match operator width {d}")
    rhs = v + h * data.adjoint(data.phi)
    return data._solve(rhs, h)


def project_linf_ball(y):
    """Componentwise ``y / max(|y|, 1)``."""
    y = np.asarray(y, dtype=float)
    return y / np.maximum(np.abs(y), 1.0)


def logsumexp(vals, axis=None):
    """Overflow-safe ``log(sum(exp(vals)))``."""
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0:
        raise UsageError("logsumexp of an empty sequence")
    return special.logsumexp(vals, axis=axis)


def softmax_stable(vals, axis=-1):
    """Softmax along ``axis`` with the max subtracted before exponentiation."""
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0:
        raise UsageError("softmax of an empty sequence")
    shifted = vals - np.max(vals, axis=axis, keepdims=True)
    w = np.exp(shifted)
    return w / np.sum(w, axis=axis, keepdims=True)


def _log_erfc(x):
    # log(erfc(x)); erfcx keeps the right tail representable
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = np.log(special.erfcx(np.maximum(x, 0.0))) - np.maximum(x, 0.0) ** 2
        neg = np.log(special.erfc(np.minimum(x, 0.0)))
    return np.where(x >= 0, pos, neg)


def log_erf_interval(a, b):
    """``log`` of the integral of ``exp(-y^2)`` over ``[a, b]``, elementwise.

    Stable for intervals deep in either tail. Infinite endpoints are allowed.
    Returns ``-inf`` for empty intervals.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if np.any(a > b):
        raise UsageError("lower limit exceeds upper limit")
    # reflect intervals in the left half-line to the right one
    flip = b <= 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        la = _log_erfc(lo)
        lb = _log_erfc(hi)
        tail = la + np.log1p(-np.exp(lb - la))
        mid = np.log(special.erf(hi) - special.erf(lo))
    out = np.where(lo >= 0, tail, mid) + _LOG_HALF_SQRT_PI
    out = np.where(lo == hi, -np.inf, out)
    return out if out.ndim else float(out)


def erf_interval(a, b):
    """Integral of ``exp(-y^2)`` over ``[a, b]``; ``+-inf`` endpoints allowed."""
    return np.exp(log_erf_interval(a, b))
