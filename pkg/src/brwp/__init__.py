"""Splitting regularized Wasserstein proximal sampler for nonsmooth potentials."""

from .errors import BrwpError, ConfigError, NumericError, UsageError
from .kernels import Ensemble
from .prox_math import LinearDataFit, ProxParams
from .samplers import SamplerConfig, TargetSpec, brwp_run, brwp_step, myula_step, tv_pd_step

__all__ = [
    "BrwpError",
    "ConfigError",
    "Ensemble",
    "LinearDataFit",
    "NumericError",
    "ProxParams",
    "SamplerConfig",
    "TargetSpec",
    "UsageError",
    "brwp_run",
    "brwp_step",
    "myula_step",
    "tv_pd_step",
]

__version__ = "0.1.0"
