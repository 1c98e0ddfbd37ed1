"""Experiment orchestration.

``run_experiment`` builds the problem named in the config, runs the chosen
sampler and streams metric rows to ``metrics.csv`` as they are produced.
Scalar metrics use ``dim = -1``.

Randomness comes from one root seed. Independent child streams are derived
by index (``SeedSequence(seed, spawn_key=(k,))``): 0 for problem data,
1 for the initial ensemble, 2 for sampler noise. Changing the sampler does
not change the problem or the starting particles.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import NumericError
from .io import CsvStream, to_pixels, write_matrix_csv, write_pgm
from .kernels import Ensemble
from .metrics import Grid1D, error_norms, hpd_threshold, kde_on_grid, kl_on_grid, mixture_marginal_exact
from .problems import (
    cs_problem,
    generate_logistic_data,
    logistic_posterior,
    make_denoise_problem,
    mixture_target,
    piecewise_constant_image,
    random_mixture,
    tv_problem,
)
from .samplers import (
    SamplerConfig,
    TargetSpec,
    brwp_run,
    init_ensemble,
    myula_run,
    particle_rngs,
    tv_pd_step,
)
from .validation import validate_kernels

STREAM_PROBLEM, STREAM_INIT, STREAM_NOISE = 0, 1, 2
FULL_SIZE_SIDE = 128


def seed_stream(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(index,))


@dataclass
class RunRecord:
    config_hash: str
    rows: list = field(default_factory=list)
    final: np.ndarray | None = None
    wall_clock: float = 0.0
    failed: bool = False
    error: str | None = None
    report: dict | None = None
    outputs: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "failed": self.failed,
            "error": self.error,
            "wall_clock_seconds": self.wall_clock,
            "n_rows": len(self.rows),
            "outputs": self.outputs,
        }


class _Sink:
    """Collects rows in memory and streams them to CSV when a path is given."""

    def __init__(self, path):
        self.rows = []
        self._csv = CsvStream(path) if path is not None else None

    def __call__(self, rows):
        rows = list(rows)
        self.rows.extend(rows)
        if self._csv is not None:
            self._csv.write(rows)

    def close(self):
        if self._csv is not None:
            self._csv.close()


def _sampler_config(cfg: ExperimentConfig) -> SamplerConfig:
    return SamplerConfig(h=cfg.h, n_particles=cfg.n_particles, n_iters=cfg.n_iters,
                         kernel_variant=cfg.kernel_variant, seed=cfg.seed,
                         kde_sigma=cfg.kde_sigma, init_spread=cfg.init_spread,
                         init_center=cfg.init_center)


def _initial(cfg: ExperimentConfig, d: int) -> Ensemble:
    return init_ensemble(cfg.n_particles, d, seed_stream(cfg.seed, STREAM_INIT),
                         cfg.init_spread, cfg.init_center)


def _run_particles(cfg, target: TargetSpec, e0: Ensemble, metrics, sink):
    """Run BRWP or MYULA from ``e0``; ``metrics(ensemble)`` yields ``(metric, dim, value)``."""
    c = _sampler_config(cfg)

    def hook(ens):
        rows = [(ens.iteration, m, d, v) for m, d, v in metrics(ens)]
        sink(rows)
        return []

    if cfg.sampler == "brwp":
        return brwp_run(e0, target, c, hooks=[hook]).final
    rngs = particle_rngs(seed_stream(cfg.seed, STREAM_NOISE), e0.n)
    return myula_run(e0, target, c, hooks=[hook], rngs=rngs).final


def _gaussian_sanity(cfg, sink, out):
    d = cfg.dims
    target = TargetSpec(lambda x: 0.5 * np.sum(x * x, axis=-1), lambda x: np.array(x, dtype=float),
                        l1_weight=cfg.lam or 0.0, beta=cfg.beta)

    def metrics(ens):
        x = ens.positions
        yield "mean_norm", -1, float(np.linalg.norm(x.mean(axis=0)))
        for k, v in enumerate(x.var(axis=0)):
            yield "variance", k, float(v)

    return _run_particles(cfg, target, _initial(cfg, d), metrics, sink)


def _mixture(cfg, sink, out):
    pr = cfg.problem
    rng_seed = seed_stream(cfg.seed, STREAM_PROBLEM)
    spec = random_mixture(cfg.dims, pr["n_centers"], pr["sigma"], cfg.lam or 0.0, rng_seed,
                          pr["box"])
    target = mixture_target(spec, cfg.beta)
    grid = Grid1D(pr["grid_lo"], pr["grid_hi"], pr["grid_points"])
    exact = {k: mixture_marginal_exact(spec, k, grid) for k in pr["marginal_dims"]}

    def metrics(ens):
        for k, ref in exact.items():
            kde = kde_on_grid(ens.positions[:, k], pr["kde_bandwidth"], grid)
            yield "kl", k, kl_on_grid(kde, ref)

    return _run_particles(cfg, target, _initial(cfg, cfg.dims), metrics, sink)


def _logistic(cfg, sink, out):
    # lam=None selects the default weight 3d / (2 pi^2)
    data = generate_logistic_data(cfg.problem["n_data"], cfg.dims,
                                  seed_stream(cfg.seed, STREAM_PROBLEM), cfg.lam)
    target = logistic_posterior(data, cfg.beta)

    def metrics(ens):
        yield "l1_rel", -1, error_norms(ens.positions.mean(axis=0), data.theta_star)["l1_rel"]

    return _run_particles(cfg, target, _initial(cfg, cfg.dims), metrics, sink)


def _write_image(out, name, image, lo, hi, outputs):
    if out is None:
        return
    path = Path(out) / f"{name}.pgm"
    write_pgm(to_pixels(image, lo, hi), path)
    outputs[name] = str(path)


def _l12tv(cfg, sink, out, outputs):
    pr = cfg.problem
    shape = (pr["height"], pr["width"])
    lam = cfg.lam if cfg.lam is not None else 1.0
    spec = make_denoise_problem(shape, seed_stream(cfg.seed, STREAM_PROBLEM), pr["noise_var"],
                                pr["corruption_var"], pr["corruption_count"], lam, pr["mode"])
    state, data, extra = tv_problem(spec, cfg.n_particles, seed_stream(cfg.seed, STREAM_INIT),
                                    pr["gamma"], pr["tau"], pr["init_spread"])
    c = _sampler_config(cfg)
    noisy_psnr = error_norms(data.phi, spec.truth)["psnr"]

    def emit(s):
        rows = [(s.iteration, "psnr", -1, error_norms(s.u.mean(axis=0), spec.truth)["psnr"]),
                (s.iteration, "dual_linf", -1, float(np.max(np.abs(s.y))))]
        if s.iteration == 0:
            rows.insert(0, (0, "psnr_noisy", -1, noisy_psnr))
            rows.append((0, "tau", -1, float(state.tau)))
        sink(rows)

    lo, hi = float(spec.truth.min()), float(spec.truth.max())
    if pr["write_images"]:
        _write_image(out, "truth", spec.truth.reshape(shape), lo, hi, outputs)
        _write_image(out, "noisy", data.phi.reshape(shape), lo, hi, outputs)
    emit(state)
    s = state
    for _ in range(cfg.n_iters):
        s = tv_pd_step(s, data, c, beta=cfg.beta, extra_grad=extra, p_kernel=pr["p_kernel"])
        emit(s)
    if pr["write_images"]:
        _write_image(out, "mean", s.u.mean(axis=0).reshape(shape), lo, hi, outputs)
    return s.u


def _cs_hpd(cfg, sink, out, outputs):
    pr = cfg.problem
    side = (FULL_SIZE_SIDE, FULL_SIZE_SIDE) if pr["full_size"] else (pr["height"], pr["width"])
    image = piecewise_constant_image(side)
    d = image.size
    lam = cfg.lam if cfg.lam is not None else 1.0
    kernel = np.full(pr["blur_width"], 1.0 / pr["blur_width"])
    data, target = cs_problem(image, kernel, pr["noise_var"],
                              seed_stream(cfg.seed, STREAM_PROBLEM), lam, dense=d <= 4096)
    target.beta = cfg.beta
    truth = image.ravel()

    def metrics(ens):
        yield "psnr", -1, error_norms(ens.positions.mean(axis=0), truth)["psnr"]

    final = _run_particles(cfg, target, _initial(cfg, d), metrics, sink)
    potentials = target.potential(final.positions)
    rows = []
    for k, alpha in enumerate(pr["alphas"]):
        rows.append((final.iteration, "alpha", k, alpha))
        rows.append((final.iteration, "eta_alpha", k, hpd_threshold(potentials, alpha)))
    sink(rows)
    if pr["write_images"]:
        lo, hi = float(truth.min()), float(truth.max())
        _write_image(out, "truth", image, lo, hi, outputs)
        _write_image(out, "mean", final.positions.mean(axis=0).reshape(side), lo, hi, outputs)
    return final


def _kernel_validation(cfg, sink, out, record):
    report = validate_kernels(cfg.seed, cfg.problem.get("include_orders", True))
    record.report = report
    rows = []
    for k, chk in enumerate(report["checks"]):
        rows.append((0, f"{chk['name']}.value", k, chk["value"]))
        rows.append((0, f"{chk['name']}.passed", k, float(chk["passed"])))
    sink(rows)
    if out is not None:
        path = Path(out) / "validation.json"
        path.write_text(json.dumps(report, indent=2) + "\n")
        record.outputs["validation"] = str(path)
    return None


def run_experiment(cfg: ExperimentConfig, output_dir=None, write: bool = True) -> RunRecord:
    """Run one experiment.

    With ``write=True`` results go to ``output_dir`` (default
    ``cfg.output_dir``): ``metrics.csv``, ``final_ensemble.csv``, any PGM
    images and ``record.json``. A numeric failure marks the record failed
    and keeps the rows produced so far.
    """
    out = Path(output_dir if output_dir is not None else cfg.output_dir) if write else None
    record = RunRecord(cfg.config_hash())
    sink = _Sink(out / "metrics.csv" if out is not None else None)
    if out is not None:
        record.outputs["metrics"] = str(out / "metrics.csv")
    t0 = time.perf_counter()
    try:
        if cfg.kind == "gaussian_sanity":
            final = _gaussian_sanity(cfg, sink, out)
        elif cfg.kind == "mixture":
            final = _mixture(cfg, sink, out)
        elif cfg.kind == "logistic":
            final = _logistic(cfg, sink, out)
        elif cfg.kind == "l12tv_denoise":
            final = _l12tv(cfg, sink, out, record.outputs)
        elif cfg.kind == "cs_hpd":
            final = _cs_hpd(cfg, sink, out, record.outputs)
        else:
            final = _kernel_validation(cfg, sink, out, record)
        if isinstance(final, Ensemble):
            final = final.positions
        record.final = final
    except NumericError as exc:
        record.failed = True
        record.error = str(exc)
    finally:
        sink.close()
        record.wall_clock = time.perf_counter() - t0
        record.rows = sink.rows
    if out is not None:
        if record.final is not None:
            write_matrix_csv(record.final, out / "final_ensemble.csv")
            record.outputs["final_ensemble"] = str(out / "final_ensemble.csv")
        (out / "record.json").write_text(json.dumps(record.summary(), indent=2) + "\n")
    return record


def metric_series(record: RunRecord, metric: str, dim: int = -1) -> list:
    """``(iter, value)`` pairs of one metric from a record."""
    return [(it, v) for it, m, d, v in record.rows if m == metric and d == dim]
