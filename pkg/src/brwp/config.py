"""Experiment configuration files.

Configs are INI files (``configparser`` dialect, no interpolation). The
``[experiment]`` section holds the sampler settings; one optional section
named after the experiment kind holds problem parameters::

    [experiment]
    kind = mixture
    sampler = brwp
    dims = 20
    n_particles = 50
    n_iters = 500
    h = 0.02
    lambda = 0.1
    seed = 7

    [mixture]
    sigma = 4.0
    n_centers = 4

Unknown sections or keys, missing required keys and malformed values are all
reported together, each with its line number.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .kernels import KERNEL_VARIANTS

EXPERIMENT_KINDS = ("mixture", "logistic", "l12tv_denoise", "cs_hpd", "gaussian_sanity",
                    "kernel_validation")
SAMPLERS = ("brwp", "myula")

_REQ = object()


def _int_list(text):
    return [int(t) for t in re.split(r"[,\s]+", text.strip()) if t]


def _float_list(text):
    return [float(t) for t in re.split(r"[,\s]+", text.strip()) if t]


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


# key -> (parser, default); _REQ marks required keys
_EXPERIMENT_KEYS = {
    "kind": (str, _REQ),
    "sampler": (str, "brwp"),
    "kernel_variant": (str, "separable"),
    "dims": (int, _REQ),
    "n_particles": (int, _REQ),
    "n_iters": (int, _REQ),
    "h": (float, _REQ),
    "beta": (float, 1.0),
    "lambda": (_opt_float, None),
    "seed": (int, 0),
    "kde_sigma": (_opt_float, None),
    "init_spread": (float, 1.0),
    "init_center": (float, 0.0),
    "output_dir": (str, "results"),
}

_PROBLEM_KEYS = {
    "mixture": {
        "sigma": (float, _REQ),
        "n_centers": (int, _REQ),
        "box": (float, 10.0),
        "kde_bandwidth": (float, 0.1),
        "grid_lo": (float, -30.0),
        "grid_hi": (float, 30.0),
        "grid_points": (int, 2001),
        "marginal_dims": (_int_list, None),
    },
    "logistic": {
        "n_data": (int, 100),
    },
    "l12tv_denoise": {
        "height": (int, 32),
        "width": (int, 32),
        "noise_var": (float, 0.2),
        "corruption_var": (float, 0.1),
        "corruption_count": (int, None),
        "mode": (str, "l12tv"),
        "gamma": (float, 1.0),
        "tau": (_opt_float, None),
        "init_spread": (float, 0.1),
        "p_kernel": (str, "delta"),
        "write_images": (_bool, True),
    },
    "cs_hpd": {
        "height": (int, 32),
        "width": (int, 32),
        "noise_var": (float, 0.2),
        "blur_width": (int, 5),
        "alphas": (_float_list, [round(0.05 * k, 2) for k in range(1, 20)]),
        "full_size": (_bool, False),
        "write_images": (_bool, True),
    },
    "gaussian_sanity": {},
    "kernel_validation": {
        "include_orders": (_bool, True),
    },
}


@dataclass
class ExperimentConfig:
    kind: str
    sampler: str
    kernel_variant: str
    dims: int
    n_particles: int
    n_iters: int
    h: float
    beta: float = 1.0
    lam: float | None = None
    seed: int = 0
    kde_sigma: float | None = None
    init_spread: float = 1.0
    init_center: float = 0.0
    output_dir: str = "results"
    problem: dict = field(default_factory=dict)
    source: str | None = None

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in _FIELD_ORDER}
        out["problem"] = dict(sorted(self.problem.items()))
        return out

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form; ``output_dir`` and ``source`` excluded."""
        body = self.as_dict()
        body.pop("output_dir")
        text = json.dumps(body, sort_keys=True, separators=(",", ":"), default=repr)
        return hashlib.sha256(text.encode()).hexdigest()

    def to_ini(self) -> str:
        lines = ["[experiment]"]
        for k in _FIELD_ORDER:
            v = getattr(self, k)
            if v is None:
                continue
            lines.append(f"{'lambda' if k == 'lam' else k} = {_fmt(v)}")
        if self.problem:
            lines += ["", f"[{self.kind}]"]
            lines += [f"{k} = {_fmt(v)}" for k, v in self.problem.items() if v is not None]
        return "\n".join(lines) + "\n"


_FIELD_ORDER = ("kind", "sampler", "kernel_variant", "dims", "n_particles", "n_iters", "h",
                "beta", "lam", "seed", "kde_sigma", "init_spread", "init_center", "output_dir")


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    where = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), no)
    return where


def _loc(path, where, section, key=None):
    no = where.get((section, key)) or where.get((section, None))
    return f"{path}:{no}" if no else str(path)


def parse_config_text(text: str, path: str = "<config>", overrides: dict | None = None
                      ) -> ExperimentConfig:
    """Parse and validate config text; ``overrides`` maps ``key`` or ``section.key`` to strings."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    where = _line_index(text)
    raw = {s: dict(parser.items(s)) for s in parser.sections()}

    errors = []
    for key, value in (overrides or {}).items():
        section, _, name = key.rpartition(".")
        section = section or "experiment"
        raw.setdefault(section, {})[name.lower()] = value

    if "experiment" not in raw:
        raise ConfigError(f"{path}: missing [experiment] section")
    exp = raw["experiment"]
    kind = exp.get("kind", "").strip()
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"{_loc(path, where, 'experiment', 'kind')}: kind must be one of "
                          f"{', '.join(EXPERIMENT_KINDS)}, got {kind!r}")

    for section in raw:
        if section not in ("experiment", kind):
            errors.append(f"{_loc(path, where, section)}: unknown section [{section}]")

    def convert(section, schema, values):
        out = {}
        for key in values:
            if key not in schema:
                errors.append(f"{_loc(path, where, section, key)}: unknown key {key!r} "
                              f"in [{section}]")
        for key, (conv, default) in schema.items():
            if key not in values:
                if default is _REQ:
                    errors.append(f"{_loc(path, where, section)}: missing required key {key!r} "
                                  f"in [{section}]")
                else:
                    out[key] = default
                continue
            try:
                out[key] = conv(values[key])
            except ValueError:
                name = getattr(conv, "__name__", "value").lstrip("_")
                errors.append(f"{_loc(path, where, section, key)}: {key!r} expects {name}, "
                              f"got {values[key]!r}")
        return out

    e = convert("experiment", _EXPERIMENT_KEYS, exp)
    prob = convert(kind, _PROBLEM_KEYS[kind], raw.get(kind, {}))
    if errors:
        raise ConfigError("\n".join(errors), errors)

    def check(ok, key, msg, section="experiment"):
        if not ok:
            errors.append(f"{_loc(path, where, section, key)}: {msg}")

    check(e["sampler"] in SAMPLERS, "sampler", f"sampler must be one of {SAMPLERS}")
    check(e["kernel_variant"] in KERNEL_VARIANTS, "kernel_variant",
          f"kernel_variant must be one of {KERNEL_VARIANTS}")
    check(e["h"] > 0, "h", f"h must be positive, got {e['h']}")
    check(e["beta"] > 0, "beta", f"beta must be positive, got {e['beta']}")
    check(e["lambda"] is None or e["lambda"] >= 0, "lambda", f"lambda must be nonnegative, got {e['lambda']}")
    check(e["dims"] >= 1, "dims", "dims must be at least 1")
    check(e["n_particles"] >= 1, "n_particles", "n_particles must be at least 1")
    check(e["n_iters"] >= 0, "n_iters", "n_iters must be nonnegative")
    check(0 <= e["seed"] < 2**64, "seed", "seed must be a 64-bit unsigned integer")
    check(e["kde_sigma"] is None or e["kde_sigma"] > 0, "kde_sigma", "kde_sigma must be positive")
    check(e["init_spread"] >= 0, "init_spread", "init_spread must be nonnegative")

    if kind == "mixture":
        check(prob["sigma"] > 0, "sigma", "sigma must be positive", kind)
        check(prob["n_centers"] >= 1, "n_centers", "n_centers must be at least 1", kind)
        check(prob["grid_lo"] < prob["grid_hi"], "grid_hi", "grid_hi must exceed grid_lo", kind)
        check(prob["grid_points"] >= 2, "grid_points", "grid_points must be at least 2", kind)
        check(prob["kde_bandwidth"] > 0, "kde_bandwidth", "kde_bandwidth must be positive", kind)
        dims = prob["marginal_dims"]
        if dims is None:
            prob["marginal_dims"] = sorted({0, e["dims"] - 1})
        else:
            check(all(0 <= k < e["dims"] for k in dims), "marginal_dims",
                  f"marginal_dims must lie in [0, {e['dims']})", kind)
    elif kind == "logistic":
        check(e["dims"] % 4 == 0, "dims", "logistic regression needs dims divisible by 4")
        check(prob["n_data"] >= 1, "n_data", "n_data must be at least 1", kind)
    elif kind in ("l12tv_denoise", "cs_hpd"):
        check(prob["height"] >= 2 and prob["width"] >= 2, "height", "image must be at least 2x2",
              kind)
        check(e["dims"] == prob["height"] * prob["width"] or prob.get("full_size"), "dims",
              "dims must equal height * width")
        check(prob["noise_var"] >= 0, "noise_var", "noise_var must be nonnegative", kind)
        if kind == "l12tv_denoise":
            check(prob["mode"] in ("l1tv", "l12tv"), "mode", "mode must be l1tv or l12tv", kind)
            check(prob["gamma"] > 0, "gamma", "gamma must be positive", kind)
            check(prob["p_kernel"] in ("delta", "separable"), "p_kernel",
                  "p_kernel must be delta or separable", kind)
            check(e["sampler"] == "brwp", "sampler", "TV denoising runs only with brwp")
        else:
            check(prob["blur_width"] >= 1, "blur_width", "blur_width must be positive", kind)
            check((prob["height"] * prob["width"]) % 4 == 0, "height",
                  "image size must be divisible by 4", kind)
            check(all(0 < a < 1 for a in prob["alphas"]) and prob["alphas"], "alphas",
                  "alphas must lie in (0, 1)", kind)
    if errors:
        raise ConfigError("\n".join(errors), errors)

    return ExperimentConfig(
        kind=kind, sampler=e["sampler"], kernel_variant=e["kernel_variant"], dims=e["dims"],
        n_particles=e["n_particles"], n_iters=e["n_iters"], h=e["h"], beta=e["beta"],
        lam=e["lambda"], seed=e["seed"], kde_sigma=e["kde_sigma"],
        init_spread=e["init_spread"], init_center=e["init_center"],
        output_dir=e["output_dir"], problem=prob, source=str(path),
    )


def parse_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config_text(text, str(path), overrides)
