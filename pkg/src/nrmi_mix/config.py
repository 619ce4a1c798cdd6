"""JSON run and study configurations with strict key checking.

A run configuration has three sections::

    {
      "model": {"process": "nig", "kappa": 0.015, "kernel": "normal",
                "location_base": "gamma", "sigma_base": [1, 1],
                "hyperprior": {"psi1": 0.01, "psi2": 0.01}},
      "chain": {"iterations": 20000, "burn_in": 2000, "thinning": 4, "seed": 1},
      "output": {"grid_min": 5, "grid_max": 40, "grid_points": 400, "level": 0.95}
    }

Every section and key is optional except ``model.process``. Unknown keys
raise :class:`ConfigError`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from .crm import NggParams
from .exceptions import ConfigError, InvalidParametersError
from .gibbs import GibbsConfig, MixtureModel
from .mixture import (BaseMeasure, GammaBase, GammaHyperprior, Kernel, NormalBase,
                      NormalGammaHyperprior)

__all__ = ["RunConfig", "OutputConfig", "parse_run_config", "load_json", "StudyConfig",
           "parse_study_config"]

_MODEL_KEYS = {"process", "a", "kappa", "gamma", "kernel", "location_base", "sigma_base",
               "hyperprior"}
_CHAIN_KEYS = {"iterations", "burn_in", "thinning", "delta_u", "delta_theta", "eta",
               "epsilon", "seed", "max_atoms"}
_OUTPUT_KEYS = {"grid_min", "grid_max", "grid_points", "level", "directory"}
_PROCESS_DEFAULTS = {
    "dirichlet": {"a": 1.0, "kappa": 1.0, "gamma": 0.0},
    "nig": {"a": 1.0, "kappa": 1.0, "gamma": 0.5},
    "nstable": {"a": 1.0, "kappa": 0.0, "gamma": 0.5},
    "ngg": {},
}
# parameters a user may not override for a named special case
_PROCESS_FIXED = {"dirichlet": {"gamma"}, "nig": {"gamma"}, "nstable": {"kappa"}, "ngg": set()}


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def _check_keys(section: str, d: Any, allowed: set) -> dict:
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigError(f"'{section}' must be a JSON object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    return d


@dataclass(frozen=True)
class OutputConfig:
    grid_min: Optional[float] = None
    grid_max: Optional[float] = None
    grid_points: int = 400
    level: float = 0.95
    directory: Optional[str] = None

    def grid(self) -> Optional[tuple]:
        if self.grid_min is None and self.grid_max is None:
            return None
        if self.grid_min is None or self.grid_max is None or not self.grid_min < self.grid_max:
            raise ConfigError("grid_min and grid_max must both be set with grid_min < grid_max")
        return tuple(np.linspace(self.grid_min, self.grid_max, self.grid_points).tolist())


@dataclass(frozen=True)
class RunConfig:
    model: MixtureModel
    chain: GibbsConfig
    output: OutputConfig = field(default_factory=OutputConfig)
    raw: Dict[str, Any] = field(default_factory=dict)

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        if seed is None:
            return self
        raw = json.loads(json.dumps(self.raw))
        raw.setdefault("chain", {})["seed"] = int(seed)
        return parse_run_config(raw)


def _parse_model(m: dict) -> tuple:
    m = _check_keys("model", m, _MODEL_KEYS)
    process = m.get("process")
    if process not in _PROCESS_DEFAULTS:
        raise ConfigError(f"model.process must be one of {sorted(_PROCESS_DEFAULTS)}")
    vals = dict(_PROCESS_DEFAULTS[process])
    for k in ("a", "kappa", "gamma"):
        if k in m:
            if k in _PROCESS_FIXED[process] and m[k] != vals[k]:
                raise ConfigError(f"{k} is fixed at {vals[k]} for process '{process}'")
            vals[k] = m[k]
        elif process == "ngg":
            raise ConfigError("process 'ngg' needs explicit a, kappa and gamma")
    try:
        kernel = Kernel(m.get("kernel", "normal"))
    except ValueError as exc:
        raise ConfigError(f"unknown kernel {m.get('kernel')!r}") from exc

    lb = m.get("location_base", "gamma" if kernel.positive_support else "normal")
    lb_params: dict = {}
    if isinstance(lb, dict):
        lb_params = dict(lb)
        lb = lb_params.pop("type", None)
    if lb == "normal":
        _check_keys("model.location_base", lb_params, {"phi1", "phi2"})
        mu_base = NormalBase(float(lb_params.get("phi1", 0.0)), float(lb_params.get("phi2", 0.01)))
        hp_cls, hp_keys = NormalGammaHyperprior, {"psi1", "psi2", "psi3", "psi4"}
    elif lb == "gamma":
        _check_keys("model.location_base", lb_params, {"phi"})
        mu_base = GammaBase(float(lb_params.get("phi", 1.0)))
        hp_cls, hp_keys = GammaHyperprior, {"psi1", "psi2"}
    else:
        raise ConfigError("model.location_base must be 'normal' or 'gamma'")

    hp_raw = m.get("hyperprior", "default")
    if hp_raw in (None, "fixed"):
        hp = None
    elif hp_raw == "default":
        hp = hp_cls()
    else:
        hp = hp_cls(**{k: float(v) for k, v in _check_keys("model.hyperprior", hp_raw, hp_keys).items()})

    sb = m.get("sigma_base", [1.0, 1.0])
    if not (isinstance(sb, (list, tuple)) and len(sb) == 2):
        raise ConfigError("model.sigma_base must be [shape, rate]")
    base = BaseMeasure(mu_base, float(sb[0]), float(sb[1]), hp)
    params = NggParams(float(vals["a"]), float(vals["kappa"]), float(vals["gamma"]))
    return MixtureModel(params, kernel, base)


def parse_run_config(raw: dict) -> RunConfig:
    """Validate a run configuration dictionary.

    Raises
    ------
    ConfigError
        On unknown keys or any invalid value.
    """
    raw = _check_keys("config", raw, {"model", "chain", "output"})
    if "model" not in raw:
        raise ConfigError("config needs a 'model' section")
    try:
        model = _parse_model(raw["model"])
        ch = _check_keys("chain", raw.get("chain"), _CHAIN_KEYS)
        out = OutputConfig(**_check_keys("output", raw.get("output"), _OUTPUT_KEYS))
        if not 0 < out.level < 1:
            raise ConfigError("output.level must lie in (0, 1)")
        chain = GibbsConfig(**ch, grid=out.grid(), grid_points=int(out.grid_points))
    except ConfigError:
        raise
    except (InvalidParametersError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(model, chain, out, json.loads(json.dumps(raw)))


@dataclass(frozen=True)
class StudyConfig:
    truth: Any
    run: RunConfig
    replicates: int = 40
    n: int = 250
    seed: int = 0
    grid_points: int = 2048
    raw: Dict[str, Any] = field(default_factory=dict)


def parse_study_config(raw: dict, base_dir: Optional[Path] = None) -> StudyConfig:
    """Validate a study configuration.

    Keys: ``truth`` (a shipped model name such as "mw05", a path to a mixture
    JSON file, or an inline mixture object), ``run`` (inline run configuration
    or path), ``replicates``, ``n``, ``seed`` and ``grid_points``.
    """
    from .benchmark import GaussianMixture, load_marron_wand

    raw = _check_keys("study", raw, {"truth", "run", "replicates", "n", "seed", "grid_points"})
    base_dir = Path(base_dir or ".")
    t = raw.get("truth")
    try:
        if isinstance(t, dict):
            truth = GaussianMixture.from_dict(t)
        elif isinstance(t, str) and t.startswith("mw") and not t.endswith(".json"):
            truth = load_marron_wand(t)
        elif isinstance(t, str):
            p = Path(t) if Path(t).is_absolute() else base_dir / t
            truth = GaussianMixture.from_dict(load_json(p))
        else:
            raise ConfigError("study.truth is required")
    except (InvalidParametersError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid truth mixture: {exc}") from exc
    run_raw = raw.get("run", {"model": {"process": "nstable", "gamma": 0.396}})
    if isinstance(run_raw, str):
        p = Path(run_raw) if Path(run_raw).is_absolute() else base_dir / run_raw
        run_raw = load_json(p)
    run = parse_run_config(run_raw)
    try:
        return StudyConfig(truth, run, int(raw.get("replicates", 40)), int(raw.get("n", 250)),
                           int(raw.get("seed", 0)), int(raw.get("grid_points", 2048)),
                           json.loads(json.dumps(raw)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
