"""Simulation benchmark: Gaussian-mixture truths, a Silverman KDE baseline and MISE scoring."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .crm import NggParams
from .exceptions import DegenerateBandwidthError, InvalidParametersError, NrmiError
from .gibbs import GibbsConfig, MixtureModel, run_chain
from .mixture import BaseMeasure, Kernel, NormalGammaHyperprior

logger = logging.getLogger(__name__)

__all__ = [
    "GaussianMixture",
    "load_marron_wand",
    "mixture_density",
    "sample_mixture",
    "silverman_bandwidth",
    "silverman_kde",
    "SilvermanKDE",
    "integration_grid",
    "mise",
    "rmise",
    "default_study_model",
    "StudySpec",
    "run_study",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianMixture:
    """Finite normal mixture ``sum_l w_l N(m_l, s_l^2)``."""

    weights: tuple
    means: tuple
    sds: tuple
    name: str = ""

    def __post_init__(self):
        w, m, s = (tuple(float(v) for v in a) for a in (self.weights, self.means, self.sds))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "sds", s)
        if not (len(w) == len(m) == len(s) >= 1):
            raise InvalidParametersError("weights, means and sds must have equal nonzero length")
        if any(x <= 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
            raise InvalidParametersError("weights must be positive and sum to 1")
        if any(not x > 0 for x in s) or not all(math.isfinite(x) for x in m):
            raise InvalidParametersError("sds must be positive and means finite")

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixture":
        comps = d["components"]
        return cls(tuple(c["weight"] for c in comps), tuple(c["mean"] for c in comps),
                   tuple(c["sd"] for c in comps), d.get("name", ""))

    @classmethod
    def from_json(cls, path) -> "GaussianMixture":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"name": self.name, "components": [
            {"weight": w, "mean": m, "sd": s} for w, m, s in zip(self.weights, self.means, self.sds)]}

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.means))

    @property
    def sd(self) -> float:
        w, m, s = map(np.asarray, (self.weights, self.means, self.sds))
        return float(math.sqrt(np.dot(w, s ** 2 + m ** 2) - self.mean ** 2))

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m, s, w = (np.asarray(a) for a in (self.means, self.sds, self.weights))
        z = (x[..., None] - m) / s
        return (np.exp(-0.5 * z * z) / (s * _SQRT_2PI)) @ w

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        return rng.normal(np.asarray(self.means)[comp], np.asarray(self.sds)[comp])


def load_marron_wand(model: Union[int, str]) -> GaussianMixture:
    """Load one of the shipped Marron-Wand test densities (1 to 10, or "mw01".."mw10")."""
    name = model if isinstance(model, str) else f"mw{int(model):02d}"
    if name not in {f"mw{k:02d}" for k in range(1, 11)}:
        raise InvalidParametersError(f"unknown Marron-Wand model {model!r}")
    ref = resources.files("nrmi_mix") / "data" / f"{name}.json"
    return GaussianMixture.from_dict(json.loads(ref.read_text()))


def mixture_density(gm: GaussianMixture, x):
    out = gm.pdf(x)
    return float(out) if np.ndim(out) == 0 else out


def sample_mixture(gm: GaussianMixture, n: int, rng: np.random.Generator) -> np.ndarray:
    return gm.sample(n, rng)


def silverman_bandwidth(data) -> float:
    """Rule-of-thumb bandwidth ``h = 1.06 s n^{-1/5}`` with the unbiased sample sd ``s``.

    The kernel variance is ``s^2 (1.06)^2 n^{-2/5}``.
    """
    x = np.asarray(data, dtype=float).ravel()
    if x.size < 2:
        raise DegenerateBandwidthError("at least two observations are needed")
    s = float(np.std(x, ddof=1))
    if not s > 0:
        raise DegenerateBandwidthError("zero sample variance: bandwidth is degenerate")
    return 1.06 * s * x.size ** -0.2


def silverman_kde(data, x, bandwidth: Optional[float] = None):
    """Gaussian kernel density estimate at ``x``; Silverman bandwidth by default."""
    d = np.asarray(data, dtype=float).ravel()
    h = silverman_bandwidth(d) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise DegenerateBandwidthError("bandwidth must be positive")
    xx = np.asarray(x, dtype=float)
    flat = xx.ravel()
    out = np.empty(flat.size)
    # chunk to bound memory for long grids
    step = max(1, 2_000_000 // max(d.size, 1))
    for i in range(0, flat.size, step):
        z = (flat[i:i + step, None] - d) / h
        out[i:i + step] = np.exp(-0.5 * z * z).sum(axis=1) / (d.size * h * _SQRT_2PI)
    out = out.reshape(xx.shape)
    return float(out) if out.ndim == 0 else out


class SilvermanKDE(DensityMixin, BaseEstimator):
    """Gaussian KDE with the 1.06 s n^{-1/5} rule-of-thumb bandwidth.

    Parameters
    ----------
    bandwidth : float or None
        Fixed bandwidth; None selects the rule of thumb at fit time.
    """

    def __init__(self, bandwidth: Optional[float] = None):
        self.bandwidth = bandwidth

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False, ensure_min_samples=1)
        x = np.asarray(X, dtype=float).reshape(-1)
        if np.ndim(X) == 2 and X.shape[1] != 1:
            raise ValueError("SilvermanKDE is univariate; X must have one feature")
        self.bandwidth_ = silverman_bandwidth(x) if self.bandwidth is None else float(self.bandwidth)
        self.data_ = x
        return self

    def score_samples(self, X):
        check_is_fitted(self, "data_")
        x = np.asarray(check_array(X, ensure_2d=False), dtype=float).reshape(-1)
        with np.errstate(divide="ignore"):
            return np.log(silverman_kde(self.data_, x, self.bandwidth_))

    def score(self, X, y=None):
        return float(np.sum(self.score_samples(X)))


def integration_grid(gm: GaussianMixture, points: int = 2048, width: float = 6.0) -> np.ndarray:
    """Grid over ``mean +- width * sd`` of the truth."""
    return np.linspace(gm.mean - width * gm.sd, gm.mean + width * gm.sd, points)


def mise(estimates, truth, grid) -> float:
    """Mean over replicates of the trapezoid-integrated squared error."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tr = np.asarray(truth, dtype=float)
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or tr.shape != g.shape or est.shape[1] != g.size:
        raise ValueError(f"shape mismatch: estimates {est.shape}, truth {tr.shape}, grid {g.shape}")
    ise = np.trapezoid((est - tr) ** 2, g, axis=1)
    return float(ise.mean())


def rmise(model_mise: float, kde_mise: float) -> float:
    """Ratio of the model MISE to the KDE MISE."""
    if not kde_mise > 0:
        raise ValueError("KDE MISE must be positive")
    return float(model_mise) / float(kde_mise)


def default_study_model() -> MixtureModel:
    """N-stable NGG(1, 0, 0.396) normal mixture with a normal-gamma location hyperprior."""
    return MixtureModel(NggParams.nstable(0.396), Kernel.NORMAL,
                        BaseMeasure.normal(1.0, 1.0, NormalGammaHyperprior(0.0, 0.01, 0.1, 0.1)))


@dataclass(frozen=True)
class StudySpec:
    """Repeated-experiment design for one truth model."""

    truth: GaussianMixture
    replicates: int = 40
    n: int = 250
    model: MixtureModel = field(default_factory=default_study_model)
    chain: GibbsConfig = field(default_factory=lambda: GibbsConfig(10_000, 1_000, 4))
    grid_points: int = 2048
    grid_width: float = 6.0

    def __post_init__(self):
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise InvalidParametersError("replicates must be a positive integer")
        if int(self.n) != self.n or self.n < 2:
            raise InvalidParametersError("n must be an integer of at least 2")

    @property
    def grid(self) -> np.ndarray:
        return integration_grid(self.truth, self.grid_points, self.grid_width)

    def to_dict(self) -> dict:
        return {"truth": self.truth.to_dict(), "replicates": self.replicates, "n": self.n,
                "model": self.model.to_dict(), "chain": self.chain.to_dict(),
                "grid_points": self.grid_points, "grid_width": self.grid_width}


def _run_replicate(spec: StudySpec, index: int, seed: np.random.SeedSequence, grid, truth):
    data_seed, chain_seed = seed.spawn(2)
    rng = np.random.default_rng(data_seed)
    x = spec.truth.sample(spec.n, rng)
    kde = silverman_kde(x, grid)
    rec = {"replicate": index, "seed": int(chain_seed.generate_state(1, np.uint64)[0] >> 1),
           "mise_kde": mise(kde, truth, grid)}
    try:
        cfg = replace(spec.chain, seed=rec["seed"], grid=tuple(grid))
        fit = run_chain(x, spec.model, cfg)
        est = fit.path_matrix.mean(axis=0)
        rec["mise_model"] = mise(est, truth, grid)
        rec["rmise"] = rmise(rec["mise_model"], rec["mise_kde"])
        rec["rn_mode"] = fit.rn_posterior().mode
        rec["error"] = None
        rec["_estimate"] = est
    except (NrmiError, ArithmeticError, ValueError) as exc:
        logger.warning("replicate %d failed: %s", index, exc)
        rec.update(mise_model=None, rmise=None, rn_mode=None, error=f"{type(exc).__name__}: {exc}")
    rec["_kde"] = kde
    return rec


def run_study(spec: StudySpec, seed: Optional[int] = 0, threads: int = 1,
              keep_curves: bool = False) -> dict:
    """Fit the model and the KDE to ``spec.replicates`` simulated samples.

    Every replicate draws its data and chain seeds from ``SeedSequence(seed)``.
    A failing replicate is recorded with its error and the rest continue.

    Returns
    -------
    dict
        ``{"spec", "seed", "replicates": [...], "aggregate": {...}}``. The
        aggregate RMISE is the ratio of MISEs over the successful replicates.
        With ``keep_curves`` the mean model and KDE curves are added.
    """
    grid = spec.grid
    truth = spec.truth.pdf(grid)
    seeds = np.random.SeedSequence(seed).spawn(spec.replicates)
    job = lambda args: _run_replicate(spec, args[0], args[1], grid, truth)  # noqa: E731
    items = list(enumerate(seeds))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            recs = list(ex.map(job, items))
    else:
        recs = [job(it) for it in items]

    ok = [r for r in recs if r["error"] is None]
    agg = {"n_ok": len(ok), "n_failed": len(recs) - len(ok),
           "mise_kde": float(np.mean([r["mise_kde"] for r in recs]))}
    if ok:
        agg["mise_model"] = float(np.mean([r["mise_model"] for r in ok]))
        kde_ok = float(np.mean([r["mise_kde"] for r in ok]))
        agg["rmise"] = rmise(agg["mise_model"], kde_ok)
    else:
        agg["mise_model"] = None
        agg["rmise"] = None
    report = {"spec": spec.to_dict(), "seed": seed, "aggregate": agg,
              "replicates": [{k: v for k, v in r.items() if not k.startswith("_")} for r in recs]}
    if keep_curves:
        report["grid"] = grid
        report["truth"] = truth
        report["kde_mean"] = np.mean([r["_kde"] for r in recs], axis=0)
        report["model_mean"] = (np.mean([r["_estimate"] for r in ok], axis=0) if ok else None)
    return report
