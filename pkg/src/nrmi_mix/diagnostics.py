"""Posterior summaries and fit diagnostics for sampler output."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

__all__ = [
    "FitResult",
    "CpoSummary",
    "RnPosterior",
    "DensityEstimate",
    "DegenerateTraceWarning",
    "cpo",
    "cpo_summaries",
    "rn_posterior",
    "density_estimate",
    "ess",
    "write_csv",
    "read_csv",
]

# empirical quantile convention for credible bands (Hazen, piecewise linear
# through (k - 1/2)/n); with two paths a 95% band is exactly [min, max]
QUANTILE_METHOD = "hazen"


class DegenerateTraceWarning(UserWarning):
    """A diagnostic was asked of a constant or zero-valued input."""


class CpoSummary(NamedTuple):
    alcpo: float
    mlcpo: float
    degenerate: bool


class RnPosterior(NamedTuple):
    values: np.ndarray
    probabilities: np.ndarray
    mode: int


class DensityEstimate(NamedTuple):
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def cpo(log_kernel) -> np.ndarray:
    """Conditional predictive ordinates from kept kernel evaluations.

    Parameters
    ----------
    log_kernel : array of shape (T, n)
        ``log k(x_i | theta_i^[t])`` at each kept iteration.

    Returns
    -------
    ndarray of shape (n,)
        ``CPO_i = [mean_t 1 / k(x_i | theta_i^[t])]^{-1}``, accumulated in log space.
    """
    lk = np.atleast_2d(np.asarray(log_kernel, dtype=float))
    t = lk.shape[0]
    if t < 1:
        raise ValueError("at least one kept iteration is required")
    with np.errstate(over="ignore"):
        log_inv = logsumexp(-lk, axis=0) - np.log(t)
    out = np.exp(-log_inv)
    if np.any(out == 0):
        warnings.warn("zero kernel value encountered: CPO set to 0", DegenerateTraceWarning,
                      stacklevel=2)
    return out


def cpo_summaries(cpo_values) -> CpoSummary:
    """Mean (ALCPO) and median (MLCPO) of the log CPOs."""
    c = np.asarray(cpo_values, dtype=float)
    if np.any(c <= 0):
        warnings.warn("nonpositive CPO present; summaries are -inf", DegenerateTraceWarning,
                      stacklevel=2)
        return CpoSummary(-np.inf, -np.inf, True)
    logc = np.log(c)
    return CpoSummary(float(np.mean(logc)), float(np.median(logc)), False)


def rn_posterior(rn_trace) -> RnPosterior:
    """Empirical posterior of the number of clusters; ties go to the smaller r."""
    tr = np.asarray(rn_trace, dtype=int)
    if tr.size == 0:
        raise ValueError("empty trace")
    values, counts = np.unique(tr, return_counts=True)
    probs = counts / tr.size
    return RnPosterior(values, probs, int(values[np.argmax(counts)]))


def density_estimate(path_matrix, level: float = 0.95) -> DensityEstimate:
    """Pointwise posterior mean density and equal-tailed credible band."""
    pm = np.asarray(path_matrix, dtype=float)
    if pm.ndim != 2 or pm.shape[0] < 2:
        raise ValueError("need a (T, G) path matrix with T >= 2")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    alpha = 0.5 * (1.0 - level)
    lower, upper = np.quantile(pm, [alpha, 1.0 - alpha], axis=0, method=QUANTILE_METHOD)
    mean = pm.mean(axis=0)
    # the band holds the mean even when rounding nudges a quantile past it
    return DensityEstimate(mean, np.minimum(lower, mean), np.maximum(upper, mean))


def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n] / n
    return acov / acov[0]


def ess(trace) -> float:
    """Effective sample size with Geyer's initial positive sequence.

    ``ESS = T / (1 + 2 sum_k rho_k)`` where the autocorrelation sum is cut at
    the first pair ``rho_{2m} + rho_{2m+1}`` that is not positive. A constant
    trace returns ``T`` with a :class:`DegenerateTraceWarning`.
    """
    x = np.asarray(trace, dtype=float)
    t = x.size
    if t < 10:
        raise ValueError("trace too short for an ESS estimate")
    if np.ptp(x) == 0:
        warnings.warn("constant trace: ESS reported as its length", DegenerateTraceWarning,
                      stacklevel=2)
        return float(t)
    rho = _autocorr(x)
    m = (t - 1) // 2
    pairs = rho[0:2 * m:2] + rho[1:2 * m + 1:2]
    nonpos = np.flatnonzero(pairs <= 0)
    k = nonpos[0] if nonpos.size else pairs.size
    # tau = -1 + 2 * sum of positive pairs
    tau = -1.0 + 2.0 * pairs[:k].sum()
    return float(t / max(tau, 1.0 / t))


@dataclass
class FitResult:
    """Summaries accumulated over the kept iterations of one chain.

    Attributes
    ----------
    grid : ndarray (G,)
    path_matrix : ndarray (T, G)
        Density path evaluated on the grid at each kept iteration.
    rn_trace : ndarray (T,)
        Number of distinct latent values after each kept allocation.
    log_kernel : ndarray (T, n)
        ``log k(x_i | theta_i)`` at each kept iteration.
    log_mixture : ndarray (T, n), optional
        Log of the density path at each observation, ``log f_t(x_i)``.
    total_jump_trace : ndarray (T,)
        Total mass of fixed plus free jumps.
    u_trace : ndarray (T,)
    acceptance : dict
        Metropolis-Hastings acceptance rates (``u`` and ``theta``).
    """

    grid: np.ndarray
    path_matrix: np.ndarray
    rn_trace: np.ndarray
    log_kernel: np.ndarray
    total_jump_trace: np.ndarray
    u_trace: np.ndarray
    acceptance: dict
    data: np.ndarray
    seed: Optional[int] = None
    config: dict = field(default_factory=dict)
    max_truncation_ratio: float = 0.0
    allocation_underflows: int = 0
    max_weight_sum_error: float = 0.0
    labels: Optional[np.ndarray] = None
    log_mixture: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return int(self.data.size)

    @property
    def n_kept(self) -> int:
        return int(self.rn_trace.size)

    @property
    def cpo(self) -> np.ndarray:
        """CPO from the density path at each observation (latent version as fallback)."""
        return cpo(self.log_mixture if self.log_mixture is not None else self.log_kernel)

    @property
    def cpo_latent(self) -> np.ndarray:
        """CPO from the kernel at each observation's own latent value."""
        return cpo(self.log_kernel)

    def cpo_summaries(self) -> CpoSummary:
        return cpo_summaries(self.cpo)

    def rn_posterior(self) -> RnPosterior:
        return rn_posterior(self.rn_trace)

    def density_estimate(self, level: float = 0.95) -> DensityEstimate:
        return density_estimate(self.path_matrix, level)

    def ess(self) -> float:
        return ess(self.total_jump_trace)

    def summary(self, level: float = 0.95) -> dict:
        """JSON-ready summary of the fit."""
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateTraceWarning)
            cs = self.cpo_summaries()
            cl = cpo_summaries(self.cpo_latent)
            e = self.ess() if self.n_kept >= 10 else float(self.n_kept)
        rn = self.rn_posterior()
        return _jsonable({
            "n": self.n,
            "kept_iterations": self.n_kept,
            "alcpo": cs.alcpo,
            "mlcpo": cs.mlcpo,
            "cpo_degenerate": cs.degenerate,
            "alcpo_latent": cl.alcpo,
            "mlcpo_latent": cl.mlcpo,
            "rn_mode": rn.mode,
            "rn_distribution": {str(int(v)): float(p) for v, p in zip(rn.values, rn.probabilities)},
            "ess_total_jump": e,
            "ess_degenerate": any("constant" in str(w.message) for w in caught),
            "acceptance": dict(self.acceptance),
            "max_truncation_ratio": self.max_truncation_ratio,
            "max_weight_sum_error": self.max_weight_sum_error,
            "allocation_underflows": self.allocation_underflows,
            "credible_level": level,
            "seed": self.seed,
            "config": self.config,
        })

    def save(self, directory, save_paths: bool = False, level: float = 0.95) -> list:
        """Write fit.json, density.csv, rn.csv and cpo.csv under ``directory``.

        With ``save_paths`` the chain traces needed by :meth:`load` are written
        too: density-paths.csv, trace.csv, kernel.csv and mixture.csv.
        Returns the written paths.
        """
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        fit = out / "fit.json"
        fit.write_text(json.dumps(self.summary(level), indent=2, sort_keys=True) + "\n")
        written.append(fit)
        de = self.density_estimate(level)
        written.append(write_csv(out / "density.csv", ["x", "mean", "lower", "upper"],
                                 [self.grid, de.mean, de.lower, de.upper]))
        rn = self.rn_posterior()
        written.append(write_csv(out / "rn.csv", ["r", "probability"],
                                 [rn.values, rn.probabilities]))
        written.append(write_csv(out / "cpo.csv", ["index", "x", "cpo", "cpo_latent"],
                                 [np.arange(self.n), self.data, self.cpo, self.cpo_latent]))
        if save_paths:
            written.append(write_csv(out / "density-paths.csv",
                                     [_fmt(g) for g in self.grid], self.path_matrix.T))
            written.append(write_csv(out / "trace.csv", ["iteration", "r", "total_jump", "u"],
                                     [np.arange(1, self.n_kept + 1), self.rn_trace,
                                      self.total_jump_trace, self.u_trace]))
            cols = [f"x{i}" for i in range(self.n)]
            written.append(write_csv(out / "kernel.csv", cols, self.log_kernel.T))
            if self.log_mixture is not None:
                written.append(write_csv(out / "mixture.csv", cols, self.log_mixture.T))
        return written

    @classmethod
    def load(cls, directory) -> "FitResult":
        """Rebuild a result from artifacts written with ``save_paths=True``."""
        d = Path(directory)
        meta = json.loads((d / "fit.json").read_text())
        header, paths = read_csv(d / "density-paths.csv")
        _, tr = read_csv(d / "trace.csv")
        _, lk = read_csv(d / "kernel.csv")
        _, cp = read_csv(d / "cpo.csv")
        lm = read_csv(d / "mixture.csv")[1] if (d / "mixture.csv").exists() else None
        acc = {k: (float("nan") if v is None else v) for k, v in meta.get("acceptance", {}).items()}
        return cls(grid=np.array([float(h) for h in header]), path_matrix=paths,
                   rn_trace=tr[:, 1].astype(np.int64), log_kernel=lk,
                   total_jump_trace=tr[:, 2], u_trace=tr[:, 3], acceptance=acc,
                   data=cp[:, 1], seed=meta.get("seed"), config=meta.get("config", {}),
                   max_truncation_ratio=meta.get("max_truncation_ratio", 0.0),
                   allocation_underflows=meta.get("allocation_underflows", 0),
                   max_weight_sum_error=meta.get("max_weight_sum_error", 0.0),
                   log_mixture=lm)


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _jsonable(obj):
    """Replace non-finite floats by None and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_csv(path, header: Sequence[str], columns) -> Path:
    """Write equal-length columns with a header; floats at 17 significant digits."""
    path = Path(path)
    cols = [np.asarray(c) for c in columns]
    if len(cols) != len(header):
        raise ValueError("header and columns differ in length")
    rows = len(cols[0]) if cols else 0
    fmts = [(lambda v: str(int(v))) if np.issubdtype(c.dtype, np.integer) else _fmt for c in cols]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(rows):
            fh.write(",".join(f(c[i]) for f, c in zip(fmts, cols)) + "\n")
    return path


def read_csv(path):
    """Read a file written by :func:`write_csv`; returns ``(header, rows x columns array)``."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data
