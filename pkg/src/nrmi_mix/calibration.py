"""Choose NGG parameters so that the prior expected number of clusters hits a target."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.special import digamma

from .crm import NggParams, sample_atom_series
from .exceptions import CalibrationRangeError, InvalidParametersError, InversionError

logger = logging.getLogger(__name__)

__all__ = [
    "CalibrationTarget",
    "CalibrationResult",
    "McEstimate",
    "CalibrationBoundaryWarning",
    "MonotonicityWarning",
    "dirichlet_expected_clusters",
    "mc_expected_clusters",
    "calibrate",
    "DEFAULT_BOUNDS",
]

# searched ranges per free parameter; kappa and a are bisected on the log scale
DEFAULT_BOUNDS = {"a": (1e-8, 1e8), "kappa": (1e-8, 1e4), "gamma": (0.05, 0.8)}
PRIOR_EPSILON = 1e-6


class CalibrationBoundaryWarning(UserWarning):
    """The target sits at the edge of the searched parameter range."""


class MonotonicityWarning(UserWarning):
    """The coarse-grid check did not find E(R_n) increasing in the free parameter."""


def dirichlet_expected_clusters(a: float, n: int) -> float:
    """Exact ``E(R_n) = sum_{i=1}^n a / (a + i - 1)`` under a Dirichlet prior.

    Evaluated as ``a (psi(a + n) - psi(a))`` for large ``n``.
    """
    if not a > 0:
        raise InvalidParametersError("a must be positive")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    if n <= 100_000:
        i = np.arange(n, dtype=float)
        return float(np.sum(a / (a + i)))
    return float(a * (digamma(a + n) - digamma(a)))


class McEstimate(NamedTuple):
    mean: float
    se: float
    replicates: int


def _replicate_count(params: NggParams, n: int, seed: np.random.SeedSequence,
                     epsilon: float, max_atoms: int) -> int:
    rng = np.random.default_rng(seed)
    method = "auto" if params.kappa == 0 else "numeric"
    series = sample_atom_series(params.tilted(0.0), None, epsilon, rng,
                                max_atoms=max_atoms, method=method)
    if not np.isfinite(series.total):
        raise InversionError(f"prior jumps overflow for {params}; raise the lower bound")
    w = series.jumps / series.total
    if w.size == 1:
        return 1
    draws = rng.choice(w.size, size=n, p=w)
    return int(np.unique(draws).size)


def mc_expected_clusters(params: NggParams, n: int, replicates: int = 2000,
                         rng=None, threads: int = 1, epsilon: float = PRIOR_EPSILON,
                         max_atoms: int = 1_000_000) -> McEstimate:
    """Monte Carlo estimate of the prior ``E(R_n)`` with its standard error.

    Each replicate simulates the untilted prior CRM by its Ferguson-Klass
    series, draws ``n`` latents from the normalized jumps and counts the
    distinct values.

    Parameters
    ----------
    rng : int, SeedSequence or Generator, optional
        Root of the per-replicate seeds. Passing the same integer again reuses
        the same random numbers, which keeps bisection steps comparable.
    threads : int
        Worker threads for the replicates.
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if replicates < 1:
        raise ValueError("replicates must be positive")
    if isinstance(rng, np.random.Generator):
        root = np.random.SeedSequence(int(rng.integers(2**63)))
    elif isinstance(rng, np.random.SeedSequence):
        root = rng
    else:
        root = np.random.SeedSequence(rng)
    seeds = root.spawn(replicates)
    job = lambda s: _replicate_count(params, int(n), s, epsilon, max_atoms)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            counts = np.fromiter(ex.map(job, seeds), dtype=float, count=replicates)
    else:
        counts = np.fromiter(map(job, seeds), dtype=float, count=replicates)
    se = float(counts.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else 0.0
    return McEstimate(float(counts.mean()), se, replicates)


@dataclass(frozen=True)
class CalibrationTarget:
    """Calibration problem: find the free parameter with ``E(R_n) = c``.

    The other parameters follow the usual conventions: ``kappa = 1`` for the
    Dirichlet, ``a = 1`` and ``gamma = 1/2`` for N-IG, ``a = 1`` and
    ``kappa = 0`` for N-stable.
    """

    n: int
    c: float
    free_parameter: str = "a"
    mc_replicates: int = 2000

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParametersError("n must be a positive integer")
        if not 1 <= self.c <= self.n:
            raise InvalidParametersError("target c must lie in [1, n]")
        if self.free_parameter not in DEFAULT_BOUNDS:
            raise InvalidParametersError(
                f"free_parameter must be one of {sorted(DEFAULT_BOUNDS)}")
        if self.mc_replicates < 2:
            raise InvalidParametersError("mc_replicates must be at least 2")

    def params(self, value: float) -> NggParams:
        if self.free_parameter == "a":
            return NggParams.dirichlet(value)
        if self.free_parameter == "kappa":
            return NggParams.nig(value)
        return NggParams.nstable(value)


class CalibrationResult(NamedTuple):
    parameter: str
    value: float
    expected: float
    se: float
    params: NggParams
    at_boundary: bool


def _scale(free: str):
    if free == "gamma":
        return (lambda v: v), (lambda v: v)
    return math.log, math.exp


def _calibrate_dirichlet(target: CalibrationTarget, bounds) -> CalibrationResult:
    lo, hi = bounds
    n, c = target.n, target.c
    f = lambda a: dirichlet_expected_clusters(a, n)  # noqa: E731
    e_lo, e_hi = f(lo), f(hi)
    if c <= e_lo or c >= e_hi:
        edge, e = (lo, e_lo) if c <= e_lo else (hi, e_hi)
        if abs(e - c) > 1e-3 * c:
            raise CalibrationRangeError(
                f"E(R_n)={c} is outside [{e_lo:.6g}, {e_hi:.6g}] reachable for a in {bounds}")
        warnings.warn(f"target {c} reached only at the search boundary a={edge:g}",
                      CalibrationBoundaryWarning, stacklevel=3)
        return CalibrationResult("a", edge, e, 0.0, target.params(edge), True)
    x0, x1 = math.log(lo), math.log(hi)
    for _ in range(200):
        mid = 0.5 * (x0 + x1)
        e = f(math.exp(mid))
        if abs(e - c) < 1e-10 * c or x1 - x0 < 1e-14:
            break
        if e < c:
            x0 = mid
        else:
            x1 = mid
    a = math.exp(mid)
    return CalibrationResult("a", a, e, 0.0, target.params(a), False)


def _check_monotone(target, bounds, seed, threads, replicates=200, points=4) -> bool:
    fwd, inv = _scale(target.free_parameter)
    grid = np.linspace(fwd(bounds[0]), fwd(bounds[1]), points + 2)[1:-1]
    est = [mc_expected_clusters(target.params(inv(g)), target.n, replicates, seed, threads)
           for g in grid]
    ok = all(b.mean - a.mean > -3.0 * math.hypot(a.se, b.se) for a, b in zip(est, est[1:]))
    if not ok:
        warnings.warn("E(R_n) is not increasing over the coarse calibration grid",
                      MonotonicityWarning, stacklevel=3)
    return ok


def calibrate(target: CalibrationTarget, seed: Optional[int] = 0, threads: int = 1,
              bounds: Optional[Tuple[float, float]] = None, max_steps: int = 60,
              check_monotone: bool = True) -> CalibrationResult:
    """Bisect the free parameter until the prior ``E(R_n)`` matches ``target.c``.

    The Dirichlet mass ``a`` is found from the exact sum. For ``kappa`` and
    ``gamma`` each step uses :func:`mc_expected_clusters` with the same seed,
    and the search stops once ``|E - c| < max(0.1, 2 SE)``.

    Raises
    ------
    CalibrationRangeError
        When the target is not reachable inside ``bounds``.
    """
    free = target.free_parameter
    bounds = tuple(bounds) if bounds is not None else DEFAULT_BOUNDS[free]
    if not 0 < bounds[0] < bounds[1]:
        raise InvalidParametersError("bounds must satisfy 0 < low < high")
    if free == "gamma" and bounds[1] >= 1:
        raise InvalidParametersError("gamma bounds must stay below 1")
    if free == "a":
        return _calibrate_dirichlet(target, bounds)

    n, c, reps = target.n, target.c, target.mc_replicates
    if check_monotone:
        _check_monotone(target, bounds, seed, threads)
    est = lambda v: mc_expected_clusters(target.params(v), n, reps, seed, threads)  # noqa: E731
    tol = lambda e: max(0.1, 2.0 * e.se)  # noqa: E731

    e_lo, e_hi = est(bounds[0]), est(bounds[1])
    for edge, e in ((bounds[0], e_lo), (bounds[1], e_hi)):
        if abs(e.mean - c) < tol(e):
            warnings.warn(f"target {c} reached at the search boundary {free}={edge:g}",
                          CalibrationBoundaryWarning, stacklevel=2)
            return CalibrationResult(free, edge, e.mean, e.se, target.params(edge), True)
    if not e_lo.mean < c < e_hi.mean:
        raise CalibrationRangeError(
            f"E(R_n)={c} is outside [{e_lo.mean:.4g}, {e_hi.mean:.4g}] reachable for "
            f"{free} in {bounds}")

    fwd, inv = _scale(free)
    x0, x1 = fwd(bounds[0]), fwd(bounds[1])
    for step in range(max_steps):
        mid = 0.5 * (x0 + x1)
        e = est(inv(mid))
        logger.debug("calibration step %d: %s=%.6g E=%.4f se=%.4f", step, free, inv(mid),
                     e.mean, e.se)
        if abs(e.mean - c) < tol(e):
            break
        if e.mean < c:
            x0 = mid
        else:
            x1 = mid
    else:
        warnings.warn("calibration stopped at max_steps before meeting its tolerance",
                      RuntimeWarning, stacklevel=2)
    v = inv(mid)
    return CalibrationResult(free, v, e.mean, e.se, target.params(v), False)
