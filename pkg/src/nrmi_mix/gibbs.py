"""Conditional Gibbs sampler for NGG-driven mixture models.

One iteration updates, in order: the latent ``u``; the free (non-fixed) part
of the posterior CRM via its Ferguson-Klass series; the distinct latent values
by Metropolis-Hastings; their fixed jumps; the location hyperparameters; the
allocation of observations to atoms; and, at kept iterations, the density path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .crm import AtomSeries, NggParams, sample_atom_series
from .diagnostics import FitResult
from .exceptions import ConfigError, DataError, NrmiError, SamplerError
from .mixture import BaseMeasure, GammaBase, Kernel, update_hyperparameters

logger = logging.getLogger(__name__)

__all__ = [
    "GibbsConfig",
    "MixtureModel",
    "ChainState",
    "DensityPath",
    "log_u_conditional",
    "step_u",
    "u_log_acceptance",
    "unique_log_acceptance",
    "step_free_atoms",
    "step_resample_uniques",
    "step_fixed_jumps",
    "step_allocate",
    "density_path",
    "initial_state",
    "default_grid",
    "run_chain",
]


@dataclass(frozen=True)
class GibbsConfig:
    """Chain length, proposal tuning and output grid for :func:`run_chain`.

    Iterations are numbered ``1..iterations``; iteration ``t`` is kept when
    ``t > burn_in`` and ``(t - burn_in) % thinning == 0``.
    """

    iterations: int = 10_000
    burn_in: int = 1_000
    thinning: int = 4
    delta_u: float = 4.0
    delta_theta: float = 4.0
    eta: float = 2.0
    epsilon: float = 1e-4
    seed: Optional[int] = None
    grid: Optional[Sequence[float]] = None
    grid_points: int = 400
    max_atoms: int = 100_000

    def __post_init__(self):
        for name in ("iterations", "thinning", "grid_points", "max_atoms"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if int(self.burn_in) != self.burn_in or not 0 <= self.burn_in < self.iterations:
            raise ConfigError("burn_in must be a nonnegative integer below iterations")
        if not self.delta_u >= 1:
            raise ConfigError("delta_u must be at least 1")
        if not (self.delta_theta > 0 and self.eta > 0 and self.epsilon > 0):
            raise ConfigError("delta_theta, eta and epsilon must be positive")
        if self.grid is not None:
            g = np.asarray(self.grid, dtype=float)
            if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0) or not np.all(np.isfinite(g)):
                raise ConfigError("grid must be a strictly increasing finite 1-d sequence")
            object.__setattr__(self, "grid", tuple(float(x) for x in g))

    @property
    def n_kept(self) -> int:
        return (self.iterations - self.burn_in) // self.thinning

    def is_kept(self, t: int) -> bool:
        return t > self.burn_in and (t - self.burn_in) % self.thinning == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = None if self.grid is None else list(self.grid)
        return d


@dataclass(frozen=True)
class MixtureModel:
    """NGG prior, kernel and base measure of a mixture model."""

    params: NggParams
    kernel: Kernel = Kernel.NORMAL
    base: BaseMeasure = field(default_factory=BaseMeasure)

    def __post_init__(self):
        object.__setattr__(self, "kernel", Kernel(self.kernel))
        self.base.check_kernel(self.kernel)

    def check_data(self, data) -> np.ndarray:
        """Validate data against the kernel and base supports; returns a float array."""
        x = np.asarray(data, dtype=float).ravel()
        if x.size == 0:
            raise DataError("data must be nonempty")
        bad = np.flatnonzero(~np.isfinite(x))
        if bad.size:
            raise DataError(f"non-finite value at row {bad[0]}", row=int(bad[0]))
        if self.kernel.positive_support or self.base.positive_locations:
            bad = np.flatnonzero(x <= 0)
            if bad.size:
                raise DataError(
                    f"nonpositive value {float(x[bad[0]]):g} at row {bad[0]} is outside the support",
                    row=int(bad[0]))
        return x

    def to_dict(self) -> dict:
        b = self.base
        mu = ({"type": "gamma", "phi": b.mu_base.phi} if isinstance(b.mu_base, GammaBase)
              else {"type": "normal", "phi1": b.mu_base.phi1, "phi2": b.mu_base.phi2})
        hp = None if b.hyperprior is None else asdict(b.hyperprior)
        return {"a": self.params.a, "kappa": self.params.kappa, "gamma": self.params.gamma,
                "kernel": self.kernel.value, "mu_base": mu,
                "sigma_base": [b.sigma_shape, b.sigma_rate], "hyperprior": hp}


@dataclass
class ChainState:
    """Full sampler state.

    ``labels[i]`` indexes the row of ``uniques`` (shape (r, 2) of (mu, sigma))
    that observation ``i`` is allocated to; ``counts`` are the cluster sizes.
    """

    labels: np.ndarray
    uniques: np.ndarray
    counts: np.ndarray
    u: float
    fixed_jumps: np.ndarray
    free_atoms: Optional[AtomSeries]
    base: BaseMeasure

    @property
    def r(self) -> int:
        return int(self.uniques.shape[0])

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def thetas(self) -> np.ndarray:
        return self.uniques[self.labels]

    def combined_atoms(self):
        """Fixed then free atoms, as ``(locations (m, 2), jumps (m,))``."""
        if self.free_atoms is None or len(self.free_atoms) == 0:
            return self.uniques, self.fixed_jumps
        return (np.vstack([self.uniques, self.free_atoms.locations]),
                np.concatenate([self.fixed_jumps, self.free_atoms.jumps]))

    def check(self) -> None:
        """Assert the allocation / frequency bookkeeping is consistent."""
        r = self.r
        if r < 1 or self.counts.size != r or self.fixed_jumps.size != r:
            raise AssertionError("inconsistent number of clusters")
        if self.counts.sum() != self.n or np.any(self.counts < 1):
            raise AssertionError("cluster sizes do not sum to n")
        if not np.array_equal(np.bincount(self.labels, minlength=r), self.counts):
            raise AssertionError("labels disagree with counts")
        if not self.u > 0:
            raise AssertionError("u must be positive")


class DensityPath(NamedTuple):
    """One posterior draw of the random density as a weighted kernel mixture."""

    atoms: np.ndarray
    weights: np.ndarray
    kernel: Kernel

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = self.kernel.pdf(x[..., None], self.atoms[:, 0], self.atoms[:, 1])
        return k @ self.weights


# -- step 1: latent u -----------------------------------------------------------

def log_u_conditional(n: int, r: int, params: NggParams, u):
    """Unnormalized log density of ``u`` given ``n`` observations in ``r`` clusters."""
    u = np.asarray(u, dtype=float)
    a, k, g = params.a, params.kappa, params.gamma
    with np.errstate(divide="ignore"):
        if g == 0:
            out = (n - 1) * np.log(u) - (n + a) * np.log(u + k)
        else:
            out = (n - 1) * np.log(u) + (r * g - n) * np.log(u + k) - (a / g) * (u + k) ** g
    out = np.where(u > 0, out, -np.inf)
    return float(out) if out.ndim == 0 else out


def _log_gamma_pdf(x, shape, rate):
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def u_log_acceptance(u: float, prop: float, n: int, r: int, params: NggParams,
                     delta: float) -> float:
    """Log Metropolis-Hastings ratio for moving ``u`` to ``prop``."""
    return (log_u_conditional(n, r, params, prop) - log_u_conditional(n, r, params, u)
            + _log_gamma_pdf(u, delta, delta / prop) - _log_gamma_pdf(prop, delta, delta / u))


def step_u(u: float, n: int, r: int, params: NggParams, delta: float,
           rng: np.random.Generator):
    """Metropolis-Hastings update of ``u`` with a ``Ga(delta, delta/u)`` proposal.

    Returns ``(new_u, accepted)``.
    """
    prop = rng.gamma(delta, u / delta)
    if not prop > 0:
        return u, False
    log_ratio = u_log_acceptance(u, prop, n, r, params, delta)
    if math.log(rng.random()) < log_ratio:
        return float(prop), True
    return u, False


# -- step 2: free atoms ---------------------------------------------------------

def step_free_atoms(u: float, params: NggParams, base: BaseMeasure, epsilon: float,
                    rng: np.random.Generator, max_atoms: int = 100_000) -> AtomSeries:
    """Ferguson-Klass series of the CRM part without fixed atoms, tilted by ``u``."""
    return sample_atom_series(params.tilted(u), base.sample, epsilon, rng, max_atoms=max_atoms)


# -- step 3: distinct values ----------------------------------------------------

def _mu_proposal(base: BaseMeasure, xbar, sd, rng, size):
    if base.positive_locations:
        shape = (xbar / sd) ** 2
        return rng.gamma(shape, xbar / shape, size)
    return rng.normal(xbar, sd, size)


def _mu_proposal_logpdf(base: BaseMeasure, mu, xbar, sd):
    if base.positive_locations:
        shape = (xbar / sd) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            out = _log_gamma_pdf(mu, shape, shape / xbar)
        return np.where(mu > 0, out, -np.inf)
    z = (mu - xbar) / sd
    return -0.5 * z * z - np.log(sd) - 0.5 * math.log(2.0 * math.pi)


def _cluster_log_target(data, labels, r, mu, sigma, kernel: Kernel, base: BaseMeasure):
    ll = kernel.logpdf(data, mu[labels], sigma[labels])
    return base.logpdf(mu, sigma) + np.bincount(labels, weights=ll, minlength=r)


def unique_log_acceptance(state: ChainState, data: np.ndarray, kernel: Kernel,
                          mu_p, sigma_p, delta: float = 4.0, eta: float = 2.0) -> np.ndarray:
    """Per-cluster log Metropolis-Hastings ratios for proposals ``(mu_p, sigma_p)``.

    Proposals outside the support give ``-inf``.
    """
    r, labels, base = state.r, state.labels, state.base
    mu, sigma = state.uniques[:, 0], state.uniques[:, 1]
    nj = state.counts.astype(float)
    xbar = np.bincount(labels, weights=data, minlength=r) / nj
    mu_p = np.asarray(mu_p, dtype=float)
    sigma_p = np.asarray(sigma_p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        safe = (sigma_p > 0) & np.isfinite(mu_p)
        if kernel.positive_support or base.positive_locations:
            safe &= mu_p > 0
        mu_q = np.where(safe, mu_p, mu)
        sigma_q = np.where(safe, sigma_p, sigma)
        log_ratio = (_cluster_log_target(data, labels, r, mu_q, sigma_q, kernel, base)
                     - _cluster_log_target(data, labels, r, mu, sigma, kernel, base)
                     + _log_gamma_pdf(sigma, delta, delta / sigma_q)
                     + _mu_proposal_logpdf(base, mu, xbar, eta * sigma / np.sqrt(nj))
                     - _log_gamma_pdf(sigma_q, delta, delta / sigma)
                     - _mu_proposal_logpdf(base, mu_q, xbar, eta * sigma_q / np.sqrt(nj)))
    return np.where(safe & ~np.isnan(log_ratio), log_ratio, -np.inf)


def step_resample_uniques(state: ChainState, data: np.ndarray, kernel: Kernel,
                          delta: float = 4.0, eta: float = 2.0,
                          rng: Optional[np.random.Generator] = None,
                          force_reject: bool = False):
    """Joint Metropolis-Hastings move for every distinct value ``(mu*_j, sigma*_j)``.

    ``sigma' ~ Ga(delta, delta / sigma)`` and ``mu'`` is drawn from the location
    family moment-matched to the cluster mean with sd ``eta * sigma' / sqrt(n_j)``.

    Returns ``(uniques, n_accepted)``.
    """
    r = state.r
    sigma = state.uniques[:, 1]
    nj = state.counts.astype(float)
    xbar = np.bincount(state.labels, weights=data, minlength=r) / nj
    sigma_p = rng.gamma(delta, sigma / delta)
    mu_p = _mu_proposal(state.base, xbar, eta * sigma_p / np.sqrt(nj), rng, r)
    log_unif = np.log(rng.random(r))
    if force_reject:
        return state.uniques.copy(), 0
    accept = log_unif < unique_log_acceptance(state, data, kernel, mu_p, sigma_p, delta, eta)
    out = state.uniques.copy()
    out[accept, 0] = mu_p[accept]
    out[accept, 1] = sigma_p[accept]
    return out, int(accept.sum())


# -- step 4: fixed jumps ----------------------------------------------------------

def step_fixed_jumps(counts, u: float, params: NggParams, rng: np.random.Generator) -> np.ndarray:
    """Jumps at the distinct values: ``J*_j ~ Ga(n_j - gamma, kappa + u)``."""
    counts = np.asarray(counts, dtype=float)
    return rng.gamma(counts - params.gamma, 1.0 / (params.kappa + u))


# -- step 6: allocation ------------------------------------------------------------

def _categorical(logp: np.ndarray, rng: np.random.Generator):
    """Row-wise inverse-CDF draws from unnormalized log probabilities.

    Returns ``(index, degenerate_rows)``; degenerate rows (all ``-inf``) get index -1.
    """
    with np.errstate(invalid="ignore"):
        norm = logsumexp(logp, axis=1, keepdims=True)
        p = np.exp(logp - norm)
    dead = ~np.isfinite(norm[:, 0])
    cdf = np.cumsum(p, axis=1)
    draw = rng.random(logp.shape[0])[:, None] * cdf[:, -1:]
    idx = (cdf <= draw).sum(axis=1)
    # guard against roundoff pushing past the last atom with positive mass
    idx = np.minimum(idx, logp.shape[1] - 1)
    idx[dead] = -1
    return idx, dead


def step_allocate(data: np.ndarray, atoms: np.ndarray, jumps: np.ndarray, kernel: Kernel,
                  rng: np.random.Generator, previous: Optional[np.ndarray] = None):
    """Allocate every observation to an atom with mass ``k(x_i | atom) * jump``.

    Parameters
    ----------
    atoms : ndarray (m, 2)
    jumps : ndarray (m,)
    previous : ndarray (n,), optional
        Atom indices kept by rows whose masses all underflow.

    Returns
    -------
    labels : ndarray (n,)
        Cluster of each observation, indexing ``used``.
    used : ndarray (r,)
        Sorted indices into ``atoms`` of the allocated atoms.
    underflows : int
        Rows that fell back to ``previous``.
    """
    with np.errstate(divide="ignore"):
        logp = kernel.logpdf(data[:, None], atoms[None, :, 0], atoms[None, :, 1]) + np.log(jumps)
    idx, dead = _categorical(logp, rng)
    n_dead = int(dead.sum())
    if n_dead:
        if previous is None:
            raise SamplerError(f"{n_dead} observations have zero mass under every atom")
        idx[dead] = previous[dead]
    used, labels = np.unique(idx, return_inverse=True)
    return labels.astype(np.intp), used, n_dead


# -- step 7: density path ------------------------------------------------------------

def density_path(atoms: np.ndarray, jumps: np.ndarray, kernel: Kernel, grid=None):
    """Normalized mixture ``sum_j w_j k(x | atom_j)`` with ``w = J / sum J``.

    Returns the :class:`DensityPath`, plus its values on ``grid`` when given.
    """
    jumps = np.asarray(jumps, dtype=float)
    path = DensityPath(np.asarray(atoms, dtype=float), jumps / jumps.sum(), Kernel(kernel))
    if grid is None:
        return path
    return path, path(grid)


# -- chain driver ---------------------------------------------------------------------

def default_grid(data: np.ndarray, points: int = 400, positive: bool = False) -> np.ndarray:
    """Evaluation grid spanning the data range widened by half of it on each side."""
    lo, hi = float(data.min()), float(data.max())
    span = hi - lo if hi > lo else max(abs(lo), 1.0)
    a, b = lo - 0.5 * span, hi + 0.5 * span
    if positive:
        a = max(a, lo * 1e-3)
    return np.linspace(a, b, points)


def initial_state(data: np.ndarray, model: MixtureModel, rng: np.random.Generator) -> ChainState:
    """Deterministic start: ``ceil(sqrt(n))`` rank groups with their means as locations.

    Every sigma starts at the sample standard deviation and ``u`` at 1; the
    location hyperparameters receive one posterior draw given the starting locations.
    """
    n = data.size
    k = int(math.ceil(math.sqrt(n)))
    order = np.argsort(data, kind="stable")
    labels = np.empty(n, dtype=np.intp)
    groups = [g for g in np.array_split(order, k) if g.size]
    for j, g in enumerate(groups):
        labels[g] = j
    r = len(groups)
    counts = np.bincount(labels, minlength=r)
    mu = np.bincount(labels, weights=data, minlength=r) / counts
    sd = float(np.std(data, ddof=1)) if n > 1 else 0.0
    if not sd > 0:
        sd = max(abs(float(data.mean())), 1.0)
    uniques = np.column_stack([mu, np.full(r, sd)])
    base = update_hyperparameters(model.base, mu, rng)
    u = 1.0
    jumps = step_fixed_jumps(counts, u, model.params, rng)
    return ChainState(labels, uniques, counts, u, jumps, None, base)


def run_chain(data, model: MixtureModel, config: GibbsConfig = GibbsConfig(),
              rng: Optional[np.random.Generator] = None, check_every: int = 0,
              frozen_u: Optional[float] = None) -> FitResult:
    """Run one chain and accumulate summaries at the kept iterations.

    Parameters
    ----------
    data : array_like (n,)
    model : MixtureModel
    config : GibbsConfig
    rng : numpy.random.Generator, optional
        Overrides the generator seeded from ``config.seed``.
    check_every : int
        When positive, verify the state bookkeeping every ``check_every`` iterations.
    frozen_u : float, optional
        Hold ``u`` fixed at this value (diagnostic use).

    Raises
    ------
    SamplerError
        On a numerical failure, carrying the iteration index.
    """
    x = model.check_data(data)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    grid = (np.asarray(config.grid) if config.grid is not None
            else default_grid(x, config.grid_points, model.kernel.positive_support))
    n, t_kept = x.size, config.n_kept
    params, kernel = model.params, model.kernel

    path_matrix = np.empty((t_kept, grid.size))
    rn_trace = np.empty(t_kept, dtype=np.int64)
    log_kernel = np.empty((t_kept, n))
    log_mixture = np.empty((t_kept, n))
    total_jump = np.empty(t_kept)
    u_trace = np.empty(t_kept)
    acc_u = acc_theta = n_theta = 0
    underflows = 0
    max_trunc = 0.0
    max_wsum_err = 0.0

    state = initial_state(x, model, rng)
    if frozen_u is not None:
        state.u = float(frozen_u)
    kept = 0
    t = 0
    try:
        for t in range(1, config.iterations + 1):
            if frozen_u is None:
                state.u, ok = step_u(state.u, n, state.r, params, config.delta_u, rng)
                acc_u += ok
            state.free_atoms = step_free_atoms(state.u, params, state.base, config.epsilon,
                                               rng, config.max_atoms)
            state.uniques, n_acc = step_resample_uniques(state, x, kernel, config.delta_theta,
                                                         config.eta, rng)
            acc_theta += n_acc
            n_theta += state.r
            state.fixed_jumps = step_fixed_jumps(state.counts, state.u, params, rng)
            state.base = update_hyperparameters(state.base, state.uniques[:, 0], rng)

            atoms, jumps = state.combined_atoms()
            if config.is_kept(t):
                path, values = density_path(atoms, jumps, kernel, grid)
                max_wsum_err = max(max_wsum_err, abs(path.weights.sum() - 1.0))
                path_matrix[kept] = values
                with np.errstate(divide="ignore"):
                    log_mixture[kept] = np.log(path(x))
                total_jump[kept] = jumps.sum()
                u_trace[kept] = state.u
                if len(state.free_atoms):
                    max_trunc = max(max_trunc, state.free_atoms.truncation_ratio)

            labels, used, n_dead = step_allocate(x, atoms, jumps, kernel, rng, state.labels)
            underflows += n_dead
            state.labels, state.uniques = labels, atoms[used]
            state.counts = np.bincount(labels, minlength=used.size)
            # jumps of the new clusters; step 4 redraws them next iteration
            state.fixed_jumps = jumps[used]

            if config.is_kept(t):
                rn_trace[kept] = state.r
                th = state.thetas
                log_kernel[kept] = kernel.logpdf(x, th[:, 0], th[:, 1])
                kept += 1
            if check_every and t % check_every == 0:
                state.check()
            if logger.isEnabledFor(logging.DEBUG) and t % 1000 == 0:
                logger.debug("iteration %d: r=%d u=%.4g atoms=%d", t, state.r, state.u,
                             len(state.free_atoms))
    except SamplerError as exc:
        if exc.iteration is None:
            exc.iteration = t
        raise
    except (NrmiError, ArithmeticError, FloatingPointError) as exc:
        raise SamplerError(f"iteration {t}: {exc}", iteration=t) from exc

    acceptance = {"u": acc_u / config.iterations if frozen_u is None else float("nan"),
                  "theta": acc_theta / max(n_theta, 1)}
    return FitResult(
        grid=grid, path_matrix=path_matrix, rn_trace=rn_trace, log_kernel=log_kernel,
        total_jump_trace=total_jump, u_trace=u_trace, acceptance=acceptance, data=x,
        seed=config.seed, config={"model": model.to_dict(), "chain": config.to_dict()},
        max_truncation_ratio=max_trunc, allocation_underflows=underflows,
        max_weight_sum_error=max_wsum_err, labels=state.labels.copy(),
        log_mixture=log_mixture)
