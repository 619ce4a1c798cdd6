"""Location-scale kernels and base measures over theta = (mu, sigma).

Every kernel is parameterized by its mean ``mu`` and standard deviation
``sigma``. The base measure factorizes as ``f0(mu | phi) * Ga(sigma | shape, rate)``
and the location hyperparameters ``phi`` have conjugate updates given the
distinct locations.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy import special

from .exceptions import DomainError, InvalidParametersError

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class Kernel(str, enum.Enum):
    """Mixture kernels in mean / standard-deviation parameterization."""

    NORMAL = "normal"
    DOUBLE_EXPONENTIAL = "double_exponential"
    GAMMA = "gamma"
    LOGNORMAL = "lognormal"

    @property
    def positive_support(self) -> bool:
        return self in (Kernel.GAMMA, Kernel.LOGNORMAL)

    def logpdf(self, x, mu, sigma):
        """Log density ``log k(x | mu, sigma)``, broadcasting over all arguments.

        No argument checking; points outside the support give ``-inf``.
        """
        return _LOGPDF[self](np.asarray(x, dtype=float), np.asarray(mu, dtype=float),
                             np.asarray(sigma, dtype=float))

    def pdf(self, x, mu, sigma):
        return np.exp(self.logpdf(x, mu, sigma))

    def check_theta(self, mu, sigma) -> None:
        mu = np.asarray(mu, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        if np.any(~(sigma > 0)) or np.any(~np.isfinite(mu)):
            raise DomainError("sigma must be positive and mu finite")
        if self.positive_support and np.any(mu <= 0):
            raise DomainError(f"{self.value} kernel requires a positive mean")


def _normal(x, mu, sigma):
    z = (x - mu) / sigma
    return -0.5 * z * z - np.log(sigma) - _LOG_SQRT_2PI


def _double_exponential(x, mu, sigma):
    b = sigma / math.sqrt(2.0)
    return -np.abs(x - mu) / b - np.log(2.0 * b)


@np.errstate(divide="ignore", invalid="ignore")
def _gamma(x, mu, sigma):
    var = sigma * sigma
    shape = mu * mu / var
    rate = mu / var
    out = shape * np.log(rate) - special.gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x
    return np.where(x > 0, out, -np.inf)


@np.errstate(divide="ignore", invalid="ignore")
def _lognormal(x, mu, sigma):
    s2 = np.log1p((sigma / mu) ** 2)
    loc = np.log(mu) - 0.5 * s2
    logx = np.log(x)
    out = -0.5 * (logx - loc) ** 2 / s2 - logx - 0.5 * np.log(s2) - _LOG_SQRT_2PI
    return np.where(x > 0, out, -np.inf)


_LOGPDF = {
    Kernel.NORMAL: _normal,
    Kernel.DOUBLE_EXPONENTIAL: _double_exponential,
    Kernel.GAMMA: _gamma,
    Kernel.LOGNORMAL: _lognormal,
}


def kernel_density(kernel, x: float, mu: float, sigma: float) -> float:
    """Kernel density ``k(x | mu, sigma)``; zero outside the support."""
    kernel = Kernel(kernel)
    kernel.check_theta(mu, sigma)
    return float(np.exp(kernel.logpdf(x, mu, sigma)))


# -- base measures ------------------------------------------------------------

@dataclass(frozen=True)
class NormalBase:
    """``mu ~ Normal(phi1, precision phi2)``."""

    phi1: float = 0.0
    phi2: float = 0.01

    def __post_init__(self):
        if not (self.phi2 > 0 and np.isfinite(self.phi1)):
            raise InvalidParametersError("NormalBase needs finite mean and positive precision")

    @property
    def mean(self) -> float:
        return self.phi1

    def logpdf(self, mu):
        mu = np.asarray(mu, dtype=float)
        return 0.5 * math.log(self.phi2) - _LOG_SQRT_2PI - 0.5 * self.phi2 * (mu - self.phi1) ** 2

    def sample(self, size, rng):
        return rng.normal(self.phi1, 1.0 / math.sqrt(self.phi2), size)


@dataclass(frozen=True)
class GammaBase:
    """``mu ~ Ga(1, phi)``, an exponential with rate ``phi`` (mean ``1/phi``)."""

    phi: float = 1.0

    def __post_init__(self):
        if not self.phi > 0:
            raise InvalidParametersError("GammaBase rate must be positive")

    @property
    def mean(self) -> float:
        return 1.0 / self.phi

    @np.errstate(divide="ignore")
    def logpdf(self, mu):
        mu = np.asarray(mu, dtype=float)
        return np.where(mu > 0, math.log(self.phi) - self.phi * mu, -np.inf)

    def sample(self, size, rng):
        return rng.exponential(1.0 / self.phi, size)


@dataclass(frozen=True)
class NormalGammaHyperprior:
    """``phi1 | phi2 ~ N(psi1, precision psi2 * phi2)``, ``phi2 ~ Ga(psi3, psi4)``."""

    psi1: float = 0.0
    psi2: float = 0.01
    psi3: float = 0.1
    psi4: float = 0.1

    def __post_init__(self):
        if not (self.psi2 > 0 and self.psi3 > 0 and self.psi4 > 0):
            raise InvalidParametersError("normal-gamma hyperprior needs psi2, psi3, psi4 > 0")


@dataclass(frozen=True)
class GammaHyperprior:
    """``phi ~ Ga(psi1, psi2)`` (shape, rate)."""

    psi1: float = 0.01
    psi2: float = 0.01

    def __post_init__(self):
        if not (self.psi1 > 0 and self.psi2 > 0):
            raise InvalidParametersError("gamma hyperprior needs psi1, psi2 > 0")


LocationBase = Union[NormalBase, GammaBase]
Hyperprior = Union[NormalGammaHyperprior, GammaHyperprior, None]


@dataclass(frozen=True)
class BaseMeasure:
    """Base measure P0 on (mu, sigma) with independent components.

    Parameters
    ----------
    mu_base : NormalBase or GammaBase
        Location component, holding the current hyperparameter values.
    sigma_shape, sigma_rate : float
        ``sigma ~ Ga(sigma_shape, sigma_rate)``, shape and rate.
    hyperprior : NormalGammaHyperprior, GammaHyperprior or None
        Conjugate prior on the location hyperparameters; None keeps them fixed.
    """

    mu_base: LocationBase = NormalBase()
    sigma_shape: float = 1.0
    sigma_rate: float = 1.0
    hyperprior: Hyperprior = NormalGammaHyperprior()

    def __post_init__(self):
        if not (self.sigma_shape > 0 and self.sigma_rate > 0):
            raise InvalidParametersError("sigma base shape and rate must be positive")
        if isinstance(self.mu_base, NormalBase):
            if self.hyperprior is not None and not isinstance(self.hyperprior, NormalGammaHyperprior):
                raise InvalidParametersError("NormalBase pairs with a normal-gamma hyperprior")
        elif isinstance(self.mu_base, GammaBase):
            if self.hyperprior is not None and not isinstance(self.hyperprior, GammaHyperprior):
                raise InvalidParametersError("GammaBase pairs with a gamma hyperprior")
        else:
            raise InvalidParametersError(f"unknown location base {self.mu_base!r}")

    @classmethod
    def normal(cls, sigma_shape=1.0, sigma_rate=1.0, hyperprior: Hyperprior = NormalGammaHyperprior(),
               phi1=0.0, phi2=0.01) -> "BaseMeasure":
        return cls(NormalBase(phi1, phi2), sigma_shape, sigma_rate, hyperprior)

    @classmethod
    def gamma(cls, sigma_shape=1.0, sigma_rate=1.0, hyperprior: Hyperprior = GammaHyperprior(),
              phi=1.0) -> "BaseMeasure":
        return cls(GammaBase(phi), sigma_shape, sigma_rate, hyperprior)

    @property
    def positive_locations(self) -> bool:
        return isinstance(self.mu_base, GammaBase)

    def check_kernel(self, kernel) -> None:
        """Reject a real-line location base for a positive-support kernel."""
        kernel = Kernel(kernel)
        if kernel.positive_support and not self.positive_locations:
            raise InvalidParametersError(
                f"{kernel.value} kernel needs a positive location base (GammaBase)")

    def log_sigma_pdf(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (self.sigma_shape * math.log(self.sigma_rate) - special.gammaln(self.sigma_shape)
                   + (self.sigma_shape - 1.0) * np.log(sigma) - self.sigma_rate * sigma)
        return np.where(sigma > 0, out, -np.inf)

    def logpdf(self, mu, sigma):
        return self.mu_base.logpdf(mu) + self.log_sigma_pdf(sigma)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``size`` atoms; returns an array of shape (size, 2) of (mu, sigma)."""
        mu = self.mu_base.sample(size, rng)
        sigma = rng.gamma(self.sigma_shape, 1.0 / self.sigma_rate, size)
        return np.column_stack([mu, sigma])

    def with_location(self, mu_base: LocationBase) -> "BaseMeasure":
        return replace(self, mu_base=mu_base)


def sample_base(bm: BaseMeasure, rng: np.random.Generator, size: Optional[int] = None):
    """Draw theta = (mu, sigma) from P0; one pair, or an array of `size` rows."""
    if size is None:
        mu, sigma = bm.sample(1, rng)[0]
        return float(mu), float(sigma)
    return bm.sample(size, rng)


def normal_gamma_posterior(hp: NormalGammaHyperprior, unique_mus):
    """Parameters of the normal-gamma posterior of (phi1, phi2).

    Returns ``(mean, precision_multiplier, shape, rate)`` such that
    ``phi2 ~ Ga(shape, rate)`` and ``phi1 | phi2 ~ N(mean, precision_multiplier * phi2)``.
    """
    mus = np.asarray(unique_mus, dtype=float)
    r = mus.size
    mbar = mus.mean()
    mean = (hp.psi2 * hp.psi1 + r * mbar) / (hp.psi2 + r)
    shape = hp.psi3 + 0.5 * r
    rate = (hp.psi4 + 0.5 * np.sum((mus - mbar) ** 2)
            + hp.psi2 * r * (mbar - hp.psi1) ** 2 / (2.0 * (hp.psi2 + r)))
    return mean, hp.psi2 + r, shape, rate


def update_hyperparameters(bm: BaseMeasure, unique_mus, rng: np.random.Generator) -> BaseMeasure:
    """Draw the location hyperparameters from their conditional posterior.

    Returns a new BaseMeasure; unchanged when the hyperprior is None.
    """
    mus = np.asarray(unique_mus, dtype=float)
    if mus.size == 0:
        raise ValueError("at least one unique location is required")
    hp = bm.hyperprior
    if hp is None:
        return bm
    if isinstance(bm.mu_base, NormalBase):
        mean, mult, shape, rate = normal_gamma_posterior(hp, mus)
        phi2 = rng.gamma(shape, 1.0 / rate)
        phi1 = rng.normal(mean, 1.0 / math.sqrt(mult * phi2))
        return bm.with_location(NormalBase(float(phi1), float(phi2)))
    if np.any(mus <= 0):
        raise ValueError("GammaBase locations must be positive")
    phi = rng.gamma(hp.psi1 + mus.size, 1.0 / (hp.psi2 + mus.sum()))
    return bm.with_location(GammaBase(float(phi)))
