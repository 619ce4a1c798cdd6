"""scikit-learn style front end to the NGG mixture sampler."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .crm import NggParams
from .gibbs import GibbsConfig, MixtureModel, run_chain
from .mixture import (BaseMeasure, GammaBase, GammaHyperprior, Kernel, NormalBase,
                      NormalGammaHyperprior)

__all__ = ["NRMIMixture", "validate_univariate"]


def validate_univariate(X, name: str = "X") -> np.ndarray:
    """Accept a 1-d array or an (n, 1) matrix of finite floats; return it flattened."""
    X = check_array(X, ensure_2d=False, dtype=float, input_name=name)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"{name} must have exactly one feature, got {X.shape[1]}")
        X = X[:, 0]
    return np.ascontiguousarray(X, dtype=float)


class NRMIMixture(DensityMixin, BaseEstimator):
    """Univariate density estimation and clustering with an NGG mixture.

    The defaults give the N-stable NGG(1, 0, 0.396) normal mixture with
    ``sigma ~ Ga(1, 1)`` and a normal-gamma location hyperprior.

    Parameters
    ----------
    a, kappa, gamma : float
        NGG parameters.
    kernel : {"normal", "double_exponential", "gamma", "lognormal"}
    location_base : {"normal", "gamma"} or None
        Family of the location base measure; None picks "gamma" for
        positive-support kernels and "normal" otherwise.
    sigma_prior : (shape, rate)
    hyperprior : tuple or None
        ``(psi1, psi2, psi3, psi4)`` for the normal base, ``(psi1, psi2)`` for
        the gamma base; None uses the defaults.
    n_iter, burn_in, thinning : int
    delta_u, delta_theta, eta, epsilon : float
        Sampler tuning.
    grid : sequence of float or None
        Abscissae for the density estimate; default spans the data.
    random_state : int or None

    Attributes
    ----------
    result_ : FitResult
    grid_, density_, density_lower_, density_upper_ : ndarray
        Posterior mean density with its 95% pointwise band.
    n_components_ : int
        Posterior mode of the number of clusters.
    labels_ : ndarray
        Cluster allocation at the last iteration.
    cpo_ : ndarray
    """

    def __init__(self, a: float = 1.0, kappa: float = 0.0, gamma: float = 0.396,
                 kernel: str = "normal", location_base: Optional[str] = None,
                 sigma_prior: Sequence[float] = (1.0, 1.0), hyperprior=None,
                 n_iter: int = 10_000, burn_in: int = 1_000, thinning: int = 4,
                 delta_u: float = 4.0, delta_theta: float = 4.0, eta: float = 2.0,
                 epsilon: float = 1e-4, grid=None, random_state: Optional[int] = None):
        self.a = a
        self.kappa = kappa
        self.gamma = gamma
        self.kernel = kernel
        self.location_base = location_base
        self.sigma_prior = sigma_prior
        self.hyperprior = hyperprior
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thinning = thinning
        self.delta_u = delta_u
        self.delta_theta = delta_theta
        self.eta = eta
        self.epsilon = epsilon
        self.grid = grid
        self.random_state = random_state

    def _build_model(self) -> MixtureModel:
        kernel = Kernel(self.kernel)
        family = self.location_base or ("gamma" if kernel.positive_support else "normal")
        shape, rate = self.sigma_prior
        if family == "normal":
            hp = NormalGammaHyperprior(*self.hyperprior) if self.hyperprior else NormalGammaHyperprior()
            base = BaseMeasure(NormalBase(), shape, rate, hp)
        elif family == "gamma":
            hp = GammaHyperprior(*self.hyperprior) if self.hyperprior else GammaHyperprior()
            base = BaseMeasure(GammaBase(), shape, rate, hp)
        else:
            raise ValueError(f"location_base must be 'normal' or 'gamma', got {family!r}")
        return MixtureModel(NggParams(self.a, self.kappa, self.gamma), kernel, base)

    def _build_config(self) -> GibbsConfig:
        seed = self.random_state
        if seed is not None and not isinstance(seed, (int, np.integer)):
            raise ValueError("random_state must be an integer or None")
        return GibbsConfig(self.n_iter, self.burn_in, self.thinning, self.delta_u,
                           self.delta_theta, self.eta, self.epsilon,
                           None if seed is None else int(seed), self.grid)

    def fit(self, X, y=None):
        x = validate_univariate(X)
        model = self._build_model()
        res = run_chain(x, model, self._build_config())
        de = res.density_estimate()
        self.result_ = res
        self.model_ = model
        self.grid_ = res.grid
        self.density_ = de.mean
        self.density_lower_ = de.lower
        self.density_upper_ = de.upper
        self.n_components_ = res.rn_posterior().mode
        self.labels_ = res.labels
        self.cpo_ = res.cpo
        self.n_features_in_ = 1
        return self

    def score_samples(self, X):
        """Log of the posterior mean density at ``X``, interpolated from the grid.

        Points outside the grid get ``-inf``.
        """
        check_is_fitted(self, "density_")
        x = validate_univariate(X)
        f = np.interp(x, self.grid_, self.density_, left=0.0, right=0.0)
        with np.errstate(divide="ignore"):
            return np.log(f)

    def score(self, X, y=None):
        return float(np.sum(self.score_samples(X)))

    def fit_predict(self, X, y=None):
        """Fit, then return the cluster labels of the final allocation."""
        return self.fit(X).labels_
