"""Bayesian nonparametric density estimation with normalized generalized-gamma mixtures."""

from .benchmark import (GaussianMixture, SilvermanKDE, StudySpec, load_marron_wand, mise,
                        rmise, run_study, silverman_kde)
from .calibration import (CalibrationTarget, calibrate, dirichlet_expected_clusters,
                          mc_expected_clusters)
from .crm import (AtomSeries, NggParams, TiltedTail, invert_tail_mass, laplace_exponent,
                  sample_atom_series, tail_mass, tau_moment)
from .diagnostics import FitResult, cpo, cpo_summaries, density_estimate, ess, rn_posterior
from .estimator import NRMIMixture
from .gibbs import ChainState, DensityPath, GibbsConfig, MixtureModel, run_chain
from .mixture import (BaseMeasure, GammaBase, GammaHyperprior, Kernel, NormalBase,
                      NormalGammaHyperprior, kernel_density, sample_base,
                      update_hyperparameters)

__version__ = "0.1.0"

__all__ = [
    "AtomSeries", "BaseMeasure", "CalibrationTarget", "ChainState", "DensityPath",
    "FitResult", "GammaBase", "GammaHyperprior", "GaussianMixture", "GibbsConfig", "Kernel",
    "MixtureModel", "NRMIMixture", "NggParams", "NormalBase", "NormalGammaHyperprior",
    "SilvermanKDE", "StudySpec", "TiltedTail", "calibrate", "cpo", "cpo_summaries",
    "density_estimate", "dirichlet_expected_clusters", "ess", "invert_tail_mass",
    "kernel_density", "laplace_exponent", "load_marron_wand", "mc_expected_clusters", "mise",
    "rmise", "rn_posterior", "run_chain", "run_study", "sample_atom_series", "sample_base",
    "silverman_kde", "tail_mass", "tau_moment", "update_hyperparameters",
]
