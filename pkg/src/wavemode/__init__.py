"""Mode coupling in randomly perturbed Pekeris waveguides.

Modules
-------
pekeris     discrete and radiating spectrum of the unperturbed waveguide
medium      transverse covariance kernels and the spectral integral ``S``
coupling    mode-coupling, loss and phase coefficients
power       coupled power equations and mean mode amplitudes
decay       exponential decay rate of the propagating energy
montecarlo  Feynman-Kac jump-chain estimator of the mean powers
diffusion   high-frequency diffusion limit and its Sturm-Liouville spectrum
cli         scenario runner writing CSV tables
"""

__version__ = "0.1.0"

from .coupling import CouplingCoefficients, compute_coefficients
from .decay import DecayAnalysis, decay_rate, regime_sweep
from .diffusion import DiffusionCoefficient, continuum_limit_check, solve_diffusion, sturm_liouville_spectrum
from .errors import ConfigError, WavemodeError
from .medium import CovarianceSpec, eval_S
from .montecarlo import JumpChainSpec, simulate_feynman_kac
from .pekeris import ModeSet, WaveguideParams, solve_modes
from .power import PowerTrajectory, solve_coupled_power

__all__ = [
    "__version__",
    "WaveguideParams",
    "ModeSet",
    "solve_modes",
    "CovarianceSpec",
    "eval_S",
    "CouplingCoefficients",
    "compute_coefficients",
    "PowerTrajectory",
    "solve_coupled_power",
    "DecayAnalysis",
    "decay_rate",
    "regime_sweep",
    "JumpChainSpec",
    "simulate_feynman_kac",
    "DiffusionCoefficient",
    "solve_diffusion",
    "sturm_liouville_spectrum",
    "continuum_limit_check",
    "WavemodeError",
    "ConfigError",
]
