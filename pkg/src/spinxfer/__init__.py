"""Squeezing and entanglement transfer to helium-3 nuclear spins.

Linear Heisenberg-Langevin simulation of metastability-exchange
collisions, cavity-mediated squeezing transfer, optical readout of the
nuclear-spin memory, two-cell entanglement and the imperfect-polarization
toy model.
"""

__version__ = "0.1.0"

from .langevin import (
    ComplexSystem,
    CovarianceMatrix,
    IntegrationError,
    LinearLangevinSystem,
    SingularSystemError,
    SpectrumResult,
    best_quadrature_variance,
    evolve_covariance,
    noise_spectrum,
    quadrature_variance,
    steady_covariance,
)
from .exchange import (
    DensityState,
    ExchangeLinearization,
    ExchangeRates,
    collision_update,
    diffusion_exchange,
    exchange_correlation_functions,
    exchange_initial_covariance,
    exchange_pair_system,
    exchange_spectra,
    exchange_steady_variances,
    integrate_nonlinear,
    linearize_exchange,
    me_rhs,
)
